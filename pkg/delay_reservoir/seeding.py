import hashlib
import logging

import numpy as np

logger = logging.getLogger(__name__)


def derive_seed(root, label):
    """Derive an independent 63-bit seed for a labeled random stream."""
    digest = hashlib.blake2b(
        f"{int(root)}:{label}".encode("utf-8"), digest_size=8
    ).digest()
    seed = int.from_bytes(digest, "little") >> 1
    logger.debug(f"Derived seed {seed} for stream '{label}' from root {root}")
    return seed


def rng_for(root, label):
    return np.random.default_rng(derive_seed(root, label))
