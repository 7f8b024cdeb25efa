"""Deterministic seed derivation.

Every random stream in the pipeline is derived from one root seed plus a
string label (stage name, member/run index, ...). No ambient entropy.
"""

import hashlib

import numpy as np


def derive_seed(root_seed: int, *labels) -> int:
    """Stable 64-bit seed from a root seed and any number of labels."""
    payload = ":".join([str(int(root_seed))] + [str(x) for x in labels])
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def derive_rng(root_seed: int, *labels) -> np.random.Generator:
    """Generator seeded via derive_seed."""
    return np.random.default_rng(derive_seed(root_seed, *labels))
