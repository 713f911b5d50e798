"""Named-stream seed derivation.

A single master seed is expanded into independent per-stage seeds by hashing
the stage name, so every pipeline stage (simulation, dataset sampling, model
init, shuffling, ...) is reproducible on its own without consuming shared
RNG state.
"""

import hashlib


def derive_seed(master_seed: int, stream: str) -> int:
    """Derive a 63-bit seed for a named stream from the master seed."""
    digest = hashlib.sha256(f"{master_seed}:{stream}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF
