"""
Deterministic sub-seed derivation.

- One master seed per run; every stochastic component gets its own generator.
- Sub-seeds = HMAC-SHA256(master, label || counters), first 8 bytes.
- Distinct labels give independent streams; same (master, label, counters)
  always gives the same stream, regardless of worker count or call order.
"""

import numpy as np

try:
    from Cryptodome.Hash import HMAC, SHA256
except ImportError:
    from Crypto.Hash import HMAC, SHA256

# Labels for the synthetic oracle's streams
LABEL_LAYOUT = b"semocc.v1.layout"
LABEL_VOCAB = b"semocc.v1.frame-vocab"
LABEL_EMBED = b"semocc.v1.embeddings"
LABEL_FEATURE = b"semocc.v1.feature-noise"
LABEL_FLIP = b"semocc.v1.label-noise"
LABEL_LIDAR = b"semocc.v1.lidar-noise"
LABEL_AE_INIT = b"semocc.v1.ae-init"
LABEL_AE_SHUFFLE = b"semocc.v1.ae-shuffle"
LABEL_AE_SPLIT = b"semocc.v1.ae-split"
LABEL_BENCH = b"semocc.v1.benchmark"


def derive_seed(master_seed: int, label: bytes, *counters: int) -> int:
    """
    Derive a 63-bit sub-seed for (label, counters) from the master seed.
    Negative master seeds are accepted; counters must be non-negative.
    """
    key = int(master_seed).to_bytes(16, "big", signed=True)
    h = HMAC.new(key, digestmod=SHA256)
    h.update(label)
    for c in counters:
        if c < 0:
            raise ValueError(f"Seed counters must be non-negative, got {c}")
        h.update(int(c).to_bytes(8, "big"))
    return int.from_bytes(h.digest()[:8], "big") >> 1


def derive_rng(master_seed: int, label: bytes, *counters: int) -> np.random.Generator:
    """Generator seeded from derive_seed; one per (label, counters) stream."""
    return np.random.default_rng(derive_seed(master_seed, label, *counters))
