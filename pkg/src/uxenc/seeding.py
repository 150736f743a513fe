"""Named RNG sub-streams.

All randomness in a run flows from one integer seed.  Each stage draws from
its own named stream so that, e.g., changing the masking schedule does not
perturb the simulated data.  Per-item streams (one per example in a batch,
one per RIR in a bank) are derived from ``(seed, stream, *indices)`` which is
what makes worker-pool parallelism deterministic.
"""

import numpy as np

# Fixed stream ids; appending is fine, renumbering breaks reproducibility.
_STREAMS = {
    "sim": 1,
    "mask": 2,
    "init": 3,
    "shuffle": 4,
    "geom": 5,
    "labels": 6,
}


def substream(seed, name, *indices):
    """Return a ``numpy.random.Generator`` for a named sub-stream.

    ``indices`` extends the stream key for per-item generators, e.g.
    ``substream(seed, "sim", batch_idx, example_idx)``.
    """
    if name not in _STREAMS:
        raise KeyError(f"unknown RNG stream {name!r}; known: {sorted(_STREAMS)}")
    entropy = [int(seed), _STREAMS[name], *[int(i) for i in indices]]
    return np.random.default_rng(np.random.SeedSequence(entropy))
