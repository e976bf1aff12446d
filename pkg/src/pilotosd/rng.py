"""Counter-based random streams.

Every random draw in the package comes from numpy's ``Philox4x64-10``
bit generator. Streams are derived without any shared state:

* Monte Carlo trial ``t`` at SNR index ``i`` under master seed ``s`` uses
  key ``s + 2**64 * i`` and initial counter ``2**64 * t``. Philox increments
  the lowest counter word only, so trials occupy disjoint counter ranges
  as long as a single trial consumes fewer than ``2**64`` blocks.
* The interleaver with seed ``s`` uses key ``s`` and counter 0.
* Bound sampling uses key ``s + 2**64 * (2**32 + i)``, keeping it apart
  from the trial streams of the same master seed.

Because a stream is a pure function of these integers, trials can run in any
order, on any worker, and reproduce bit-exactly.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_BOUNDS_TAG = 1 << 32


def philox(key: int, counter: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(key), counter=int(counter)))


def trial_stream(master_seed: int, snr_index: int, trial_index: int) -> np.random.Generator:
    """Stream owned by one Monte Carlo trial."""
    key = (int(master_seed) & _MASK64) | (int(snr_index) << 64)
    return philox(key, int(trial_index) << 64)


def bounds_stream(master_seed: int, snr_index: int, chunk_index: int = 0) -> np.random.Generator:
    """Stream used by the bound samplers (kept apart from trial streams)."""
    key = (int(master_seed) & _MASK64) | ((_BOUNDS_TAG + int(snr_index)) << 64)
    return philox(key, int(chunk_index) << 64)


def interleaver_stream(seed: int) -> np.random.Generator:
    return philox(int(seed) & _MASK64, 0)
