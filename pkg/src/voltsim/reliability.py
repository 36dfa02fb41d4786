"""SECDED coverage and spatial-concentration statistics over error maps.

ECC is modelled by error count per (72, 64) word: one flip is corrected,
two are detected, three or more alias to a wrong codeword or a silent
pass. No encoder or syndrome decoder is involved.
"""
from __future__ import annotations

import csv
import enum
import math

import numpy as np

from .errors import RangeError
from .fault_model import BitModel, BitModelKind, ErrorMap, _flip_count_cdf
from .seeding import as_rng

WORD_BITS = 72
DATA_BITS = 64


class EccOutcome(enum.Enum):
    CLEAN = "Clean"
    CORRECTED = "Corrected"
    DETECTED_UNCORRECTABLE = "DetectedUncorrectable"
    SILENT_OR_MISCORRECTED = "SilentOrMiscorrected"


OUTCOME_ORDER = tuple(EccOutcome)


def secded_classify(bit_errors_in_word: int) -> EccOutcome:
    if not 0 <= bit_errors_in_word <= WORD_BITS:
        raise RangeError(f"bit error count {bit_errors_in_word} outside 0..{WORD_BITS}")
    return OUTCOME_ORDER[min(bit_errors_in_word, 3)]


def _classify_counts(counts: np.ndarray) -> np.ndarray:
    return np.minimum(counts, 3)


def ecc_coverage(error_map: ErrorMap, bit_model: BitModel, trials: int, seed) -> dict[EccOutcome, float]:
    """Monte-Carlo distribution of SECDED outcomes over 72-bit words.

    Each trial reads one word from a uniformly chosen (bank, row). The word
    is erroneous with that row's line probability; an erroneous word holds
    one flip under SingleFlip, or Binomial(72, p_bit) flips conditioned on
    at least one under the Binomial model.
    """
    if trials < 1:
        raise RangeError("trials must be >= 1")
    rng = as_rng(seed)
    flat = error_map.grid.ravel()
    p = flat[rng.integers(flat.size, size=trials)]
    bad = rng.random(trials) < p
    counts = np.zeros(trials, dtype=np.int64)
    nbad = int(bad.sum())
    if nbad:
        if bit_model.kind is BitModelKind.SINGLE_FLIP:
            counts[bad] = 1
        else:
            cdf = _flip_count_cdf(bit_model.p_bit, WORD_BITS)
            u = cdf[0] + rng.random(nbad) * (cdf[-1] - cdf[0])
            counts[bad] = np.clip(np.searchsorted(cdf, u, side="right"), 1, WORD_BITS)
    tally = np.bincount(_classify_counts(counts), minlength=4)
    return {k: tally[i] / trials for i, k in enumerate(OUTCOME_ORDER)}


def clustering_stats(error_map: ErrorMap | np.ndarray) -> tuple[float, float]:
    """(Gini concentration of per-row error mass, share held by the top 1% rows).

    An all-zero map reports (0.0, 0.0).
    """
    grid = error_map.grid if isinstance(error_map, ErrorMap) else np.asarray(error_map)
    x = np.sort(grid.ravel().astype(np.float64))
    n = x.size
    if n == 0:
        raise RangeError("error map is empty")
    total = x.sum()
    if total <= 0:
        return 0.0, 0.0
    ranks = np.arange(1, n + 1, dtype=np.float64)
    gini = float(np.sum((2 * ranks - n - 1) * x) / (n * total))
    top = max(1, math.ceil(0.01 * n))
    share = float(x[-top:].sum() / total)
    return max(0.0, min(1.0, gini)), share


def write_ecc_report(path, rows) -> None:
    """rows: iterable of (voltage, {EccOutcome: fraction})."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["voltage"] + [k.value for k in OUTCOME_ORDER])
        for v, fr in rows:
            w.writerow([f"{v:.2f}"] + [repr(float(fr[k])) for k in OUTCOME_ORDER])
