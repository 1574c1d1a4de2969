"""Estimators and uncertainty for detection-probability Bell tests.

The difference-form estimator normalizes each coincidence count by the
trials of its own setting pair and subtracts the two singles
probabilities:

    B = C(a,b)/N(a,b) + C(a,b')/N(a,b') + C(a',b)/N(a',b)
        - C(a',b')/N(a',b') - p1(a) - p2(b)        (classical bound: 0)

The ratio form divides the coincidence combination by the singles sum
(classical bound: 1).  Three singles conventions are supported, because
which trials estimate p1(a) matters for both statistics and adversaries:

- "pooled" (default): p1(a) = [S(a|b)+S(a|b')]/[N(a,b)+N(a,b')], i.e.
  all trials with that local setting; best statistics.
- "paired": only the trials of the unprimed pair, S(a|b)/N(a,b).
- "conditional": only the opposite-pair trials, S(a|b')/N(a,b') and
  S(b|a')/N(a',b).  Used for per-cycle violation counting, and the
  convention under which a drifting source with cyclic settings can fake
  a violation (the singles are then sampled at a different time than the
  coincidences they normalize).

Uncertainty follows the partition method: split the run into k
interleaved (or contiguous) partitions, compute B on each, and scale the
spread of the k values down to the full data set.  The hacker bound is
the exact binomial tail probability that a settings-guessing adversary
produces at least the observed number of per-partition violations.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .counting import CountsTable
from .engine import BlockRecord, blocks_to_counts
from .errors import ValidationError
from .quantum import MeasurementSettings

SINGLES_MODES = ("pooled", "paired", "conditional")

TSIRELSON_S = 2.0 * math.sqrt(2.0)


def _singles_estimates(table: CountsTable, singles_mode: str) -> tuple[float, float]:
    n = table.n_trials.astype(float)
    sa = table.singles_a.astype(float)
    sb = table.singles_b.astype(float)
    if singles_mode == "pooled":
        if n[0] + n[1] <= 0 or n[0] + n[2] <= 0:
            raise ValidationError("zero trials for a singles setting")
        return (sa[0] + sa[1]) / (n[0] + n[1]), (sb[0] + sb[2]) / (n[0] + n[2])
    if singles_mode == "paired":
        if n[0] <= 0:
            raise ValidationError("zero trials in the (a,b) row")
        return sa[0] / n[0], sb[0] / n[0]
    if singles_mode == "conditional":
        if n[1] <= 0 or n[2] <= 0:
            raise ValidationError("zero trials in a conditional singles row")
        return sa[1] / n[1], sb[2] / n[2]
    raise ValidationError(f"singles_mode must be one of {SINGLES_MODES}")


def _coincidence_sum(table: CountsTable) -> float:
    n = table.n_trials.astype(float)
    if np.any(n <= 0):
        raise ValidationError("every setting pair needs at least one trial")
    c = table.coincidences.astype(float)
    return c[0] / n[0] + c[1] / n[1] + c[2] / n[2] - c[3] / n[3]


def ch_from_counts(table: CountsTable, singles_mode: str = "pooled") -> float:
    """Difference-form Bell value B from a counts table; B > 0 violates."""
    p1a, p2b = _singles_estimates(table, singles_mode)
    return _coincidence_sum(table) - p1a - p2b


def chprime_from_counts(table: CountsTable, singles_mode: str = "pooled") -> float:
    """Ratio-form Bell value B' from a counts table; B' > 1 violates."""
    p1a, p2b = _singles_estimates(table, singles_mode)
    den = p1a + p2b
    if den <= 0:
        raise ValidationError("singles denominator is zero")
    return _coincidence_sum(table) / den


@dataclass(frozen=True)
class BellResult:
    """Joint summary of both estimators plus the uncertainty of B."""

    B: float
    B_prime: float
    sigma_B: float | None = None
    singles_mode: str = "pooled"

    @property
    def significance(self) -> float | None:
        if not self.sigma_B:
            return None
        return self.B / self.sigma_B

    def to_json_dict(self) -> dict:
        return {
            "B": self.B,
            "B_prime": self.B_prime,
            "sigma_B": self.sigma_B,
            "significance": self.significance,
            "singles_mode": self.singles_mode,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


def bell_result(
    table: CountsTable, sigma_b: float | None = None, singles_mode: str = "pooled"
) -> BellResult:
    return BellResult(
        B=ch_from_counts(table, singles_mode),
        B_prime=chprime_from_counts(table, singles_mode),
        sigma_B=sigma_b,
        singles_mode=singles_mode,
    )


# ---------------------------------------------------------------------------
# partition-based error estimation


def _partitions(blocks: Sequence[BlockRecord], k: int, mode: str):
    if k < 2:
        raise ValidationError("need at least 2 partitions")
    if len(blocks) < k:
        raise ValidationError(f"cannot split {len(blocks)} blocks into {k} partitions")
    if mode == "strided":
        return [list(blocks[i::k]) for i in range(k)]
    if mode == "sequential":
        bounds = np.linspace(0, len(blocks), k + 1).astype(int)
        return [list(blocks[bounds[i]:bounds[i + 1]]) for i in range(k)]
    raise ValidationError(f"partition mode must be 'strided' or 'sequential', got {mode!r}")


def partition_values(
    blocks: Sequence[BlockRecord], k: int, mode: str = "strided",
    singles_mode: str = "pooled",
) -> np.ndarray:
    """B evaluated on each of the k partitions."""
    values = []
    for i, part in enumerate(_partitions(blocks, k, mode)):
        table = blocks_to_counts(part)
        try:
            values.append(ch_from_counts(table, singles_mode))
        except ValidationError as exc:
            raise ValidationError(f"partition {i} has insufficient data: {exc}") from None
    return np.array(values)


def partition_sigma(
    blocks: Sequence[BlockRecord], k: int = 50, mode: str = "strided",
    singles_mode: str = "pooled",
) -> float:
    """Standard error of B: spread of the k partition values over sqrt(k-1)."""
    values = partition_values(blocks, k, mode, singles_mode)
    return float(np.std(values, ddof=1) / math.sqrt(k - 1))


def partition_sigma_sweep(
    blocks: Sequence[BlockRecord], ks: Sequence[int] = range(47, 54),
    mode: str = "strided", singles_mode: str = "pooled",
) -> tuple[float, float]:
    """Mean and spread of the sigma estimate over several partition counts."""
    sigmas = [partition_sigma(blocks, k, mode, singles_mode) for k in ks]
    return float(np.mean(sigmas)), float(np.std(sigmas, ddof=1))


def violations_by_partition(
    blocks: Sequence[BlockRecord], ks: Sequence[int],
    mode: str = "strided", singles_mode: str = "conditional",
) -> list[tuple[int, int]]:
    """(k, number of partitions with B > 0) for each requested k.

    There is no principled optimum for k; report the curve and let the
    caller pick, feeding the counts into hacker_bound.
    """
    out = []
    for k in ks:
        values = partition_values(blocks, k, mode, singles_mode)
        out.append((int(k), int(np.count_nonzero(values > 0))))
    return out


# ---------------------------------------------------------------------------
# adversarial guessing bounds


def hacker_bound(n_cycles: int, n_violations: int, p_guess_per_cycle: float = 0.5) -> float:
    """Exact binomial upper-tail P(X >= n_violations | n_cycles, p).

    The chance that an adversary who can only guess the settings (one
    even-odds guess per cycle) produces at least the observed number of
    per-cycle violations.  Computed by log-domain summation, no normal
    approximation.
    """
    if n_cycles < 0 or not 0 <= n_violations <= n_cycles:
        raise ValidationError("need 0 <= n_violations <= n_cycles")
    p = p_guess_per_cycle
    if not 0.0 <= p <= 1.0:
        raise ValidationError("p_guess_per_cycle must be a probability")
    if n_violations == 0:
        return 1.0
    if p == 0.0:
        return 0.0
    if p == 1.0:
        return 1.0
    log_terms = [
        math.lgamma(n_cycles + 1)
        - math.lgamma(m + 1)
        - math.lgamma(n_cycles - m + 1)
        + m * math.log(p)
        + (n_cycles - m) * math.log1p(-p)
        for m in range(n_violations, n_cycles + 1)
    ]
    top = max(log_terms)
    total = math.exp(top) * math.fsum(math.exp(t - top) for t in log_terms)
    return min(1.0, total)  # guard against accumulated rounding above 1


def distribution_floor(n_cycles: int) -> Fraction:
    """(1/2)^n_cycles as an exact rational.

    This is the floor probability with which a guessing adversary can
    force any particular distribution of per-cycle outcomes.  Returned
    exactly because for realistic n (around a thousand cycles) the value
    underflows every float format; its log2 is -n_cycles by construction.
    """
    if n_cycles < 1:
        raise ValidationError("n_cycles must be >= 1")
    return Fraction(1, 2**n_cycles)


@dataclass(frozen=True)
class SuperQuantumBound:
    """Upper limit on beyond-quantum correlation strength from a measured S."""

    s_upper: float
    on_fraction: float


def superquantum_bounds(
    s_measured: float, sigma_s: float, n_sigma: float = 2.0
) -> SuperQuantumBound:
    """Constrain two simple super-quantum models from a measured S value.

    s_upper is the n-sigma upper limit on any constant super-quantum S.
    on_fraction bounds a model that saturates S = 4 but is active only
    part of the time: the duty cycle cannot exceed
    (s_upper - 2*sqrt(2)) / (4 - 2*sqrt(2)), clamped at 0.
    """
    if sigma_s < 0:
        raise ValidationError("sigma_s must be >= 0")
    s_upper = s_measured + n_sigma * sigma_s
    on = max(0.0, (s_upper - TSIRELSON_S) / (4.0 - TSIRELSON_S))
    return SuperQuantumBound(s_upper=float(s_upper), on_fraction=float(on))


# ---------------------------------------------------------------------------
# bundled reference data


def reference_run_counts() -> CountsTable:
    """Accumulated counts of the bundled 4450-block reference run.

    Recorded with r = 0.26, settings (3.8, -25.2, -3.8, 25.2) degrees,
    25,000 trials per one-second block, settings chosen at random per
    block.  Used as the regression dataset for the estimators.
    """
    return CountsTable(
        n_trials=np.array([27_153_020, 28_352_350, 27_827_318, 27_926_994]),
        singles_a=np.array([46_068, 48_076, 150_840, 150_505]),
        singles_b=np.array([46_039, 146_205, 47_447, 144_070]),
        coincidences=np.array([29_173, 34_145, 34_473, 1_862]),
        meta={"source": "reference-run"},
    )


REFERENCE_R = 0.26
REFERENCE_SIGMA_B = 7.0e-6
REFERENCE_ACQUISITION_S = 10_800.0


def reference_settings() -> MeasurementSettings:
    return MeasurementSettings(a=3.8, a_prime=-25.2, b=-3.8, b_prime=25.2)
