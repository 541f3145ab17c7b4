"""Exact-distribution simulation of the two quantum subroutines.

Canonical amplitude estimation is simulated by sampling its closed-form
measurement distribution (phase estimation applied to the Grover operator of
the state being measured), not by evolving a statevector: only measurement
statistics are observable, and the closed form is exact and fast.  Maximum
finding is simulated as the threshold-improvement loop with exact Grover
success probabilities derived from the count of items beating the current
threshold.

These "honest" backends exist to validate the contract-mock backend's
query/error model; they expose measured query counts so the mock's constants
can be calibrated instead of guessed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError
from .oracle import QueryLedger

__all__ = [
    "AmplitudeEstimationConfig",
    "outcome_distribution",
    "single_run_error_radius",
    "amplitude_estimation_sample",
    "median_amplitude_estimate",
    "MaxFindingTrace",
    "simulate_argmax",
    "DEFAULT_C_MAX",
]

MAX_PHASE_BITS = 24  # simulation tractability bound: 2^24 outcome grid
DEFAULT_C_MAX = 4.0
MEDIAN_REPS_FACTOR = 18  # Chernoff margin on the 8/pi^2 single-run success


@dataclass(frozen=True)
class AmplitudeEstimationConfig:
    """Phase-estimation resolution and the true squared amplitude."""

    phase_bits: int
    target_amplitude: float

    def __post_init__(self):
        if not (1 <= self.phase_bits <= MAX_PHASE_BITS):
            raise PreconditionError(
                f"phase_bits must be in [1, {MAX_PHASE_BITS}], got {self.phase_bits}"
            )
        if not (0.0 <= self.target_amplitude <= 1.0):
            raise PreconditionError(
                f"target_amplitude must be in [0, 1], got {self.target_amplitude}"
            )

    @property
    def grid_size(self) -> int:
        return 1 << self.phase_bits

    @property
    def queries_per_run(self) -> int:
        return self.grid_size - 1


def _dirichlet_kernel_sq(x: np.ndarray, m: int) -> np.ndarray:
    # |sin(pi m x) / (m sin(pi x))|^2, periodic in x with period 1;
    # equals (sinc(m xw)/sinc(xw))^2 after wrapping xw to [-1/2, 1/2].
    xw = x - np.round(x)
    return (np.sinc(m * xw) / np.sinc(xw)) ** 2


def outcome_distribution(a: float, t: int) -> np.ndarray:
    """Exact measurement distribution of t-bit amplitude estimation on a."""
    cfg = AmplitudeEstimationConfig(phase_bits=t, target_amplitude=a)
    m = cfg.grid_size
    omega = math.asin(math.sqrt(cfg.target_amplitude)) / math.pi  # in [0, 1/2]
    y = np.arange(m) / m
    return 0.5 * (_dirichlet_kernel_sq(y - omega, m) + _dirichlet_kernel_sq(y + omega, m))


def single_run_error_radius(a: float, t: int) -> float:
    """Accuracy radius holding with probability >= 8/pi^2 for a single run."""
    m = float(1 << t)
    return 2.0 * math.pi * math.sqrt(a * (1.0 - a)) / m + math.pi**2 / m**2


def amplitude_estimation_sample(
    cfg: AmplitudeEstimationConfig,
    rng: np.random.Generator,
    size: int | None = None,
    ledger: QueryLedger | None = None,
    phase: str | None = None,
):
    """Draw estimate(s) sin^2(pi y / 2^t) from the exact outcome distribution.

    Charges 2^t - 1 quantum oracle calls per run when a ledger is given.
    """
    dist = outcome_distribution(cfg.target_amplitude, cfg.phase_bits)
    cdf = np.cumsum(dist)
    cdf[-1] = 1.0  # absorb float round-off in the last bin
    n = 1 if size is None else int(size)
    y = np.searchsorted(cdf, rng.random(n), side="right")
    est = np.sin(np.pi * y / cfg.grid_size) ** 2
    if ledger is not None:
        ledger.charge_quantum(n * cfg.queries_per_run, phase)
    return float(est[0]) if size is None else est


def median_amplitude_estimate(
    cfg: AmplitudeEstimationConfig,
    delta: float,
    rng: np.random.Generator,
    reps: int | None = None,
    ledger: QueryLedger | None = None,
    phase: str | None = None,
) -> float:
    """Median of repeated runs: boosts the 8/pi^2 single-run success to 1-delta."""
    if not (0.0 < delta < 1.0):
        raise PreconditionError(f"delta must be in (0, 1), got {delta}")
    if reps is None:
        reps = max(1, MEDIAN_REPS_FACTOR * math.ceil(math.log2(1.0 / delta)))
    draws = amplitude_estimation_sample(cfg, rng, size=reps, ledger=ledger, phase=phase)
    return float(np.median(draws))


@dataclass
class MaxFindingTrace:
    """Threshold improvements and the query total of one max-finding run."""

    threshold_history: list = field(default_factory=list)
    grover_queries_charged: int = 0

    def to_dict(self) -> dict:
        return {
            "threshold_history": [[int(i), float(v)] for i, v in self.threshold_history],
            "grover_queries_charged": self.grover_queries_charged,
        }


def argmax_query_budget(n: int, delta: float, c_max: float = DEFAULT_C_MAX) -> float:
    return c_max * math.sqrt(n) * math.log2(1.0 / delta)


def simulate_argmax(
    values,
    delta: float,
    rng: np.random.Generator,
    c_max: float = DEFAULT_C_MAX,
    ledger: QueryLedger | None = None,
    phase: str | None = None,
    probe_cost: int = 1,
    return_trace: bool = False,
):
    """Threshold-improvement maximum finding with exact Grover statistics.

    Items are ordered lexicographically by (value, -index), so the unique top
    element is the lowest-index argmax; the loop marks items beating the
    current threshold and runs Grover with the iteration count drawn from the
    standard geometrically-growing schedule for an unknown number of marked
    items.  Runs until the query budget c_max * sqrt(n) * log2(1/delta) is
    exhausted (the real algorithm has no stopping certificate), so charged
    queries never exceed the budget.  Each probe charges ``probe_cost`` oracle
    calls, which is how nested value-oracle costs are passed through.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise PreconditionError("values must be a non-empty vector")
    if not (0.0 < delta < 1.0):
        raise PreconditionError(f"delta must be in (0, 1), got {delta}")
    n = v.size
    trace = MaxFindingTrace()
    if n == 1:
        # nothing to search; no oracle uses needed
        if return_trace:
            trace.threshold_history.append((0, float(v[0])))
            return 0, trace
        return 0

    budget = argmax_query_budget(n, delta, c_max)
    idx = np.arange(n)
    probes = 0

    def beats(j: int) -> np.ndarray:
        return (v > v[j]) | ((v == v[j]) & (idx < j))

    j = int(rng.integers(n))
    trace.threshold_history.append((j, float(v[j])))
    if budget < 1.0:
        # cannot afford a single oracle use: return the uninformed guess
        if return_trace:
            return j, trace
        return j
    # initial threshold: uniform index, one query to read its value
    probes += 1
    grow = 6.0 / 5.0
    m_cap = math.ceil(math.sqrt(n))
    m_max = 1.0
    while True:
        marked = beats(j)
        k = int(marked.sum())
        m_iter = int(rng.integers(0, math.ceil(m_max)))
        cost = m_iter + 1  # Grover iterations plus the verifying measurement
        if probes + cost > budget:
            break
        probes += cost
        if k > 0:
            theta = math.asin(math.sqrt(k / n))
            p_success = math.sin((2 * m_iter + 1) * theta) ** 2
            if rng.random() < p_success:
                # measurement collapses uniformly onto the marked set
                j = int(idx[marked][rng.integers(k)])
                trace.threshold_history.append((j, float(v[j])))
                m_max = 1.0
                continue
        # failed round (or nothing marked): keep threshold, widen the schedule
        m_max = min(grow * m_max, m_cap)

    trace.grover_queries_charged = probes * probe_cost
    if ledger is not None:
        ledger.charge_quantum(trace.grover_queries_charged, phase)
    if return_trace:
        return j, trace
    return j
