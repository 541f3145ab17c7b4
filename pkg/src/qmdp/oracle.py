"""Generative-model access with query accounting, plus the construction of
the quantum generative model as an exact amplitude table from dyadic
probability rows.

The ledger is the artifact's central measurable: every classical sample and
every charged quantum oracle call lands in it, broken down by caller-supplied
phase labels.  Sampling is replayable: each call derives its own Philox
stream from (seed, call index), so two oracles with equal seeds produce
identical sample sequences regardless of thread interleaving elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ConfigError, PreconditionError
from .mdp import Mdp
from .rng import child_seed, derived_rng

__all__ = [
    "QueryLedger",
    "SampleOracle",
    "DyadicRow",
    "DyadicMdp",
    "AmplitudeOracle",
    "reversible_successor_map",
    "quantize_row",
    "quantize_mdp",
    "build_amplitude_oracle",
]

_UNLABELED = "(unlabeled)"


@dataclass
class QueryLedger:
    """Monotone counters of generative-oracle invocations.

    Conservation invariant: classical_samples + quantum_oracle_calls equals
    the sum over phases, because every charge lands in some phase bucket
    (``(unlabeled)`` when the caller gave none).
    """

    classical_samples: int = 0
    quantum_oracle_calls: int = 0
    phases: dict = field(default_factory=dict)

    def charge_classical(self, n: int, phase: str | None = None) -> None:
        self._charge(n, phase, classical=True)

    def charge_quantum(self, n: int, phase: str | None = None) -> None:
        self._charge(n, phase, classical=False)

    def _charge(self, n, phase, classical):
        n = int(n)
        if n < 0:
            raise ValueError("ledger charges must be non-negative")
        if classical:
            self.classical_samples += n
        else:
            self.quantum_oracle_calls += n
        label = phase if phase is not None else _UNLABELED
        self.phases[label] = self.phases.get(label, 0) + n

    @property
    def total(self) -> int:
        return self.classical_samples + self.quantum_oracle_calls

    def merge(self, other: "QueryLedger") -> "QueryLedger":
        """Entrywise sum; associative and commutative."""
        phases = dict(self.phases)
        for label, n in other.phases.items():
            phases[label] = phases.get(label, 0) + n
        return QueryLedger(
            classical_samples=self.classical_samples + other.classical_samples,
            quantum_oracle_calls=self.quantum_oracle_calls + other.quantum_oracle_calls,
            phases=phases,
        )

    def to_dict(self) -> dict:
        return {
            "classical_samples": self.classical_samples,
            "quantum_oracle_calls": self.quantum_oracle_calls,
            "phases": dict(sorted(self.phases.items())),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "QueryLedger":
        return cls(
            classical_samples=int(doc["classical_samples"]),
            quantum_oracle_calls=int(doc["quantum_oracle_calls"]),
            phases={str(k): int(v) for k, v in doc.get("phases", {}).items()},
        )


class SampleOracle:
    """Classical generative model: draw s' ~ p(.|s, a) for any chosen (s, a).

    A single instance must not be shared mutably across threads; derive
    children with :meth:`split` instead and merge their ledgers afterwards.
    """

    def __init__(self, mdp: Mdp, seed: int, ledger: QueryLedger | None = None):
        self.mdp = mdp
        self.seed = int(seed)
        self.ledger = ledger if ledger is not None else QueryLedger()
        self._calls = 0
        # per-row CDFs for fast inverse-transform sampling
        self._cdf = np.cumsum(mdp.transitions, axis=2)

    def _next_rng(self) -> np.random.Generator:
        rng = derived_rng(self.seed, "call", self._calls)
        self._calls += 1
        return rng

    def _check_indices(self, s: int, a: int) -> None:
        if not (0 <= s < self.mdp.num_states):
            raise IndexError(f"state index {s} out of range [0, {self.mdp.num_states})")
        if not (0 <= a < self.mdp.num_actions):
            raise IndexError(f"action index {a} out of range [0, {self.mdp.num_actions})")

    def sample(self, s: int, a: int, phase: str | None = None) -> int:
        """One successor draw; charges one classical sample."""
        self._check_indices(s, a)
        u = self._next_rng().random()
        successor = int(np.searchsorted(self._cdf[s, a], u, side="right"))
        successor = min(successor, self.mdp.num_states - 1)  # guard u == 1.0 edge
        self.ledger.charge_classical(1, phase)
        return successor

    def sample_counts(self, s: int, a: int, n: int, phase: str | None = None) -> np.ndarray:
        """Counts of n iid successor draws (multinomial); charges n samples.

        Statistically identical to calling :meth:`sample` n times, but costs
        O(S) instead of O(n), which is what makes the classical baselines
        runnable at their true sample sizes.
        """
        self._check_indices(s, a)
        if n < 0:
            raise ValueError("sample count must be non-negative")
        counts = self._next_rng().multinomial(int(n), self.mdp.transitions[s, a])
        self.ledger.charge_classical(n, phase)
        return counts

    def derive_rng(self, *parts) -> np.random.Generator:
        """Named auxiliary stream, independent of the sampling call counter."""
        return derived_rng(self.seed, *parts)

    def split(self, *parts) -> "SampleOracle":
        """Child oracle with a derived seed and a fresh ledger."""
        return SampleOracle(self.mdp, child_seed(self.seed, "split", *parts))


@dataclass(frozen=True)
class DyadicRow:
    """A successor distribution whose probabilities are k / 2^m exactly."""

    denominator_bits: int
    counts: tuple

    def __post_init__(self):
        m = self.denominator_bits
        counts = tuple(int(k) for k in self.counts)
        if m < 0:
            raise ConfigError("denominator_bits must be non-negative")
        if any(k < 0 for k in counts):
            raise ConfigError("dyadic counts must be non-negative")
        if sum(counts) != (1 << m):
            raise ConfigError(
                f"dyadic counts sum to {sum(counts)}, expected 2^{m} = {1 << m}"
            )
        object.__setattr__(self, "counts", counts)

    def probability(self, successor: int) -> Fraction:
        return Fraction(self.counts[successor], 1 << self.denominator_bits)


def reversible_successor_map(row: DyadicRow) -> np.ndarray:
    """Map x in {0,1}^m -> s', assigning consecutive lexicographic blocks of
    x-values to successors in increasing order; block sizes are the counts,
    so each preimage has exactly 2^m * p(s') elements."""
    return np.repeat(
        np.arange(len(row.counts), dtype=np.int64), np.asarray(row.counts, dtype=np.int64)
    )


def quantize_row(probabilities, m: int) -> DyadicRow:
    """Largest-remainder rounding of a probability row onto denominator 2^m."""
    p = np.asarray(probabilities, dtype=float)
    if p.ndim != 1:
        raise ConfigError("probability row must be one-dimensional")
    if np.any(p < 0):
        raise ConfigError("probabilities must be non-negative")
    if abs(p.sum() - 1.0) > 1e-12:
        raise ConfigError(f"probability row sums to {p.sum()!r}, expected 1 within 1e-12")
    if m < 0:
        raise ConfigError("m must be non-negative")
    total = 1 << m
    if int(np.count_nonzero(p)) > total:
        raise ConfigError(
            f"m={m} too small: 2^m={total} slots for {np.count_nonzero(p)} nonzero entries"
        )
    scaled = p * total
    base = np.floor(scaled).astype(np.int64)
    deficit = total - int(base.sum())
    if deficit:
        remainders = scaled - base
        # stable sort => ties go to the lowest index, keeping runs reproducible
        order = np.argsort(-remainders, kind="stable")
        base[order[:deficit]] += 1
    return DyadicRow(denominator_bits=m, counts=tuple(int(k) for k in base))


@dataclass(frozen=True)
class DyadicMdp:
    """An Mdp whose rows have been replaced by dyadic counts (shared m)."""

    mdp: Mdp  # the quantized Mdp (rows are counts / 2^m)
    denominator_bits: int
    counts: np.ndarray  # (S, A, S) int64
    max_distortion: float  # max entrywise |quantized - original|

    def row(self, s: int, a: int) -> DyadicRow:
        return DyadicRow(self.denominator_bits, tuple(int(k) for k in self.counts[s, a]))

    def to_dict(self) -> dict:
        from .mdp import mdp_to_dict

        doc = mdp_to_dict(self.mdp)
        doc["m"] = self.denominator_bits
        doc["counts"] = self.counts.tolist()
        doc["max_distortion"] = self.max_distortion
        return doc


def quantize_mdp(mdp: Mdp, m: int = 20) -> DyadicMdp:
    """Quantize every transition row to denominator 2^m.

    Quantization distortion interacts with downstream accuracy guarantees,
    so it is carried on the result instead of being absorbed silently.
    """
    s_n, a_n = mdp.num_states, mdp.num_actions
    counts = np.zeros((s_n, a_n, s_n), dtype=np.int64)
    for s in range(s_n):
        for a in range(a_n):
            counts[s, a] = quantize_row(mdp.transitions[s, a], m).counts
    quantized = counts / float(1 << m)
    distortion = float(np.abs(quantized - mdp.transitions).max())
    new_mdp = Mdp(transitions=quantized, rewards=mdp.rewards, discount=mdp.discount)
    return DyadicMdp(
        mdp=new_mdp, denominator_bits=m, counts=counts, max_distortion=distortion
    )


@dataclass(frozen=True)
class AmplitudeOracle:
    """Amplitude table of the quantum generative model.

    For each (s, a) the unitary prepares sum_s' sqrt(p(s'|s,a)) |s'> (tensored
    with a garbage register that no consumer interferes on, so it is abstracted
    to a dimension label).  Amplitudes are exact square roots of dyadic
    rationals: squared and re-summed in rational arithmetic they give back
    exactly 1.
    """

    counts: np.ndarray  # (S, A, S) int64
    denominator_bits: int
    amplitudes: np.ndarray  # (S, A, S) float
    garbage_register: str = "J"

    def probability_exact(self, s: int, a: int, successor: int) -> Fraction:
        return Fraction(int(self.counts[s, a, successor]), 1 << self.denominator_bits)

    def amplitude(self, s: int, a: int, successor: int) -> float:
        return float(self.amplitudes[s, a, successor])


def build_amplitude_oracle(dyadic: DyadicMdp) -> AmplitudeOracle:
    """Amplitudes sqrt(k / 2^m) per successor, derived from the reversible map
    plus the uniform superposition over the m auxiliary bits.

    Non-dyadic MDPs are rejected: quantize first (see :func:`quantize_mdp`)
    so the quantization step stays visible in the experiment provenance.
    """
    if isinstance(dyadic, Mdp):
        raise TypeError(
            "build_amplitude_oracle needs a DyadicMdp; quantize the Mdp first "
            "with quantize_mdp(mdp, m)"
        )
    total = 1 << dyadic.denominator_bits
    sums = dyadic.counts.sum(axis=2)
    if np.any(sums != total):
        s, a = np.argwhere(sums != total)[0]
        raise PreconditionError(
            f"row ({s}, {a}) is not dyadic: counts sum to {sums[s, a]}, expected {total}"
        )
    amplitudes = np.sqrt(dyadic.counts / float(total))
    return AmplitudeOracle(
        counts=dyadic.counts.copy(),
        denominator_bits=dyadic.denominator_bits,
        amplitudes=amplitudes,
    )
