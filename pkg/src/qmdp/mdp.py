"""Exact tabular-MDP mathematics.

Everything in this module is deterministic and side-effect free: operators,
the Bellman recursion, direct linear-algebra solvers used as ground-truth
oracles by the test harness, and the total-variance quantity that controls
how much per-step estimation error a sampled solver can absorb.

Conventions: a value vector ``v`` has shape (S,), a Q table has shape
(S, A), transitions have shape (S, A, S) indexed ``p[s, a, s']``.  When a
Q table is tied, ``greedy`` breaks ties toward the lowest action index so
runs are reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InternalError, PreconditionError

__all__ = [
    "Mdp",
    "expected_next_value",
    "successor_variance",
    "bellman_backup",
    "policy_backup",
    "policy_value_exact",
    "exact_value_iteration",
    "greedy",
    "total_variance_norm",
    "mdp_from_dict",
    "mdp_to_dict",
    "load_mdp_json",
    "save_mdp_json",
]

_ROW_SUM_TOL = 1e-12
_VARIANCE_CLAMP = -1e-12


@dataclass(frozen=True)
class Mdp:
    """Tabular discounted MDP: transitions ``p[s,a,s']``, rewards ``r[s,a]``
    in [0, 1], and discount ``gamma`` in [0, 1)."""

    transitions: np.ndarray
    rewards: np.ndarray
    discount: float

    def __post_init__(self):
        p = np.ascontiguousarray(np.asarray(self.transitions, dtype=float))
        r = np.ascontiguousarray(np.asarray(self.rewards, dtype=float))
        if p.ndim != 3 or p.shape[0] != p.shape[2]:
            raise ConfigError(f"transitions must have shape (S, A, S), got {p.shape}")
        if r.shape != p.shape[:2]:
            raise ConfigError(
                f"rewards shape {r.shape} does not match transitions {p.shape[:2]}"
            )
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ConfigError("need at least one state and one action")
        if not (0.0 <= self.discount < 1.0):
            raise ConfigError(f"discount must be in [0, 1), got {self.discount}")
        if np.any(p < 0.0) or np.any(p > 1.0):
            s, a, t = np.unravel_index(int(np.argmin(np.minimum(p, 1.0 - p))), p.shape)
            raise ConfigError(f"transitions[{s}][{a}][{t}] = {p[s, a, t]} outside [0, 1]")
        sums = p.sum(axis=2)
        bad = np.abs(sums - 1.0) > _ROW_SUM_TOL
        if np.any(bad):
            s, a = np.argwhere(bad)[0]
            raise ConfigError(
                f"transitions[{s}][{a}] sums to {sums[s, a]!r} (must be 1 within {_ROW_SUM_TOL})"
            )
        if np.any(r < 0.0) or np.any(r > 1.0):
            s, a = np.unravel_index(int(np.argmin(np.minimum(r, 1.0 - r))), r.shape)
            raise ConfigError(f"rewards[{s}][{a}] = {r[s, a]} outside [0, 1]")
        p.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "transitions", p)
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "discount", float(self.discount))

    @property
    def num_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[1]

    @property
    def effective_horizon(self) -> float:
        """Gamma-horizon 1 / (1 - gamma); also the value-scale upper bound."""
        return 1.0 / (1.0 - self.discount)

    def flat_transitions(self) -> np.ndarray:
        """(S*A, S) view of the transition tensor, rows in row-major (s, a)."""
        s, a, _ = self.transitions.shape
        return self.transitions.reshape(s * a, s)


def _check_value_vec(mdp: Mdp, v: np.ndarray, name: str = "v") -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (mdp.num_states,):
        raise ValueError(f"{name} must have shape ({mdp.num_states},), got {v.shape}")
    return v


def _check_policy(mdp: Mdp, pi: np.ndarray) -> np.ndarray:
    pi = np.asarray(pi)
    if pi.shape != (mdp.num_states,):
        raise ValueError(f"policy must have shape ({mdp.num_states},), got {pi.shape}")
    if not np.issubdtype(pi.dtype, np.integer):
        raise ValueError("policy entries must be integers")
    if np.any(pi < 0) or np.any(pi >= mdp.num_actions):
        raise ValueError(f"policy entries must lie in [0, {mdp.num_actions})")
    return pi.astype(np.int64)


def expected_next_value(mdp: Mdp, v: np.ndarray) -> np.ndarray:
    """One-step expectation of v under every row: out[s, a] = p_{s,a} . v."""
    v = _check_value_vec(mdp, v)
    return (mdp.flat_transitions() @ v).reshape(mdp.num_states, mdp.num_actions)


def successor_variance(mdp: Mdp, v: np.ndarray) -> np.ndarray:
    """Variance of v[s'] under each row's successor distribution.

    Computed as sum_s' p * (v - mean)^2, which is algebraically the same as
    the difference-of-moments form but cannot go negative from cancellation;
    the clamp below only guards the documented contract.
    """
    v = _check_value_vec(mdp, v)
    mean = expected_next_value(mdp, v)
    dev = v[np.newaxis, np.newaxis, :] - mean[:, :, np.newaxis]
    var = np.einsum("sat,sat->sa", mdp.transitions, dev * dev)
    if np.any(var < _VARIANCE_CLAMP):
        raise InternalError(f"variance computed below {_VARIANCE_CLAMP}: min {var.min()}")
    return np.maximum(var, 0.0)


def bellman_backup(mdp: Mdp, v: np.ndarray) -> np.ndarray:
    """Optimal one-step backup: out[s] = max_a r[s,a] + gamma * (Pv)[s,a]."""
    return (mdp.rewards + mdp.discount * expected_next_value(mdp, v)).max(axis=1)


def policy_backup(mdp: Mdp, pi: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Backup under a fixed policy; a gamma-contraction with fixed point v^pi."""
    pi = _check_policy(mdp, pi)
    v = _check_value_vec(mdp, v)
    idx = np.arange(mdp.num_states)
    p_pi = mdp.transitions[idx, pi, :]  # (S, S)
    return mdp.rewards[idx, pi] + mdp.discount * (p_pi @ v)


def policy_value_exact(mdp: Mdp, pi: np.ndarray) -> np.ndarray:
    """Exact v^pi via the linear system (I - gamma P_pi) v = r_pi."""
    pi = _check_policy(mdp, pi)
    idx = np.arange(mdp.num_states)
    p_pi = mdp.transitions[idx, pi, :]
    r_pi = mdp.rewards[idx, pi]
    a = np.eye(mdp.num_states) - mdp.discount * p_pi
    try:
        v = np.linalg.solve(a, r_pi)
    except np.linalg.LinAlgError as exc:  # unreachable for gamma < 1
        raise InternalError(f"policy evaluation system singular: {exc}") from exc
    residual = np.abs(a @ v - r_pi).max()
    if residual > 1e-10 * mdp.effective_horizon:
        raise InternalError(f"policy evaluation residual {residual} too large")
    return v


def greedy(q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-max value and row-argmax policy of a Q table (lowest index wins ties)."""
    q = np.asarray(q, dtype=float)
    if q.ndim != 2:
        raise ValueError(f"q must be a (S, A) table, got shape {q.shape}")
    return q.max(axis=1), q.argmax(axis=1).astype(np.int64)


def exact_value_iteration(
    mdp: Mdp, tol: float = 1e-9
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Iterate the Bellman backup from zero until the fixed point is certified
    to within ``tol`` in max-norm.  Returns (v*, pi*, q*).

    The stopping rule converts the iterate gap into fixed-point error through
    the standard contraction bound: gap <= tol*(1-gamma)/(2*gamma) certifies
    |v - v*| <= tol.
    """
    if tol <= 0:
        raise PreconditionError(f"tol must be positive, got {tol}")
    gamma = mdp.discount
    horizon = mdp.effective_horizon
    threshold = tol * (1.0 - gamma) / (2.0 * gamma) if gamma > 0 else tol
    # generous safety cap; convergence is hit well before it in practice
    max_iter = int(math.ceil(horizon * (math.log(horizon / tol) + 2.0))) + 2
    v = np.zeros(mdp.num_states)
    for _ in range(max_iter):
        v_next = bellman_backup(mdp, v)
        gap = np.abs(v_next - v).max()
        v = v_next
        if gap <= threshold:
            break
    q = mdp.rewards + gamma * expected_next_value(mdp, v)
    _, pi = greedy(q)
    return v, pi, q


def total_variance_norm(mdp: Mdp, pi: np.ndarray) -> float:
    """Max-norm of (I - gamma P^pi)^{-1} sigma(v^pi).

    P^pi here is the (S*A) x (S*A) matrix with entry p(s'|s,a) at column
    (s', pi[s']) and zero elsewhere.  The quantity is bounded by
    sqrt(2) * horizon^1.5 for every policy (the divisive form of that bound
    occasionally quoted elsewhere does not survive the algebra; the harness
    checks the multiplicative one numerically).
    """
    pi = _check_policy(mdp, pi)
    s, a = mdp.num_states, mdp.num_actions
    v_pi = policy_value_exact(mdp, pi)
    sigma = np.sqrt(successor_variance(mdp, v_pi)).ravel()
    p_big = np.zeros((s * a, s * a))
    p_big.reshape(s * a, s, a)[:, np.arange(s), pi] = mdp.flat_transitions()
    z = np.linalg.solve(np.eye(s * a) - mdp.discount * p_big, sigma)
    return float(np.abs(z).max())


def mdp_from_dict(doc: dict, source: str = "<mdp>") -> Mdp:
    """Build an Mdp from the JSON document format, with path-specific errors."""
    for key in ("S", "A", "gamma", "r", "p"):
        if key not in doc:
            raise ConfigError(f"{source}: missing required key '{key}'")
    s, a = doc["S"], doc["A"]
    if not (isinstance(s, int) and isinstance(a, int) and s >= 1 and a >= 1):
        raise ConfigError(f"{source}: S and A must be positive integers")
    try:
        p = np.asarray(doc["p"], dtype=float)
        r = np.asarray(doc["r"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: r/p are not numeric arrays: {exc}") from exc
    if p.shape != (s, a, s):
        raise ConfigError(f"{source}: p has shape {p.shape}, expected ({s}, {a}, {s})")
    if r.shape != (s, a):
        raise ConfigError(f"{source}: r has shape {r.shape}, expected ({s}, {a})")
    try:
        return Mdp(transitions=p, rewards=r, discount=float(doc["gamma"]))
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def mdp_to_dict(mdp: Mdp) -> dict:
    return {
        "S": mdp.num_states,
        "A": mdp.num_actions,
        "gamma": mdp.discount,
        "r": mdp.rewards.tolist(),
        "p": mdp.transitions.tolist(),
    }


def load_mdp_json(path) -> Mdp:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return mdp_from_dict(doc, source=str(path))


def save_mdp_json(mdp: Mdp, path, extra: dict | None = None) -> None:
    doc = mdp_to_dict(mdp)
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")
