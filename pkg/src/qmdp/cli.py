"""Config-driven command-line harness.

Subcommands: ``solve`` runs one solver and writes a report JSON; ``sweep``
runs a solver across a parameter axis and writes per-run CSV rows plus a
fitted log-log scaling exponent; ``verify`` runs a named invariant suite;
``oracle-build`` quantizes an MDP file into dyadic form.

Reports are deterministic for a fixed config and seed: rerunning ``solve``
reproduces the output byte for byte except for the single timestamp field.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import math
import sys
import traceback

import numpy as np

from .errors import ConfigError, PreconditionError, QmdpError
from .estimators import EstimatorConfig
from .hard_instances import (
    HardInstanceSpec,
    multi_arm_instance,
    tiled_instance,
    two_state_chain,
    value_gap,
)
from .mdp import (
    Mdp,
    bellman_backup,
    exact_value_iteration,
    expected_next_value,
    load_mdp_json,
    mdp_from_dict,
    policy_backup,
    policy_value_exact,
    total_variance_norm,
)
from .oracle import SampleOracle, build_amplitude_oracle, quantize_mdp
from .rng import derived_rng
from .solvers import (
    MaxFindingParams,
    SolveReport,
    VarianceReducedParams,
    max_finding_vi,
    sampled_vi,
    variance_reduced_vi,
)

__all__ = [
    "load_config",
    "build_instance",
    "run_solver",
    "sandwich_success",
    "fit_power_law",
    "run_sweep",
    "run_suite",
    "main",
]

SOLVER_NAMES = ("variance-reduced", "max-finding", "sampled")
SWEEP_AXES = ("eps", "gamma", "num_actions", "copies")
SUITES = ("total-variance", "oracle-normalization", "monotone-iterates", "sandwich",
          "gap", "contraction")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    validate_config(doc, source=str(path))
    return doc


def validate_config(doc: dict, source: str = "<config>") -> None:
    if not isinstance(doc, dict):
        raise ConfigError(f"{source}: config must be a JSON object")
    instance = doc.get("instance")
    if not isinstance(instance, dict):
        raise ConfigError(f"{source}: missing 'instance' object")
    sources = [k for k in ("path", "mdp", "two_state", "hard_instance") if k in instance]
    if len(sources) != 1:
        raise ConfigError(
            f"{source}: instance must name exactly one source of "
            f"('path', 'mdp', 'two_state', 'hard_instance'), found {sources}"
        )
    solver = doc.get("solver")
    if not isinstance(solver, dict) or "name" not in solver:
        raise ConfigError(f"{source}: missing 'solver' object with a 'name'")
    if solver["name"] not in SOLVER_NAMES:
        raise ConfigError(f"{source}: solver.name must be one of {SOLVER_NAMES}")
    for key in ("eps", "delta"):
        if key not in solver:
            raise ConfigError(f"{source}: solver.{key} is required")
    if "seed" not in doc:
        raise ConfigError(f"{source}: top-level 'seed' is required")


def build_instance(instance: dict, source: str = "<config>") -> tuple[Mdp, dict | None]:
    """Materialize the MDP named by an instance block; returns provenance for
    generated instances."""
    if "path" in instance:
        return load_mdp_json(instance["path"]), None
    if "mdp" in instance:
        return mdp_from_dict(instance["mdp"], source=f"{source}:instance.mdp"), None
    if "two_state" in instance:
        doc = instance["two_state"]
        mdp = two_state_chain(doc["gamma"], doc["p"])
        return mdp, {"two_state": doc}
    doc = dict(instance["hard_instance"])
    spec = HardInstanceSpec(
        gamma=doc["gamma"],
        num_actions=doc["num_actions"],
        eps=doc["eps"],
        large_arms=frozenset(doc.get("large_arms", [])),
        c_alpha=doc.get("c_alpha", 9.0),
        copies=doc.get("copies", 1),
    )
    mdp = tiled_instance(spec) if spec.copies > 1 else multi_arm_instance(spec)
    return mdp, {"hard_instance": spec.provenance()}


def estimator_config(doc: dict | None) -> EstimatorConfig:
    if not doc:
        return EstimatorConfig()
    try:
        return EstimatorConfig(**doc)
    except TypeError as exc:
        raise ConfigError(f"estimator config: {exc}") from exc


def run_solver(mdp: Mdp, solver: dict, cfg: EstimatorConfig, seed: int,
               diagnostics: bool = False) -> SolveReport:
    oracle = SampleOracle(mdp, seed)
    name = solver["name"]
    eps, delta = float(solver["eps"]), float(solver["delta"])
    if name == "variance-reduced":
        params = VarianceReducedParams.for_mdp(
            mdp, eps, delta, b=float(solver.get("b", 1.0)), c=float(solver.get("c", 0.01)))
        return variance_reduced_vi(oracle, params, cfg, diagnostics=diagnostics)
    if name == "max-finding":
        params = MaxFindingParams.for_mdp(
            mdp, eps, delta, c_max=float(solver.get("c_max", 4.0)))
        return max_finding_vi(oracle, params, cfg, diagnostics=diagnostics)
    return sampled_vi(oracle, eps, delta, mode=solver.get("mode", "classical"),
                      cfg=cfg, diagnostics=diagnostics)


def sandwich_success(mdp: Mdp, report: SolveReport, eps: float) -> bool:
    """Ground-truth success check against the exact solver.

    Monotone solvers: the full sandwich (value, and Q when reported).  The
    plain sampled baseline only claims |v_hat - v*| <= eps.
    """
    v_star, _, q_star = exact_value_iteration(mdp, tol=1e-10)
    if report.solver.startswith("sampled"):
        return bool(np.abs(report.v_hat - v_star).max() <= eps)
    v_pi = policy_value_exact(mdp, report.pi_hat)
    ok = (
        bool(np.all(v_star - eps <= report.v_hat + 1e-9))
        and bool(np.all(report.v_hat <= v_pi + 1e-9))
        and bool(np.all(v_pi <= v_star + 1e-8))
    )
    if report.q_hat is not None:
        q_pi = mdp.rewards + mdp.discount * expected_next_value(mdp, v_pi)
        ok = (
            ok
            and bool(np.all(q_star - eps <= report.q_hat + 1e-9))
            and bool(np.all(report.q_hat <= q_pi + 1e-9))
            and bool(np.all(q_pi <= q_star + 1e-8))
        )
    return ok


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def _report_doc(config: dict, report: SolveReport, provenance: dict | None) -> dict:
    doc = report.to_dict()
    doc["config"] = config
    if provenance:
        doc["instance_provenance"] = provenance
    # the one nondeterministic field; determinism tests exclude it
    doc["timestamp"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    return doc


def _write_json(doc: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_snapshots_csv(report: SolveReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "iteration", "state", "v", "pi"])
        for epoch, it, v, pi in report.snapshots:
            for s in range(len(v)):
                writer.writerow([epoch, it, s, repr(float(v[s])), int(pi[s])])


def cmd_solve(args) -> int:
    config = load_config(args.config)
    mdp, provenance = build_instance(config["instance"], source=args.config)
    cfg = estimator_config(config.get("estimator"))
    diagnostics = bool(config.get("diagnostics", False)) or bool(config.get("snapshots_csv"))
    report = run_solver(mdp, config["solver"], cfg, int(config["seed"]), diagnostics)
    _write_json(_report_doc(config, report, provenance), args.out)
    if config.get("snapshots_csv"):
        _write_snapshots_csv(report, config["snapshots_csv"])
    print(f"wrote {args.out}: solver={report.solver} "
          f"quantum={report.ledger.quantum_oracle_calls} "
          f"classical={report.ledger.classical_samples}")
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def fit_power_law(xs, ys) -> tuple[float, float]:
    """Least-squares slope and R^2 of log(y) against log(x)."""
    lx, ly = np.log(np.asarray(xs, dtype=float)), np.log(np.asarray(ys, dtype=float))
    if lx.size < 3:
        raise PreconditionError("power-law fit needs at least 3 points")
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), r_squared


def _apply_axis(config: dict, axis: str, value: float) -> dict:
    doc = json.loads(json.dumps(config))  # deep copy
    if axis == "eps":
        doc["solver"]["eps"] = value
        return doc
    instance = doc["instance"]
    if "hard_instance" in instance:
        block = instance["hard_instance"]
    elif "two_state" in instance and axis == "gamma":
        block = instance["two_state"]
    else:
        raise ConfigError(f"axis {axis!r} requires a generated instance block")
    if axis in ("num_actions", "copies"):
        block[axis] = int(value)
    else:
        block[axis] = value
    return doc


def _fit_x(axis: str, value: float) -> float:
    # fit against the variable the scaling laws are stated in
    if axis == "eps":
        return 1.0 / value
    if axis == "gamma":
        return 1.0 / (1.0 - value)  # horizon
    return float(value)


def run_sweep(config: dict, axis: str, values, seeds: int):
    """Run the configured solver across an axis; returns (rows, fit_doc).

    Rows are (axis_value, seed, classical_samples, quantum_oracle_calls,
    success); the fit is on the per-point median of total queries, against
    1/eps for the eps axis, the horizon for the gamma axis, and the raw
    value otherwise.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    values = list(values)
    if len(values) < 3:
        raise PreconditionError("sweep needs at least 3 axis values")
    if seeds < 1:
        raise PreconditionError("sweep needs at least 1 seed per point")
    cfg = estimator_config(config.get("estimator"))
    base_seed = int(config["seed"])
    rows = []
    points = []
    for value in values:
        doc = _apply_axis(config, axis, value)
        mdp, _ = build_instance(doc["instance"])
        totals = []
        for i in range(seeds):
            seed = base_seed + i
            report = run_solver(mdp, doc["solver"], cfg, seed)
            success = sandwich_success(mdp, report, float(doc["solver"]["eps"]))
            rows.append((value, seed, report.ledger.classical_samples,
                         report.ledger.quantum_oracle_calls, int(success)))
            totals.append(report.ledger.total)
        points.append((_fit_x(axis, value), float(np.median(totals))))
    slope, r_squared = fit_power_law([p[0] for p in points], [p[1] for p in points])
    fit = {
        "axis": axis,
        "x_variable": {"eps": "1/eps", "gamma": "horizon"}.get(axis, axis),
        "points": [[x, med] for x, med in points],
        "slope": slope,
        "r_squared": r_squared,
    }
    return rows, fit


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    values = [float(v) for v in args.values.split(",") if v.strip()]
    rows, fit = run_sweep(config, args.axis, values, args.seeds)
    with open(args.out_csv, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["axis_value", "seed", "classical_samples",
                         "quantum_oracle_calls", "success"])
        writer.writerows(rows)
    _write_json(fit, args.out_fit)
    print(f"wrote {args.out_csv} ({len(rows)} rows) and {args.out_fit}: "
          f"slope={fit['slope']:.4f} r2={fit['r_squared']:.4f}")
    return 0


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def _random_mdp(rng: np.random.Generator, max_states: int = 8, max_actions: int = 8,
                gammas=(0.9, 0.95, 0.99)) -> Mdp:
    s = int(rng.integers(1, max_states + 1))
    a = int(rng.integers(1, max_actions + 1))
    transitions = rng.dirichlet(np.ones(s), size=(s, a))
    rewards = rng.random((s, a))
    return Mdp(transitions=transitions, rewards=rewards,
               discount=float(gammas[rng.integers(len(gammas))]))


def _suite_total_variance(trials: int, seed: int):
    passed = 0
    for i in range(trials):
        rng = derived_rng(seed, "tv", i)
        mdp = _random_mdp(rng)
        pi = rng.integers(mdp.num_actions, size=mdp.num_states)
        bound = math.sqrt(2.0) * mdp.effective_horizon**1.5
        passed += total_variance_norm(mdp, pi) <= bound
    return passed, trials


def _suite_oracle_normalization(trials: int, seed: int):
    from fractions import Fraction

    passed = 0
    for i in range(trials):
        rng = derived_rng(seed, "oracle", i)
        mdp = _random_mdp(rng, max_states=6, max_actions=4)
        dyadic = quantize_mdp(mdp, m=10)
        table = build_amplitude_oracle(dyadic)
        ok = True
        for s in range(mdp.num_states):
            for a in range(mdp.num_actions):
                total = sum(table.probability_exact(s, a, t) for t in range(mdp.num_states))
                ok &= total == Fraction(1)
        passed += ok
    return passed, trials


def _suite_monotone(trials: int, seed: int):
    spec = HardInstanceSpec(gamma=0.9, num_actions=4, eps=1.0, large_arms=frozenset({1}))
    mdp = multi_arm_instance(spec)
    params = VarianceReducedParams.for_mdp(mdp, eps=1.0, delta=0.1)
    passed = 0
    for i in range(trials):
        oracle = SampleOracle(mdp, seed + i)
        report = variance_reduced_vi(oracle, params)
        passed += bool(report.monotone_iterates_ok)
    return passed, trials


def _suite_sandwich(trials: int, seed: int):
    spec = HardInstanceSpec(gamma=0.9, num_actions=4, eps=1.0, large_arms=frozenset({1}))
    mdp = multi_arm_instance(spec)
    ok = 0
    for i in range(trials):
        report = run_solver(mdp, {"name": "variance-reduced", "eps": 1.0, "delta": 0.1},
                            EstimatorConfig(), seed + i)
        ok += sandwich_success(mdp, report, 1.0)
        report = run_solver(mdp, {"name": "max-finding", "eps": 1.0, "delta": 0.1},
                            EstimatorConfig(), seed + i)
        ok += sandwich_success(mdp, report, 1.0)
    # probabilistic guarantee: pass at the 1-delta rate, not at 100%
    return ok, trials * 2, ok >= math.floor(0.9 * 2 * trials)


def _suite_gap(trials: int, seed: int):
    checks = []
    for gamma in (0.9, 0.95, 0.99):
        horizon = 1.0 / (1.0 - gamma)
        for eps in (0.1, 0.5, 1.0):
            if eps < horizon / 9.0:
                checks.append(value_gap(gamma, eps, 9.0) >= 2.0 * eps)
    return sum(checks), len(checks)


def _suite_contraction(trials: int, seed: int):
    passed = 0
    for i in range(trials):
        rng = derived_rng(seed, "contract", i)
        mdp = _random_mdp(rng, max_states=6, max_actions=4)
        pi = rng.integers(mdp.num_actions, size=mdp.num_states)
        u = rng.uniform(0, mdp.effective_horizon, mdp.num_states)
        w = rng.uniform(0, mdp.effective_horizon, mdp.num_states)
        lhs = np.abs(policy_backup(mdp, pi, u) - policy_backup(mdp, pi, w)).max()
        ok = lhs <= mdp.discount * np.abs(u - w).max() + 1e-12
        lo = np.minimum(u, w)
        ok &= bool(np.all(policy_backup(mdp, pi, lo) <= policy_backup(mdp, pi, u) + 1e-12))
        ok &= bool(np.all(bellman_backup(mdp, lo) <= bellman_backup(mdp, u) + 1e-12))
        passed += ok
    return passed, trials


_SUITE_IMPL = {
    "total-variance": (_suite_total_variance, 1000),
    "oracle-normalization": (_suite_oracle_normalization, 100),
    "monotone-iterates": (_suite_monotone, 50),
    "sandwich": (_suite_sandwich, 100),
    "gap": (_suite_gap, 1),
    "contraction": (_suite_contraction, 500),
}


def run_suite(suite: str, trials: int | None = None, seed: int = 0):
    """Run a named suite; returns (passed, total, suite_ok)."""
    if suite not in _SUITE_IMPL:
        raise ConfigError(f"unknown suite {suite!r}; choose from {SUITES}")
    impl, default_trials = _SUITE_IMPL[suite]
    result = impl(trials if trials is not None else default_trials, seed)
    if len(result) == 2:
        passed, total = result
        return passed, total, passed == total
    return result


def cmd_verify(args) -> int:
    passed, total, ok = run_suite(args.suite, args.trials, args.seed)
    print(f"suite {args.suite}: {passed}/{total} pass")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# oracle-build
# ---------------------------------------------------------------------------


def cmd_oracle_build(args) -> int:
    mdp = load_mdp_json(args.mdp)
    dyadic = quantize_mdp(mdp, m=args.m)
    build_amplitude_oracle(dyadic)  # validates exactness
    _write_json(dyadic.to_dict(), args.out)
    print(f"wrote {args.out}: m={args.m} max_distortion={dyadic.max_distortion:.3e}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qmdp",
                                     description="sampled-MDP solver harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run one solver from a config")
    p_solve.add_argument("--config", required=True)
    p_solve.add_argument("--out", required=True)
    p_solve.set_defaults(func=cmd_solve)

    p_sweep = sub.add_parser("sweep", help="sweep a parameter axis")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p_sweep.add_argument("--values", required=True, help="comma-separated axis values")
    p_sweep.add_argument("--seeds", type=int, default=20,
                         help="seeds per point (20 or more for stable medians)")
    p_sweep.add_argument("--out-csv", required=True)
    p_sweep.add_argument("--out-fit", required=True)
    p_sweep.set_defaults(func=cmd_sweep)

    p_verify = sub.add_parser("verify", help="run a named invariant suite")
    p_verify.add_argument("--suite", required=True)
    p_verify.add_argument("--trials", type=int, default=None)
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.set_defaults(func=cmd_verify)

    p_oracle = sub.add_parser("oracle-build", help="quantize an MDP to dyadic form")
    p_oracle.add_argument("--mdp", required=True)
    p_oracle.add_argument("--m", type=int, default=20)
    p_oracle.add_argument("--out", required=True)
    p_oracle.set_defaults(func=cmd_oracle_build)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, PreconditionError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except QmdpError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
