"""Command-line harness: configuration, orchestration, CSV reporting.

Exit codes: 0 success, 1 unparseable config, 2 hypothesis violation,
3 invariant failure in validate mode.
"""

import argparse
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import stats
from .config import ExperimentSpec, load_config, serialize_spec, spec_hash
from .errors import ConfigError, HypothesisViolation
from .fast import contraction_estimate, moment_profile, simulate_fast
from .functionals import make_functional
from .measure import (
    averaged_drift,
    ergodic_measure,
    export_measure_csv,
    pcn_measure,
)
from .multiscale import (
    CachedFbar,
    SimConfig,
    closed_form_admissible,
    closed_form_fbar,
    convergence_study,
    remainder_study,
    simulate_coupled_batch,
    solve_averaged,
    solve_averaged_closed,
)
from .noise import NoiseStream, stochastic_convolution_moments
from .reaction import make_reaction, potential_gradient_check
from .spectral import (
    analyze,
    apply_semigroup,
    build_basis,
    field,
    fit_trace_constant,
    norm_h,
    quadrature_weights,
    synthesize,
    trace_sum,
)
from .tables import write_csv


@dataclass
class Runtime:
    spec: ExperimentSpec
    spec_a: object
    spec_b: object
    system: object
    x0: object
    y0: object
    config_hash: str


def build_runtime(spec: ExperimentSpec) -> Runtime:
    spec_a = build_basis(
        spec.operator_a.length, spec.operator_a.bc, spec.sim.n_modes,
        spec.operator_a.mass_shift,
    )
    spec_b = build_basis(
        spec.operator_b.length, spec.operator_b.bc, spec.sim.n_modes,
        spec.operator_b.mass_shift,
    )
    system = make_reaction(spec.reaction_f, spec.reaction_g, spec_b)
    return Runtime(
        spec=spec,
        spec_a=spec_a,
        spec_b=spec_b,
        system=system,
        x0=field(spec.x0, spec_a),
        y0=field(spec.y0, spec_b),
        config_hash=spec_hash(spec),
    )


def _write_summary(out_dir, name, lines, rt: Runtime):
    path = os.path.join(out_dir, "summary.txt")
    body = [
        f"experiment: {rt.spec.name} ({name})",
        f"config_hash: {rt.config_hash}",
        f"seed: {rt.spec.sim.seed}",
        "",
    ]
    body.extend(lines)
    os.makedirs(out_dir, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(body) + "\n")


def _comments(rt: Runtime):
    return [f"config_hash={rt.config_hash}", f"seed={rt.spec.sim.seed}"]


# ---------------------------------------------------------------------------
# validate battery


def _validate_checks(rt: Runtime):
    spec_b = rt.spec_b
    system = rt.system
    rng = np.random.Generator(np.random.Philox(key=[rt.spec.sim.seed, 2**32]))
    checks = []

    lam = spec_b.spectral_gap
    checks.append(
        (
            "hypothesis_gate",
            system.gap > 0,
            f"L_g={system.lipschitz_g}, lambda={lam}, delta={system.gap}",
        )
    )
    try:
        make_reaction("identity_slow()", f"linear_damped(a={lam})", spec_b)
        checks.append(("hypothesis_gate_negative", False, "L_g = lambda was accepted"))
    except HypothesisViolation:
        checks.append(("hypothesis_gate_negative", True, "L_g >= lambda rejected"))

    x = field(rng.standard_normal(spec_b.n_modes), spec_b)
    w = quadrature_weights(spec_b)
    quad_norm = float(np.sqrt(np.sum(w * synthesize(x) ** 2)))
    ok = abs(quad_norm - norm_h(x)) <= 1e-10 * max(1.0, norm_h(x))
    checks.append(("parseval", ok, f"spectral={norm_h(x)!r}, quadrature={quad_norm!r}"))

    s, t = 0.31, 0.47
    lhs = apply_semigroup(spec_b, apply_semigroup(spec_b, x, s), t)
    rhs = apply_semigroup(spec_b, x, s + t)
    ok = bool(np.allclose(lhs.coeffs, rhs.coeffs, rtol=1e-12, atol=0))
    checks.append(("semigroup_property", ok, f"s={s}, t={t}"))

    ok = all(
        norm_h(apply_semigroup(spec_b, x, ti)) <= np.exp(-lam * ti) * norm_h(x) * (1 + 1e-12)
        for ti in (0.1, 0.5, 2.0)
    )
    checks.append(("semigroup_contraction", ok, "|e^{tB}x| <= e^{-lambda t}|x|"))

    fit_grid = np.geomspace(1e-3, 10.0, 25)
    test_grid = np.geomspace(1.3e-3, 8.7, 40)
    c_fit = fit_trace_constant(spec_b, fit_grid)
    gamma = spec_b.trace_exponent
    worst = max(
        trace_sum(spec_b, ti) / (min(ti, 1.0) ** -gamma * np.exp(-lam * ti) * c_fit)
        for ti in test_grid
    )
    checks.append(("trace_bound", worst <= 1.05, f"c={c_fit!r}, worst ratio={worst!r}"))

    back = analyze(synthesize(x), spec_b)
    ok = bool(np.allclose(back.coeffs, x.coeffs, rtol=0, atol=1e-12 * norm_h(x)))
    checks.append(("transform_roundtrip", ok, "analyze(synthesize(x)) = x"))

    table = stochastic_convolution_moments(
        spec_b, 1.0, 8.0 / lam, 0.05, 64, NoiseStream(seed=rt.spec.sim.seed, replica_id=901)
    )
    stationary = table["analytic"][-1]
    err = abs(table["second_moment"][-1] - stationary)
    tol = 4.0 * stationary / np.sqrt(64)
    checks.append(
        ("stochastic_convolution", err <= tol, f"err={err!r} vs 4se~{tol!r}")
    )

    y = field(rng.standard_normal(spec_b.n_modes), spec_b)
    k = field(rng.standard_normal(spec_b.n_modes), spec_b)
    analytic, numeric = potential_gradient_check(system, x, y, k)
    ok = abs(analytic - numeric) <= 1e-5 * max(1.0, abs(analytic))
    checks.append(("potential_gradient", ok, f"analytic={analytic!r}, fd={numeric!r}"))

    traj_a = simulate_fast(
        x, y, system, spec_b, 1.0, 0.05, NoiseStream(seed=rt.spec.sim.seed, replica_id=7)
    )
    traj_b = simulate_fast(
        x, y, system, spec_b, 1.0, 0.05, NoiseStream(seed=rt.spec.sim.seed, replica_id=7)
    )
    checks.append(
        ("determinism", bool(np.array_equal(traj_a.states, traj_b.states)), "bit-exact replay")
    )

    z0 = field(y.coeffs + 1.0, spec_b)
    fit = contraction_estimate(
        x, y, z0, system, spec_b, 2.0 / max(system.gap, 0.25), 0.005,
        NoiseStream(seed=rt.spec.sim.seed, replica_id=11),
    )
    floor = 0.95 * 2 * system.gap
    checks.append(
        ("synchronous_contraction", fit.rate >= floor, f"rate={fit.rate!r} vs floor={floor!r}")
    )
    return checks


def run_validate(rt: Runtime, out_dir: str, threads: int) -> int:
    checks = _validate_checks(rt)
    write_csv(
        os.path.join(out_dir, "validate_report.csv"),
        {
            "check": [c[0] for c in checks],
            "status": ["pass" if c[1] else "FAIL" for c in checks],
            "detail": [c[2] for c in checks],
        },
        _comments(rt),
    )
    lines = [f"{'PASS' if ok else 'FAIL'} {name}: {detail}" for name, ok, detail in checks]
    failed = [name for name, ok, _ in checks if not ok]
    lines.append("")
    lines.append(
        "all invariants passed" if not failed else f"FAILED: {', '.join(failed)}"
    )
    _write_summary(out_dir, "validate", lines, rt)
    for line in lines:
        print(line)
    return 0 if not failed else 3


# ---------------------------------------------------------------------------
# experiment runners


def run_fast(rt: Runtime, out_dir: str, threads: int) -> int:
    opts = rt.spec.experiment
    profile = moment_profile(
        rt.x0, rt.y0, rt.system, rt.spec_b, opts.p,
        opts.t_max, opts.dt, rt.spec.sim.replicas, rt.spec.sim.seed,
        record_every=max(1, int(round(opts.t_max / opts.dt)) // max(opts.n_points, 1)),
    )
    write_csv(
        os.path.join(out_dir, "fast_moments.csv"),
        {"t": profile["t"], "moment": profile["moment"],
         "envelope_shape": profile["envelope_shape"]},
        _comments(rt) + [f"p={opts.p}"],
    )
    z0 = field(rt.y0.coeffs + 1.0, rt.spec_b)
    fit = contraction_estimate(
        rt.x0, rt.y0, z0, rt.system, rt.spec_b,
        2.0 / max(rt.system.gap, 0.25), opts.dt / 4,
        NoiseStream(seed=rt.spec.sim.seed, replica_id=minor_seed("contraction")),
    )
    _write_summary(
        out_dir, "fast",
        [
            f"moment order p: {opts.p}",
            f"synchronous-coupling decay rate: {fit.rate!r}",
            f"lower bound lambda - L_g: {2 * rt.system.gap!r}",
        ],
        rt,
    )
    return 0


def minor_seed(tag: str) -> int:
    """Stable replica-id offsets for auxiliary streams, derived from a label."""
    return 10_000 + (hash_bytes(tag.encode()) % 50_000)


def hash_bytes(data: bytes) -> int:
    import hashlib

    return int.from_bytes(hashlib.sha256(data).digest()[:4], "big")


def run_invariant(rt: Runtime, out_dir: str, threads: int) -> int:
    opts = rt.spec.experiment
    x_fast = field(rt.spec.x0, rt.spec_b)
    erg = ergodic_measure(
        x_fast, rt.y0, rt.system, rt.spec_b, opts.t_sample, opts.dt, opts.thin,
        NoiseStream(seed=rt.spec.sim.seed, replica_id=0), t_burn=opts.t_burn,
    )
    pcn = pcn_measure(
        x_fast, rt.system, rt.spec_b, opts.n_samples, opts.beta, opts.burn_in,
        NoiseStream(seed=rt.spec.sim.seed, replica_id=1),
    )
    export_measure_csv(erg, os.path.join(out_dir, "ergodic_samples.csv"))
    export_measure_csv(pcn, os.path.join(out_dir, "pcn_samples.csv"))
    write_csv(
        os.path.join(out_dir, "moments.csv"),
        {
            "mode": np.arange(1, rt.spec_b.n_modes + 1),
            "ergodic_mean": erg.mode_means(),
            "ergodic_se": erg.mode_mean_stderr(),
            "ergodic_var": erg.mode_variances(),
            "pcn_mean": pcn.mode_means(),
            "pcn_se": pcn.mode_mean_stderr(),
            "pcn_var": pcn.mode_variances(),
        },
        _comments(rt),
    )
    drift = averaged_drift(rt.system, pcn)
    _write_summary(
        out_dir, "invariant",
        [
            f"ergodic ESS: {erg.ess!r} over {erg.n_samples} samples",
            f"pCN ESS: {pcn.ess!r} over {pcn.n_samples} samples, "
            f"acceptance {pcn.acceptance_rate!r}",
            f"averaged drift |F-bar| = {norm_h(drift.value)!r} "
            f"(worst mode SE {float(np.max(drift.std_error))!r})",
        ],
        rt,
    )
    return 0


def run_coupled(rt: Runtime, out_dir: str, threads: int) -> int:
    cfg = rt.spec.sim
    times, out_u, out_v = simulate_coupled_batch(
        rt.x0, rt.y0, rt.spec_a, rt.spec_b, rt.system, cfg, range(cfg.replicas)
    )
    write_csv(
        os.path.join(out_dir, "coupled_stats.csv"),
        {
            "t": times,
            "mean_u_sq": np.mean(np.sum(out_u**2, axis=2), axis=0),
            "mean_v_sq": np.mean(np.sum(out_v**2, axis=2), axis=0),
        },
        _comments(rt) + [f"eps={cfg.eps!r}"],
    )
    _write_summary(
        out_dir, "coupled",
        [
            f"eps: {cfg.eps!r}, replicas: {cfg.replicas}",
            f"E sup_t |u|^2: {float(np.mean(np.max(np.sum(out_u**2, axis=2), axis=1)))!r}",
            f"sup_t E |v|^2: {float(np.max(np.mean(np.sum(out_v**2, axis=2), axis=0)))!r}",
        ],
        rt,
    )
    return 0


def _fbar_for(rt: Runtime):
    opts = rt.spec.experiment
    if closed_form_admissible(rt.system):
        return closed_form_fbar(rt.system, rt.spec_a, rt.spec_b), "closed-form"

    def mc_fbar(u):
        x_fast = field(u.coeffs, rt.spec_b)
        est = pcn_measure(
            x_fast, rt.system, rt.spec_b, opts.n_samples, opts.beta, opts.burn_in,
            NoiseStream(seed=rt.spec.sim.seed, replica_id=minor_seed("fbar")),
        )
        drift = averaged_drift(rt.system, est)
        return field(drift.value.coeffs, rt.spec_a), drift.std_error

    return CachedFbar(mc_fbar), "nested-mc"


def run_average(rt: Runtime, out_dir: str, threads: int) -> int:
    cfg = rt.spec.sim
    if closed_form_admissible(rt.system):
        path = solve_averaged_closed(
            rt.x0, rt.spec_a, rt.spec_b, rt.system, cfg.t_final, cfg.dt_slow
        )
        mode = "closed-form"
    else:
        fbar, mode = _fbar_for(rt)
        path = solve_averaged(rt.x0, rt.spec_a, fbar, cfg.t_final, cfg.dt_slow)
    columns = {"t": path.times}
    for k in range(rt.spec_a.n_modes):
        columns[f"mode_{k + 1}"] = path.states[:, k]
    write_csv(
        os.path.join(out_dir, "averaged_path.csv"), columns,
        _comments(rt) + [f"fbar={mode}"],
    )
    lines = [f"averaged drift evaluator: {mode}"]
    if path.fbar_rel_noise is not None:
        lines.append(f"worst F-bar noise floor: {path.fbar_rel_noise!r}")
    _write_summary(out_dir, "average", lines, rt)
    return 0


def run_remainder(rt: Runtime, out_dir: str, threads: int) -> int:
    opts = rt.spec.experiment
    fbar, mode = _fbar_for(rt)
    h = field(opts.h, rt.spec_a)
    rows = remainder_study(
        rt.x0, rt.y0, rt.spec_a, rt.spec_b, rt.system, rt.spec.sim,
        opts.eps_grid, h, fbar=fbar, threads=threads,
    )
    rows["seed"] = [rt.spec.sim.seed] * len(rows["eps"])
    rows["config_hash"] = [rt.config_hash] * len(rows["eps"])
    write_csv(os.path.join(out_dir, "remainder.csv"), rows, _comments(rt))
    sups = rows["sup_mean_abs_r"]
    decreasing = all(sups[i + 1] < sups[i] for i in range(len(sups) - 1))
    _write_summary(
        out_dir, "remainder",
        [
            f"fbar evaluator: {mode}",
            f"sup_t E|R^eps_h| by eps: "
            + ", ".join(f"{e!r}: {s!r}" for e, s in zip(rows["eps"], sups)),
            f"monotone decrease: {decreasing}",
        ],
        rt,
    )
    return 0


def run_converge(rt: Runtime, out_dir: str, threads: int) -> int:
    opts = rt.spec.experiment
    cfg = rt.spec.sim
    if closed_form_admissible(rt.system):
        ubar = None
    else:
        fbar, _ = _fbar_for(rt)
        ubar = solve_averaged(rt.x0, rt.spec_a, fbar, cfg.t_final, cfg.dt_slow)
    rows = convergence_study(
        rt.x0, rt.y0, rt.spec_a, rt.spec_b, rt.system, cfg, opts.eps_grid,
        ubar=ubar, threads=threads, config_hash=rt.config_hash,
    )
    write_csv(os.path.join(out_dir, "converge.csv"), rows, _comments(rt))
    probs = rows["exceedance_prob"]
    ordered = all(probs[i + 1] <= probs[i] for i in range(len(probs) - 1))
    separated = all(
        rows["ci_low"][i] > rows["ci_high"][i + 1] or probs[i] == probs[i + 1] == 0.0
        for i in range(len(probs) - 1)
    )
    _write_summary(
        out_dir, "converge",
        [
            "exceedance P(sup_t |u^eps - u_bar| > eta) by eps: "
            + ", ".join(f"{e!r}: {p!r}" for e, p in zip(rows["eps"], probs)),
            f"nonincreasing: {ordered}",
            f"Wilson CIs separated: {separated}",
        ],
        rt,
    )
    return 0


_RUNNERS = {
    "validate": run_validate,
    "fast": run_fast,
    "invariant": run_invariant,
    "coupled": run_coupled,
    "average": run_average,
    "remainder": run_remainder,
    "converge": run_converge,
}


def run(spec: ExperimentSpec, out_dir: str, threads: int = 1) -> int:
    """Execute one experiment spec; returns the process exit code."""
    rt = build_runtime(spec)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.toml"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_spec(spec))
    return _RUNNERS[spec.kind](rt, out_dir, threads)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="slowfast-spde",
        description="Slow-fast stochastic reaction-diffusion experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in _RUNNERS:
        p = sub.add_parser(kind, help=f"run a '{kind}' experiment")
        p.add_argument("--config", required=True, help="TOML experiment spec")
        p.add_argument("--seed", type=int, default=None, help="override [sim].seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--replicas", type=int, default=None, help="override [sim].replicas")
        p.add_argument("--threads", type=int, default=1, help="replica worker threads")
    args = parser.parse_args(argv)
    try:
        spec = load_config(args.config)
        if spec.kind != args.command:
            raise ConfigError(
                f"config kind {spec.kind!r} does not match subcommand {args.command!r}"
            )
        spec = spec.with_overrides(seed=args.seed, replicas=args.replicas)
        out_dir = args.out or f"results-{spec.name}"
        return run(spec, out_dir, threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except HypothesisViolation as exc:
        print(f"hypothesis violation: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
