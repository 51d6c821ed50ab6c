"""Command-line orchestration: run experiments from a config, write CSV/JSON/text/plots.

Exit codes: 0 when every verdict passes, 2 when a verdict fails, 1 on errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig
from .grid import GridSpec
from .levy import StablePositive, classify_indices
from .rates import RateAdmissibilityError, fit_loglog, predict_chaos_rate, predict_euler_rate
from .rng import stream
from .scheme import (
    ErrorTable,
    SimulationBlowup,
    _map,
    coupled_chaos_error,
    coupled_discretization_error,
    resolve_workers,
    run_limit_copies,
    run_particle_system,
    write_trajectories_csv,
)
from .yamada import (
    asymptotics_check,
    build_yw,
    key12_sweep,
    property_checks,
    random_key0_triples,
    verify_lemma_key0,
)

# verdict bands around the predicted exponent theta
EULER_BAND = (-0.2, 0.15)
CHAOS_MARGIN = 0.15


@dataclass
class RunReport:
    experiment: str
    config: dict
    table: list[tuple] | None = None
    fit: dict | None = None
    prediction: dict | None = None
    theory_exponent: float | None = None
    verdicts: dict = field(default_factory=dict)
    replications: int = 0
    blowups: int = 0
    summary: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_dict(self) -> dict:
        """Deterministic content; wall-clock time is kept out so reruns compare equal."""
        return {
            "experiment": self.experiment,
            "config": self.config,
            "table": [list(r) for r in self.table] if self.table is not None else None,
            "fit": self.fit,
            "prediction": self.prediction,
            "theory_exponent": self.theory_exponent,
            "verdicts": self.verdicts,
            "passed": self.passed,
            "replications": self.replications,
            "blowups": self.blowups,
            "summary": self.summary,
        }

    def to_text(self, wall_clock: bool = True) -> str:
        lines = [f"experiment: {self.experiment}", f"seed: {self.config.get('seed')}"]
        if self.table:
            lines.append("scale        error          stderr         count")
            for s, e, se, c in self.table:
                lines.append(f"{s:<12d} {e:<14.6g} {se:<14.6g} {c}")
        if self.fit:
            lo, hi = self.fit["slope_ci"]
            lines.append(f"fitted slope: {self.fit['slope']:.4f}  (95% CI [{lo:.4f}, {hi:.4f}])")
        if self.theory_exponent is not None:
            lines.append(f"theoretical slope: {-self.theory_exponent:.4f}")
        if self.prediction and "branch" in self.prediction:
            lines.append(f"branch: {self.prediction.get('branch')}")
        for k, v in self.summary.items():
            lines.append(f"{k}: {v}")
        lines.append(f"replications: {self.replications}  blowups: {self.blowups}")
        for k, v in self.verdicts.items():
            lines.append(f"[{'PASS' if v else 'FAIL'}] {k}")
        if wall_clock:
            lines.append(f"wall clock: {self.wall_clock:.2f} s")
        return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# theory


def euler_theory(model, levy) -> tuple[float | None, dict | None, str]:
    """``(theta, prediction, note)``; ``theta`` is ``None`` on the logarithmic branch."""
    reg = model.regularity
    alpha_nu, beta_nu = classify_indices(levy)
    try:
        pred = predict_euler_rate(reg.gamma, reg.eta, reg.rho, alpha_nu, beta_nu,
                                  stable=isinstance(levy, StablePositive))
    except RateAdmissibilityError as exc:
        if reg.gamma == reg.eta == reg.rho == 1:
            return 0.5, None, f"Lipschitz coefficients, classical strong order 1/2 ({exc})"
        raise
    if pred.branch == "log":
        return None, pred.to_dict(), "logarithmic rate"
    return pred.dominant_exponent, pred.to_dict(), ""


def monotone_within(errors, stderrs, k: float = 2.0) -> bool:
    """Each error is below its predecessor up to ``k`` combined standard errors."""
    e, se = np.asarray(errors), np.nan_to_num(np.asarray(stderrs))
    return bool(np.all(e[1:] - e[:-1] < k * np.sqrt(se[1:] ** 2 + se[:-1] ** 2)))


def _fit_dict(table: ErrorTable):
    if len(table.scales) < 3:
        return None
    f = fit_loglog(table.scales, table.errors, table.stderrs)
    return {"slope": f.slope, "intercept": f.intercept, "slope_ci": list(f.slope_ci),
            "slope_stderr": f.slope_stderr, "weighted": f.weighted}


# --------------------------------------------------------------------------
# experiments


def _simulate_job(job):
    model, levy, init, grid, N, seed, rep, z_cut, mode, record = job
    runner = run_particle_system if mode == "system" else run_limit_copies
    return runner(model, levy, init, grid, N, seed, replication=rep, z_cut=z_cut, record=record)


def _run_simulate(cfg: ExperimentConfig, out: Path, workers) -> RunReport:
    model, levy, init = cfg.build_model(), cfg.build_levy(), cfg.build_init()
    grid = GridSpec(float(cfg.grid.get("T", 1.0)), int(cfg.grid["n"]))
    N = int(cfg.population["N"])
    mode, record = cfg.simulate["mode"], bool(cfg.simulate["record"])
    jobs = [(model, levy, init, grid, N, cfg.seed, rep, cfg.z_cut, mode, record) for rep in range(cfg.replications)]
    results = _map(_simulate_job, jobs, workers)
    write_trajectories_csv(out / "trajectories.csv", results)
    means = np.array([r.terminal.mean() for r in results])
    terminal = np.concatenate([r.terminal.samples for r in results])
    summary = {
        "terminal_mean": float(means.mean()),
        "terminal_mean_stderr": float(terminal.std(ddof=1) / math.sqrt(terminal.size)) if terminal.size > 1 else None,
        "negative_fraction": float(np.mean(terminal < 0)),
    }
    return RunReport("simulate", cfg.to_dict(), replications=len(results), summary=summary,
                     verdicts={"finite_states": bool(np.all(np.isfinite(terminal)))})


def _run_rate_euler(cfg: ExperimentConfig, out: Path, workers) -> RunReport:
    model, levy, init = cfg.build_model(), cfg.build_levy(), cfg.build_init()
    table = coupled_discretization_error(model, levy, init, int(cfg.population["N"]), cfg.grid["n_list"],
                                         int(cfg.grid["n_ref"]), cfg.seed, cfg.replications,
                                         T=float(cfg.grid.get("T", 1.0)), z_cut=cfg.z_cut, workers=workers)
    table.to_csv(out / "errors.csv")
    theta, pred, note = euler_theory(model, levy)
    fit = _fit_dict(table)
    verdicts = {}
    if theta is None:
        verdicts["monotone_decrease_2se"] = monotone_within(table.errors, table.stderrs)
    elif fit is not None:
        lo, hi = -theta + EULER_BAND[0], -theta + EULER_BAND[1]
        verdicts[f"slope_in_[{lo:.2f},{hi:.2f}]"] = lo <= fit["slope"] <= hi
    return RunReport("rate-euler", cfg.to_dict(), table.rows(), fit, pred, theta, verdicts,
                     int(table.counts[0]), table.blowups, {"note": note} if note else {})


def _run_rate_chaos(cfg: ExperimentConfig, out: Path, workers) -> RunReport:
    model, levy, init = cfg.build_model(), cfg.build_levy(), cfg.build_init()
    grid = GridSpec(float(cfg.grid.get("T", 1.0)), int(cfg.grid["n"]))
    table = coupled_chaos_error(model, levy, init, cfg.population["N_list"], int(cfg.population["N_ref"]),
                                grid, cfg.seed, cfg.replications, z_cut=cfg.z_cut, workers=workers)
    table.to_csv(out / "errors.csv")
    theta = predict_chaos_rate(init.beta)
    fit = _fit_dict(table)
    verdicts = {}
    if fit is not None:
        verdicts[f"slope_le_{-theta + CHAOS_MARGIN:.2f}"] = fit["slope"] <= -theta + CHAOS_MARGIN
    summary = {}
    if "coupled_error" in table.extra:
        summary["coupled_error"] = [float(v) for v in table.extra["coupled_error"]]
    return RunReport("rate-chaos", cfg.to_dict(), table.rows(), fit, {"beta": init.beta, "exponent": theta},
                     theta, verdicts, int(table.counts[0]), table.blowups, summary)


def _run_verify_lemmas(cfg: ExperimentConfig, out: Path, workers) -> RunReport:
    levy = cfg.build_levy()
    lem = cfg.lemmas
    rows = []
    deltas, epsilons = lem["deltas"], lem["epsilons"]
    mid_delta = deltas[len(deltas) // 2]
    for i, delta in enumerate(deltas):
        for j, eps in enumerate(epsilons):
            yw = build_yw(float(delta), float(eps))
            params = f"delta={delta};epsilon={eps}"
            for name, ok in property_checks(yw).items():
                rows.append((name, params, "", "", ok))
            rng = stream(cfg.seed, 0, i * len(epsilons) + j, "aux")
            for x, y, u in random_key0_triples(yw, rng, int(lem["n_random"])):
                c = verify_lemma_key0(yw, levy, x, y, u)
                rows.append(("key0", f"{params};x={x!r};y={y!r};u={u!r}", c.lhs, c.rhs, c.holds))
            if delta == mid_delta:
                coarse = key12_sweep(yw, levy, points=3)
                fine = key12_sweep(yw, levy, points=5)
                ok = math.isfinite(fine) and fine <= 2 * coarse
                rows.append(("key12_constant", params, fine, 2 * coarse, ok))
    alpha_nu, _ = classify_indices(levy)
    eta = float(lem["eta"])
    upper = math.inf if eta == 1 else 1 / (1 - eta)
    alpha_prime = lem.get("alpha_prime")
    if alpha_prime is None:
        alpha_prime = min(0.5 * (alpha_nu + upper), alpha_nu + 0.5) if math.isfinite(upper) else alpha_nu + 0.3
    table = asymptotics_check(levy, eta, float(alpha_prime), 2.0 ** -np.arange(1, 16))
    ok = table.decreasing if eta < 1 else table.within_bound
    rows.append(("asymptotics", f"eta={eta};alpha_prime={alpha_prime}", table.sup,
                 "" if table.bound is None else table.bound, ok))
    with open(out / "lemmas.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lemma", "params", "lhs", "rhs", "holds"])
        for name, params, lhs, rhs, holds in rows:
            w.writerow([name, params, repr(lhs) if lhs != "" else "", repr(rhs) if rhs != "" else "", holds])
    verdicts = {}
    for name, *_, holds in rows:
        verdicts[name] = verdicts.get(name, True) and bool(holds)
    return RunReport("verify-lemmas", cfg.to_dict(), verdicts=verdicts, replications=0,
                     summary={"checks": len(rows), "failures": sum(not r[-1] for r in rows)})


def _run_predict_rate(cfg: ExperimentConfig, out: Path, workers) -> RunReport:
    r = cfg.rate
    if r:
        pred = predict_euler_rate(float(r["gamma"]), float(r["eta"]), float(r["rho"]), float(r["alpha_nu"]),
                                  float(r["beta_nu"]), r.get("delta_slack"), bool(r.get("stable", False)))
    else:
        model, levy = cfg.build_model(), cfg.build_levy()
        reg = model.regularity
        a, b = classify_indices(levy)
        pred = predict_euler_rate(reg.gamma, reg.eta, reg.rho, a, b, stable=isinstance(levy, StablePositive))
    d = pred.to_dict()
    return RunReport("predict-rate", cfg.to_dict(), prediction=d,
                     theory_exponent=None if pred.branch == "log" else pred.dominant_exponent,
                     summary={"branch": pred.branch, "zetas": d["zetas"], "q_star": pred.q_star,
                              "p_star": pred.p_star, "dominant_exponent": pred.dominant_exponent})


RUNNERS = {
    "simulate": _run_simulate,
    "rate-euler": _run_rate_euler,
    "rate-chaos": _run_rate_chaos,
    "verify-lemmas": _run_verify_lemmas,
    "predict-rate": _run_predict_rate,
}


def run(cfg: ExperimentConfig, out: str | Path | None = None, workers=None) -> RunReport:
    """Execute ``cfg`` and write its artifacts under ``out`` (default ``cfg.out``)."""
    out = Path(out if out is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    workers = resolve_workers(cfg.workers if workers is None else workers)
    (out / "config.toml").write_text(cfg.dumps("toml"))
    t0 = time.perf_counter()
    report = RUNNERS[cfg.experiment](cfg, out, workers)
    report.wall_clock = time.perf_counter() - t0
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True, default=_json) + "\n")
    (out / "report.txt").write_text(report.to_text(wall_clock=False))
    if report.table is not None:
        emit_plots(report, out)
    return report


def _json(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


# --------------------------------------------------------------------------
# plots


def emit_plots(report: RunReport, out: str | Path) -> list[Path]:
    """Log-log SVG of the error table with fitted and theoretical guide lines, plus a gnuplot script."""
    out = Path(out)
    rows = [r for r in (report.table or []) if r[1] > 0 and math.isfinite(r[1])]
    if not rows:
        warnings.warn("empty error table: no plot written", stacklevel=2)
        return []
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "mfjump"
    s = np.array([r[0] for r in rows], dtype=float)
    e = np.array([r[1] for r in rows])
    se = np.nan_to_num(np.array([r[2] for r in rows]))
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.errorbar(s, e, yerr=2 * se, fmt="o", label="error (2 SE)")
    fit = report.fit if len(rows) >= 2 else None
    if fit:
        ax.plot(s, np.exp(fit["intercept"]) * s ** fit["slope"], "-", label=f"fit slope {fit['slope']:.3f}")
    if report.theory_exponent is not None and len(rows) >= 2:
        ax.plot(s, e[0] * (s / s[0]) ** (-report.theory_exponent), "--",
                label=f"theory slope {-report.theory_exponent:.3f}")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel("N" if report.experiment == "rate-chaos" else "n")
    ax.set_ylabel("error")
    ax.legend()
    svg = out / "rate.svg"
    fig.savefig(svg, format="svg", metadata={"Date": None})
    plt.close(fig)

    gp = out / "rate.gp"
    lines = ["set logscale xy", "set xlabel 'scale'", "set ylabel 'error'", "$data << EOD"]
    lines += [f"{a!r} {b!r} {c!r}" for a, b, c in zip(s.tolist(), e.tolist(), se.tolist())]
    lines.append("EOD")
    plots = ["$data using 1:2:(2*$3) with yerrorbars title 'error'"]
    if fit:
        plots.append(f"exp({fit['intercept']!r})*x**({fit['slope']!r}) title 'fit'")
    if report.theory_exponent is not None:
        plots.append(f"{e[0]!r}*(x/{s[0]!r})**({-report.theory_exponent!r}) title 'theory'")
    lines.append("plot " + ", ".join(plots))
    gp.write_text("\n".join(lines) + "\n")
    return [svg, gp]


# --------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mfjump", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="TOML or JSON experiment config")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--workers", help="worker processes: integer or 'auto' (falls back to MFJUMP_WORKERS)")
        sp.add_argument("--out", help="output directory")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config)
        raw = cfg.to_dict()
        raw["experiment"] = args.command
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.out:
            raw["out"] = args.out
        cfg = ExperimentConfig.from_dict(raw)
        # execution setting only: kept out of the recorded config so outputs match across worker counts
        workers = args.workers or os.environ.get("MFJUMP_WORKERS")
        if workers is not None and workers != "auto":
            workers = int(workers)
        report = run(cfg, workers=workers)
    except (ConfigError, SimulationBlowup, RateAdmissibilityError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(report.to_text() if args.command != "predict-rate"
                     else json.dumps(report.summary, indent=2, default=_json) + "\n")
    return 0 if report.passed else 2


if __name__ == "__main__":
    sys.exit(main())
