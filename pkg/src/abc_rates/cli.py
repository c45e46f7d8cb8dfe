"""``abc-rates`` command line front end.

Usage::

    abc-rates <experiment> [--config FILE] [--seed U64] [--threads N] [--out DIR] [--dry-run] ...

Experiments: bias-sweep, mse-sweep, rate-scan, mode-compare, tune, sample.
A JSON config file supplies defaults; flags override it. Each run writes
``<out>/<experiment>.csv``, ``<out>/<experiment>.md`` and
``<out>/config.echo.json``. CSVs depend only on the configuration, never on
the thread count or the clock.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import __version__
from .analysis import (
    BudgetFactor,
    ErrorFactor,
    bias_sweep,
    compare_fixed_modes,
    constant_cost_schedule,
    fit_mse_curve,
    geometric_grid,
    rate_experiment,
    replicate_estimates,
    mse_from_estimates,
    scaling_advisor,
    stream_seed,
)
from .exceptions import AbcError
from .sampler import DEFAULT_MAX_PROPOSALS, AbcConfig, AcceptanceNorm, FixedAccepted, FixedProposals, abc_rejection, posterior_estimate
from .toy import (
    S_STAR,
    ConstantTest,
    IndicatorTest,
    bias_constant,
    d_opt,
    posterior_interval_probability,
    prior_interval_probability,
    toy_model,
)

EXPERIMENTS = ("bias-sweep", "mse-sweep", "rate-scan", "mode-compare", "tune", "sample")
_U64 = (1 << 64) - 1


@dataclass
class ExperimentConfig:
    experiment: str
    model: str = "toy"
    s_star: Optional[list] = None
    h: Any = field(default_factory=lambda: [-0.5, 0.5])
    deltas: Optional[list] = None
    delta: Optional[float] = None
    n: Optional[int] = None
    k: Optional[int] = None
    n_hat: Optional[int] = None
    kappa: Optional[float] = None
    cost_grid: Optional[list] = None
    n_grid: int = 12
    span: float = 1.5
    weighted: bool = False
    n_target: Optional[list] = None
    fallback_c: Optional[float] = None
    q: Optional[int] = None
    alpha: Optional[float] = None
    beta: Optional[float] = None
    max_proposals: int = DEFAULT_MAX_PROPOSALS
    seed: int = 0
    threads: int = 1
    cost_model: dict = field(default_factory=lambda: {"a": 0.0, "b": 1.0})
    output_path: str = "abc-rates-out"

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        for key in ("delta",):
            if d[key] is not None and math.isinf(d[key]):
                d[key] = "inf"
        return d


@dataclass
class ResultTable:
    name: str
    columns: list
    rows: list
    metadata: dict = field(default_factory=dict)
    extra_tables: dict = field(default_factory=dict)
    summary: str = ""

    def to_csv(self) -> str:
        return _csv_text(self.columns, self.rows)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------


def _positive(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and x > 0


def _pos_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool) and x >= 1


def validate(cfg: ExperimentConfig) -> list:
    """All violations in ``cfg``; an empty list means valid."""
    v = []
    if cfg.experiment not in EXPERIMENTS:
        return [f"experiment: unknown experiment {cfg.experiment!r}"]
    if cfg.model != "toy":
        v.append(f"model: only 'toy' is built in, got {cfg.model!r}")
    if cfg.s_star is not None and (not isinstance(cfg.s_star, list) or len(cfg.s_star) != 2):
        v.append("s_star: must be a list of 2 numbers")
    if cfg.h != "one":
        if not (isinstance(cfg.h, list) and len(cfg.h) == 2 and cfg.h[0] < cfg.h[1]):
            v.append("h: must be 'one' or [lo, hi] with lo < hi")
    if not (isinstance(cfg.seed, int) and 0 <= cfg.seed <= _U64):
        v.append("seed: must be a 64-bit unsigned integer")
    if not _pos_int(cfg.max_proposals):
        v.append("max_proposals: must be a positive integer")
    if not _pos_int(cfg.threads):
        v.append("threads: must be a positive integer")
    cm = cfg.cost_model or {}
    if not (cm.get("a", 0) >= 0 and _positive(cm.get("b", 1))):
        v.append("cost_model: need a >= 0 and b > 0")

    def need(name, check, msg):
        value = getattr(cfg, name)
        if value is None:
            v.append(f"{name}: required for {cfg.experiment}")
        elif not check(value):
            v.append(f"{name}: {msg}")

    def need_deltas():
        need("deltas", lambda d: isinstance(d, list) and len(d) >= 1 and all(_positive(x) for x in d),
             "must be a non-empty list of values > 0")

    e = cfg.experiment
    if e == "bias-sweep":
        need_deltas()
        need("n", _pos_int, "must be a positive integer")
        need("k", lambda k: _pos_int(k) and k >= 2, "must be an integer >= 2")
    elif e == "mse-sweep":
        need_deltas()
        need("k", lambda k: _pos_int(k) and k >= 2, "must be an integer >= 2")
        if cfg.kappa is None and cfg.n is None:
            v.append("kappa: mse-sweep needs kappa (constant cost) or n (fixed n)")
        if cfg.kappa is not None and not _positive(cfg.kappa):
            v.append("kappa: must be > 0")
        if cfg.n is not None and not _pos_int(cfg.n):
            v.append("n: must be a positive integer")
    elif e == "rate-scan":
        need("cost_grid", lambda c: isinstance(c, list) and len(c) >= 3 and all(_positive(x) for x in c),
             "must list at least 3 costs > 0")
        need("k", lambda k: _pos_int(k) and k >= 2, "must be an integer >= 2")
        if not (_pos_int(cfg.n_grid) and cfg.n_grid >= 3):
            v.append("n_grid: must be an integer >= 3")
        if not (_positive(cfg.span) and cfg.span > 1):
            v.append("span: must be > 1")
    elif e == "mode-compare":
        need("delta", _positive, "must be > 0")
        need("n_target", lambda t: isinstance(t, list) and len(t) >= 1 and all(_positive(x) for x in t),
             "must be a non-empty list of values > 0")
        need("k", lambda k: _pos_int(k) and k >= 100, "must be an integer >= 100")
    elif e == "tune":
        need("q", _pos_int, "must be a positive integer")
        if (cfg.alpha is None) == (cfg.beta is None):
            v.append("alpha: give exactly one of alpha or beta")
        for name in ("alpha", "beta"):
            val = getattr(cfg, name)
            if val is not None and not _positive(val):
                v.append(f"{name}: must be > 0")
    elif e == "sample":
        need("delta", _positive, "must be > 0")
        if (cfg.n is None) == (cfg.n_hat is None):
            v.append("n: give exactly one of n or n_hat")
        for name in ("n", "n_hat"):
            val = getattr(cfg, name)
            if val is not None and not _pos_int(val):
                v.append(f"{name}: must be a positive integer")
    return v


# --------------------------------------------------------------------------
# Experiments
# --------------------------------------------------------------------------


def _problem(cfg):
    s_star = tuple(cfg.s_star) if cfg.s_star is not None else S_STAR
    if cfg.h == "one":
        return s_star, ConstantTest(1.0), 1.0, None
    test = IndicatorTest(float(cfg.h[0]), float(cfg.h[1]))
    return s_star, test, posterior_interval_probability(s_star, test), test


def _rate_center(cfg, s_star, test, kappa):
    q = 2
    D = d_opt(s_star, test) if test is not None else None
    return None if D is None else (D * kappa**-0.25) ** (4.0 / (q + 4))


def plan(cfg: ExperimentConfig) -> list:
    """Human-readable planned grid; runs no simulations."""
    e = cfg.experiment
    lines = [f"experiment={e} seed={cfg.seed} threads={cfg.threads}"]
    if e == "bias-sweep":
        lines += [f"delta={d:g} n={cfg.n} k={cfg.k}" for d in sorted(cfg.deltas)]
    elif e == "mse-sweep":
        ns = constant_cost_schedule(cfg.deltas, cfg.kappa, 2) if cfg.kappa else [cfg.n] * len(cfg.deltas)
        lines += [f"delta={d:g} n={n} k={cfg.k}" for d, n in zip(cfg.deltas, ns)]
    elif e == "rate-scan":
        s_star, _, _, test = _problem(cfg)
        try:
            center = _rate_center(cfg, s_star, test, cfg.cost_grid[0])
        except AbcError:
            center = None
        for i, c in enumerate(cfg.cost_grid):
            if i == 0 and center is not None:
                grid = ", ".join("%.4g" % d for d in geometric_grid(center, cfg.span, cfg.n_grid))
                lines.append(f"cost={c:g} k={cfg.k} deltas=[{grid}]")
            else:
                lines.append(f"cost={c:g} k={cfg.k} deltas={cfg.n_grid} points, x/{cfg.span:g}..x{cfg.span:g} "
                             "around the previous optimum")
    elif e == "mode-compare":
        lines += [f"delta={cfg.delta:g} n_target={t:g} k={cfg.k}" for t in cfg.n_target]
    elif e == "tune":
        lines.append(f"q={cfg.q} alpha={cfg.alpha} beta={cfg.beta}")
    elif e == "sample":
        lines.append(f"delta={cfg.delta:g} n={cfg.n} n_hat={cfg.n_hat}")
    return lines


def _gradient_table(delta_fit, mse_fit, q: int) -> str:
    rows = [
        "| Plot | Gradient | Standard error | Theoretical gradient |",
        "|---|---|---|---|",
        f"| delta | {delta_fit.gradient:.3f} | {delta_fit.gradient_se:.4f} | -1/{q + 4} ≈ {-1 / (q + 4):.3f} |",
        f"| MSE | {mse_fit.gradient:.3f} | {mse_fit.gradient_se:.4f} | -4/{q + 4} ≈ {-4 / (q + 4):.3f} |",
    ]
    return "\n".join(rows)


def _md_table(columns, rows, fmt="%.4g") -> str:
    out = ["| " + " | ".join(columns) + " |", "|" + "---|" * len(columns)]
    for r in rows:
        out.append("| " + " | ".join(fmt % x if isinstance(x, float) else str(x) for x in r) + " |")
    return "\n".join(out)


def _run_bias_sweep(cfg, model, norm):
    s_star, h, y, test = _problem(cfg)
    C = bias_constant(s_star, test) if test is not None else 0.0
    rows = bias_sweep(model, norm, s_star, h, cfg.deltas, cfg.n, cfg.k, y, cfg.seed, cfg.threads)
    table = [(r.delta, r.mean_bias, r.std_error, C * r.delta**2) for r in rows]
    summary = (f"Bias against tolerance, n={cfg.n} accepted samples, k={cfg.k} estimates per delta.\n"
               f"Exact posterior expectation {y:.6f}; asymptotic bias C*delta^2 with C={C:.6f}.\n"
               "Intervals are mean +/- 1.96 standard errors.\n\n"
               + _md_table(["delta", "mean bias", "95% low", "95% high", "C delta^2"],
                           [(r.delta, r.mean_bias, *r.ci95(), C * r.delta**2) for r in rows]))
    total = sum(r.total_proposals for r in rows)
    return ResultTable("bias-sweep", ["delta", "mean_bias", "std_error", "theory_bias"], table,
                       {"total_proposals": total}, summary=summary)


def _run_mse_sweep(cfg, model, norm):
    s_star, h, y, _ = _problem(cfg)
    deltas = sorted(float(d) for d in cfg.deltas)
    ns = constant_cost_schedule(deltas, cfg.kappa, model.q) if cfg.kappa else [cfg.n] * len(deltas)
    rows, total = [], 0
    for d, n in zip(deltas, ns):
        reps = replicate_estimates(model, norm, s_star, h, d, n, cfg.k, stream_seed(cfg.seed, d),
                                   threads=cfg.threads)
        mse, se = mse_from_estimates(reps.estimates, y)
        total += int(reps.proposals.sum())
        rows.append((d, n, mse, se, float(reps.proposals.mean())))
    summary = _md_table(["delta", "n", "MSE", "std error", "mean proposals"], rows)
    if len(deltas) >= 3:
        try:
            fit = fit_mse_curve([(r[0], r[2]) for r in rows], model.q, None)
            summary += (f"\n\nFitted MSE(delta) = a delta^-{model.q} + b delta^4: a={fit.a:.6g}, b={fit.b:.6g}, "
                        f"optimal delta={fit.delta_star:.6g}, MSE at optimum={fit.mse_star:.6g}, valid={fit.valid}")
        except AbcError as exc:
            summary += f"\n\nCurve fit failed: {exc}"
    return ResultTable("mse-sweep", ["delta", "n", "mse", "std_error", "mean_proposals"], rows,
                       {"total_proposals": total}, summary=summary)


def _run_rate_scan(cfg, model, norm):
    s_star, h, y, test = _problem(cfg)
    D = d_opt(s_star, test) if test is not None else None
    res = rate_experiment(model, norm, s_star, h, y, cfg.cost_grid, None, cfg.k, cfg.seed, d_opt=D,
                          n_grid=cfg.n_grid, span=cfg.span, weighted=cfg.weighted, threads=cfg.threads)
    rows = [(lv.cost, lv.fit.a, lv.fit.b, lv.fit.delta_star, lv.fit.mse_star, lv.fit.rss, lv.fit.valid)
            for lv in res.levels]
    points = [(lv.cost, float(d), int(n), float(m), float(s), float(p))
              for lv in res.levels for d, n, m, s, p in zip(lv.deltas, lv.ns, lv.mse, lv.se, lv.mean_proposals)]
    total = int(round(sum(float(np.sum(lv.mean_proposals)) * cfg.k for lv in res.levels)))
    summary = ("Optimal tolerance and MSE against nominal cost (n delta^-q held fixed per level).\n\n"
               + _md_table(["cost", "a", "b", "optimal delta", "optimal MSE", "valid"],
                           [(r[0], r[1], r[2], r[3], r[4], r[6]) for r in rows])
               + "\n\n" + _gradient_table(res.delta_fit, res.mse_fit, model.q))
    if res.excluded:
        summary += f"\n\nExcluded cost levels (non-positive fit coefficient): {res.excluded}"
    return ResultTable("rate-scan", ["cost", "a", "b", "delta_star", "mse_star", "rss", "valid"], rows,
                       {"total_proposals": total,
                        "delta_gradient": res.delta_fit.gradient, "delta_gradient_se": res.delta_fit.gradient_se,
                        "mse_gradient": res.mse_fit.gradient, "mse_gradient_se": res.mse_fit.gradient_se},
                       extra_tables={"points": (["cost", "delta", "n", "mse", "std_error", "mean_proposals"], points)},
                       summary=summary)


def _run_mode_compare(cfg, model, norm):
    s_star, h, y, test = _problem(cfg)
    fallback = cfg.fallback_c
    if fallback is None:
        fallback = prior_interval_probability(test) if test is not None else 1.0
    rows, total = [], 0
    for t in cfg.n_target:
        c = compare_fixed_modes(model, norm, s_star, h, y, cfg.delta, t, cfg.k, fallback,
                                stream_seed(cfg.seed, float(t)), threads=cfg.threads)
        total += c.total_proposals
        rows.append((float(t), c.delta, c.p_delta, c.n_hat, c.n, c.mse_fixed_proposals, c.se_fixed_proposals,
                     c.mse_fixed_accepted, c.se_fixed_accepted, c.ratio))
    cols = ["n_target", "delta", "p_delta", "n_hat", "n", "mse_fixed_proposals", "se_fixed_proposals",
            "mse_fixed_accepted", "se_fixed_accepted", "ratio"]
    summary = ("MSE with a fixed number of proposals against a fixed number of acceptances.\n\n"
               + _md_table(["n_target", "N_hat", "n", "MSE fixed N", "MSE fixed n", "ratio"],
                           [(r[0], r[3], r[4], r[5], r[7], r[9]) for r in rows]))
    return ResultTable("mode-compare", cols, rows, {"total_proposals": total}, summary=summary)


def _run_tune(cfg, model, norm):
    if cfg.alpha is not None:
        target, label, value = ErrorFactor(cfg.alpha), "alpha", cfg.alpha
    else:
        target, label, value = BudgetFactor(cfg.beta), "beta", cfg.beta
    adv = scaling_advisor(cfg.q, target)
    line = (f"n_factor={adv.n_factor:.4g} delta_factor={adv.delta_factor:.4g} "
            f"cost_factor={adv.cost_factor:.4g} error_factor={adv.error_factor:.4g}")
    print(line)
    row = (cfg.q, label, float(value), adv.n_factor, adv.delta_factor, adv.cost_factor, adv.error_factor)
    summary = (f"Scaling a pilot run for q={cfg.q}, {label}={value:g}: multiply n by {adv.n_factor:.4g}, "
               f"delta by {adv.delta_factor:.4g}; expected cost changes by {adv.cost_factor:.4g} and RMSE by "
               f"{adv.error_factor:.4g}.")
    return ResultTable("tune", ["q", "target", "value", "n_factor", "delta_factor", "cost_factor", "error_factor"],
                       [row], {"total_proposals": 0}, summary=summary)


def _run_sample(cfg, model, norm):
    s_star, h, _, _ = _problem(cfg)
    mode = FixedAccepted(cfg.n) if cfg.n is not None else FixedProposals(cfg.n_hat)
    run = abc_rejection(model, norm, AbcConfig(s_star, cfg.delta, mode, cfg.seed, cfg.max_proposals))
    cols = [f"theta_{i + 1}" for i in range(model.p)] + ["distance"]
    rows = [(*map(float, th), float(d)) for th, d in zip(run.accepted, run.distances)]
    est = posterior_estimate(run, h, cfg.fallback_c or 0.0)
    a, b = float(cfg.cost_model.get("a", 0.0)), float(cfg.cost_model.get("b", 1.0))
    summary = (f"{run.n_accepted} accepted out of {run.n_proposals} proposals at delta={cfg.delta:g}; "
               f"estimate of E(h) = {est:.6g}; cost = {a + b * run.n_proposals:.6g}.")
    return ResultTable("sample", cols, rows, {"total_proposals": run.n_proposals}, summary=summary)


_RUNNERS = {
    "bias-sweep": _run_bias_sweep,
    "mse-sweep": _run_mse_sweep,
    "rate-scan": _run_rate_scan,
    "mode-compare": _run_mode_compare,
    "tune": _run_tune,
    "sample": _run_sample,
}


def run(cfg: ExperimentConfig, write: bool = True) -> ResultTable:
    """Run a validated configuration and write its files under ``cfg.output_path``."""
    problems = validate(cfg)
    if problems:
        raise ValueError("; ".join(problems))
    model, norm = toy_model(), AcceptanceNorm.identity(2)
    t0 = time.perf_counter()
    table = _RUNNERS[cfg.experiment](cfg, model, norm)
    table.metadata.update({
        "config": cfg.to_json(),
        "version": f"abc-rates {__version__}",
        "wall_clock_seconds": round(time.perf_counter() - t0, 3),
        "seed": cfg.seed,
    })
    if write:
        write_outputs(table, Path(cfg.output_path))
    return table


def write_outputs(table: ResultTable, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{table.name}.csv").write_text(table.to_csv(), newline="")
    for suffix, (cols, rows) in table.extra_tables.items():
        (out / f"{table.name}.{suffix}.csv").write_text(_csv_text(cols, rows), newline="")
    meta = {k: v for k, v in table.metadata.items() if k != "config"}
    md = [f"# {table.name}", "", table.summary, "", "## Run metadata", ""]
    md += [f"- {k}: {v}" for k, v in meta.items()]
    (out / f"{table.name}.md").write_text("\n".join(md) + "\n", newline="")
    echo = {"config": table.metadata.get("config"), "metadata": meta}
    (out / "config.echo.json").write_text(json.dumps(echo, indent=2, sort_keys=True) + "\n", newline="")


# --------------------------------------------------------------------------
# Argument parsing
# --------------------------------------------------------------------------


def _floats(text: str) -> list:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list:
    return [int(float(x)) for x in text.split(",") if x.strip()]


def _h(text: str):
    return "one" if text.strip().lower() == "one" else _floats(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="abc-rates", description="Rejection ABC convergence experiments.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", type=Path, help="JSON file with ExperimentConfig fields")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="worker threads (default: $ABC_RATES_THREADS or 1)")
    p.add_argument("--out", dest="output_path", help="output directory")
    p.add_argument("--dry-run", action="store_true", help="print the planned grid and exit")
    p.add_argument("--model")
    p.add_argument("--s-star", dest="s_star", type=_floats)
    p.add_argument("--h", type=_h, help="'one' or 'lo,hi' for an indicator test function")
    p.add_argument("--deltas", type=_floats)
    p.add_argument("--delta", type=float, help="tolerance; 'inf' accepts everything")
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--n-hat", dest="n_hat", type=int)
    p.add_argument("--kappa", type=float)
    p.add_argument("--cost-grid", dest="cost_grid", type=_floats)
    p.add_argument("--n-grid", dest="n_grid", type=int)
    p.add_argument("--span", type=float)
    p.add_argument("--weighted", action="store_true", default=None)
    p.add_argument("--n-target", dest="n_target", type=_floats)
    p.add_argument("--fallback-c", dest="fallback_c", type=float)
    p.add_argument("--q", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--max-proposals", dest="max_proposals", type=int, help="proposal cap for sample")
    p.add_argument("--cost-a", dest="cost_a", type=float)
    p.add_argument("--cost-b", dest="cost_b", type=float)
    return p


_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def _from_json(data: dict) -> dict:
    unknown = set(data) - _FIELDS
    if unknown:
        raise ValueError(f"unknown config fields: {sorted(unknown)}")
    data = dict(data)
    if isinstance(data.get("delta"), str):
        data["delta"] = float(data["delta"])
    return data


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    values: dict = {}
    if args.config is not None:
        values.update(_from_json(json.loads(args.config.read_text())))
        if values.get("experiment", args.experiment) != args.experiment:
            raise ValueError(f"config file is for {values['experiment']!r}, not {args.experiment!r}")
    values["experiment"] = args.experiment
    if "threads" not in values and os.environ.get("ABC_RATES_THREADS"):
        values["threads"] = int(os.environ["ABC_RATES_THREADS"])
    for name in _FIELDS - {"experiment", "cost_model"}:
        val = getattr(args, name, None)
        if val is not None:
            values[name] = val
    cm = dict(values.get("cost_model") or {"a": 0.0, "b": 1.0})
    if args.cost_a is not None:
        cm["a"] = args.cost_a
    if args.cost_b is not None:
        cm["b"] = args.cost_b
    values["cost_model"] = cm
    return ExperimentConfig(**values)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
    except (ValueError, TypeError, OSError) as exc:
        print(f"error: invalid-config: {exc}", file=sys.stderr)
        return 2
    problems = validate(cfg)
    if problems:
        print("error: invalid-config: " + "; ".join(problems), file=sys.stderr)
        return 2
    if args.dry_run:
        print("\n".join(plan(cfg)))
        return 0
    try:
        run(cfg)
    except AbcError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
