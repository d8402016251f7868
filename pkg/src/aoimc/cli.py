"""Command-line front-end: parameter sweeps and CSV emitters.

Subcommands: blep, aoi, paoi-dist, simulate, optimize, control, figures.
Exit codes: 0 success, 2 usage error, 3 infeasible constraints, 4 numeric
failure.  Output is data-only CSV; plotting is left to external tooling.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import aoi as aoi_mod
from .config import ExperimentConfig
from .control import aoi_trace_to_steps, simulate_closed_loop
from .csvio import write_csv
from .errors import InfeasibleError, NumericError
from .fbl import FblConfig, LinkBudget, avg_blep_mrc, avg_blep_quadrature, avg_blep_single
from .optimizer import (
    ee_paoi_ratio,
    optimize_dinkelbach,
    optimize_exhaustive,
    snr_threshold,
)
from .sim import SimConfig, empirical_paoi_cdf, run_seed, simulate

FIGURE_IDS = tuple(f"fig{i}" for i in range(3, 11))


class UsageError(Exception):
    pass


def _pmap(fn, items, workers: int):
    """Map preserving input order; fans out to processes when workers > 1."""
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _out(cfg: ExperimentConfig, name: str) -> str:
    return os.path.join(cfg.out_dir, name)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_blep(cfg: ExperimentConfig) -> int:
    ks = [int(k) for k in cfg.k_sweep]
    if not ks:
        raise UsageError("blep sweep needs a non-empty connection list (k_sweep)")
    if cfg.gamma_bar_sweep:
        gbs = [float(g) for g in cfg.gamma_bar_sweep]
    else:
        gbs = [10.0 ** ((pt - cfg.noise_dbm) / 10.0) for pt in cfg.pt_dbm_sweep]
    fbl = cfg.fbl_config()
    rows = []
    worst = 0.0
    for gb in gbs:
        noise = 0.0
        tx = 10.0 * math.log10(gb) + noise
        for k in ks:
            budget = LinkBudget(tx, noise, k)
            closed = avg_blep_mrc(budget, fbl)
            quad = avg_blep_quadrature(budget, fbl)
            diff = abs(closed - quad)
            worst = max(worst, diff)
            rows.append((gb, k, closed, quad, diff))
    path = write_csv(
        _out(cfg, "blep.csv"), ["gamma_bar", "K", "eps_closed", "eps_quadrature", "abs_diff"], rows
    )
    print(f"blep: {len(rows)} rows -> {path} (max |closed - quadrature| = {worst:.3e})")
    return 0


def cmd_aoi(cfg: ExperimentConfig) -> int:
    fbl = cfg.fbl_config()
    rows = []
    for k in cfg.k_sweep:
        budget = cfg.link_budget(k=int(k))
        eps_k = avg_blep_mrc(budget, fbl)
        eps_1 = avg_blep_single(budget, fbl)
        lam, m = cfg.arrival_rate, fbl.service_time_ms
        nr = aoi_mod.metrics_nr(aoi_mod.TrafficParams(lam, m, eps_k, int(k)))
        kr = aoi_mod.metrics_kr(aoi_mod.TrafficParams(lam, m, eps_1, int(k)))
        arq = aoi_mod.metrics_arq(aoi_mod.TrafficParams(lam, m, eps_1))
        for name, met, eps in (("nr", nr, eps_k), ("kr", kr, eps_1), ("arq", arq, eps_1)):
            rows.append((int(k), name, eps, met.avg_paoi_ms, met.avg_aoi_ms))
    path = write_csv(
        _out(cfg, "aoi.csv"), ["K", "scheme", "eps", "avg_paoi_ms", "avg_aoi_ms"], rows
    )
    print(f"aoi: {len(rows)} rows -> {path}")
    return 0


def cmd_paoi_dist(cfg: ExperimentConfig) -> int:
    fbl = cfg.fbl_config()
    eps = avg_blep_mrc(cfg.link_budget(), fbl)
    tp = aoi_mod.TrafficParams(cfg.arrival_rate, fbl.service_time_ms, eps, cfg.connections)
    m = fbl.service_time_ms
    hi = 2 * m + 10.0 / (cfg.arrival_rate * max(1e-9, 1.0 - eps))
    xs = np.linspace(m, hi, 400)
    rows = [
        (float(x), aoi_mod.paoi_pdf(float(x), tp), aoi_mod.paoi_cdf(float(x), tp)) for x in xs
    ]
    path = write_csv(_out(cfg, "paoi_dist.csv"), ["x_ms", "pdf", "cdf"], rows)
    viol = aoi_mod.paoi_violation(cfg.paoi_threshold_ms, tp)
    print(
        f"paoi-dist: eps_K={eps:.6g}, Pr[A > {cfg.paoi_threshold_ms} ms]={viol:.6g} -> {path}"
    )
    return 0


def _sim_report(res) -> str:
    return (
        f"arrivals={res.arrivals} successes={res.successes} failures={res.failures} "
        f"drops={res.drops}\n"
        f"mean PAoI = {res.mean_paoi_ms:.6f} ms, time-avg AoI = {res.time_avg_aoi_ms:.6f} ms\n"
        f"violation freq(> threshold) = {res.violation_freq:.6g}"
        f"{'  [LOW CONFIDENCE]' if res.low_confidence else ''}"
    )


def cmd_simulate(cfg: ExperimentConfig) -> int:
    sim_cfg = cfg.sim_config(record_trace=True)
    res = simulate(sim_cfg)
    print(f"simulate: scheme={sim_cfg.scheme} K={sim_cfg.link.connections} seed={res.seed}")
    print(_sim_report(res))
    write_csv(
        _out(cfg, "paoi_samples.csv"), ["paoi_ms"], [(float(v),) for v in res.paoi_samples]
    )
    path = write_csv(
        _out(cfg, "aoi_trace.csv"),
        ["t_start", "t_end", "aoi_start", "aoi_end"],
        [tuple(float(v) for v in row) for row in res.trace],
    )
    print(f"trace -> {path}")
    return 0


def _format_k_table(result) -> list[str]:
    lines = ["  K  eps_K       avg_paoi_ms  violation    eta          feasible"]
    for row in result.table:
        lines.append(
            f"  {row.k:<3d}{row.eps:<12.6g}{row.avg_paoi_ms:<13.6g}"
            f"{row.violation:<13.6g}{row.eta:<13.6g}{'yes' if row.feasible else 'no'}"
        )
    return lines


def cmd_optimize(cfg: ExperimentConfig) -> int:
    params = cfg.optimizer_params()
    if params.eps_bound < 0:
        raise InfeasibleError(
            f"violation cap {params.max_violation} sits below the error-free floor "
            f"exp(lam*(2M - zeta)) = {math.exp(params.arrival_rate * (2 * params.fbl.service_time_ms - params.paoi_threshold_ms)):.3e} (C2)",
            "C2",
        )
    exh = optimize_exhaustive(params)
    din = optimize_dinkelbach(params)
    agree = exh.k_opt == din.k_opt or abs(exh.eta_opt - din.eta_opt) <= 1e-9
    print(f"optimize: P_t={cfg.tx_power_dbm} dBm, noise={cfg.noise_dbm} dBm")
    if exh.k_min is None:
        print(
            "relaxed range empty: falling back to the {1, 2} comparison "
            f"(K_max={exh.k_max})"
        )
    else:
        print(f"feasible relaxed range: [{exh.k_min}, {exh.k_max}]")
    print("\n".join(_format_k_table(exh)))
    print(
        f"exhaustive: k_opt={exh.k_opt} eta={exh.eta_opt:.6g} | dinkelbach: "
        f"k_opt={din.k_opt} eta={din.eta_opt:.6g} "
        f"(iterations={din.iterations}, relaxed K*={din.relaxed_k}) | "
        f"agreement: {'yes' if agree else 'NO'}"
    )
    if exh.k_opt_risk is None:
        print(
            f"warning: no admissible K meets the violation cap {params.max_violation}; "
            "the reported k_opt ignores the risk constraint"
        )
    else:
        print(f"risk-constrained optimum: K={exh.k_opt_risk} eta={exh.eta_risk:.6g}")
    write_csv(
        _out(cfg, "optimize_table.csv"),
        ["K", "epsilon_K", "avg_paoi_ms", "violation", "eta", "feasible"],
        [(r.k, r.eps, r.avg_paoi_ms, r.violation, r.eta, r.feasible) for r in exh.table],
    )
    return 0


def cmd_control(cfg: ExperimentConfig) -> int:
    params = cfg.optimizer_params()
    result = optimize_exhaustive(params)
    if result.k_opt_risk is None:
        raise InfeasibleError(
            f"no connection count meets the violation cap {params.max_violation} (C2)", "C2"
        )
    k = result.k_opt_risk
    plant = cfg.plant_model()
    sim_cfg = cfg.sim_config(k=k, record_trace=True)
    res = simulate(sim_cfg)
    steps = aoi_trace_to_steps(res.trace, plant.timestep_ms, cfg.control_steps)
    trace = simulate_closed_loop(
        plant, steps, noise_seed=int(np.random.default_rng(cfg.seed).integers(2**63)),
        n_steps=cfg.control_steps,
    )
    row = result.row(k)
    print(f"control: optimized K={k} at P_t={cfg.tx_power_dbm} dBm (eta={row.eta:.6g})")
    print(_sim_report(res))
    print(
        f"PAoI violation: analytic={row.violation:.6g}, empirical={res.violation_freq:.6g} "
        f"(cap {cfg.max_violation})"
    )
    print(
        f"state threshold={trace.threshold:.6g}, state-violation freq="
        f"{trace.violation_freq:.6g} over {cfg.control_steps} steps"
    )
    d = plant.dim
    header = (
        ["n"]
        + [f"x_{i+1}" for i in range(d)]
        + [f"xhat_{i+1}" for i in range(d)]
        + ["aoi_steps", "violated"]
    )
    rows = []
    for n in range(cfg.control_steps):
        rows.append(
            (n, *map(float, trace.states[n]), *map(float, trace.estimates[n]),
             int(trace.aoi_steps[n]), bool(trace.violations[n]))
        )
    path = write_csv(_out(cfg, "state_trace.csv"), header, rows)
    print(f"state trace -> {path}")
    return 0


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------


def _run_sim(sim_cfg: SimConfig):
    return simulate(sim_cfg)


def _fig3(cfg: ExperimentConfig) -> tuple[list[str], list[tuple]]:
    """Average AoI/PAoI vs per-link transmit power, analytic with simulated overlay."""
    fbl = cfg.fbl_config()
    k_list = [1, 2, 4]
    sim_pts = [float(p) for p in cfg.pt_dbm_sweep[::3]]
    jobs, keys = [], []
    for i, pt in enumerate(sim_pts):
        for j, k in enumerate(k_list):
            jobs.append(
                cfg.sim_config(k=k, tx_power_dbm=pt, seed=run_seed(cfg.seed, 3000 + 10 * i + j))
            )
            keys.append((pt, k))
    sims = dict(zip(keys, _pmap(_run_sim, jobs, cfg.workers)))
    rows = []
    for pt in cfg.pt_dbm_sweep:
        for k in k_list:
            eps = avg_blep_mrc(LinkBudget(pt, cfg.noise_dbm, k), fbl)
            met = aoi_mod.metrics_nr(
                aoi_mod.TrafficParams(cfg.arrival_rate, fbl.service_time_ms, eps, k)
            )
            sim = sims.get((float(pt), k))
            rows.append(
                (
                    float(pt),
                    k,
                    met.avg_paoi_ms,
                    met.avg_aoi_ms,
                    sim.mean_paoi_ms if sim else None,
                    sim.time_avg_aoi_ms if sim else None,
                )
            )
    header = ["pt_dbm", "K", "paoi_ms", "aoi_ms", "paoi_sim_ms", "aoi_sim_ms"]
    return header, rows


def _fig4(cfg: ExperimentConfig) -> tuple[list[str], list[tuple]]:
    """PAoI density/CDF at the default operating point, analytic vs empirical."""
    fbl = cfg.fbl_config()
    eps = avg_blep_mrc(cfg.link_budget(), fbl)
    tp = aoi_mod.TrafficParams(cfg.arrival_rate, fbl.service_time_ms, eps, cfg.connections)
    res = simulate(cfg.sim_config(seed=run_seed(cfg.seed, 4000)))
    ecdf = empirical_paoi_cdf(res)
    m = fbl.service_time_ms
    hi = 2 * m + 8.0 / (cfg.arrival_rate * max(1e-9, 1.0 - eps))
    xs = np.linspace(m, hi, 200)
    hist, edges = np.histogram(res.paoi_samples, bins=80, range=(m, hi), density=True)
    rows = []
    for x in xs:
        b = min(np.searchsorted(edges, x, side="right") - 1, len(hist) - 1)
        rows.append(
            (
                float(x),
                aoi_mod.paoi_pdf(float(x), tp),
                aoi_mod.paoi_cdf(float(x), tp),
                float(hist[b]) if b >= 0 else 0.0,
                float(ecdf(float(x))),
            )
        )
    ks = ecdf.ks_distance(lambda v: aoi_mod.paoi_cdf(v, tp))
    print(f"fig4: KS distance empirical vs analytic CDF = {ks:.4f}")
    return ["x", "pdf_analytic", "cdf_analytic", "pdf_empirical", "cdf_empirical"], rows


def _fig5(cfg: ExperimentConfig) -> tuple[list[str], list[tuple]]:
    """PAoI violation probability vs connection count for several thresholds."""
    fbl = cfg.fbl_config()
    jobs = [cfg.sim_config(k=int(k), seed=run_seed(cfg.seed, 5000 + int(k))) for k in cfg.k_sweep]
    sims = dict(zip([int(k) for k in cfg.k_sweep], _pmap(_run_sim, jobs, cfg.workers)))
    rows = []
    for k in cfg.k_sweep:
        k = int(k)
        eps = avg_blep_mrc(cfg.link_budget(k=k), fbl)
        tp = aoi_mod.TrafficParams(cfg.arrival_rate, fbl.service_time_ms, eps, k)
        samples = sims[k].paoi_samples
        for zeta in cfg.zeta_sweep:
            emp = float(np.count_nonzero(samples > zeta) / samples.size)
            rows.append((k, float(zeta), aoi_mod.paoi_violation(float(zeta), tp), emp))
    return ["K", "zeta_ms", "violation_analytic", "violation_sim"], rows


def _fig6(cfg: ExperimentConfig) -> tuple[list[str], list[tuple]]:
    """Average PAoI vs connection count for several per-link powers."""
    fbl = cfg.fbl_config()
    pts = [28.0, 32.0, 35.0]
    sim_ks = [k for k in (1, 2, 4, 8) if k in {int(v) for v in cfg.k_sweep}] or [1, 2, 4, 8]
    jobs, keys = [], []
    for i, pt in enumerate(pts):
        for k in sim_ks:
            jobs.append(cfg.sim_config(k=k, tx_power_dbm=pt, seed=run_seed(cfg.seed, 6000 + 20 * i + k)))
            keys.append((pt, k))
    sims = dict(zip(keys, _pmap(_run_sim, jobs, cfg.workers)))
    rows = []
    for pt in pts:
        for k in range(1, 17):
            eps = avg_blep_mrc(LinkBudget(pt, cfg.noise_dbm, k), fbl)
            met = aoi_mod.metrics_nr(
                aoi_mod.TrafficParams(cfg.arrival_rate, fbl.service_time_ms, eps, k)
            )
            sim = sims.get((pt, k))
            rows.append((pt, k, met.avg_paoi_ms, sim.mean_paoi_ms if sim else None))
    return ["pt_dbm", "K", "paoi_analytic_ms", "paoi_sim_ms"], rows


def _fig7(cfg: ExperimentConfig) -> tuple[list[str], list[tuple]]:
    """Average-PAoI / energy-efficiency tradeoff as power sweeps."""
    fbl = cfg.fbl_config()
    rows = []
    for k in (1, 2, 4, 8):
        for pt in cfg.pt_dbm_sweep:
            eps = avg_blep_mrc(LinkBudget(float(pt), cfg.noise_dbm, k), fbl)
            met = aoi_mod.metrics_nr(
                aoi_mod.TrafficParams(cfg.arrival_rate, fbl.service_time_ms, eps, k)
            )
            ee = fbl.info_bits * (1.0 - eps) / (
                fbl.service_time_ms * k * 10.0 ** (float(pt) / 10.0)
            )
            rows.append((float(pt), k, met.avg_paoi_ms, ee))
    return ["pt_dbm", "K", "paoi_ms", "ee_bits_per_ms_mw"], rows


def _fig8(cfg: ExperimentConfig) -> tuple[list[str], list[tuple]]:
    """EE-PAoI ratio vs connection count for several powers."""
    rows = []
    for pt in (30.0, 32.0, 35.0):
        params = cfg.optimizer_params(tx_power_dbm=pt)
        for k in range(1, 11):
            rows.append((pt, k, ee_paoi_ratio(k, params)))
    return ["pt_dbm", "K", "eta"], rows


def _fig9(cfg: ExperimentConfig) -> tuple[list[str], list[tuple]]:
    """EE-PAoI ratio of the optimized scheme vs single connection, per power."""
    rows = []
    for pt in cfg.pt_dbm_sweep:
        params = cfg.optimizer_params(tx_power_dbm=float(pt))
        res = optimize_exhaustive(params)
        eta1 = ee_paoi_ratio(1, params)
        rows.append(
            (
                float(pt),
                res.k_opt,
                res.eta_opt,
                eta1,
                res.eta_opt / eta1 if eta1 > 0 else math.inf,
                res.k_opt_risk,
                res.eta_risk,
            )
        )
    return ["pt_dbm", "k_opt", "eta_opt", "eta_single", "gain", "k_opt_risk", "eta_risk"], rows


def _fig10(cfg: ExperimentConfig) -> tuple[list[str], list[tuple]]:
    """Optimal connection count vs per-link power, switching threshold marked."""
    thr_db = 10.0 * math.log10(snr_threshold(cfg.fbl_config()))
    rows = []
    for pt in cfg.pt_dbm_sweep:
        params = cfg.optimizer_params(tx_power_dbm=float(pt))
        res = optimize_exhaustive(params)
        gb_db = float(pt) - cfg.noise_dbm
        rows.append(
            (float(pt), res.k_opt, res.k_opt_risk, gb_db, thr_db, gb_db >= thr_db)
        )
    return [
        "pt_dbm",
        "k_opt",
        "k_opt_risk",
        "gamma_bar_db",
        "threshold_db",
        "above_threshold",
    ], rows


_FIGURES = {
    "fig3": _fig3,
    "fig4": _fig4,
    "fig5": _fig5,
    "fig6": _fig6,
    "fig7": _fig7,
    "fig8": _fig8,
    "fig9": _fig9,
    "fig10": _fig10,
}


def cmd_figures(cfg: ExperimentConfig, figure: str) -> int:
    header, rows = _FIGURES[figure](cfg)
    path = write_csv(_out(cfg, f"{figure}.csv"), header, rows)
    print(f"{figure}: {len(rows)} rows -> {path}")
    return 0


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aoimc",
        description="Age-of-information analysis for multi-connectivity short-packet links",
    )
    parser.add_argument("--config", metavar="PATH", help="JSON config file")
    parser.add_argument("--seed", type=int, help="master RNG seed override")
    parser.add_argument("--out", metavar="DIR", help="output directory override")
    parser.add_argument("--pt-dbm", type=float, dest="pt_dbm", help="per-link transmit power")
    parser.add_argument("--k", type=int, help="connection count override")
    parser.add_argument("--zeta-ms", type=float, dest="zeta_ms", help="PAoI threshold")
    parser.add_argument("--lambda", type=float, dest="arrival_rate", help="arrival rate (1/ms)")
    parser.add_argument(
        "--sigma2-dbm", type=float, dest="sigma2_dbm", help="receiver noise level"
    )
    parser.add_argument("--workers", type=int, help="worker pool size for sweeps")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("blep", "aoi", "paoi-dist", "simulate", "optimize", "control"):
        sub.add_parser(name)
    fig = sub.add_parser("figures")
    fig.add_argument("--figure", required=True, choices=FIGURE_IDS)
    return parser


def _apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    if args.pt_dbm is not None:
        cfg.tx_power_dbm = args.pt_dbm
    if args.k is not None:
        cfg.connections = args.k
    if args.zeta_ms is not None:
        cfg.paoi_threshold_ms = args.zeta_ms
    if args.arrival_rate is not None:
        cfg.arrival_rate = args.arrival_rate
    if args.sigma2_dbm is not None:
        cfg.noise_dbm = args.sigma2_dbm
    if args.workers is not None:
        cfg.workers = args.workers
    return cfg


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        cfg = _apply_overrides(cfg, args)
        if args.command == "blep":
            return cmd_blep(cfg)
        if args.command == "aoi":
            return cmd_aoi(cfg)
        if args.command == "paoi-dist":
            return cmd_paoi_dist(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "optimize":
            return cmd_optimize(cfg)
        if args.command == "control":
            return cmd_control(cfg)
        if args.command == "figures":
            return cmd_figures(cfg, args.figure)
        parser.error(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleError as exc:
        print(f"infeasible ({exc.constraint}): {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
