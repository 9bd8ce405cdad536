"""``epictrl`` command line.

Exit codes: 0 success, 1 validation failure, 2 usage or input error,
3 infeasible optimization, 4 size cap exceeded.
"""

from __future__ import annotations

import argparse
import concurrent.futures as cf
import csv
import hashlib
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .allocation import BudgetedProblem, normalize_costs, optimize, reference_problem
from .exceptions import EpictrlError, InfeasibleError, SizeCapError
from .gp import load_problem, solution_to_dict, solve
from .graph import StaticGraph, karate, karate_layout
from .simulate import SimConfig, Simulator, gillespie_asis, gillespie_amei, gillespie_markov, metastable_count
from .spectral import EpidemicThreshold
from .svg import circle_layout, line_plot, network_map
from .temporal import (
    AmeiNet,
    AsisModel,
    EpidemicParams,
    MarkovTemporalNet,
    abar_matrix,
    amei_karate,
    asis_karate,
    dump_model,
    karate_edge_classes,
    load_model,
    markov_karate,
)
from .validation import SUITES, run_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_CAP = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- helpers


def _num(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"not a finite number: {text!r}")
    return v


def _pair(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}")
    return _num(parts[0]), _num(parts[1])


def parse_range(text: str) -> np.ndarray:
    """``lo:hi:step`` (inclusive of ``hi`` up to rounding)."""
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"expected lo:hi:step, got {text!r}")
    lo, hi, step = (float(p) for p in parts)
    if not (step > 0 and hi >= lo):
        raise UsageError(f"bad range {text!r}")
    k = int(math.floor((hi - lo) / step + 1e-9))
    return np.round(lo + step * np.arange(k + 1), 12)


def parse_sweep(text: str) -> dict:
    out = {}
    for item in text.split(","):
        key, _, rng = item.partition("=")
        key = key.strip()
        if key not in ("beta", "phi") or not rng:
            raise UsageError(f"sweep entries look like beta=lo:hi:step or phi=lo:hi:step, got {item!r}")
        out[key] = parse_range(rng)
    return out


def _g17(v: float) -> str:
    return "nan" if isinstance(v, float) and math.isnan(v) else f"{v:.17g}"


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.bool_,)):
        return bool(o)
    raise TypeError(f"not serialisable: {type(o).__name__}")


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")


def _sibling(path, suffix: str) -> Path:
    p = Path(path)
    return p.with_name(p.stem + suffix)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(primary, command: str, argv, files: list, params: dict, seed, outputs: list) -> Path:
    man = {
        "command": command,
        "argv": list(argv),
        "inputs": {"files": {str(f): _sha256(f) for f in files}, "params": params},
        "seed": seed,
        "tool_version": __version__,
        "outputs": [str(o) for o in outputs],
    }
    path = _sibling(primary, ".manifest.json")
    _write_json(path, man)
    return path


def _load(path):
    try:
        model = load_model(path)
    except OSError as exc:
        raise UsageError(f"cannot read model file: {exc}") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise UsageError(f"model file is not valid JSON: {exc}") from None
    if isinstance(model, StaticGraph):
        model = MarkovTemporalNet((model,), np.zeros((1, 1)))
    return model


def _workers() -> int:
    raw = os.environ.get("EPICTRL_THREADS", "0")
    try:
        k = int(raw)
    except ValueError:
        raise UsageError(f"EPICTRL_THREADS must be an integer, got {raw!r}") from None
    return (os.cpu_count() or 1) if k <= 0 else k


def _drawn_edges(model) -> list:
    if isinstance(model, MarkovTemporalNet):
        return sorted(set().union(*(g.edges for g in model.configs)))
    if isinstance(model, AmeiNet):
        ab = abar_matrix(model)
        return [(i, j) for i in range(model.n) for j in range(i + 1, model.n) if ab[i, j] > 0]
    return model.g0.sorted_edges()


def _layout(model) -> np.ndarray:
    if model.n == karate().n and set(_drawn_edges(model)) <= karate().edges:
        return karate_layout()
    return circle_layout(model.n)


# ---------------------------------------------------------------- commands


def cmd_net_build(args, argv) -> int:
    if args.kind in ("markov-karate", "amei-karate"):
        rates = dict(p1=args.p1, q1=args.q1, p2=args.p2, q2=args.q2, p3=args.p3, q3=args.q3)
        model = (markov_karate if args.kind == "markov-karate" else amei_karate)(**rates)
        params = rates
    else:
        model = asis_karate(args.phi, args.psi)
        params = {"phi": args.phi, "psi": args.psi}
    dump_model(model, args.out)
    g, part, cls = karate_edge_classes()
    report = {
        "clusters": {str(c): part.members(c) for c in (1, 2)},
        "edge_classes": {str(c): [list(e) for e in cls.edges_in(c)] for c in (1, 2, 3)},
        "counts": {str(k): v for k, v in cls.counts().items()},
    }
    rep = _sibling(args.out, ".report.json")
    _write_json(rep, report)
    _write_manifest(args.out, "net build", argv, [], {"kind": args.kind, **params}, None, [args.out, rep])
    return EXIT_OK


def cmd_threshold(args, argv) -> int:
    model = _load(args.model)
    deltas = parse_range(args.delta_grid)
    if deltas[0] <= 0:
        raise UsageError("recovery rates must be positive")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        est = EpidemicThreshold(deltas=deltas, tol=args.tol).fit(model)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["delta", "beta_c"])
        for d, b in est.curve_.points:
            w.writerow([_g17(d), _g17(b)])
    outputs = [args.out]
    if args.svg:
        Path(args.svg).write_text(line_plot(deltas, {"beta_c": est.beta_c_}, xlabel="recovery rate", ylabel="threshold infection rate"), encoding="utf-8")
        outputs.append(args.svg)
    _write_manifest(args.out, "threshold", argv, [args.model], {"delta_grid": args.delta_grid, "tol": args.tol}, None, outputs)
    return EXIT_OK


def _need(args, names, kind):
    missing = [n for n in names if getattr(args, n.replace("-", "_")) is None]
    if missing:
        raise UsageError(f"{kind} allocation needs --{', --'.join(missing)}")


def _build_problem(model, args) -> BudgetedProblem:
    if args.preset == "reference":
        kind = "asis" if isinstance(model, AsisModel) else "amei" if isinstance(model, AmeiNet) else "markov"
        ref = reference_problem(kind, args.budget)
        if ref.n != model.n:
            raise UsageError("the reference preset is defined for the 34-node karate models")
        return BudgetedProblem(model, ref.costs, args.budget, ref.params)
    if isinstance(model, AsisModel):
        _need(args, ["beta", "delta", "phi-bounds"], "adaptive")
        lo, hi = args.phi_bounds
        hat = 100.0 * hi if args.phi_hat is None else args.phi_hat
        costs = {"cutting": normalize_costs("cutting", args.s, hat, (lo, hi))}
        return BudgetedProblem(model, costs, args.budget, EpidemicParams.homogeneous(model.n, args.beta, args.delta))
    _need(args, ["beta-bounds", "delta-bounds"], "rate")
    hat = 2.0 * args.delta_bounds[1] if args.delta_hat is None else args.delta_hat
    costs = {
        "infection": normalize_costs("infection", args.q, None, args.beta_bounds),
        "recovery": normalize_costs("recovery", args.r, hat, args.delta_bounds),
    }
    return BudgetedProblem(model, costs, args.budget)


def cmd_optimize(args, argv) -> int:
    model = _load(args.model)
    prob = _build_problem(model, args)
    res = optimize(prob, feas_tol=args.feas_tol, opt_tol=args.opt_tol)
    _write_json(args.out, res.to_dict())
    spend_csv = _sibling(args.out, ".spend.csv")
    res.write_spend_csv(spend_csv)
    svg = _sibling(args.out, ".svg")
    svg.write_text(network_map(_layout(model), _drawn_edges(model), res.spend, title=f"spend per node (total {res.total_spend:.4g})"), encoding="utf-8")
    params = {k: getattr(args, k) for k in ("budget", "preset", "beta_bounds", "delta_bounds", "q", "r", "delta_hat", "beta", "delta", "phi_bounds", "s", "phi_hat", "feas_tol", "opt_tol")}
    _write_manifest(args.out, "optimize", argv, [args.model], params, None, [args.out, spend_csv, svg])
    return EXIT_OK


def _x0(spec: str, n: int) -> tuple:
    if spec == "all":
        return (1,) * n
    x = [0] * n
    for tok in spec.split(","):
        try:
            i = int(tok)
        except ValueError:
            raise UsageError(f"--x0 takes 'all' or comma-separated node indices, got {spec!r}") from None
        if not 0 <= i < n:
            raise UsageError(f"node {i} out of range")
        x[i] = 1
    return tuple(x)


def _sweep_cell(job):
    model, beta, delta, cfg, runs, burn = job
    est = metastable_count(Simulator(model, EpidemicParams.homogeneous(model.n, beta, delta), cfg), runs, burn)
    return est.y_star, est.stderr, est.survived_fraction


def cmd_simulate(args, argv) -> int:
    model = _load(args.model)
    x0 = _x0(args.x0, model.n)
    cfg = SimConfig(args.horizon, args.seed, x0)
    outputs = [args.out]
    if args.sweep:
        grid = parse_sweep(args.sweep)
        betas = grid.get("beta", np.array([args.beta]))
        if betas[0] is None:
            raise UsageError("give --beta or a beta range in --sweep")
        phis = grid.get("phi")
        if phis is not None and not isinstance(model, AsisModel):
            raise UsageError("phi sweeps need an adaptive model")
        if args.runs < 100:
            raise UsageError("sweeps need --runs >= 100")
        cells = []
        for phi in phis if phis is not None else [None]:
            m = model if phi is None else model.with_phi(float(phi))
            for beta in betas:
                cells.append((phi, float(beta), (m, float(beta), args.delta, cfg, args.runs, args.burn_in)))
        k = _workers()
        jobs = [c[2] for c in cells]
        if k > 1 and len(jobs) > 1:
            with cf.ProcessPoolExecutor(max_workers=k) as ex:
                results = list(ex.map(_sweep_cell, jobs))
        else:
            results = [_sweep_cell(j) for j in jobs]
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["beta", "phi", "y_star", "stderr", "survived_fraction"])
            for (phi, beta, _), (y, se, sf) in zip(cells, results):
                phi_v = float(model.phi[0]) if phi is None and isinstance(model, AsisModel) else (float("nan") if phi is None else float(phi))
                w.writerow([_g17(beta), _g17(phi_v), _g17(y), _g17(se), _g17(sf)])
    else:
        if args.beta is None:
            raise UsageError("--beta is required")
        ep = EpidemicParams.homogeneous(model.n, args.beta, args.delta)
        step = args.horizon / 100 if args.grid_step is None else args.grid_step
        t_grid = np.round(np.arange(0.0, args.horizon + 0.5 * step, step), 12)
        t_grid = t_grid[t_grid <= args.horizon]
        if args.runs == 1:
            sim = {MarkovTemporalNet: gillespie_markov, AmeiNet: gillespie_amei, AsisModel: gillespie_asis}[type(model)]
            traj = sim(model, ep, cfg, t_grid, event_cap=args.event_cap if args.events else 0)
            traj.write_csv(args.out)
            if args.events:
                traj.write_events(args.events)
                outputs.append(args.events)
                if traj.truncated:
                    print(f"warning: event log truncated at {args.event_cap} events", file=sys.stderr)
        else:
            res = Simulator(model, ep, cfg).run(args.runs, t_grid)
            prev = res.states.sum(axis=2)
            mean = prev.mean(axis=0)
            se = prev.std(axis=0, ddof=1) / math.sqrt(args.runs)
            with open(args.out, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["time", "mean_prevalence", "stderr"])
                for t, m, s in zip(t_grid, mean, se):
                    w.writerow([_g17(float(t)), _g17(float(m)), _g17(float(s))])
    params = {k: getattr(args, k) for k in ("beta", "delta", "runs", "horizon", "x0", "sweep", "burn_in", "grid_step")}
    _write_manifest(args.out, "simulate", argv, [args.model], params, args.seed, outputs)
    return EXIT_OK


def cmd_validate(args, argv) -> int:
    report = run_suite(args.suite, quick=args.quick)
    text = json.dumps(report, indent=1, sort_keys=True, default=_json_default)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        _write_manifest(args.out, "validate", argv, [], {"suite": args.suite, "quick": args.quick}, None, [args.out])
    else:
        print(text)
    for c in report["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}", file=sys.stderr)
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_gp_solve(args, argv) -> int:
    try:
        gp = load_problem(args.problem)
    except OSError as exc:
        raise UsageError(f"cannot read problem file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"problem file is not valid JSON: {exc}") from None
    sol = solve(gp, feas_tol=args.feas_tol, opt_tol=args.opt_tol)
    _write_json(args.out, solution_to_dict(sol))
    _write_manifest(args.out, "gp solve", argv, [args.problem], {"feas_tol": args.feas_tol, "opt_tol": args.opt_tol}, None, [args.out])
    if sol.status == "infeasible":
        print(f"infeasible: phase-I value {sol.phase1_value:.6g}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_replay(args, argv) -> int:
    try:
        man = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
        replay_argv = man["argv"]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise UsageError(f"unreadable manifest: {exc}") from None
    return main(replay_argv)


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="epictrl", description="Epidemic thresholds, budgeted control and simulation on temporal and adaptive networks.")
    p.add_argument("--version", action="version", version=f"epictrl {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    net = sub.add_parser("net", help="build reference network models")
    net_sub = net.add_subparsers(dest="net_command", required=True)
    build = net_sub.add_parser("build", help="write a model file")
    kinds = build.add_subparsers(dest="kind", required=True)
    for kind in ("markov-karate", "amei-karate"):
        k = kinds.add_parser(kind)
        for name in ("p1", "q1", "p2", "q2", "p3", "q3"):
            k.add_argument(f"--{name}", type=_num, required=True)
        k.add_argument("--out", required=True)
    k = kinds.add_parser("asis-karate")
    k.add_argument("--phi", type=_num, required=True)
    k.add_argument("--psi", type=_num, required=True)
    k.add_argument("--out", required=True)
    build.set_defaults(func=cmd_net_build)

    th = sub.add_parser("threshold", help="threshold curve beta_c(delta)")
    th.add_argument("model")
    th.add_argument("--delta-grid", required=True, help="lo:hi:step")
    th.add_argument("--tol", type=_num, default=1e-8)
    th.add_argument("--out", required=True)
    th.add_argument("--svg")
    th.set_defaults(func=cmd_threshold)

    op = sub.add_parser("optimize", help="budgeted rate allocation")
    op.add_argument("model")
    op.add_argument("--budget", type=_num, required=True)
    op.add_argument("--preset", choices=["reference"])
    op.add_argument("--beta-bounds", type=_pair)
    op.add_argument("--delta-bounds", type=_pair)
    op.add_argument("--q", type=_num, default=0.1)
    op.add_argument("--r", type=_num, default=0.1)
    op.add_argument("--delta-hat", type=_num)
    op.add_argument("--beta", type=_num)
    op.add_argument("--delta", type=_num)
    op.add_argument("--phi-bounds", type=_pair)
    op.add_argument("--s", type=_num, default=1.0)
    op.add_argument("--phi-hat", type=_num)
    op.add_argument("--feas-tol", type=_num, default=1e-8)
    op.add_argument("--opt-tol", type=_num, default=1e-8)
    op.add_argument("--out", required=True)
    op.set_defaults(func=cmd_optimize)

    sm = sub.add_parser("simulate", help="Gillespie runs or metastable sweeps")
    sm.add_argument("model")
    sm.add_argument("--beta", type=_num)
    sm.add_argument("--delta", type=_num, default=1.0)
    sm.add_argument("--runs", type=int, default=1)
    sm.add_argument("--horizon", type=_num, default=50.0)
    sm.add_argument("--seed", type=int, default=0)
    sm.add_argument("--x0", default="all", help="'all' or comma-separated infected nodes")
    sm.add_argument("--burn-in", type=_num, default=0.5)
    sm.add_argument("--grid-step", type=_num)
    sm.add_argument("--sweep", help="beta=lo:hi:step,phi=lo:hi:step")
    sm.add_argument("--events", help="JSON-lines event log (single run only)")
    sm.add_argument("--event-cap", type=int, default=1_000_000)
    sm.add_argument("--out", required=True)
    sm.set_defaults(func=cmd_simulate)

    va = sub.add_parser("validate", help="run a self-check suite")
    va.add_argument("--suite", required=True, choices=sorted(SUITES))
    va.add_argument("--quick", action="store_true")
    va.add_argument("--out")
    va.set_defaults(func=cmd_validate)

    gp = sub.add_parser("gp", help="geometric programming utilities")
    gp_sub = gp.add_subparsers(dest="gp_command", required=True)
    gs = gp_sub.add_parser("solve", help="solve a GP stored as JSON")
    gs.add_argument("problem")
    gs.add_argument("--feas-tol", type=_num, default=1e-8)
    gs.add_argument("--opt-tol", type=_num, default=1e-8)
    gs.add_argument("--out", required=True)
    gs.set_defaults(func=cmd_gp_solve)

    rp = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    rp.add_argument("manifest")
    rp.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleError as exc:
        print(f"infeasible: {exc}; certificate {exc.certificate}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SizeCapError as exc:
        print(f"size cap: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (EpictrlError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
