"""Command-line entry point: ``tritail {phase,estimate,table,curve,oracle,hist-edges}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import __version__
from . import _kernels as K
from .estimator import edge_histogram, write_edge_histogram
from .experiments import (
    ConfigError, ExperimentConfig, fmt, phase_curve_rows, resolve_tilt, run_estimate, run_table,
    second_moment_curve,
)
from .phase import phase_report, phase_transition
from .rates import ProblemSpec, beta_star

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("tritail")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _common(sp: argparse.ArgumentParser, event: bool = True) -> None:
    if event:
        sp.add_argument("--p", type=float)
        sp.add_argument("--t", type=float)
        sp.add_argument("--threshold-mode", choices=["binomial", "graphon"])
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", help="output path (default: stdout)")


def _run_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", help="flat 'key = value' config file; flags override it")
    sp.add_argument("--n", help="vertex count or comma-separated list")
    sp.add_argument("--tilt", help="edge | triangle[:alpha] | hybrid:q | mc")
    sp.add_argument("--alpha", type=str)
    sp.add_argument("--q", type=float)
    sp.add_argument("--r", type=float, help="cap r: restrict to tau <= r^3 and eps <= r")
    sp.add_argument("--tau-lo", type=float)
    sp.add_argument("--tau-hi", type=float)
    sp.add_argument("--steps-coeff", type=float)
    sp.add_argument("--burnin-coeff", type=float)
    sp.add_argument("--budget-frac", type=float)
    sp.add_argument("--replicas", type=int)
    sp.add_argument("--batches", type=int)
    sp.add_argument("--estimator", choices=["auto", "exact_psi", "self_normalized", "reference"])


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="tritail", description=__doc__)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    sp = sub.add_parser("phase", help="replica symmetry, S_alpha membership and tilt fields")
    _common(sp)
    sp.add_argument("--alpha", action="append", type=str, help="exponent(s) to test; repeatable")

    sp = sub.add_parser("estimate", help="run the sampler and report an estimate as JSON")
    _common(sp)
    _run_flags(sp)
    sp.add_argument("--hist-out", help="also write the edge-count histogram of hits as CSV")

    sp = sub.add_parser("hist-edges", help="edge-count histogram of samples inside the event")
    _common(sp)
    _run_flags(sp)

    sp = sub.add_parser("table", help="reproduce one of the probability/variance tables as CSV")
    sp.add_argument("name", choices=["t1", "t2", "t3", "t4"])
    _common(sp, event=False)
    sp.add_argument("--n", help="override the row list, comma-separated")
    sp.add_argument("--budget-frac", type=float, default=1.0)
    sp.add_argument("--replicas", type=int, default=1)
    sp.add_argument("--full", action="store_true", help="include the large-n rows (slow)")

    sp = sub.add_parser("curve", help="phase branches or asymptotic second moment versus beta")
    sp.add_argument("name", choices=["phase", "second_moment"])
    _common(sp)
    sp.add_argument("--alpha", type=str, default="1")
    sp.add_argument("--r", type=float, default=None)
    sp.add_argument("--beta-min", type=float, default=0.0)
    sp.add_argument("--beta-max", type=float, default=10.0)
    sp.add_argument("--beta-steps", type=int, default=201)

    sp = sub.add_parser("oracle", help="exact quantities by enumeration (n <= 7)")
    _common(sp)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--tilt", default="triangle")
    sp.add_argument("--alpha", type=str)
    sp.add_argument("--q", type=float)
    sp.add_argument("--r", type=float)
    sp.add_argument("--allow-long", action="store_true", help="permit n = 8 (minutes)")
    sp.add_argument("--joint-out", help="write the (E, T) histogram as CSV")
    return ap


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json(obj: dict) -> str:
    def clean(v):
        if isinstance(v, (np.floating, np.integer)):
            v = v.item()
        if isinstance(v, float) and not np.isfinite(v):
            return str(v)
        return v
    return json.dumps({k: clean(v) for k, v in obj.items()}, indent=2) + "\n"


def _csv(header: dict, columns: list[str], rows) -> str:
    lines = [f"# {k}={v}" for k, v in header.items()]
    lines.append(",".join(columns))
    lines += [",".join(fmt(x) if not isinstance(x, str) else x for x in row) for row in rows]
    return "\n".join(lines) + "\n"


def _config(args) -> ExperimentConfig:
    over = {k: getattr(args, k, None) for k in (
        "p", "t", "threshold_mode", "n", "tilt", "alpha", "q", "r", "tau_lo", "tau_hi",
        "steps_coeff", "burnin_coeff", "budget_frac", "seed", "replicas", "batches", "estimator",
        "out", "hist_out")}
    if args.config:
        return ExperimentConfig.from_file(args.config, over)
    return ExperimentConfig.from_mapping({k: v for k, v in over.items() if v is not None})


def _meta(cfg: ExperimentConfig, n: int) -> dict:
    tilt = resolve_tilt(cfg)
    total, burn = cfg.steps(n)
    return {"version": __version__, "backend": K.BACKEND, "seed": cfg.seed, "n": n,
            "h": tilt.h, "beta": tilt.beta, "alpha": tilt.alpha,
            "steps_per_replica": total, "burnin_per_replica": burn, "replicas": cfg.replicas}


def _spec(p: float, t: float) -> ProblemSpec:
    try:
        return ProblemSpec(p, t)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_phase(args) -> int:
    spec = _spec(args.p if args.p is not None else 0.35, args.t if args.t is not None else 0.4)
    alphas = [_alpha(a) for a in (args.alpha or ["2/3", "1"])]
    report = phase_report(spec, alphas)
    out = report.to_dict()
    if report.replica_symmetric:
        for a in alphas:
            out.setdefault(f"beta_star_formula[{a:.6g}]", beta_star(spec, a, check=False))
    out["version"] = __version__
    _emit(_json(out), args.out)
    return EXIT_OK


def _alpha(text: str) -> float:
    from .experiments import _parse_float

    try:
        return _parse_float(text)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"bad alpha {text!r}") from None


def cmd_estimate(args) -> int:
    cfg = _config(args)
    outputs = []
    for n in cfg.n:
        meta = _meta(cfg, n)
        report, run = run_estimate(cfg, n)
        log.info("n=%d mu_hat=%s se=%s in %.1fs", n, fmt(report.mu_hat), fmt(report.se), run.seconds)
        outputs.append({**meta, **report.to_dict()})
        if cfg.hist_out and run.hist.sum():
            path = cfg.hist_out if len(cfg.n) == 1 else f"{cfg.hist_out}.n{n}"
            write_edge_histogram(path, run.hist, meta)
    text = "".join(_json(o) for o in outputs) if len(outputs) == 1 else \
        json.dumps(outputs, indent=2, default=str) + "\n"
    _emit(text, cfg.out)
    return EXIT_OK


def cmd_hist_edges(args) -> int:
    cfg = _config(args)
    n = cfg.n[0]
    meta = _meta(cfg, n)
    _, run = run_estimate(cfg, n)
    hist = edge_histogram(run)
    rows = [(e, int(c)) for e, c in enumerate(hist.tolist()) if c]
    _emit(_csv(meta, ["edge_count", "frequency"], rows), cfg.out)
    return EXIT_OK


def cmd_table(args) -> int:
    base = ExperimentConfig(seed=args.seed or 0, budget_frac=args.budget_frac, replicas=args.replicas)
    n_list = [int(v) for v in args.n.split(",")] if args.n else None
    header, names, rows = run_table(args.name, base, full=args.full, n_list=n_list)
    columns = ["n"] + [c for name in names for c in (name, f"{name}_log", f"{name}_se")]
    out = []
    for n, cells in rows:
        row = [n]
        for name, (value, log_value, rep) in zip(names, cells):
            row += [value, log_value, rep.se]
            header[f"tilt[n={n},{name}]"] = (f"h={fmt(rep.h)};beta={fmt(rep.beta)};alpha={fmt(rep.alpha)};"
                                             f"steps={rep.steps};burnin={rep.burnin}")
        out.append(row)
    _emit(_csv(header, columns, out), args.out)
    return EXIT_OK


def cmd_curve(args) -> int:
    alpha = _alpha(args.alpha)
    p = args.p if args.p is not None else 0.2
    t = args.t if args.t is not None else 0.3
    _spec(p, t)
    if args.beta_steps < 2 or args.beta_max <= args.beta_min:
        raise ConfigError("need beta_max > beta_min and at least two beta steps")
    betas = np.linspace(args.beta_min, args.beta_max, args.beta_steps)
    header = {"curve": args.name, "p": p, "alpha": alpha, "version": __version__}
    if args.name == "phase":
        tr = phase_transition(p, alpha, beta_max=max(args.beta_max, 1e-9))
        if tr is not None:
            header.update(transition_beta=fmt(tr[0]), jump_from=fmt(tr[1]), jump_to=fmt(tr[2]))
        text = _csv(header, ["beta", "u", "kind"], phase_curve_rows(p, alpha, betas))
    else:
        r = args.r if args.r is not None else 0.4272
        header.update(t=t, r=r)
        text = _csv(header, ["beta", "conditioned", "unconditioned"], second_moment_curve(p, t, r, alpha, betas))
    _emit(text, args.out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .glauber import ConstraintSet
    from .oracle import enumerate_joint, exact_estimator_moments, exact_mu, exact_psi
    from .rates import TiltParams

    cfg = ExperimentConfig.from_mapping({k: v for k, v in {
        "p": args.p, "t": args.t, "threshold_mode": args.threshold_mode, "n": [args.n], "tilt": args.tilt,
        "alpha": args.alpha, "q": args.q, "r": args.r}.items() if v is not None})
    n = args.n
    try:
        joint = enumerate_joint(n, allow_long=args.allow_long)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    spec = cfg.spec
    tilt = resolve_tilt(cfg)
    con = ConstraintSet.cap(cfg.r) if cfg.r is not None else None
    mom = exact_estimator_moments(n, spec, tilt, con)
    out = {"version": __version__, "n": n, "p": spec.p, "t": spec.t, "threshold_mode": spec.threshold_mode,
           "min_triangles": spec.min_triangles(n), "graphs": joint.total,
           "mu": exact_mu(n, spec), "tilt": cfg.tilt, **tilt.as_dict(),
           "psi_tilt": exact_psi(n, tilt, con), "psi_source": exact_psi(n, TiltParams.source(spec.p), con),
           "estimator_mean": mom.mean, "estimator_second_moment": mom.second,
           "estimator_variance": mom.variance}
    if con is not None:
        out["nu"] = exact_mu(n, spec, con)
        out["constraint"] = con.describe()
    if args.joint_out:
        joint.to_csv(args.joint_out)
    _emit(_json(out), args.out)
    return EXIT_OK


COMMANDS = {"phase": cmd_phase, "estimate": cmd_estimate, "hist-edges": cmd_hist_edges,
            "table": cmd_table, "curve": cmd_curve, "oracle": cmd_oracle}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"tritail: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.cmd](args)
    except ConfigError as exc:
        print(f"tritail: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"tritail: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
