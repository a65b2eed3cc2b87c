"""Experiment configuration, tilt resolution and the table/curve drivers behind the CLI."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import __version__
from .estimator import EstimateReport, estimate
from .glauber import ChainRun, ConstraintSet, budget_steps, default_burnin, run_chain
from .phase import asymptotic_second_moment, in_S_alpha, is_replica_symmetric, phase_curve
from .rates import ProblemSpec, TiltParams, log_odds

TILT_KINDS = ("edge", "triangle", "hybrid", "mc")


class ConfigError(ValueError):
    """Invalid or unresolvable experiment configuration (CLI exit code 2)."""


@dataclass
class ExperimentConfig:
    p: float = 0.35
    t: float = 0.4
    threshold_mode: str = "binomial"
    n: list[int] = field(default_factory=lambda: [16])
    tilt: str = "triangle"
    alpha: float = 1.0
    q: float | None = None
    r: float | None = None
    tau_lo: float | None = None
    tau_hi: float | None = None
    steps_coeff: float = 5e4
    burnin_coeff: float = 10.0
    budget_frac: float = 1.0
    seed: int = 0
    replicas: int = 1
    batches: int = 32
    estimator: str = "auto"
    out: str | None = None
    hist_out: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        try:
            ProblemSpec(self.p, self.t, self.threshold_mode)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.tilt not in TILT_KINDS:
            raise ConfigError(f"tilt must be one of {TILT_KINDS}, got {self.tilt!r}")
        if not self.n or any(k < 3 for k in self.n):
            raise ConfigError(f"n must be a non-empty list of integers >= 3, got {self.n}")
        if self.alpha <= 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if self.tilt == "hybrid" and self.q is None:
            raise ConfigError("hybrid tilt needs q")
        if self.q is not None and not (0 < self.q <= self.t):
            raise ConfigError(f"q must lie in (0, t], got {self.q}")
        if self.r is not None and not (0 < self.r <= 1):
            raise ConfigError(f"r must lie in (0, 1], got {self.r}")
        if self.r is not None and (self.tau_lo is not None or self.tau_hi is not None):
            raise ConfigError("give either r or a triangle-density interval, not both")
        if self.steps_coeff <= 0 or self.burnin_coeff < 0 or not (0 < self.budget_frac <= 1):
            raise ConfigError("budgets must be positive and budget_frac in (0, 1]")
        if self.replicas < 1 or self.batches < 1:
            raise ConfigError("replicas and batches must be positive")
        if self.estimator not in ("auto", "exact_psi", "self_normalized", "reference"):
            raise ConfigError(f"unknown estimator {self.estimator!r}")

    @property
    def spec(self) -> ProblemSpec:
        return ProblemSpec(self.p, self.t, self.threshold_mode)

    def constraint(self) -> ConstraintSet | None:
        if self.r is not None:
            return ConstraintSet.cap(self.r)
        if self.tau_lo is not None or self.tau_hi is not None:
            try:
                return ConstraintSet(self.tau_lo or 0.0, 1.0 if self.tau_hi is None else self.tau_hi)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        return None

    def steps(self, n: int) -> tuple[int, int]:
        """(total steps per replica, burn-in) after applying ``budget_frac``."""
        total = max(1, int(round(self.budget_frac * budget_steps(n, self.steps_coeff))))
        burn = min(int(round(self.budget_frac * default_burnin(n, self.burnin_coeff))), total - 1)
        return total, max(burn, 0)

    # flat "key = value" text form
    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if f.name == "n":
                v = ",".join(str(k) for k in v)
            lines.append(f"{f.name} = {v!r}" if isinstance(v, float) else f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, overrides: dict | None = None) -> "ExperimentConfig":
        values: dict = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            values[key] = val
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_mapping(values)

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_text(fh.read(), overrides)

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls)}
        kw = {}
        for key, val in values.items():
            key = key.replace("-", "_")
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kw[key] = _coerce(key, val)
        if isinstance(kw.get("tilt"), str) and ":" in kw["tilt"]:
            kind, arg = kw["tilt"].split(":", 1)
            kw["tilt"] = kind
            if kind == "triangle":
                kw.setdefault("alpha", _coerce("alpha", arg))
            elif kind == "hybrid":
                kw.setdefault("q", _coerce("q", arg))
            else:
                raise ConfigError(f"tilt {kind!r} takes no argument")
        return cls(**kw)


_FLOATS = {"p", "t", "alpha", "q", "r", "tau_lo", "tau_hi", "steps_coeff", "burnin_coeff", "budget_frac"}
_INTS = {"seed", "replicas", "batches"}


def _parse_float(val: str) -> float:
    from fractions import Fraction

    try:
        return float(val)
    except ValueError:
        return float(Fraction(val))  # allows alpha = 2/3


def _coerce(key: str, val):
    if not isinstance(val, str):
        return list(val) if key == "n" else val
    try:
        if key == "n":
            return [int(v) for v in val.replace(" ", "").split(",") if v]
        if key in _FLOATS:
            return None if val == "None" else _parse_float(val)
        if key in _INTS:
            return int(val)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"bad value for {key}: {val!r}") from None
    return None if val == "None" else val


def resolve_tilt(cfg: ExperimentConfig) -> TiltParams:
    """Concrete Gibbs parameters for the configured tilt."""
    spec = cfg.spec
    if cfg.tilt == "mc":
        return TiltParams.source(cfg.p)
    if cfg.tilt == "edge":
        return TiltParams.edge(cfg.t)
    if cfg.tilt == "hybrid":
        return TiltParams.hybrid(cfg.q, cfg.t)
    member, _ = in_S_alpha(spec, cfg.alpha)
    if not member:
        if not is_replica_symmetric(spec):
            raise ConfigError(f"(p, t) = ({cfg.p}, {cfg.t}) is replica breaking: no triangle tilt")
        if cfg.constraint() is None:
            raise ConfigError(f"(p, t) = ({cfg.p}, {cfg.t}) is outside S_alpha for alpha={cfg.alpha}; "
                              "the triangle tilt needs a constraint (set r)")
    return TiltParams.triangle(spec, cfg.alpha, check=False)


def cell_seed(master: int, *keys: int) -> int:
    """Deterministic per-cell seed derived from the master seed."""
    return int(np.random.SeedSequence([master, *keys]).generate_state(1, np.uint64)[0] >> np.uint64(1))


def run_estimate(cfg: ExperimentConfig, n: int, seed: int | None = None) -> tuple[EstimateReport, ChainRun]:
    tilt = resolve_tilt(cfg)
    total, burn = cfg.steps(n)
    run = run_chain(tilt, n, total, burn, seed=cfg.seed if seed is None else seed, spec=cfg.spec,
                    constraint=cfg.constraint(), replicas=cfg.replicas, batches=cfg.batches)
    return estimate(run, cfg.estimator), run


@dataclass(frozen=True)
class Column:
    name: str
    overrides: dict


TABLE_SPECS = {
    # (p, t, default n, extra n under --full, columns)
    "t1": (0.35, 0.4, [16, 32], [64, 96],
           [Column(f"q={q:.2f}", {"tilt": "hybrid", "q": q}) for q in (0.35, 0.36, 0.37, 0.38, 0.39, 0.40)]),
    "t3": (0.2, 0.3, [16, 32], [48, 64],
           [Column("triangle_a2/3", {"tilt": "triangle", "alpha": 2.0 / 3.0}),
            Column("conditioned_triangle", {"tilt": "triangle", "alpha": 1.0, "r": 0.4272}),
            Column("edge", {"tilt": "edge"}),
            Column("mc", {"tilt": "mc"})]),
}
TABLE_SPECS["t2"] = TABLE_SPECS["t1"]
TABLE_SPECS["t4"] = TABLE_SPECS["t3"]
TABLE_STAT = {"t1": ("mu_hat", "log_prob"), "t3": ("mu_hat", "log_prob"),
              "t2": ("sample_variance", "log_second_moment"), "t4": ("sample_variance", "log_second_moment")}


def table_steps_coeff(n: int) -> float:
    return 1e5 if n >= 96 else 5e4


def run_table(name: str, base: ExperimentConfig | None = None, full: bool = False,
              n_list: list[int] | None = None):
    """Compute one table; returns ``(header, rows)`` with rows of (n, [(value, log_value, report)])."""
    if name not in TABLE_SPECS:
        raise ConfigError(f"unknown table {name!r}; choose from {sorted(TABLE_SPECS)}")
    p, t, ns, extra, columns = TABLE_SPECS[name]
    base = base or ExperimentConfig()
    ns = list(n_list) if n_list else ns + (extra if full else [])
    stat, log_stat = TABLE_STAT[name]
    rows = []
    for n in ns:
        cells = []
        for k, col in enumerate(columns):
            kw = dict(p=p, t=t, n=[n], tilt="triangle", alpha=1.0, q=None, r=None,
                      tau_lo=None, tau_hi=None, steps_coeff=table_steps_coeff(n))
            kw.update(col.overrides)
            cfg = replace(base, **kw)
            rep, _ = run_estimate(cfg, n, seed=cell_seed(base.seed, n, k))
            cells.append((getattr(rep, stat), getattr(rep, log_stat), rep))
        rows.append((n, cells))
    header = {"table": name, "p": p, "t": t, "seed": base.seed, "budget_frac": base.budget_frac,
              "replicas": base.replicas, "version": __version__}
    return header, [c.name for c in columns], rows


def second_moment_curve(p: float, t: float, r: float, alpha: float, betas) -> list[tuple[float, float, float]]:
    """Asymptotic second moment of the tilt ``(h_p, beta, alpha)`` with and without the cap ``r``."""
    spec = ProblemSpec(p, t)
    hp = float(log_odds(p))
    out = []
    for b in betas:
        params = TiltParams(hp, float(b), alpha)
        out.append((float(b), asymptotic_second_moment(spec, params, cap=r),
                    asymptotic_second_moment(spec, params)))
    return out


def phase_curve_rows(p: float, alpha: float, betas) -> list[tuple[float, float, str]]:
    return phase_curve(p, alpha, betas).rows


def fmt(x) -> str:
    """Number formatting for CSV/JSON text: scientific notation below 1e-3 in magnitude."""
    if isinstance(x, bool) or x is None:
        return str(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        return str(x)
    if x != 0.0 and abs(x) < 1e-3:
        return f"{x:.6e}"
    return f"{x:.10g}"
