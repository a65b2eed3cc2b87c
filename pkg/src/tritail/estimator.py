"""Importance-sampling estimators built from Glauber chain output.

Every estimator has the form ``qhat = 1_W * exp(a - b) * C`` where ``a`` and
``b`` are the unnormalised log-densities of the source law and the tilt and
``C`` estimates ``Z_Q / Z_P``. The modes differ only in how ``C`` is found:

``exact_psi``
    ``C`` from known free energies (closed form when beta = 0, enumeration
    for small n). Unbiased.
``self_normalized``
    ``C = K / sum_k exp(a_k - b_k)``. Consistent, no free energy needed, but
    its variance grows quickly once the tilt rarely visits the source bulk.
``reference``
    ``C = (Z_R / Z_P) * K / sum_k exp(r_k - b_k)`` with an Erdos-Renyi
    reference law R at the tilt's own density, whose partition function is
    closed form. R overlaps the tilt far better than the source does.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from . import _kernels as K
from .glauber import ChainRun, ConstraintSet
from .graph import pair_arrays
from .rates import ProblemSpec, TiltParams, log_odds

MODES = ("exact_psi", "self_normalized", "reference")


def log_unnormalized_weight(eps, tau, n: int, p: float, tilt: TiltParams):
    """``n^2 ((h_p - h) eps / 2 - beta tau^alpha / 6)``: log dP/dQ without the free-energy gap."""
    hp = float(log_odds(p))
    eps = np.asarray(eps, dtype=float)
    tau = np.asarray(tau, dtype=float)
    out = n * n * (0.5 * (hp - tilt.h) * eps - tilt.beta / 6.0 * tau ** tilt.alpha)
    return out[()] if out.ndim == 0 else out


def log_partition_er(n: int, h: float) -> float:
    """``log sum_X exp(h E(X)) = C(n,2) log(1 + e^h)``."""
    return math.comb(n, 2) * float(np.logaddexp(0.0, h))


def psi_er_exact(n: int, p: float) -> float:
    """Free energy of G(n, p) written as a Gibbs measure with field h_p: ``(n-1)/(2n) log(1/(1-p))``."""
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    if not (0.0 < p < 1.0):
        raise ValueError(f"p must lie in (0, 1), got {p}")
    return (n - 1) / (2.0 * n) * -math.log1p(-p)


@dataclass
class EstimateReport:
    mode: str
    n: int
    p: float
    t: float
    h: float
    beta: float
    alpha: float
    K: int
    mu_hat: float
    se: float
    sample_variance: float
    log_second_moment: float
    log_prob: float
    ess: float
    hit_rate: float
    log_normalizer: float
    seed: int
    steps: int
    burnin: int
    replicas: int
    rejected: int
    constraint: str
    degenerate: bool
    backend: str = K.BACKEND
    version: str = __version__

    @property
    def relative_se(self) -> float:
        return self.se / self.mu_hat if self.mu_hat > 0 else math.inf

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _stream(acc: np.ndarray, off: int) -> tuple[float, np.ndarray]:
    """Rescale one log-sum-exp stream of every batch to a shared maximum.

    Returns ``(M, S)`` with ``S[b] = [sum w, sum w^2, sum 1_W w, sum 1_W w^2]``
    of batch b divided by ``exp(M)`` (``exp(2M)`` for the squared sums).
    """
    mx = acc[:, off]
    M = float(mx.max())
    if not math.isfinite(M):
        return M, np.zeros((acc.shape[0], 4))
    with np.errstate(invalid="ignore"):
        d = np.where(np.isfinite(mx), np.exp(mx - M), 0.0)
    S = acc[:, off + 1: off + 5] * np.stack([d, d * d, d, d * d], axis=1)
    return M, S


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def _reduce(Kn, src, ref, hits, mode, log_c):
    """Point estimates from pooled sums; ``src``/``ref`` are ``(M, sums)`` pairs."""
    Ms, s = src
    Mr, r = ref
    if mode == "exact_psi":
        log_norm = log_c
    elif mode == "self_normalized":
        log_norm = math.log(Kn) - (Ms + _log(s[0]))
        # the shared maximum cancels; dropping it keeps mu_hat invariant to weight shifts
        return (_log(s[2]) - _log(s[0]), _log(s[3]) + math.log(Kn) - 2 * _log(s[0]), log_norm)
    else:
        log_norm = log_c + math.log(Kn) - (Mr + _log(r[0]))
    log_mu = Ms + _log(s[2]) - math.log(Kn) + log_norm
    log_m2 = 2 * Ms + _log(s[3]) - math.log(Kn) + 2 * log_norm
    return log_mu, log_m2, log_norm


def estimate(run: ChainRun, mode: str = "auto", log_c: float | None = None,
             ref_mass_ratio: float | None = None) -> EstimateReport:
    """Build an :class:`EstimateReport` from a chain run.

    ``log_c`` is ``log(Z_Q/Z_P)`` for ``exact_psi`` and ``log(Z_R/Z_P)`` for
    ``reference``; both default to the Erdos-Renyi closed forms where those
    apply. For runs restricted to a constraint set the target is
    ``P(W | A)``; ``ref_mass_ratio`` then supplies ``R(A) / P(A)`` (see
    :func:`constraint_mass_ratio`). ``mode="auto"`` picks ``exact_psi`` for
    unconditioned runs with beta = 0 and ``reference`` otherwise.
    """
    if run.spec is None:
        raise ValueError("run has no event attached; pass spec to run_chain")
    n, params, spec = run.n, run.params, run.spec
    hp = float(log_odds(spec.p))
    if mode == "auto":
        mode = "exact_psi" if params.beta == 0.0 and run.constraint is None else "reference"
    if mode not in MODES:
        raise ValueError(f"unknown estimator mode {mode!r}; choose from {MODES} or 'auto'")
    if log_c is None:
        if mode == "exact_psi":
            if params.beta != 0.0 or run.constraint is not None:
                raise ValueError("exact_psi needs log(Z_Q/Z_P); it is closed form only for beta = 0 "
                                 "without constraint")
            log_c = log_partition_er(n, params.h) - log_partition_er(n, hp)
        elif mode == "reference":
            log_c = log_partition_er(n, run.ref_h) - log_partition_er(n, hp)
            if run.constraint is not None:
                if ref_mass_ratio is None:
                    ref_mass_ratio = constraint_mass_ratio(n, run.ref_h, spec.p, run.constraint, seed=run.seed)
                log_c += math.log(ref_mass_ratio)
        else:
            log_c = 0.0

    acc = run.acc[run.acc[:, K.ACC_K] > 0]
    Kb = acc[:, K.ACC_K]
    Kn = float(Kb.sum())
    if Kn == 0:
        raise ValueError("run has no post-burn-in observations")
    hits = float(acc[:, K.ACC_HITS].sum())
    Ms, S = _stream(acc, K.ACC_SRC)
    Mr, R = _stream(acc, K.ACC_REF)
    tot_s, tot_r = S.sum(axis=0), R.sum(axis=0)
    log_mu, log_m2, log_norm = _reduce(Kn, (Ms, tot_s), (Mr, tot_r), hits, mode, log_c)
    mu = math.exp(log_mu) if log_mu > -math.inf else 0.0

    # delete-one-batch jackknife for the standard error of mu_hat
    B = acc.shape[0]
    if B > 1 and mu > 0:
        loo = np.empty(B)
        for b in range(B):
            lm, _, _ = _reduce(Kn - Kb[b], (Ms, np.maximum(tot_s - S[b], 0.0)),
                               (Mr, np.maximum(tot_r - R[b], 0.0)), hits, mode, log_c)
            loo[b] = math.exp(lm) if lm > -math.inf else 0.0
        se = math.sqrt((B - 1) / B * float(((loo - loo.mean()) ** 2).sum()))
    else:
        se = math.inf if mu > 0 else 0.0

    m2 = math.exp(log_m2) if log_m2 > -math.inf else 0.0
    var = max(Kn / max(Kn - 1, 1) * (m2 - mu * mu), 0.0)
    ess = (tot_s[0] ** 2 / tot_s[1]) if tot_s[1] > 0 else 0.0
    return EstimateReport(
        mode=mode, n=n, p=spec.p, t=spec.t, h=params.h, beta=params.beta, alpha=params.alpha,
        K=int(Kn), mu_hat=mu, se=se, sample_variance=var,
        log_second_moment=log_m2 / (n * n), log_prob=log_mu / (n * n),
        ess=float(min(ess, Kn)), hit_rate=hits / Kn, log_normalizer=log_norm,
        seed=run.seed, steps=run.total_steps, burnin=run.burnin, replicas=run.replicas,
        rejected=run.rejected,
        constraint="" if run.constraint is None else run.constraint.describe(),
        degenerate=hits == 0,
    )


def constraint_mass_ratio(n: int, ref_h: float, p: float, constraint: ConstraintSet,
                          draws: int = 20_000, seed: int = 0) -> float:
    """Monte Carlo estimate of ``R(A) / P(A)`` for Erdos-Renyi laws R = G(n, logistic(ref_h)), P = G(n, p)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA11]))
    q = float(K.logistic(ref_h))
    mass = [in_constraint_fraction(n, prob, constraint, draws, rng) for prob in (q, p)]
    if mass[1] == 0.0:
        raise RuntimeError("no source draw landed in the constraint set")
    return max(mass[0], 0.5 / draws) / mass[1]


def in_constraint_fraction(n: int, prob: float, constraint: ConstraintSet, draws: int,
                           rng: np.random.Generator, chunk: int = 4096) -> float:
    pi, pj = pair_arrays(n)
    inside = 0
    left = draws
    while left:
        s = min(chunk, left)
        E = np.empty(s, dtype=np.int64)
        T = np.empty(s, dtype=np.int64)
        K.er_counts(n, pi, pj, rng.random((s, pi.size)), prob, E, T)
        eps = 2.0 * E / (n * n)
        tau = 6.0 * T / (n * n * n)
        ok = (eps <= constraint.epsilon_cap) & (tau >= constraint.tau_lo) & (tau <= constraint.tau_hi)
        inside += int(ok.sum())
        left -= s
    return inside / draws


def accumulate(hits, log_w, log_ref=None, batches: int = 1) -> np.ndarray:
    """Pack a stream of ``(1_W, log weight)`` pairs into batch accumulators.

    Uses the same log-sum-exp update as the sampler kernel, so array input and
    chain output are reduced by identical code.
    """
    hits = np.asarray(hits, dtype=bool)
    log_w = np.asarray(log_w, dtype=float)
    log_ref = log_w if log_ref is None else np.asarray(log_ref, dtype=float)
    if not (hits.shape == log_w.shape == log_ref.shape) or hits.ndim != 1:
        raise ValueError("hits and log weights must be 1-d arrays of equal length")
    bounds = np.linspace(0, hits.size, batches + 1).round().astype(np.int64)
    acc = np.vstack([K.new_accumulator() for _ in range(batches)])
    for b in range(batches):
        row = acc[b]
        for k in range(bounds[b], bounds[b + 1]):
            row[K.ACC_K] += 1.0
            row[K.ACC_HITS] += float(hits[k])
            K._push(row, K.ACC_SRC, float(log_w[k]), 1.0, bool(hits[k]))
            K._push(row, K.ACC_REF, float(log_ref[k]), 1.0, bool(hits[k]))
    return acc


def _array_run(hits, log_w, log_ref, n, spec, tilt, batches, ref_h=0.0) -> ChainRun:
    acc = accumulate(hits, log_w, log_ref, batches)
    return ChainRun(n=n, params=tilt, spec=spec, constraint=None, ref_h=ref_h, seed=0,
                    total_steps=len(hits), burnin=0, acc=acc,
                    hist=np.zeros(math.comb(n, 2) + 1, dtype=np.int64),
                    rejected=0, seconds=0.0)


def estimate_self_normalized(hits, log_w, n: int, spec: ProblemSpec, tilt: TiltParams,
                             batches: int = 32) -> EstimateReport:
    """Self-normalised estimate ``sum 1_W w / sum w`` from a weight stream."""
    return estimate(_array_run(hits, log_w, None, n, spec, tilt, batches), "self_normalized")


def estimate_exact_psi(hits, log_w, n: int, spec: ProblemSpec, tilt: TiltParams,
                       psi_tilt: float, psi_source: float, batches: int = 32) -> EstimateReport:
    """Unbiased estimate using exact free energies of the tilt and the source."""
    log_c = n * n * (psi_tilt - psi_source)
    return estimate(_array_run(hits, log_w, None, n, spec, tilt, batches), "exact_psi", log_c=log_c)


def conditioned_estimate(run: ChainRun, mode: str = "auto", **kw) -> EstimateReport:
    """Estimate ``nu = P(W | A)`` from a chain restricted to ``A``.

    As an estimate of the unconditional probability it is biased by the
    event mass outside ``A``; callers choose ``A`` so that this is negligible.
    """
    if run.constraint is None:
        raise ValueError("conditioned_estimate needs a run restricted to a constraint set")
    return estimate(run, mode, **kw)


def edge_histogram(run: ChainRun) -> np.ndarray:
    """Counts of post-burn-in observations in the event, indexed by edge count."""
    if run.hist.sum() == 0:
        raise ValueError("no observation fell in the event")
    return run.hist.copy()


def write_edge_histogram(path, hist: np.ndarray, header: dict | None = None) -> None:
    with open(path, "w") as fh:
        for k, v in (header or {}).items():
            fh.write(f"# {k}={v}\n")
        fh.write("edge_count,frequency\n")
        for e, c in enumerate(hist.tolist()):
            if c:
                fh.write(f"{e},{c}\n")
