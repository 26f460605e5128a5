"""Replication harness: variance tables with confidence intervals.

For each chain length ``n`` the harness runs ``reps`` independent chains and
reports ``n * Var(estimator)`` (the scaling under which the ``n = 1`` row is
``Var_pi(f)`` for a stationary start and large ``n`` approaches the
asymptotic variance). Intervals use the asymptotic normality of the sample
variance; differences against the plain estimator are built from paired
per-replication terms so that correlated estimators give tight intervals.

Replications are generated in blocks of ``BLOCK`` chains; block ``b`` of
row ``n`` draws from the stream keyed ``(seed, n, b)``. Output therefore
does not depend on the number of workers or on scheduling.
"""

from __future__ import annotations

import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from statistics import NormalDist
from typing import Optional

import numpy as np

from . import exact
from . import rng as _rng
from .chain import STATIONARY, alternate_table, sampling_tables, simulate
from .estimators import check_alternate_kernel, estimates_from_sums, fold_inputs
from .model import ExplicitRho, SingleProposalModel, StateSpace, ensure_valid

BLOCK = 256
DEFAULT_MAX_STEPS = 2 * 10**9
PAPER_N_LIST = (1, 2, 5, 10, 100, 1000)

ESTIMATORS = {
    "plain": ("i_n", "I_n(f)"),
    "cv": ("i_n_cv", "I_n(f,psi)"),
    "adaptive": ("i_n_adaptive", "I_n(f,b_hat f)"),
    "ppsi": ("i_n_ppsi", "I_n(f-psi+Ppsi)"),
    "jprime": ("i_n_jprime", "I_n(f)+J'_n(psi)"),
}


class BudgetExceededError(RuntimeError):
    pass


@dataclass
class BenchConfig:
    n_list: tuple = PAPER_N_LIST
    reps: int = 10_000
    level: float = 0.95
    seed: int = 0
    estimators: tuple = ("plain", "cv")
    init: object = STATIONARY
    kappa_prime: object = None
    workers: int = 1
    max_steps: Optional[int] = None

    def __post_init__(self):
        if self.reps < 2:
            raise ValueError(f"reps must be >= 2, got {self.reps}")
        if not 0.0 < self.level < 1.0:
            raise ValueError(f"level must lie in (0, 1), got {self.level}")
        unknown = [e for e in self.estimators if e not in ESTIMATORS]
        if unknown:
            raise ValueError(f"unknown estimators {unknown}; choose from {sorted(ESTIMATORS)}")
        if "plain" not in self.estimators:
            self.estimators = ("plain",) + tuple(self.estimators)
        if "jprime" in self.estimators and self.kappa_prime is None:
            raise ValueError("the jprime estimator needs an alternate kernel (kappa_prime)")
        if any(int(n) < 1 for n in self.n_list):
            raise ValueError("every n must be >= 1")

    def step_budget(self) -> int:
        if self.max_steps is not None:
            return int(self.max_steps)
        env = os.environ.get("WRMC_MAX_STEPS")
        return int(env) if env else DEFAULT_MAX_STEPS


@dataclass
class Interval:
    value: float
    lo: float
    hi: float

    def contains(self, x) -> bool:
        return self.lo <= x <= self.hi


@dataclass
class BenchRow:
    n: int
    variances: dict
    differences: dict


@dataclass
class BenchTable:
    rows: list
    estimators: tuple
    reps: int
    level: float
    seed: int
    exact: dict = field(default_factory=dict)

    def row(self, n) -> BenchRow:
        for r in self.rows:
            if r.n == n:
                return r
        raise KeyError(n)

    def format_text(self) -> str:
        names = list(self.estimators)
        extra = [e for e in names if e != "plain"]
        header = ["n"] + [f"var {ESTIMATORS[e][1]}" for e in names] + [f"var I_n(f) - var {ESTIMATORS[e][1]}" for e in extra]
        body = []
        for r in self.rows:
            cells = [str(r.n)]
            cells += [f"[{r.variances[e].lo:.6g}, {r.variances[e].hi:.6g}]" for e in names]
            cells += [f"[{r.differences[e].lo:.6g}, {r.differences[e].hi:.6g}]" for e in extra]
            body.append(cells)
        widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]
        lines = [" | ".join(c.ljust(w) for c, w in zip(header, widths))]
        lines.append("-+-".join("-" * w for w in widths))
        lines += [" | ".join(c.ljust(w) for c, w in zip(row, widths)) for row in body]
        lines.append(f"reps={self.reps} level={self.level:g} seed={self.seed}; variances are n * Var(estimator)")
        if self.exact:
            lines.append("asymptotic: " + "  ".join(f"{ESTIMATORS[e][1]}={v:.6g}" for e, v in self.exact.items()))
        return "\n".join(lines)

    def format_csv(self) -> str:
        buf = io.StringIO()
        buf.write("n,est,var_lo,var_hi,diff_lo,diff_hi,reps,level,seed\n")
        for r in self.rows:
            for e in self.estimators:
                v = r.variances[e]
                d = r.differences.get(e)
                diff = (f"{d.lo:.15g}", f"{d.hi:.15g}") if d is not None else ("", "")
                buf.write(f"{r.n},{e},{v.lo:.15g},{v.hi:.15g},{diff[0]},{diff[1]},{self.reps},{self.level:.15g},{self.seed}\n")
        return buf.getvalue()


def _z(level):
    return NormalDist().inv_cdf(0.5 + level / 2.0)


def variance_interval(samples, n, level=0.95) -> Interval:
    """``n`` times the unbiased sample variance, with a normal-theory interval.

    The standard error of the sample variance is ``sqrt((m4 - s^2^2) / N)``
    with ``m4`` the fourth central sample moment.
    """
    y = np.asarray(samples, dtype=float)
    N = len(y)
    d = y - y.mean()
    s2 = float(d @ d) / (N - 1)
    m4 = float(np.mean(d**4))
    half = _z(level) * n * np.sqrt(max(m4 - s2 * s2, 0.0) / N)
    v = n * s2
    return Interval(v, v - half, v + half)


def difference_interval(a, b, n, level=0.95) -> Interval:
    """Interval for ``n Var(a) - n Var(b)`` from paired replications."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    N = len(a)
    da = a - a.mean()
    db = b - b.mean()
    terms = n * (da * da - db * db) * (N / (N - 1))
    value = n * (float(da @ da) - float(db @ db)) / (N - 1)
    half = _z(level) * float(np.std(terms, ddof=1)) / np.sqrt(N)
    return Interval(value, value - half, value + half)


def replicate(model, f, psi, n, reps, seed, init=STATIONARY, kappa_prime=None, workers=1, tables=None) -> dict:
    """Per-replication estimator values for ``reps`` independent chains of length ``n``."""
    G, H = fold_inputs(model, f, psi)
    alt = None
    if kappa_prime is not None:
        check_alternate_kernel(model, kappa_prime, H[0])
        alt = alternate_table(model, kappa_prime)
    tables = tables if tables is not None else sampling_tables(model)
    n_blocks = -(-reps // BLOCK)

    def run_block(b):
        gen = _rng.stream(seed, n, b)
        sums, _ = simulate(model, n, gen, rows=BLOCK, init=init, G=G, H=H, alt=alt, tables=tables)
        return sums

    if workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(run_block, range(n_blocks)))
    else:
        blocks = [run_block(b) for b in range(n_blocks)]
    sums = np.vstack(blocks)[:reps]
    return estimates_from_sums(sums, n, alt is not None)


def asymptotic_variances(model, f, psi, estimators, kappa_prime=None) -> dict:
    pi, p = model.pi, model.p
    f = np.asarray(f, dtype=float)
    psi = np.asarray(psi, dtype=float)
    out = {}
    for e in estimators:
        if e == "plain":
            out[e] = exact.sigma2(pi, p, f)
        elif e == "cv":
            out[e] = exact.sigma2_cv(model, f, psi)
        elif e == "adaptive":
            b = exact.b_star(pi, p, f)
            out[e] = exact.sigma2(pi, p, f) if b is None else exact.sigma2_cv(model, f, b * f)
        elif e == "ppsi":
            out[e] = exact.sigma2(pi, p, f - psi + p @ psi)
        elif e == "jprime":
            out[e] = exact.sigma2_j_prime(model, f, psi, kappa_prime)
    return out


def run_bench(model, f, psi=None, cfg: Optional[BenchConfig] = None) -> BenchTable:
    """Variance table over ``cfg.n_list``; ``psi`` defaults to ``f`` (waste recycling)."""
    cfg = cfg or BenchConfig()
    psi = f if psi is None else psi
    f = np.asarray(f, dtype=float)
    psi = np.asarray(psi, dtype=float)
    budget = cfg.step_budget()
    total = sum(int(n) * (-(-cfg.reps // BLOCK) * BLOCK) for n in cfg.n_list)
    if total > budget:
        raise BudgetExceededError(f"bench needs {total} steps, over the budget of {budget} (WRMC_MAX_STEPS)")
    tables = sampling_tables(model)
    rows = []
    for n in cfg.n_list:
        n = int(n)
        values = replicate(model, f, psi, n, cfg.reps, cfg.seed, cfg.init, cfg.kappa_prime, cfg.workers, tables)
        variances = {e: variance_interval(values[ESTIMATORS[e][0]], n, cfg.level) for e in cfg.estimators}
        plain = values["i_n"]
        differences = {
            e: difference_interval(plain, values[ESTIMATORS[e][0]], n, cfg.level)
            for e in cfg.estimators if e != "plain"
        }
        rows.append(BenchRow(n, variances, differences))
    try:
        annotation = asymptotic_variances(model, f, psi, cfg.estimators, cfg.kappa_prime)
    except (ArithmeticError, ValueError):
        annotation = {}
    return BenchTable(rows, tuple(cfg.estimators), cfg.reps, cfg.level, cfg.seed, annotation)


# --- the counter-example ------------------------------------------------------

_CE_PI = ("6/10", "3/10", "1/10")
_CE_Q = (
    ("13/120", "105/120", "2/120"),
    ("84/120", "0", "36/120"),
    ("12/120", "108/120", "0"),
)
_CE_P = (
    ("38/60", "21/60", "1/60"),
    ("42/60", "0", "18/60"),
    ("6/60", "54/60", "0"),
)
_CE_RHO = "4/10"


def _fractions(rows):
    return [[Fraction(v) for v in row] for row in rows]


def counterexample_model() -> SingleProposalModel:
    """Three-state Metropolis chain where waste recycling increases the variance.

    ``rho(a, b) = 4/10`` and every other admissible move is always accepted.
    """
    rho = np.ones((3, 3))
    rho[0, 1] = float(Fraction(_CE_RHO))
    q = np.array([[float(v) for v in row] for row in _fractions(_CE_Q)])
    pi = np.array([float(Fraction(v)) for v in _CE_PI])
    return ensure_valid(SingleProposalModel(StateSpace(("a", "b", "c")), pi, q, ExplicitRho(rho)))


def counterexample_p() -> np.ndarray:
    """The chain's transition matrix as printed, converted from exact fractions."""
    return np.array([[float(v) for v in row] for row in _fractions(_CE_P)])


def counterexample_f() -> np.ndarray:
    """``f(x) = 1{x = c} - P(x, c)``; its Poisson solution is ``1{x = c}`` up to a constant."""
    p = _fractions(_CE_P)
    return np.array([float((1 if x == 2 else 0) - p[x][2]) for x in range(3)])


def counterexample_gap() -> float:
    """``pi(a) P(a, b) (1 - rho) (P(b, c) - P(a, c))^2``, evaluated in exact arithmetic."""
    p = _fractions(_CE_P)
    pi_a = Fraction(_CE_PI[0])
    rho = Fraction(_CE_RHO)
    return float(pi_a * p[0][1] * (1 - rho) * (p[1][2] - p[0][2]) ** 2)
