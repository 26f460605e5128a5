"""Exact linear algebra for finite-state Metropolis-Hastings chains.

Everything here is deterministic: transition matrices, the Poisson equation
``F - PF = f - <pi, f>`` and the closed-form asymptotic variances of the
plain, waste-recycling and control-variate estimators. One-step
expectations under the stationary chain are finite sums weighted by
``pi(x) P(x, y)`` (or ``pi(x) Q(x, A) kappa(x, A, y)``), never simulated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .model import (
    ATOL,
    AlphaBarker,
    BoltzmannKappa,
    ExplicitKappa,
    MetropolisKappa,
    ModelError,
    acceptance_matrix,
)

POISSON_TOL = 1e-10
CONSTANT_TOL = 1e-12


class IrreducibilityError(ModelError):
    def __init__(self, message, unreachable=()):
        super().__init__(message)
        self.unreachable = list(unreachable)


class PoissonError(ArithmeticError):
    pass


class ConstantSumError(ModelError):
    """``rho(x, y) + rho(y, x)`` is not constant over admissible pairs."""


def reversibility_residual(pi, p) -> float:
    flow = np.asarray(pi)[:, None] * np.asarray(p)
    return float(np.abs(flow - flow.T).max())


def _check_transition(pi, p):
    row = np.abs(p.sum(axis=1) - 1.0).max()
    if row > ATOL or p.min() < -ATOL:
        raise ModelError(f"transition matrix is not stochastic (row residual {row:.3g}, min {p.min():.3g})")
    rev = reversibility_residual(pi, p)
    if rev > ATOL:
        raise ModelError(f"transition matrix is not reversible (residual {rev:.3g})")


def _check_irreducible(p):
    from scipy.sparse.csgraph import connected_components, shortest_path

    adj = (p > 0).astype(float)
    n_comp, _ = connected_components(adj, directed=True, connection="strong")
    if n_comp > 1:
        dist = shortest_path(adj, directed=True, unweighted=True)
        pairs = [(int(i), int(j)) for i, j in zip(*np.where(np.isinf(dist)))]
        raise IrreducibilityError(f"transition matrix is not irreducible; unreachable pairs {pairs[:10]}", pairs)


def build_p_single(pi, q, rule, check=True) -> np.ndarray:
    """Transition matrix of the single-proposal chain.

    Off the diagonal ``P(x, y) = q(x, y) rho(x, y)``; the diagonal holds the
    self-proposal and every rejected proposal, ``q(x, x) + sum q (1 - rho)``,
    which completes each row to one.
    """
    pi = np.asarray(pi, dtype=float)
    q = np.asarray(q, dtype=float)
    rho = acceptance_matrix(pi, q, rule)
    if rho.max() > 1 + ATOL:
        raise ModelError(f"acceptance probability {rho.max():.3g} exceeds 1")
    p = q * rho
    rejected = q * (1.0 - rho)
    np.fill_diagonal(p, 0.0)
    np.fill_diagonal(rejected, 0.0)
    p[np.diag_indices_from(p)] = np.diag(q) + rejected.sum(axis=1)
    if check:
        _check_transition(pi, p)
    return p


def kappa_of(pi, kernel, spec, x, subset) -> np.ndarray:
    """Selection probabilities ``kappa(x, A, .)`` over the sorted subset ``A``."""
    subset = tuple(sorted(int(i) for i in subset))
    x = int(x)
    if x not in subset:
        raise ModelError(f"state {x} is not in proposal set {list(subset)}")
    if isinstance(spec, ExplicitKappa):
        try:
            return np.array(spec.table[(x, subset)], dtype=float)
        except KeyError:
            raise ModelError(f"no explicit selection probabilities for ({x}, {list(subset)})") from None
    w = np.array([pi[z] * kernel.weight(z, subset) for z in subset])
    ix = subset.index(x)
    if isinstance(spec, BoltzmannKappa):
        total = w.sum()
        if total <= 0:
            raise ModelError(f"Boltzmann selection undefined on {list(subset)}: zero total weight")
        return w / total
    if isinstance(spec, MetropolisKappa):
        total = w.sum()
        kap = np.zeros(len(subset))
        for j in range(len(subset)):
            if j == ix:
                continue
            denom = max(w[j], w[ix]) + (total - w[j] - w[ix])
            if denom <= 0:
                raise ModelError(f"Metropolis selection undefined on {list(subset)}")
            kap[j] = w[j] / denom
        kap[ix] = 1.0 - (kap.sum() - kap[ix])
        return kap
    raise ModelError(f"unknown selection kernel {spec!r}")


class Branches(NamedTuple):
    """One row per ``(x, A)`` with ``Q(x, A) > 0``; member arrays are padded.

    ``members[b, :length[b]]`` is the sorted proposal set and ``kappa[b]``
    the selection probabilities on it (zero on padding).
    """

    origin: np.ndarray
    weight: np.ndarray
    members: np.ndarray
    kappa: np.ndarray
    length: np.ndarray

    def expect(self, g) -> np.ndarray:
        """``<kappa_{x,A}, g>`` per branch."""
        return (self.kappa * np.asarray(g)[self.members]).sum(axis=1)

    def variance(self, g) -> np.ndarray:
        g = np.asarray(g)
        vals = g[self.members]
        mean = (self.kappa * vals).sum(axis=1)
        return (self.kappa * (vals - mean[:, None]) ** 2).sum(axis=1)

    def per_state(self, values, size) -> np.ndarray:
        """Sum ``Q(x, A) * values`` over the branches of each state."""
        return np.bincount(self.origin, weights=self.weight * values, minlength=size)


def _pack(rows, size):
    width = max(len(m) for _, _, m, _ in rows)
    count = len(rows)
    origin = np.empty(count, dtype=np.int64)
    weight = np.empty(count)
    members = np.zeros((count, width), dtype=np.int64)
    kappa = np.zeros((count, width))
    length = np.empty(count, dtype=np.int64)
    for b, (x, w, m, k) in enumerate(rows):
        origin[b], weight[b], length[b] = x, w, len(m)
        members[b, : len(m)] = m
        members[b, len(m):] = m[0]
        kappa[b, : len(m)] = k
    return Branches(origin, weight, members, kappa, length)


def multi_branches(pi, kernel, spec) -> Branches:
    rows = []
    for x, entries in enumerate(kernel.support):
        for subset, w in entries:
            if w > 0:
                rows.append((x, w, subset, kappa_of(pi, kernel, spec, x, subset)))
    return _pack(rows, len(pi))


def single_branches(pi, q, rule) -> Branches:
    """Pair-set branches of a single-proposal model."""
    q = np.asarray(q, dtype=float)
    rho = acceptance_matrix(pi, q, rule)
    rows = []
    for x in range(len(pi)):
        for y in range(len(pi)):
            if q[x, y] <= 0:
                continue
            if x == y:
                rows.append((x, q[x, x], (x,), (1.0,)))
            elif x < y:
                rows.append((x, q[x, y], (x, y), (1.0 - rho[x, y], rho[x, y])))
            else:
                rows.append((x, q[x, y], (y, x), (rho[x, y], 1.0 - rho[x, y])))
    return _pack(rows, len(pi))


def branches(model, selection=None) -> Branches:
    """Branches of ``model``; ``selection`` swaps in another rule for the same proposals."""
    if model.kind == "single":
        return single_branches(model.pi, model.q, selection if selection is not None else model.rule)
    return multi_branches(model.pi, model.kernel, selection if selection is not None else model.selection)


def kappa_residuals(pi, kernel, spec) -> dict:
    """Normalization and reversibility residuals of a selection kernel.

    Reversibility is checked for every ``(x, A, y)`` with ``x, y`` in ``A``
    and ``Q(x, A) > 0``; a ``y`` that never proposes ``A`` must get
    probability zero.
    """
    norm = 0.0
    rev = 0.0
    low = 0.0
    cache = {}
    for x, entries in enumerate(kernel.support):
        for subset, w in entries:
            if w > 0:
                cache[(x, subset)] = kappa_of(pi, kernel, spec, x, subset)
    for (x, subset), kap in cache.items():
        norm = max(norm, abs(kap.sum() - 1.0))
        low = min(low, kap.min())
        lhs = pi[x] * kernel.weight(x, subset) * kap
        for j, y in enumerate(subset):
            other = cache.get((y, subset))
            back = 0.0 if other is None else pi[y] * kernel.weight(y, subset) * other[subset.index(x)]
            rev = max(rev, abs(lhs[j] - back))
    return {"normalization": float(norm), "reversibility": float(rev), "min": float(low)}


def build_p_multi(pi, kernel, spec, check=True) -> np.ndarray:
    """``P(x, y) = sum over A containing x, y of Q(x, A) kappa(x, A, y)``.

    With ``check`` the result must be stochastic, reversible and irreducible;
    irreducibility of ``P`` is exactly the path criterion over proposal sets.
    """
    pi = np.asarray(pi, dtype=float)
    size = len(pi)
    p = np.zeros((size, size))
    for x, entries in enumerate(kernel.support):
        for subset, w in entries:
            if w > 0:
                p[x, list(subset)] += w * kappa_of(pi, kernel, spec, x, subset)
    if check:
        _check_transition(pi, p)
        _check_irreducible(p)
    return p


def transition_matrix(model) -> np.ndarray:
    return np.array(model.p)


# --- Poisson equation and variances ------------------------------------------


@dataclass
class PoissonSolution:
    f_centered: np.ndarray
    F: np.ndarray
    PF: np.ndarray
    residual: float


def _centered(pi, f) -> np.ndarray:
    """``f - <pi, f>``, exactly zero when ``f`` is constant to ``CONSTANT_TOL``."""
    f0 = np.asarray(f, dtype=float) - np.asarray(pi, dtype=float) @ f
    return np.zeros_like(f0) if np.abs(f0).max() < CONSTANT_TOL else f0


def solve_poisson(p, pi, f) -> PoissonSolution:
    """Solve ``F - PF = f - <pi, f>`` normalized by ``<pi, F> = 0``.

    The row of ``I - P`` at the largest ``pi`` entry is replaced by the
    normalization; the dropped equation follows from ``pi (I - P) = 0``.
    """
    p = np.asarray(p, dtype=float)
    pi = np.asarray(pi, dtype=float)
    f0 = _centered(pi, f)
    size = len(pi)
    a = np.eye(size) - p
    r = int(np.argmax(pi))
    a[r] = pi
    b = f0.copy()
    b[r] = 0.0
    try:
        F = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise PoissonError(f"Poisson system is singular: {exc}") from exc
    pf = p @ F
    residual = float(np.abs(F - pf - f0).max())
    if not np.isfinite(residual) or residual > POISSON_TOL * max(1.0, np.abs(f0).max()):
        raise PoissonError(f"Poisson residual {residual:.3g} exceeds tolerance")
    return PoissonSolution(f0, F, pf, residual)


def var_pi(pi, f) -> float:
    return float(np.asarray(pi) @ _centered(pi, f) ** 2)


def is_constant(pi, f) -> bool:
    return not _centered(pi, f).any()


def sigma2(pi, p, f) -> float:
    """Asymptotic variance of the empirical mean: ``<pi, F^2> - <pi, (PF)^2>``."""
    sol = solve_poisson(p, pi, f)
    return float(pi @ sol.F**2 - pi @ sol.PF**2)


def _one_step(pi, p, values) -> float:
    """``E_pi[values(X0, X1)]`` as a double sum over state pairs."""
    return float((np.asarray(pi)[:, None] * p * values).sum())


def sigma2_cv_single(pi, q, rule, f, psi) -> float:
    """Asymptotic variance of ``I_n(f) + J_n(psi)`` for a single-proposal chain.

    ``sigma2(f) - E[(1-rho)(dF)^2] + E[(1-rho)(d(psi - F))^2]`` where ``d``
    is the increment over one stationary transition.
    """
    pi = np.asarray(pi, dtype=float)
    p = build_p_single(pi, q, rule)
    rho = acceptance_matrix(pi, q, rule)
    sol = solve_poisson(p, pi, f)
    F = sol.F
    base = float(pi @ F**2 - pi @ sol.PF**2)
    g = np.asarray(psi, dtype=float) - F
    reject = 1.0 - rho
    dF = F[None, :] - F[:, None]
    dg = g[None, :] - g[:, None]
    return base - _one_step(pi, p, reject * dF**2) + _one_step(pi, p, reject * dg**2)


def _sigma2_cv_branches(pi, p, br, f, psi) -> float:
    sol = solve_poisson(p, pi, f)
    F = sol.F
    base = float(pi @ F**2 - pi @ sol.PF**2)
    g = np.asarray(psi, dtype=float) - F
    terms = br.variance(g) - br.variance(F)
    return base + float(pi @ br.per_state(terms, len(pi)))


def sigma2_cv_multi(pi, kernel, spec, f, psi) -> float:
    """``sigma2(f) + sum pi(x) Q(x, A) [Var_kappa(psi - F) - Var_kappa(F)]``."""
    p = build_p_multi(pi, kernel, spec)
    return _sigma2_cv_branches(pi, p, multi_branches(pi, kernel, spec), f, psi)


def sigma2_cv(model, f, psi) -> float:
    if model.kind == "single":
        return sigma2_cv_single(model.pi, model.q, model.rule, f, psi)
    return sigma2_cv_multi(model.pi, model.kernel, model.selection, f, psi)


def sigma2_opt(model, f) -> float:
    """Minimal control-variate variance, reached at ``psi = F``."""
    pi = model.pi
    br = branches(model)
    sol = solve_poisson(model.p, pi, f)
    kf = br.expect(sol.F)
    second = br.per_state(kf**2, len(pi))
    first = br.per_state(kf, len(pi))
    return float(pi @ (second - first**2))


def b_star(pi, p, f) -> Optional[float]:
    """Optimal coefficient ``b`` for the control variate ``J_n(b f)``; None if f is constant."""
    pi = np.asarray(pi, dtype=float)
    f = np.asarray(f, dtype=float)
    if is_constant(pi, f):
        return None
    num = float(pi @ f**2 - (pi @ f) ** 2)
    den = float(pi @ (f**2 - f * (p @ f)))
    return num / den


def delta_f(pi, p, f) -> float:
    """``1/2 E_pi[(f0(X0) + f0(X1))^2]`` with ``f0 = f - <pi, f>``."""
    f0 = _centered(pi, f)
    return 0.5 * _one_step(pi, p, (f0[:, None] + f0[None, :]) ** 2)


def delta_f_invariant(pi, p, f) -> float:
    """Second expression of the same quantity: ``<pi, f0 (f0 + P f0)>``."""
    f0 = _centered(pi, f)
    return float(np.asarray(pi) @ (f0 * (f0 + p @ f0)))


def sigma2_tilde(model, f, psi) -> float:
    """Asymptotic variance when the control variate conditions on ``X_k`` only.

    Adds ``sum_x pi(x) [Var_Q(x,.)(kappa psi - kappa F) - Var_Q(x,.)(kappa F)]``
    to the control-variate variance.
    """
    pi = model.pi
    size = len(pi)
    br = branches(model)
    sol = solve_poisson(model.p, pi, f)
    kf = br.expect(sol.F)
    kd = br.expect(psi) - kf

    def var_q(values):
        return br.per_state(values**2, size) - br.per_state(values, size) ** 2

    base = _sigma2_cv_branches(pi, model.p, br, f, psi)
    return base + float(pi @ (var_q(kd) - var_q(kf)))


def sigma2_transition(model, phi) -> float:
    """Asymptotic variance of ``(1/n) sum phi(X_k, A_{k+1}, X_{k+1})``.

    ``phi`` maps a :class:`Branches` to an array shaped like its members.
    Uses the martingale increment ``phi - m(x) + G(y) - PG(x)`` where ``m``
    is the conditional mean of ``phi`` and ``G`` solves the Poisson equation
    for ``m``. Independent of the closed forms above.
    """
    pi = model.pi
    size = len(pi)
    p = model.p
    br = branches(model)
    values = np.asarray(phi(br), dtype=float)
    m = br.per_state((br.kappa * values).sum(axis=1), size)
    sol = solve_poisson(p, pi, m)
    G = sol.F
    inc = values - m[br.origin][:, None] + G[br.members] - sol.PF[br.origin][:, None]
    second = br.per_state((br.kappa * inc**2).sum(axis=1), size)
    return float(pi @ second)


def sigma2_j_prime(model, f, psi, selection) -> float:
    """Asymptotic variance of ``I_n(f) + J'_n(psi)`` where ``J'`` uses ``selection``."""
    alt = branches(model, selection)
    f = np.asarray(f, dtype=float)
    psi = np.asarray(psi, dtype=float)

    def phi(br):
        if not (np.array_equal(br.origin, alt.origin) and np.array_equal(br.members, alt.members)):
            raise ModelError("alternate selection kernel has a different branch layout")
        return f[br.members] + alt.expect(psi)[:, None] - psi[br.members]

    return sigma2_transition(model, phi)


def constant_sum_alpha(pi, q, rule) -> float:
    """The constant ``rho(x, y) + rho(y, x)``; raises if it is not constant."""
    if isinstance(rule, AlphaBarker):
        return float(rule.alpha)
    q = np.asarray(q, dtype=float)
    rho = acceptance_matrix(pi, q, rule)
    support = (q > 0) & ~np.eye(len(pi), dtype=bool)
    sums = (rho + rho.T)[support]
    if sums.size == 0:
        raise ConstantSumError("no admissible pairs")
    alpha = float(sums[0])
    spread = float(np.abs(sums - alpha).max())
    if spread > CONSTANT_TOL:
        raise ConstantSumError(f"rho(x,y) + rho(y,x) varies by {spread:.3g} over admissible pairs")
    return alpha


def hph_form(pi, q, rule, h) -> float:
    """``<pi, h P h + (alpha - 1) h^2>`` under a constant-sum acceptance rule."""
    alpha = constant_sum_alpha(pi, q, rule)
    pi = np.asarray(pi, dtype=float)
    h = np.asarray(h, dtype=float)
    p = build_p_single(pi, q, rule)
    return float(pi @ (h * (p @ h) + (alpha - 1.0) * h**2))


# --- report -------------------------------------------------------------------


def _num(x):
    return None if x is None else float(f"{x:.15g}")


@dataclass
class VarianceReport:
    sigma2: float
    sigma2_opt: float
    delta_f: float
    var_pi_f: float
    b_star: Optional[float] = None
    sigma2_cv: Optional[float] = None
    sigma2_tilde: Optional[float] = None

    FIELDS = ("sigma2", "sigma2_cv", "sigma2_opt", "delta_f", "b_star", "var_pi_f", "sigma2_tilde")

    def to_dict(self) -> dict:
        return {k: _num(getattr(self, k)) for k in self.FIELDS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def variance_report(model, f, psi=None, tilde=False) -> VarianceReport:
    pi, p = model.pi, model.p
    f = np.asarray(f, dtype=float)
    report = VarianceReport(
        sigma2=sigma2(pi, p, f),
        sigma2_opt=sigma2_opt(model, f),
        delta_f=delta_f(pi, p, f),
        var_pi_f=var_pi(pi, f),
        b_star=b_star(pi, p, f),
    )
    if psi is not None:
        report.sigma2_cv = sigma2_cv(model, f, psi)
        if tilde:
            report.sigma2_tilde = sigma2_tilde(model, f, psi)
    return report
