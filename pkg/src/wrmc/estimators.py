"""Estimators of ``<pi, f>`` computed from a chain.

``I_n(f)`` averages ``f(X_1), ..., f(X_n)``. The control variate ``J_n(psi)``
averages ``E[psi(X_{k+1}) | X_k, proposal] - psi(X_{k+1})``: for a single
proposal the conditional expectation is ``rho psi(proposal) + (1 - rho)
psi(X_k)``, for a proposal set it is ``<kappa(X_k, A, .), psi>``.
Waste recycling is ``I_n(f) + J_n(f)``.

Every sum is accumulated with compensated summation, either offline over a
:class:`~wrmc.chain.ChainTrace` or online while simulating; the two paths
agree bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from . import rng as _rng
from .chain import STATIONARY, alternate_table, sampling_tables, simulate
from .exact import kappa_residuals, single_branches, branches
from .model import ATOL, ModelError, state_function

B_HAT_TOL = 1e-12


@dataclass
class EstimateReport:
    i_n: float
    j_n: float
    i_n_cv: float
    b_hat: Optional[float]
    i_n_adaptive: float
    i_n_ppsi: float
    j_prime_n: Optional[float]
    n: int

    def to_dict(self) -> dict:
        out = {}
        for fld in fields(self):
            v = getattr(self, fld.name)
            out[fld.name] = v if v is None or isinstance(v, int) else float(f"{v:.15g}")
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def format(self) -> str:
        rows = [(k, "absent" if v is None else (str(v) if isinstance(v, int) else f"{v:.6g}"))
                for k, v in self.to_dict().items()]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def fold_inputs(model, f, psi):
    """State-function rows for the fold: ``G = [f, f^2, f - psi + P psi]``, ``H = [psi, f]``."""
    f = state_function(model, f, "f")
    psi = state_function(model, psi, "psi")
    G = np.vstack([f, f * f, f - psi + model.p @ psi])
    H = np.vstack([psi, f])
    return G, H


def estimates_from_sums(sums, n, has_prime=False) -> dict:
    """Vectorized estimator values from fold sums of shape ``(rows, n_stats)``.

    ``b_hat`` is NaN where its denominator vanishes; the adaptive estimator
    then falls back to ``I_n``.
    """
    sums = np.atleast_2d(sums)
    m = sums / n
    i_n, i_f2, i_ppsi, i_ff, j_psi, j_f = (m[:, i] for i in range(6))
    num = i_f2 - i_n * i_n
    den = i_f2 - i_ff
    ok = np.abs(den) >= B_HAT_TOL
    b_hat = np.full(len(m), np.nan)
    b_hat[ok] = num[ok] / den[ok]
    adaptive = np.where(ok, i_n + np.where(ok, b_hat, 0.0) * j_f, i_n)
    out = {
        "i_n": i_n,
        "j_n": j_psi,
        "i_n_cv": i_n + j_psi,
        "b_hat": b_hat,
        "i_n_adaptive": adaptive,
        "i_n_ppsi": i_ppsi,
        "j_f": j_f,
    }
    if has_prime:
        out["j_prime_n"] = m[:, 6]
        out["i_n_jprime"] = i_n + m[:, 6]
    return out


def _report(values, n) -> EstimateReport:
    def pick(key):
        if key not in values:
            return None
        v = float(values[key][0])
        return None if np.isnan(v) else v

    return EstimateReport(
        i_n=pick("i_n"), j_n=pick("j_n"), i_n_cv=pick("i_n_cv"), b_hat=pick("b_hat"),
        i_n_adaptive=pick("i_n_adaptive"), i_n_ppsi=pick("i_n_ppsi"), j_prime_n=pick("j_prime_n"), n=int(n),
    )


def check_alternate_kernel(model, kappa_prime, psi=None, atol=ATOL):
    """Reject an alternate kernel that breaks reversibility w.r.t. ``pi``.

    With ``psi``, also assert that ``gamma(x) = sum_A Q(x, A) <kappa'(x, A, .),
    psi> - psi(x)`` has ``<pi, gamma> = 0``, which makes ``I_n(f) + J'_n(psi)``
    consistent.
    """
    if model.kind == "single":
        alt = alternate_table(model, kappa_prime)
        off = (model.q > 0) & ~np.eye(model.size, dtype=bool)
        flow = model.pi[:, None] * model.q * alt
        rev = float(np.abs(flow - flow.T)[off].max()) if off.any() else 0.0
        if off.any() and (alt[off].min() <= 0 or alt[off].max() > 1 + atol):
            raise ModelError("alternate acceptance probabilities must lie in (0, 1]")
        br = single_branches(model.pi, model.q, kappa_prime)
    else:
        res = kappa_residuals(model.pi, model.kernel, kappa_prime)
        rev = res["reversibility"]
        if res["normalization"] > atol or res["min"] < -atol:
            raise ModelError("alternate selection kernel is not a probability on each proposal set")
        br = branches(model, kappa_prime)
    if rev > atol:
        raise ModelError(f"alternate kernel is not reversible w.r.t. pi (residual {rev:.3g})")
    if psi is not None:
        psi = np.asarray(psi, dtype=float)
        gamma = br.per_state(br.expect(psi), model.size) - psi
        mean = float(model.pi @ gamma)
        if abs(mean) > 1e-10 * max(1.0, np.abs(psi).max()):
            raise ModelError(f"<pi, gamma> = {mean:.3g} != 0 for the alternate kernel")


def fold_trace(trace, f, psi, kappa_prime=None) -> np.ndarray:
    """Compensated fold sums over a stored trace (shape ``(1, n_stats)``)."""
    from . import _kernels as K

    model = trace.model
    G, H = fold_inputs(model, f, psi)
    has_prime = kappa_prime is not None
    n_stats = G.shape[0] + 1 + H.shape[0] * (2 if has_prime else 1)
    S = np.zeros(n_stats)
    C = np.zeros(n_stats)
    if model.kind == "single":
        rhop = alternate_table(model, kappa_prime) if has_prime else np.ascontiguousarray(model.rho)
        K.fold_trace_single(trace.states, trace.proposals, trace.acceptance_prob, rhop, has_prime, G, H, S, C)
    else:
        tables = sampling_tables(model)
        kapp = alternate_table(model, kappa_prime) if has_prime else tables.kap
        K.fold_trace_multi(trace.states, trace.set_index, np.ascontiguousarray(trace.weights), tables.sets,
                           tables.setlen, kapp, has_prime, G, H, S, C)
    return (S + C)[None, :]


def estimate(trace, f, psi=None, kappa_prime=None) -> EstimateReport:
    """All estimators from one trace; ``psi`` defaults to ``f`` (waste recycling)."""
    psi = f if psi is None else psi
    if kappa_prime is not None:
        check_alternate_kernel(trace.model, kappa_prime, state_function(trace.model, psi, "psi"))
    sums = fold_trace(trace, f, psi, kappa_prime)
    return _report(estimates_from_sums(sums, trace.n, kappa_prime is not None), trace.n)


def simulate_estimate(model, n, seed, f, psi=None, init=STATIONARY, kappa_prime=None, key=()) -> EstimateReport:
    """Streaming counterpart of ``estimate(run_chain(model, n, seed, init, key), ...)``."""
    psi = f if psi is None else psi
    G, H = fold_inputs(model, f, psi)
    alt = None
    if kappa_prime is not None:
        check_alternate_kernel(model, kappa_prime, H[0])
        alt = alternate_table(model, kappa_prime)
    sums, _ = simulate(model, n, _rng.stream(seed, *key), init=init, G=G, H=H, alt=alt)
    return _report(estimates_from_sums(sums, n, alt is not None), n)


def b_hat(trace, f) -> Optional[float]:
    """Plug-in estimate of the optimal coefficient from the chain; None if degenerate."""
    if trace.n < 2:
        raise ValueError("b_hat needs n >= 2")
    return estimate(trace, f, f).b_hat


def estimate_ppsi(trace, f, psi, p=None) -> float:
    """``I_n(f - psi + P psi)``; exact when ``psi`` solves the Poisson equation."""
    model = trace.model
    f = state_function(model, f, "f")
    psi = state_function(model, psi, "psi")
    p = model.p if p is None else np.asarray(p)
    g = f - psi + p @ psi
    return float(running_mean(trace, g)[-1]) if p is not model.p else estimate(trace, f, psi).i_n_ppsi


def j_prime(trace, psi, kappa_prime) -> float:
    """``J'_n(psi)``: the control variate with the chain's selection replaced by ``kappa_prime``."""
    report = estimate(trace, np.zeros(trace.model.size), psi, kappa_prime)
    return report.j_prime_n


def running_mean(trace, g) -> np.ndarray:
    """``I_k(g)`` for ``k = 1..n``."""
    g = np.asarray(g, dtype=float)
    vals = g[trace.states[1:]]
    return np.cumsum(vals) / np.arange(1, trace.n + 1)
