"""Simulation of single- and multi-proposal Metropolis-Hastings chains.

Each step consumes two uniforms: the first picks the proposal (or proposal
set) by inverse CDF over the stored ordering, the second accepts the
proposal (single) or selects the next state inside the set (multi). A chain
first consumes one uniform for its initial state, whether or not it is used.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import rng as _rng
from .exact import acceptance_matrix, kappa_of
from .model import ModelError, SelectionKernelSpec

STATIONARY = "stationary"


def guarded_cumsum(w) -> np.ndarray:
    """Cumulative weights whose tail from the last positive entry is +inf.

    Inverse-CDF lookups then never run off the end through rounding and never
    land on a zero-weight entry.
    """
    w = np.asarray(w, dtype=float)
    cum = np.cumsum(w)
    pos = np.nonzero(w > 0)[0]
    if pos.size == 0:
        raise ModelError("cannot sample from an all-zero distribution")
    cum[pos[-1]:] = np.inf
    return cum


class SingleTables(NamedTuple):
    cumpi: np.ndarray
    cumq: np.ndarray
    rho: np.ndarray


class MultiTables(NamedTuple):
    cumpi: np.ndarray
    cumA: np.ndarray
    sets: np.ndarray
    setlen: np.ndarray
    kap: np.ndarray
    cumk: np.ndarray


def _multi_kappa(model, selection, rows, width):
    size = model.size
    kap = np.zeros((size, rows, width))
    for x, entries in enumerate(model.kernel.support):
        for k, (subset, w) in enumerate(entries):
            if w > 0:
                kap[x, k, : len(subset)] = kappa_of(model.pi, model.kernel, selection, x, subset)
            else:
                kap[x, k, subset.index(x)] = 1.0
    return kap


def sampling_tables(model):
    """Inverse-CDF tables for ``model`` (states and subsets in stored order)."""
    cumpi = guarded_cumsum(model.pi)
    if model.kind == "single":
        cumq = np.vstack([guarded_cumsum(row) for row in model.q])
        return SingleTables(cumpi, cumq, np.ascontiguousarray(model.rho))
    size = model.size
    support = model.kernel.support
    rows = max(len(r) for r in support)
    width = max(len(s) for r in support for s, _ in r)
    cumA = np.full((size, rows), np.inf)
    sets = np.zeros((size, rows, width), dtype=np.int64)
    setlen = np.zeros((size, rows), dtype=np.int64)
    for x, entries in enumerate(support):
        cumA[x, : len(entries)] = guarded_cumsum([w for _, w in entries])
        for k, (subset, _) in enumerate(entries):
            sets[x, k, : len(subset)] = subset
            sets[x, k, len(subset):] = subset[0]
            setlen[x, k] = len(subset)
    kap = _multi_kappa(model, model.selection, rows, width)
    cumk = np.full(kap.shape, np.inf)
    for x in range(size):
        for k in range(len(support[x])):
            cumk[x, k] = guarded_cumsum(kap[x, k])
    return MultiTables(cumpi, cumA, sets, setlen, kap, cumk)


def alternate_table(model, kappa_prime) -> np.ndarray:
    """Alternate selection probabilities laid out like the sampling tables.

    For a single-proposal model ``kappa_prime`` is an acceptance rule and the
    result is its acceptance matrix; for a multi-proposal model it is a
    selection kernel and the result is shaped like ``MultiTables.kap``.
    """
    if model.kind == "single":
        if isinstance(kappa_prime, SelectionKernelSpec.__args__):
            raise ModelError("single-proposal models take an acceptance rule as alternate kernel")
        return np.ascontiguousarray(acceptance_matrix(model.pi, model.q, kappa_prime))
    if not isinstance(kappa_prime, SelectionKernelSpec.__args__):
        raise ModelError("multi-proposal models take a selection kernel as alternate kernel")
    support = model.kernel.support
    rows = max(len(r) for r in support)
    width = max(len(s) for r in support for s, _ in r)
    return _multi_kappa(model, kappa_prime, rows, width)


def resolve_init(model, init) -> Optional[int]:
    """``None`` for a stationary start, else the starting state index."""
    if init is None or init == STATIONARY:
        return None
    if isinstance(init, (int, np.integer)):
        if not 0 <= init < model.size:
            raise ModelError(f"initial state index {init} out of range")
        return int(init)
    return model.space.index(init)


# --- traces -------------------------------------------------------------------


@dataclass(frozen=True)
class StepRecord:
    """One transition ``X_k -> X_{k+1}``.

    Single-proposal records carry ``proposal``, ``acceptance_prob`` and
    ``accepted``; multi-proposal records carry ``proposal_set`` and
    ``selection_weights`` (aligned with the set).
    """

    state: int
    next_state: int
    proposal: Optional[int] = None
    acceptance_prob: Optional[float] = None
    accepted: Optional[bool] = None
    proposal_set: Optional[tuple] = None
    selection_weights: Optional[tuple] = None


@dataclass(frozen=True, eq=False)
class ChainTrace:
    model: object
    states: np.ndarray
    proposals: Optional[np.ndarray] = None
    acceptance_prob: Optional[np.ndarray] = None
    accepted: Optional[np.ndarray] = None
    set_index: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None

    @property
    def model_kind(self) -> str:
        return self.model.kind

    @property
    def n(self) -> int:
        return len(self.states) - 1

    @property
    def initial_state(self) -> int:
        return int(self.states[0])

    def __len__(self):
        return self.n

    def proposal_set(self, k: int) -> tuple:
        x = int(self.states[k])
        return self.model.kernel.support[x][int(self.set_index[k])][0]

    def step(self, k: int) -> StepRecord:
        x, y = int(self.states[k]), int(self.states[k + 1])
        if self.model_kind == "single":
            return StepRecord(x, y, proposal=int(self.proposals[k]),
                              acceptance_prob=float(self.acceptance_prob[k]), accepted=bool(self.accepted[k]))
        subset = self.proposal_set(k)
        return StepRecord(x, y, proposal_set=subset, selection_weights=tuple(self.weights[k, : len(subset)].tolist()))

    @property
    def steps(self):
        return (self.step(k) for k in range(self.n))

    def replay(self, atol=1e-15) -> list:
        """Re-derive each step from the model; return indices of inconsistent records."""
        bad = []
        model = self.model
        if self.model_kind == "single":
            rho = model.rho
            for k in range(self.n):
                x, y, prop = self.states[k], self.states[k + 1], self.proposals[k]
                ok = model.q[x, prop] > 0 and abs(rho[x, prop] - self.acceptance_prob[k]) <= atol
                ok &= (y == prop) if self.accepted[k] else (y == x)
                if not ok:
                    bad.append(k)
            return bad
        for k in range(self.n):
            x, y = int(self.states[k]), int(self.states[k + 1])
            subset = self.proposal_set(k)
            kap = kappa_of(model.pi, model.kernel, model.selection, x, subset)
            w = self.weights[k, : len(subset)]
            if y not in subset or np.abs(kap - w).max() > atol or abs(w.sum() - 1.0) > 1e-12:
                bad.append(k)
        return bad

    def dump(self, fh):
        """Tab-separated debug dump: step, state, proposal or set, accepted or selected."""
        labels = self.model.space.labels
        fh.write(f"0\t{labels[self.states[0]]}\t-\t-\n")
        for k in range(self.n):
            rec = self.step(k)
            if self.model_kind == "single":
                fh.write(f"{k + 1}\t{labels[rec.next_state]}\t{labels[rec.proposal]}\t{int(rec.accepted)}\n")
            else:
                subset = ",".join(labels[i] for i in rec.proposal_set)
                fh.write(f"{k + 1}\t{labels[rec.next_state]}\t{{{subset}}}\t{labels[rec.next_state]}\n")


# --- simulation ---------------------------------------------------------------


def _empty_fold(rows):
    return np.zeros((1, 1)), np.zeros((0, 1)), np.zeros((rows, 2)), np.zeros((rows, 2))


def simulate(model, n, generator, rows=1, init=STATIONARY, G=None, H=None, alt=None, record=False, tables=None):
    """Run ``rows`` independent chains of ``n`` steps drawing from ``generator``.

    Returns ``(sums, records)``: compensated fold sums of shape
    ``(rows, n_stats)`` (or None without ``G``) and, with ``record`` and a
    single row, the per-step arrays of the trace.
    """
    from . import _kernels as K

    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if record and rows != 1:
        raise ValueError("recording is only supported for a single chain")
    tables = tables if tables is not None else sampling_tables(model)
    start = resolve_init(model, init)
    u0 = generator.random(rows)
    if start is None:
        x = K.pick_many(tables.cumpi, u0)
    else:
        x = np.full(rows, start, dtype=np.int64)

    fold = G is not None
    if fold:
        G = np.ascontiguousarray(G, dtype=float)
        H = np.ascontiguousarray(H if H is not None else np.zeros((0, model.size)), dtype=float)
        n_stats = G.shape[0] + 1 + H.shape[0] * (2 if alt is not None else 1)
        S = np.zeros((rows, n_stats))
        C = np.zeros((rows, n_stats))
    else:
        G, H, S, C = _empty_fold(rows)
    has_prime = alt is not None

    m = n if record else 0
    states = np.zeros(m + 1, dtype=np.int64)
    states[0] = x[0]
    if model.kind == "single":
        rhop = alt if has_prime else tables.rho
        props = np.zeros(m, dtype=np.int64)
        rhos = np.zeros(m)
        acc = np.zeros(m, dtype=np.bool_)
        for offset, U in _rng.uniform_chunks(generator, rows, n):
            K.advance_single(tables.cumq, tables.rho, rhop, has_prime, x, U, G, H, S, C, fold,
                             states, props, rhos, acc, offset, record)
        records = dict(states=states, proposals=props, acceptance_prob=rhos, accepted=acc)
    else:
        kapp = alt if has_prime else tables.kap
        set_idx = np.zeros(m, dtype=np.int64)
        weights = np.zeros((m, tables.kap.shape[2]))
        for offset, U in _rng.uniform_chunks(generator, rows, n):
            K.advance_multi(tables.cumA, tables.sets, tables.setlen, tables.kap, kapp, tables.cumk, has_prime,
                            x, U, G, H, S, C, fold, states, set_idx, weights, offset, record)
        records = dict(states=states, set_index=set_idx, weights=weights)
    sums = S + C if fold else None
    return sums, (records if record else None)


def run_chain(model, n: int, seed: int = 0, init=STATIONARY, key=()) -> ChainTrace:
    """Simulate one chain of ``n`` steps and keep every step record.

    The trace is a deterministic function of ``(model, n, seed, init, key)``.
    ``init`` is ``"stationary"`` (exact draw from ``pi``) or a state label or
    index.
    """
    _, records = simulate(model, n, _rng.stream(seed, *key), init=init, record=True)
    return ChainTrace(model, **records)
