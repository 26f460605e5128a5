"""Finite-state targets, proposal mechanisms and model files.

A model is a finite state space, a strictly positive target ``pi`` and one
proposal mechanism:

* single proposal: a selection matrix ``q`` plus an acceptance rule;
* multi proposal: a kernel over proposal sets plus a selection rule that
  picks the next state inside the drawn set.

Models are immutable; numpy arrays stored on them are read-only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Mapping, Union

import numpy as np

ATOL = 1e-12


class ModelError(ValueError):
    """Malformed model or model file."""


class ModelValidationError(ModelError):
    """A model violates one of its invariants.

    The failing :class:`ValidationReport` is attached as ``report`` when the
    error comes from :func:`validate_model`.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


def parse_number(value) -> float:
    """Parse a float or a rational string such as ``"21/60"`` exactly."""
    if isinstance(value, bool):
        raise ModelError(f"not a number: {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError) as exc:
            raise ModelError(f"not a number: {value!r}") from exc
    raise ModelError(f"not a number: {value!r}")


@dataclass(frozen=True)
class StateSpace:
    labels: tuple

    def __post_init__(self):
        labels = tuple(str(s) for s in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise ModelValidationError(f"state space needs at least 2 states, got {len(labels)}")
        if len(set(labels)) != len(labels):
            dup = sorted({s for s in labels if labels.count(s) > 1})
            raise ModelValidationError(f"duplicate state labels: {dup}")

    @property
    def size(self) -> int:
        return len(self.labels)

    @cached_property
    def _lookup(self):
        return {s: i for i, s in enumerate(self.labels)}

    def index(self, label) -> int:
        try:
            return self._lookup[str(label)]
        except KeyError:
            raise ModelError(f"unknown state label {label!r}") from None

    def __len__(self):
        return len(self.labels)


# --- acceptance rules (single proposal) --------------------------------------


@dataclass(frozen=True)
class Metropolis:
    """gamma(u) = min(1, u)."""

    name = "metropolis"

    def gamma(self, u):
        return np.minimum(1.0, u)


@dataclass(frozen=True)
class AlphaBarker:
    """gamma(u) = alpha * u / (1 + u); ``alpha = 1`` is the Barker rule."""

    alpha: float = 1.0
    name = "alpha_barker"

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise ModelValidationError(f"alpha must lie in (0, 2), got {self.alpha}")

    def gamma(self, u):
        u = np.asarray(u, dtype=float)
        return self.alpha * u / (1.0 + u)


def Barker() -> AlphaBarker:
    return AlphaBarker(1.0)


@dataclass(frozen=True, eq=False)
class ExplicitRho:
    """Acceptance probabilities given entry by entry.

    Only off-diagonal entries with ``q(x, y) > 0`` are read.
    """

    rho: np.ndarray
    name = "explicit"

    def __post_init__(self):
        object.__setattr__(self, "rho", _frozen(self.rho))


AcceptanceRule = Union[Metropolis, AlphaBarker, ExplicitRho]


def acceptance_matrix(pi, q, rule) -> np.ndarray:
    """Acceptance probabilities ``rho(x, y)`` on the support of ``q``.

    Entries off the support are 0 and the diagonal is 1 (a proposal equal to
    the current state changes nothing).
    """
    pi = np.asarray(pi, dtype=float)
    q = np.asarray(q, dtype=float)
    size = len(pi)
    support = (q > 0) & ~np.eye(size, dtype=bool)
    rho = np.zeros((size, size))
    if isinstance(rule, ExplicitRho):
        rho[support] = np.asarray(rule.rho, dtype=float)[support]
    else:
        flow = pi[:, None] * q
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = flow.T / flow
        rho[support] = rule.gamma(ratio[support])
    np.fill_diagonal(rho, 1.0)
    return rho


# --- multi-proposal kernel and selection rules --------------------------------


@dataclass(frozen=True, eq=False)
class MultiProposalKernel:
    """Distribution over proposal sets, one list of ``(subset, weight)`` per state.

    Subsets are canonicalized to sorted tuples of state indices.
    """

    support: tuple

    def __post_init__(self):
        rows = []
        for entries in self.support:
            row = []
            for subset, weight in entries:
                row.append((tuple(sorted(int(i) for i in subset)), float(weight)))
            rows.append(tuple(row))
        object.__setattr__(self, "support", tuple(rows))

    def __len__(self):
        return len(self.support)

    @cached_property
    def _weights(self):
        return [dict(row) for row in self.support]

    def weight(self, x: int, subset) -> float:
        """Probability that state ``x`` proposes ``subset``."""
        return self._weights[x].get(tuple(sorted(subset)), 0.0)

    def subsets(self):
        """All distinct proposal sets, in order of first appearance."""
        seen = {}
        for row in self.support:
            for subset, _ in row:
                seen.setdefault(subset, None)
        return list(seen)


@dataclass(frozen=True)
class MetropolisKappa:
    name = "metropolis"


@dataclass(frozen=True)
class BoltzmannKappa:
    name = "boltzmann"


@dataclass(frozen=True, eq=False)
class ExplicitKappa:
    """Selection probabilities per ``(x, subset)``, aligned with the sorted subset."""

    table: Mapping
    name = "explicit"

    def __post_init__(self):
        table = {}
        for (x, subset), probs in self.table.items():
            subset = tuple(int(i) for i in subset)
            order = np.argsort(subset)
            table[(int(x), tuple(subset[i] for i in order))] = _frozen(np.asarray(probs, float)[order])
        object.__setattr__(self, "table", table)


SelectionKernelSpec = Union[MetropolisKappa, BoltzmannKappa, ExplicitKappa]


# --- models -------------------------------------------------------------------


def _check_shape(pi, size):
    if pi.shape != (size,):
        raise ModelError(f"pi has shape {pi.shape}, expected ({size},)")


@dataclass(frozen=True, eq=False)
class SingleProposalModel:
    space: StateSpace
    pi: np.ndarray
    q: np.ndarray
    rule: AcceptanceRule = field(default_factory=Metropolis)
    kind = "single"

    def __post_init__(self):
        object.__setattr__(self, "pi", _frozen(self.pi))
        object.__setattr__(self, "q", _frozen(self.q))
        size = self.space.size
        _check_shape(self.pi, size)
        if self.q.shape != (size, size):
            raise ModelError(f"Q has shape {self.q.shape}, expected ({size}, {size})")
        if isinstance(self.rule, ExplicitRho) and self.rule.rho.shape != (size, size):
            raise ModelError(f"rho has shape {self.rule.rho.shape}, expected ({size}, {size})")

    @property
    def size(self):
        return self.space.size

    @cached_property
    def rho(self) -> np.ndarray:
        return _frozen(acceptance_matrix(self.pi, self.q, self.rule))

    @cached_property
    def p(self) -> np.ndarray:
        from .exact import build_p_single

        return _frozen(build_p_single(self.pi, self.q, self.rule))


@dataclass(frozen=True, eq=False)
class MultiProposalModel:
    space: StateSpace
    pi: np.ndarray
    kernel: MultiProposalKernel
    selection: SelectionKernelSpec = field(default_factory=BoltzmannKappa)
    kind = "multi"

    def __post_init__(self):
        object.__setattr__(self, "pi", _frozen(self.pi))
        size = self.space.size
        _check_shape(self.pi, size)
        if len(self.kernel) != size:
            raise ModelError(f"kernel lists {len(self.kernel)} states, expected {size}")
        for x, row in enumerate(self.kernel.support):
            for subset, _ in row:
                bad = [i for i in subset if not 0 <= i < size]
                if bad:
                    raise ModelError(f"subset {subset} of state {x} has out-of-range indices {bad}")

    @property
    def size(self):
        return self.space.size

    @cached_property
    def p(self) -> np.ndarray:
        from .exact import build_p_multi

        return _frozen(build_p_multi(self.pi, self.kernel, self.selection))

    def kappa(self, x: int, subset) -> np.ndarray:
        from .exact import kappa_of

        return kappa_of(self.pi, self.kernel, self.selection, x, subset)


Model = Union[SingleProposalModel, MultiProposalModel]


def state_function(model, values, name="f") -> np.ndarray:
    """Coerce ``values`` to a finite real vector over the model's states.

    ``values`` may be a sequence in state order or a mapping label -> value; a
    mapping must name every state.
    """
    space = model.space
    if isinstance(values, Mapping):
        unknown = [k for k in values if str(k) not in space.labels]
        if unknown:
            raise ModelError(f"{name}: unknown state labels {unknown}")
        missing = [s for s in space.labels if s not in {str(k) for k in values}]
        if missing:
            raise ModelError(f"{name}: missing values for states {missing}")
        lookup = {str(k): v for k, v in values.items()}
        out = np.array([parse_number(lookup[s]) for s in space.labels])
    else:
        out = np.array([parse_number(v) if isinstance(v, str) else v for v in values], dtype=float)
    if out.shape != (space.size,):
        raise ModelError(f"{name} has shape {out.shape}, expected ({space.size},)")
    if not np.all(np.isfinite(out)):
        raise ModelError(f"{name} has non-finite entries")
    return out


# --- validation ---------------------------------------------------------------


@dataclass
class Check:
    name: str
    passed: bool
    residual: float = 0.0
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def to_dict(self):
        return {
            "ok": self.ok,
            "checks": [
                {"name": c.name, "passed": c.passed, "residual": float(f"{c.residual:.15g}"), "detail": c.detail}
                for c in self.checks
            ],
        }

    def format(self) -> str:
        width = max(len(c.name) for c in self.checks)
        lines = []
        for c in self.checks:
            status = "ok  " if c.passed else "FAIL"
            line = f"{status} {c.name:<{width}}  residual={c.residual:.3g}"
            if c.detail:
                line += f"  {c.detail}"
            lines.append(line)
        return "\n".join(lines)


def _strongly_connected(adjacency) -> tuple[bool, list]:
    from scipy.sparse.csgraph import connected_components, shortest_path

    n_comp, _ = connected_components(adjacency.astype(float), directed=True, connection="strong")
    if n_comp == 1:
        return True, []
    dist = shortest_path(adjacency.astype(float), directed=True, unweighted=True)
    unreachable = [(int(i), int(j)) for i, j in zip(*np.where(np.isinf(dist)))]
    return False, unreachable


def _pair_list(space, pairs, limit=6):
    text = ", ".join(f"{space.labels[i]}->{space.labels[j]}" for i, j in pairs[:limit])
    if len(pairs) > limit:
        text += f", ... ({len(pairs)} total)"
    return text


def _validate_target(model, checks):
    pi = model.pi
    checks.append(Check("pi_positive", bool(np.all(pi > 0)), float(max(0.0, -pi.min())),
                        "" if np.all(pi > 0) else f"non-positive at {[model.space.labels[i] for i in np.where(pi <= 0)[0]]}"))
    res = abs(pi.sum() - 1.0)
    checks.append(Check("pi_normalized", res <= ATOL, res))


def _validate_transition(model, p, checks):
    from .exact import reversibility_residual

    pi = model.pi
    row = float(np.abs(p.sum(axis=1) - 1.0).max())
    checks.append(Check("p_row_stochastic", row <= ATOL and p.min() >= -ATOL, row))
    rev = reversibility_residual(pi, p)
    checks.append(Check("p_reversible", rev <= ATOL, rev))
    inv = float(np.abs(pi @ p - pi).max())
    checks.append(Check("p_invariant", inv <= ATOL, inv))
    ok, unreachable = _strongly_connected(p > 0)
    checks.append(Check("p_irreducible", ok, 0.0, "" if ok else "unreachable: " + _pair_list(model.space, unreachable)))


def _validate_single(model, checks):
    from .exact import build_p_single

    pi, q = model.pi, model.q
    size = model.size
    off = ~np.eye(size, dtype=bool)
    row = float(np.abs(q.sum(axis=1) - 1.0).max())
    checks.append(Check("q_row_stochastic", row <= ATOL and q.min() >= 0, row,
                        "" if q.min() >= 0 else "negative entries"))
    asym = [(int(i), int(j)) for i, j in zip(*np.where((q > 0) & (q.T == 0)))]
    checks.append(Check("q_zero_symmetry", not asym, 0.0, "" if not asym else "q>0 but reverse 0: " + _pair_list(model.space, asym)))
    ok, unreachable = _strongly_connected(q > 0)
    checks.append(Check("q_irreducible", ok, 0.0, "" if ok else "unreachable: " + _pair_list(model.space, unreachable)))
    if asym or q.min() < 0:
        return

    support = (q > 0) & off
    rho = model.rho
    vals = rho[support]
    bad = [(int(i), int(j)) for i, j in zip(*np.where(support & ((rho <= 0) | (rho > 1 + ATOL) | ~np.isfinite(rho))))]
    checks.append(Check("rho_range", not bad, float(max(0.0, vals.max() - 1.0)) if vals.size else 0.0,
                        "" if not bad else "rho outside (0,1] at " + _pair_list(model.space, bad)))
    flow = pi[:, None] * q * rho
    db = float(np.abs(flow - flow.T)[support].max()) if support.any() else 0.0
    checks.append(Check("detailed_balance", db <= ATOL, db))
    if isinstance(model.rule, AlphaBarker):
        ratio = (pi[None, :] * q.T)[support] / (pi[:, None] * q)[support]
        bound = 1.0 + float(ratio.min()) if ratio.size else 2.0
        checks.append(Check("alpha_bound", model.rule.alpha <= bound + ATOL, max(0.0, model.rule.alpha - bound),
                            f"alpha={model.rule.alpha:.6g} limit={bound:.6g}"))
    if bad:
        return
    p = build_p_single(pi, q, model.rule, check=False)
    _validate_transition(model, p, checks)


def _validate_multi(model, checks):
    from .exact import build_p_multi, kappa_residuals

    kernel = model.kernel
    missing_start = []
    distinct = []
    norm = 0.0
    negative = []
    for x, row in enumerate(kernel.support):
        subsets = [s for s, _ in row]
        missing_start += [(x, s) for s, w in row if x not in s]
        if len(set(subsets)) != len(subsets):
            distinct.append(x)
        norm = max(norm, abs(sum(w for _, w in row) - 1.0))
        negative += [(x, s) for s, w in row if w < 0]
    labels = model.space.labels
    checks.append(Check("kernel_contains_start", not missing_start, 0.0,
                        "" if not missing_start else "start missing: " + ", ".join(f"{labels[x]}:{list(s)}" for x, s in missing_start[:6])))
    checks.append(Check("kernel_normalized", norm <= ATOL and not negative, norm,
                        "" if not negative else "negative weights"))
    checks.append(Check("kernel_distinct_subsets", not distinct, 0.0,
                        "" if not distinct else "repeated subsets for " + ", ".join(labels[x] for x in distinct)))
    if missing_start or negative:
        return
    try:
        res = kappa_residuals(model.pi, kernel, model.selection)
    except ModelError as exc:
        checks.append(Check("kappa_defined", False, 0.0, str(exc)))
        return
    checks.append(Check("kappa_normalized", res["normalization"] <= ATOL and res["min"] >= -ATOL, res["normalization"]))
    checks.append(Check("kappa_reversible", res["reversibility"] <= ATOL, res["reversibility"]))
    p = build_p_multi(model.pi, kernel, model.selection, check=False)
    _validate_transition(model, p, checks)


def validate_model(model) -> ValidationReport:
    """Run every named invariant check; failures are report entries, not errors."""
    checks = []
    _validate_target(model, checks)
    if model.kind == "single":
        _validate_single(model, checks)
    else:
        _validate_multi(model, checks)
    return ValidationReport(checks)


def ensure_valid(model):
    report = validate_model(model)
    if not report.ok:
        names = ", ".join(f"{c.name} ({c.detail or f'residual {c.residual:.3g}'})" for c in report.failures())
        raise ModelValidationError(f"invalid model: {names}", report)
    return model


# --- model files --------------------------------------------------------------


def _matrix(raw, size, name, allow_null=False):
    if not isinstance(raw, list) or len(raw) != size or any(not isinstance(r, list) or len(r) != size for r in raw):
        raise ModelError(f"{name} must be a {size}x{size} matrix")
    out = np.full((size, size), np.nan)
    for i, r in enumerate(raw):
        for j, v in enumerate(r):
            if v is None:
                if not allow_null:
                    raise ModelError(f"{name}[{i}][{j}] is null")
                continue
            out[i, j] = parse_number(v)
    return out


def _parse_single(space, pi, spec):
    size = space.size
    if "Q" not in spec:
        raise ModelError("single: missing 'Q'")
    q = _matrix(spec["Q"], size, "Q")
    acc = spec.get("acceptance", {"type": "metropolis"})
    if not isinstance(acc, dict):
        raise ModelError("single.acceptance must be an object")
    kind = acc.get("type")
    has_rho = "rho" in acc
    if kind in ("metropolis", "alpha_barker", "barker") and has_rho:
        raise ModelError(f"acceptance type {kind!r} must not also give an explicit 'rho'")
    if kind == "metropolis":
        rule = Metropolis()
    elif kind in ("alpha_barker", "barker"):
        rule = AlphaBarker(parse_number(acc.get("alpha", 1)))
    elif kind == "explicit":
        if not has_rho:
            raise ModelError("explicit acceptance needs 'rho'")
        rho = _matrix(acc["rho"], size, "rho", allow_null=True)
        off = ~np.eye(size, dtype=bool)
        on_support = off & (q > 0)
        missing = np.isnan(rho) & on_support
        if missing.any():
            i, j = np.argwhere(missing)[0]
            raise ModelError(f"rho[{space.labels[i]}][{space.labels[j]}] missing where Q > 0")
        zero = on_support & (rho == 0)
        if zero.any():
            i, j = np.argwhere(zero)[0]
            raise ModelError(f"rho[{space.labels[i]}][{space.labels[j]}] = 0; acceptance probabilities must lie in (0, 1]")
        stray = off & (q == 0) & ~np.isnan(rho) & (np.nan_to_num(rho) != 0)
        if stray.any():
            i, j = np.argwhere(stray)[0]
            raise ModelError(f"rho[{space.labels[i]}][{space.labels[j]}] given where Q = 0")
        rule = ExplicitRho(np.nan_to_num(rho, nan=0.0))
    else:
        raise ModelError(f"unknown acceptance type {kind!r}")
    return SingleProposalModel(space, pi, q, rule)


def _parse_multi(space, pi, spec):
    raw = spec.get("kernel")
    if not isinstance(raw, list) or len(raw) != space.size:
        raise ModelError(f"multi.kernel must list proposal sets for each of the {space.size} states")
    support = []
    for entries in raw:
        if not isinstance(entries, list):
            raise ModelError("multi.kernel entries must be arrays of {set, prob}")
        row = []
        for e in entries:
            try:
                subset = [space.index(s) for s in e["set"]]
                prob = parse_number(e["prob"])
            except (KeyError, TypeError) as exc:
                raise ModelError(f"bad kernel entry {e!r}") from exc
            if len(set(subset)) != len(subset):
                raise ModelError(f"proposal set {e['set']} repeats a state")
            row.append((subset, prob))
        support.append(row)
    kernel = MultiProposalKernel(tuple(support))
    sel = spec.get("selection", {"type": "boltzmann"})
    kind = sel.get("type") if isinstance(sel, dict) else None
    if kind in ("metropolis", "boltzmann") and "table" in sel:
        raise ModelError(f"selection type {kind!r} must not also give an explicit 'table'")
    if kind == "metropolis":
        selection = MetropolisKappa()
    elif kind == "boltzmann":
        selection = BoltzmannKappa()
    elif kind == "explicit":
        entries = sel.get("table")
        if not isinstance(entries, list):
            raise ModelError("explicit selection needs 'table': [{from, set, kappa}]")
        table, seen = {}, set()
        for e in entries:
            try:
                x = space.index(e["from"])
                subset = [space.index(s) for s in e["set"]]
                kap = e["kappa"]
            except (KeyError, TypeError) as exc:
                raise ModelError(f"bad selection entry {e!r}") from exc
            if isinstance(kap, Mapping):
                if set(map(str, kap)) != {space.labels[i] for i in subset}:
                    raise ModelError(f"kappa for {e['from']}:{e['set']} must name exactly the set's states")
                probs = [parse_number(kap[space.labels[i]]) for i in subset]
            else:
                probs = [parse_number(v) for v in kap]
                if len(probs) != len(subset):
                    raise ModelError(f"kappa for {e['from']}:{e['set']} has wrong length")
            key = (x, tuple(sorted(subset)))
            if key in seen:
                raise ModelError(f"duplicate selection entry for {e['from']}:{e['set']}")
            seen.add(key)
            table[(x, tuple(subset))] = probs
        selection = ExplicitKappa(table)
    else:
        raise ModelError(f"unknown selection type {kind!r}")
    return MultiProposalModel(space, pi, kernel, selection)


def parse_model(text: str):
    """Build a model from model-file JSON without running the invariant checks."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"model file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ModelError("model file must hold a JSON object")
    if "states" not in data or "pi" not in data:
        raise ModelError("model file needs 'states' and 'pi'")
    space = StateSpace(tuple(data["states"]))
    if not isinstance(data["pi"], list):
        raise ModelError("'pi' must be an array")
    pi = np.array([parse_number(v) for v in data["pi"]])
    has_single, has_multi = "single" in data, "multi" in data
    if has_single == has_multi:
        raise ModelError("model file needs exactly one of 'single' or 'multi'")
    if has_single:
        return _parse_single(space, pi, data["single"])
    return _parse_multi(space, pi, data["multi"])


def load_model(text: str):
    """Parse and validate a model file; raises on any violated invariant."""
    return ensure_valid(parse_model(text))


def load_model_file(path):
    with open(path) as fh:
        return load_model(fh.read())


def model_to_dict(model) -> dict:
    """Inverse of :func:`parse_model` (floats are written as floats)."""
    labels = model.space.labels
    out = {"states": list(labels), "pi": [float(v) for v in model.pi]}
    if model.kind == "single":
        acc = {"type": model.rule.name}
        if isinstance(model.rule, AlphaBarker):
            acc["alpha"] = model.rule.alpha
        if isinstance(model.rule, ExplicitRho):
            rho = model.rule.rho.tolist()
            for i in range(model.size):
                for j in range(model.size):
                    if i != j and model.q[i, j] == 0:
                        rho[i][j] = None
            acc["rho"] = rho
        out["single"] = {"Q": model.q.tolist(), "acceptance": acc}
    else:
        kernel = [[{"set": [labels[i] for i in s], "prob": w} for s, w in row] for row in model.kernel.support]
        sel = {"type": model.selection.name}
        if isinstance(model.selection, ExplicitKappa):
            sel["table"] = [
                {"from": labels[x], "set": [labels[i] for i in s], "kappa": {labels[i]: float(v) for i, v in zip(s, probs)}}
                for (x, s), probs in model.selection.table.items()
            ]
        out["multi"] = {"kernel": kernel, "selection": sel}
    return out


def function_from_file(model, path, name="f") -> np.ndarray:
    """Read a state function stored as a JSON map label -> value."""
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ModelError(f"{path}: a function file holds a JSON object label -> value")
    return state_function(model, data, name)


def pair_embedding(model: SingleProposalModel) -> MultiProposalModel:
    """Single-proposal model rewritten as a multi-proposal one on pair sets.

    State ``x`` proposes ``{x, y}`` with probability ``q(x, y)`` and selects
    ``y`` with probability ``rho(x, y)``; ``q(x, x) > 0`` becomes the
    singleton ``{x}``.
    """
    q, rho = model.q, model.rho
    support, table = [], {}
    for x in range(model.size):
        row = []
        for y in range(model.size):
            if q[x, y] <= 0:
                continue
            if y == x:
                row.append(((x,), q[x, x]))
                table[(x, (x,))] = [1.0]
            else:
                row.append(((x, y), q[x, y]))
                table[(x, (x, y))] = [1.0 - rho[x, y], rho[x, y]]
        support.append(row)
    return MultiProposalModel(model.space, model.pi, MultiProposalKernel(tuple(support)), ExplicitKappa(table))
