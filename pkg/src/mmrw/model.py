"""Two-dimensional skip-free Markov-modulated random walks.

A model is nine nonnegative ``s0 x s0`` blocks ``A[i, j]`` with
``i, j in {-1, 0, 1}``.  Block ``A[i, j]`` holds the probabilities of
moving by ``(i, j)`` on the lattice while the background state jumps
from row to column.  The blocks are stored in a single read-only array of
shape ``(3, 3, s0, s0)`` indexed by ``[i + 1, j + 1]``.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

__all__ = [
    "STEPS",
    "MMRWModel",
    "DriftVector",
    "ValidationReport",
    "ModelError",
    "ModelFormatError",
    "ModelValidationError",
    "AssumptionError",
    "parse_model",
    "dump_model",
    "load_model",
    "validate",
    "drift",
    "swap_axes",
    "require_negative_drift",
    "reference_model",
]

STEPS = tuple((i, j) for i in (-1, 0, 1) for j in (-1, 0, 1))
ROW_SUM_TOL = 1e-12


class ModelError(ValueError):
    """Base class for model problems."""


class ModelFormatError(ModelError):
    """The model file does not follow the schema."""

    def __init__(self, message, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.line = line
        self.field = field


class ModelValidationError(ModelError):
    """The blocks are well formed but violate a model invariant."""


class AssumptionError(ModelError):
    """The model is valid but the requested quantity may not exist for it."""


@dataclass(frozen=True, eq=False)
class MMRWModel:
    """Immutable 2d skip-free Markov-modulated random walk.

    Parameters
    ----------
    s0 : int
        Number of background states.
    blocks : ndarray, shape (3, 3, s0, s0)
        ``blocks[i + 1, j + 1]`` is the transition block for step ``(i, j)``.
    name : str, optional
        Label used in reports.
    """

    s0: int
    blocks: np.ndarray
    name: str = ""

    def __post_init__(self):
        arr = np.array(self.blocks, dtype=np.float64, copy=True)
        if arr.shape != (3, 3, self.s0, self.s0):
            raise ModelFormatError(
                f"blocks must have shape (3, 3, {self.s0}, {self.s0}), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ModelValidationError("block entries must be finite")
        if (arr < 0).any() or (arr > 1).any():
            raise ModelValidationError("block entries must lie in [0, 1]")
        rows = arr.sum(axis=(0, 1)).sum(axis=1)
        bad = np.abs(rows - 1.0) > ROW_SUM_TOL
        if bad.any():
            k = int(np.argmax(bad))
            raise ModelValidationError(
                f"not stochastic: row {k} of the summed blocks adds to {rows[k]!r}")
        arr.setflags(write=False)
        object.__setattr__(self, "blocks", arr)
        object.__setattr__(self, "_hash", hash((self.s0, arr.tobytes())))

    @classmethod
    def from_blocks(cls, mapping, s0=None, name=""):
        """Build a model from ``{(i, j): matrix}``; missing steps are zero."""
        mats = {k: np.atleast_2d(np.asarray(v, dtype=np.float64)) for k, v in mapping.items()}
        if s0 is None:
            s0 = next(iter(mats.values())).shape[0]
        arr = np.zeros((3, 3, s0, s0))
        for (i, j), m in mats.items():
            if (i, j) not in STEPS:
                raise ModelFormatError(f"step {(i, j)} is not in {{-1,0,1}}^2")
            arr[i + 1, j + 1] = m
        return cls(s0, arr, name)

    def block(self, i, j):
        return self.blocks[i + 1, j + 1]

    @property
    def total(self):
        """The background transition matrix ``A_{*,*}``."""
        return self.blocks.sum(axis=(0, 1))

    def row_block_sum(self, i):
        """``A_{i,*}``: sum over vertical steps for horizontal step ``i``."""
        return self.blocks[i + 1].sum(axis=0)

    def col_block_sum(self, j):
        """``A_{*,j}``: sum over horizontal steps for vertical step ``j``."""
        return self.blocks[:, j + 1].sum(axis=0)

    def fingerprint(self):
        return hashlib.sha1(self.blocks.tobytes()).hexdigest()

    def __eq__(self, other):
        if not isinstance(other, MMRWModel):
            return NotImplemented
        return self.s0 == other.s0 and np.array_equal(self.blocks, other.blocks)

    def __hash__(self):
        return self._hash

    def __repr__(self):
        nz = [f"{i},{j}" for (i, j) in STEPS if self.block(i, j).any()]
        label = f"{self.name!r}, " if self.name else ""
        return f"MMRWModel({label}s0={self.s0}, nonzero=[{' '.join(nz)}])"


@dataclass(frozen=True)
class DriftVector:
    a1: float
    a2: float
    pi: np.ndarray


@dataclass(frozen=True)
class ValidationReport:
    stochastic: bool
    aperiodic_hint: bool
    p_irreducible_hint: bool
    p_plus_irreducible_hint: bool
    drift: DriftVector | None
    assumption2_satisfied: bool
    window_size: int

    def as_dict(self):
        d = {
            "stochastic": self.stochastic,
            "aperiodic_hint": self.aperiodic_hint,
            "p_irreducible_hint": self.p_irreducible_hint,
            "p_plus_irreducible_hint": self.p_plus_irreducible_hint,
            "assumption2_satisfied": self.assumption2_satisfied,
            "window_size": self.window_size,
        }
        if self.drift is not None:
            d["a1"] = self.drift.a1
            d["a2"] = self.drift.a2
            d["pi"] = [float(v) for v in self.drift.pi]
        return d


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def _line_of(text, needle):
    idx = text.find(needle)
    return None if idx < 0 else text.count("\n", 0, idx) + 1


def _to_decimal(value, field, text):
    if isinstance(value, bool) or not isinstance(value, (int, float, str, Decimal)):
        raise ModelFormatError("entries must be numbers or decimal strings",
                               _line_of(text, f'"{field}"'), field)
    try:
        d = Decimal(repr(value)) if isinstance(value, float) else Decimal(str(value).strip())
    except InvalidOperation:
        raise ModelFormatError(f"cannot parse {value!r} as a decimal",
                               _line_of(text, f'"{field}"'), field) from None
    if not d.is_finite():
        raise ModelFormatError(f"non-finite entry {value!r}", _line_of(text, f'"{field}"'), field)
    return d


def parse_model(text, name=""):
    """Parse a model from its JSON text.

    The file holds ``{"s0": int, "blocks": {"i,j": [[...], ...]}}``.
    Entries may be JSON numbers or decimal strings; row sums are checked in
    exact decimal arithmetic before conversion to floats.

    Parameters
    ----------
    text : str
        Contents of a model file.
    name : str, optional
        Label attached to the returned model.

    Returns
    -------
    MMRWModel

    Raises
    ------
    ModelFormatError
        Malformed JSON or schema, with the offending line and field.
    ModelValidationError
        Negative entries, entries above one, or rows not summing to one.
    """
    try:
        doc = json.loads(text, parse_float=Decimal)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(exc.msg, exc.lineno) from None
    if not isinstance(doc, dict):
        raise ModelFormatError("top level must be a JSON object", 1)
    unknown = set(doc) - {"s0", "blocks", "name"}
    if unknown:
        first = sorted(unknown)[0]
        raise ModelFormatError(f"unknown keys {sorted(unknown)}", _line_of(text, f'"{first}"'), first)
    s0 = doc.get("s0")
    if isinstance(s0, bool) or not isinstance(s0, int) or s0 < 1:
        raise ModelFormatError("s0 must be a positive integer", _line_of(text, '"s0"'), "s0")
    raw = doc.get("blocks")
    if not isinstance(raw, dict):
        raise ModelFormatError("blocks must be an object", _line_of(text, '"blocks"'), "blocks")

    exact = {}
    for key, mat in raw.items():
        try:
            i, j = (int(p) for p in key.replace(" ", "").split(","))
        except ValueError:
            raise ModelFormatError("block keys look like \"i,j\"", _line_of(text, f'"{key}"'), key) from None
        if (i, j) not in STEPS:
            raise ModelFormatError("block indices must lie in {-1,0,1}", _line_of(text, f'"{key}"'), key)
        if (i, j) in exact:
            raise ModelFormatError("duplicate block", _line_of(text, f'"{key}"'), key)
        if (not isinstance(mat, list) or len(mat) != s0
                or any(not isinstance(r, list) or len(r) != s0 for r in mat)):
            raise ModelFormatError(f"block must be a {s0}x{s0} nested list", _line_of(text, f'"{key}"'), key)
        exact[(i, j)] = [[_to_decimal(v, key, text) for v in row] for row in mat]

    for key, mat in exact.items():
        for row in mat:
            for v in row:
                if v < 0 or v > 1:
                    raise ModelValidationError(f"entry {v} of block {key} is outside [0, 1]")
    for r in range(s0):
        total = sum((mat[r][c] for mat in exact.values() for c in range(s0)), Decimal(0))
        if abs(total - 1) > Decimal(ROW_SUM_TOL):
            raise ModelValidationError(f"not stochastic: row {r} of the summed blocks adds to {total}")

    arr = np.zeros((3, 3, s0, s0))
    for (i, j), mat in exact.items():
        arr[i + 1, j + 1] = [[float(v) for v in row] for row in mat]
    return MMRWModel(s0, arr, name or str(doc.get("name", "")))


def dump_model(model):
    """Serialise to model-file JSON.

    Entries are written as decimal strings holding the shortest repr that
    round-trips the float, one matrix row per line.
    """
    def entry(v):
        v = float(v)
        return json.dumps("0" if v == 0 else "1" if v == 1 else repr(v))

    lines = ["{"]
    if model.name:
        lines.append(f'  "name": {json.dumps(model.name)},')
    lines.append(f'  "s0": {model.s0},')
    lines.append('  "blocks": {')
    keys = [(i, j) for (i, j) in STEPS if model.block(i, j).any()]
    for n, (i, j) in enumerate(keys):
        rows = ["[" + ", ".join(entry(v) for v in row) + "]" for row in model.block(i, j)]
        body = (",\n" + " " * 8).join(rows)
        tail = "," if n + 1 < len(keys) else ""
        lines.append(f'    "{i},{j}": [\n        {body}\n    ]{tail}')
    lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"


def load_model(path):
    """Load a model from a file path, or one of the builtin names R0, R1, R2."""
    p = Path(path)
    if not p.exists() and str(path).upper() in _REFERENCE:
        return reference_model(str(path).upper())
    return parse_model(p.read_text(), name=p.stem)


# ---------------------------------------------------------------------------
# reference models
# ---------------------------------------------------------------------------

_R1_STEPS = {(-1, 0): 0.3, (1, 0): 0.1, (0, -1): 0.3, (0, 1): 0.1, (0, 0): 0.2}
_REFERENCE = ("R0", "R1", "R2")


def reference_model(name):
    """Small models with closed-form answers.

    ``R0`` moves deterministically by ``(-1, -1)``.  ``R1`` is a scalar walk
    with axis steps ``0.3`` down/left, ``0.1`` up/right and a ``0.2``
    self-loop.  ``R2`` is ``R1`` modulated by the two-state chain
    ``[[0.9, 0.1], [0.1, 0.9]]``.
    """
    key = name.upper()
    if key == "R0":
        return MMRWModel.from_blocks({(-1, -1): [[1.0]]}, name="R0")
    if key == "R1":
        return MMRWModel.from_blocks({k: [[v]] for k, v in _R1_STEPS.items()}, name="R1")
    if key == "R2":
        # products formed in decimal so the blocks match the shipped model file
        t = [[Decimal("0.9"), Decimal("0.1")], [Decimal("0.1"), Decimal("0.9")]]
        return MMRWModel.from_blocks(
            {k: [[float(Decimal(repr(v)) * e) for e in row] for row in t]
             for k, v in _R1_STEPS.items()}, name="R2")
    raise KeyError(f"unknown reference model {name!r}; choose from {_REFERENCE}")


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def swap_axes(model):
    """Exchange the two lattice axes: ``A'[i, j] = A[j, i]``."""
    return MMRWModel(model.s0, model.blocks.transpose(1, 0, 2, 3), model.name)


def drift(model):
    """Mean increment vector under the stationary background law.

    Parameters
    ----------
    model : MMRWModel

    Returns
    -------
    DriftVector
        ``a1 = pi (A_{1,*} - A_{-1,*}) 1`` and ``a2 = pi (A_{*,1} - A_{*,-1}) 1``
        where ``pi`` is stationary for ``A_{*,*}``.

    Raises
    ------
    ModelValidationError
        If ``A_{*,*}`` has no unique stationary vector.
    """
    s0 = model.s0
    total = model.total
    system = (total - np.eye(s0)).T
    system[-1, :] = 1.0
    rhs = np.zeros(s0)
    rhs[-1] = 1.0
    try:
        pi = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError:
        raise ModelValidationError(
            "background chain is reducible: stationary system is singular") from None
    if np.linalg.cond(system) > 1e12 or (pi < -1e-12).any():
        raise ModelValidationError(
            "background chain is reducible: stationary system is singular")
    pi = np.clip(pi, 0.0, None)
    pi = pi / pi.sum()
    ones = np.ones(s0)
    a1 = float(pi @ (model.row_block_sum(1) - model.row_block_sum(-1)) @ ones)
    a2 = float(pi @ (model.col_block_sum(1) - model.col_block_sum(-1)) @ ones)
    pi.setflags(write=False)
    return DriftVector(a1, a2, pi)


def require_negative_drift(model):
    """Raise :class:`AssumptionError` unless ``a1 < 0`` or ``a2 < 0``."""
    try:
        d = drift(model)
    except ModelValidationError as exc:
        raise AssumptionError(f"drift undefined: {exc}") from None
    if not (d.a1 < 0 or d.a2 < 0):
        raise AssumptionError(
            f"drift condition fails (need a1<0 or a2<0): a=({d.a1!r},{d.a2!r}); "
            "the occupation measure may be infinite")
    return d


def _strongly_connected(n, rows, cols):
    if n == 0:
        return False
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()
    ncomp, _ = connected_components(graph, directed=True, connection="strong")
    return ncomp == 1


def _lattice_edges(model, size, wrap):
    # states (x1, x2, k) on a size x size grid, index (x1*size + x2)*s0 + k
    s0 = model.s0
    x1, x2 = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    x1 = x1.ravel()
    x2 = x2.ravel()
    rows, cols = [], []
    for i, j in STEPS:
        a, b = np.nonzero(model.block(i, j))
        if a.size == 0:
            continue
        y1, y2 = x1 + i, x2 + j
        if wrap:
            y1 %= size
            y2 %= size
            ok = np.ones_like(y1, dtype=bool)
        else:
            ok = (y1 >= 0) & (y1 < size) & (y2 >= 0) & (y2 < size)
        src = (x1[ok] * size + x2[ok])[:, None] * s0 + a[None, :]
        dst = (y1[ok] * size + y2[ok])[:, None] * s0 + b[None, :]
        rows.append(src.ravel())
        cols.append(dst.ravel())
    if rows:
        return np.concatenate(rows), np.concatenate(cols)
    return np.zeros(0, int), np.zeros(0, int)


def _period_gcd(model):
    # gcd of lengths of closed walks (zero displacement, same phase) up to 2*s0+4
    s0 = model.s0
    max_len = 2 * s0 + 4
    support = (model.blocks > 0)
    # reach[(d1, d2)] : boolean s0 x s0 matrix of phase pairs reachable with displacement d
    reach = {(0, 0): np.eye(s0, dtype=bool)}
    g = 0
    for length in range(1, max_len + 1):
        nxt = {}
        for (d1, d2), m in reach.items():
            for i, j in STEPS:
                step = support[i + 1, j + 1]
                if not step.any():
                    continue
                key = (d1 + i, d2 + j)
                prod = (m.astype(np.int64) @ step.astype(np.int64)) > 0
                if key in nxt:
                    nxt[key] |= prod
                else:
                    nxt[key] = prod
        reach = {k: v for k, v in nxt.items() if v.any()}
        back = reach.get((0, 0))
        if back is not None and np.diag(back).any():
            g = math.gcd(g, length)
    return g


def validate(model, window=6):
    """Heuristic structural checks for a model.

    Irreducibility of the infinite lattice chain cannot be certified from
    finitely many states, so the reachability results are hints.

    Parameters
    ----------
    model : MMRWModel
    window : int, default 6
        The unrestricted chain is tested on a ``(2*window+1)``-torus; the
        quadrant-restricted chain on the box ``[0, window]^2``.

    Returns
    -------
    ValidationReport
    """
    if window < 1:
        raise ValueError("window must be positive")
    stochastic = bool(np.allclose(model.total.sum(axis=1), 1.0, rtol=0, atol=ROW_SUM_TOL))

    size = 2 * window + 1
    r, c = _lattice_edges(model, size, wrap=True)
    p_irr = _strongly_connected(size * size * model.s0, r, c)

    size_plus = window + 1
    r, c = _lattice_edges(model, size_plus, wrap=False)
    p_plus_irr = _strongly_connected(size_plus * size_plus * model.s0, r, c)

    aperiodic = _period_gcd(model) == 1

    try:
        d = drift(model)
    except ModelValidationError:
        d = None
    a2_ok = d is not None and (d.a1 < 0 or d.a2 < 0)
    return ValidationReport(stochastic, aperiodic, p_irr, p_plus_irr, d, a2_ok, int(window))

