"""MILP data model, native text format, an MPS-subset reader, and instance generators.

All instances are stored in a single canonical shape: minimization, every
constraint a <= row, sparse coefficients in sorted (row, col) coordinate form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

FEASIBILITY_TOL = 1e-6
INTEGRALITY_TOL = 1e-6

GENERATOR_FAMILIES = ("set_cover", "multiknapsack", "bin_pack_apportion")


class ParseError(ValueError):
    """Malformed instance text; carries a 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(eq=False)
class MilpInstance:
    """A minimization MILP: min c.x  s.t.  A x <= b,  lower <= x <= upper.

    A is held as parallel coordinate arrays (a_rows, a_cols, a_vals) sorted by
    (row, col) with no duplicate coordinates. ``integrality`` marks the integer
    variables. ``meta`` carries provenance only and is excluded from equality.
    """

    name: str
    c: np.ndarray
    a_rows: np.ndarray
    a_cols: np.ndarray
    a_vals: np.ndarray
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    integrality: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.float64)
        self.a_rows = np.asarray(self.a_rows, dtype=np.int64)
        self.a_cols = np.asarray(self.a_cols, dtype=np.int64)
        self.a_vals = np.asarray(self.a_vals, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        self.lower = np.asarray(self.lower, dtype=np.float64)
        self.upper = np.asarray(self.upper, dtype=np.float64)
        self.integrality = np.asarray(self.integrality, dtype=bool)
        self._validate()

    def _validate(self):
        n, m = self.n, self.m
        if n < 1:
            raise ValueError("instance needs at least one variable")
        if not np.isfinite(self.c).all():
            raise ValueError("objective has non-finite entries")
        if not np.isfinite(self.b).all():
            raise ValueError("rhs has non-finite entries")
        if not np.isfinite(self.a_vals).all():
            raise ValueError("constraint matrix has non-finite entries")
        for arr, label in ((self.lower, "lower"), (self.upper, "upper")):
            if len(arr) != n or np.isnan(arr).any():
                raise ValueError(f"bad {label} bound vector")
        if len(self.integrality) != n:
            raise ValueError("integrality mask length mismatch")
        both = np.isfinite(self.lower) & np.isfinite(self.upper)
        if np.any(self.lower[both] > self.upper[both]):
            j = int(np.where(both & (self.lower > self.upper))[0][0])
            raise ValueError(f"variable {j} has lower bound above upper bound")
        if not (len(self.a_rows) == len(self.a_cols) == len(self.a_vals)):
            raise ValueError("coordinate arrays have mismatched lengths")
        if self.nnz:
            if self.a_rows.min() < 0 or self.a_rows.max() >= max(m, 1):
                raise ValueError("coordinate row index out of range")
            if self.a_cols.min() < 0 or self.a_cols.max() >= n:
                raise ValueError("coordinate column index out of range")
            order = np.lexsort((self.a_cols, self.a_rows))
            self.a_rows = self.a_rows[order]
            self.a_cols = self.a_cols[order]
            self.a_vals = self.a_vals[order]
            dup = (np.diff(self.a_rows) == 0) & (np.diff(self.a_cols) == 0)
            if dup.any():
                k = int(np.where(dup)[0][0])
                raise ValueError(
                    f"duplicate coordinate ({self.a_rows[k]}, {self.a_cols[k]})"
                )

    @property
    def n(self) -> int:
        return len(self.c)

    @property
    def m(self) -> int:
        return len(self.b)

    @property
    def p(self) -> int:
        return int(self.integrality.sum())

    @property
    def nnz(self) -> int:
        return len(self.a_vals)

    @property
    def sense(self) -> str:
        return "min"

    def dense_matrix(self) -> np.ndarray:
        A = np.zeros((self.m, self.n))
        A[self.a_rows, self.a_cols] = self.a_vals
        return A

    def __eq__(self, other) -> bool:
        if not isinstance(other, MilpInstance):
            return NotImplemented
        return (
            self.name == other.name
            and np.array_equal(self.c, other.c)
            and np.array_equal(self.a_rows, other.a_rows)
            and np.array_equal(self.a_cols, other.a_cols)
            and np.array_equal(self.a_vals, other.a_vals)
            and np.array_equal(self.b, other.b)
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
            and np.array_equal(self.integrality, other.integrality)
        )


@dataclass
class Solution:
    """A candidate assignment with its objective and feasibility verdict."""

    x: np.ndarray
    objective: float
    feasible: bool
    max_violation: float


def evaluate_solution(instance: MilpInstance, x) -> Solution:
    """Score an assignment: left-to-right objective sum and worst violation."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) != instance.n:
        raise ValueError(f"expected {instance.n} values, got {len(x)}")
    if not np.isfinite(x).all():
        raise ValueError("assignment has non-finite entries")

    obj = 0.0
    for cj, xj in zip(instance.c, x):
        obj += float(cj) * float(xj)

    activity = np.zeros(instance.m)
    np.add.at(activity, instance.a_rows, instance.a_vals * x[instance.a_cols])
    row_viol = float(np.max(activity - instance.b, initial=0.0))

    lo = np.where(np.isfinite(instance.lower), instance.lower - x, -np.inf)
    hi = np.where(np.isfinite(instance.upper), x - instance.upper, -np.inf)
    bound_viol = float(max(np.max(lo, initial=0.0), np.max(hi, initial=0.0), 0.0))

    if instance.p:
        xi = x[instance.integrality]
        int_resid = float(np.max(np.abs(xi - np.round(xi))))
    else:
        int_resid = 0.0

    max_violation = max(row_viol, bound_viol, int_resid, 0.0)
    feasible = (
        max(row_viol, bound_viol) <= FEASIBILITY_TOL and int_resid <= INTEGRALITY_TOL
    )
    return Solution(x=x, objective=obj, feasible=feasible, max_violation=max_violation)


# ---------------------------------------------------------------------------
# native text format
#
#   milp <name> <min|max>
#   var <name> <lb|-inf> <ub|+inf> <int|cont>   (one per variable)
#   obj                                          (term lines follow)
#     <coef> <var>
#   row <name> <op> <rhs>                        (op in <=, >=, =; term lines follow)
#     <coef> <var>
#   end
# ---------------------------------------------------------------------------


def _fmt(v: float) -> str:
    if v == math.inf:
        return "+inf"
    if v == -math.inf:
        return "-inf"
    return format(float(v), ".17g")


def serialize_native(instance: MilpInstance) -> str:
    """Emit the native text form; coefficients keep 17 significant digits."""
    out = [f"milp {instance.name} min"]
    for j in range(instance.n):
        kind = "int" if instance.integrality[j] else "cont"
        out.append(
            f"var x{j} {_fmt(instance.lower[j])} {_fmt(instance.upper[j])} {kind}"
        )
    out.append("obj")
    for j in range(instance.n):
        if instance.c[j] != 0.0:
            out.append(f"  {_fmt(instance.c[j])} x{j}")
    row_starts = np.searchsorted(instance.a_rows, np.arange(instance.m + 1))
    for i in range(instance.m):
        out.append(f"row r{i} <= {_fmt(instance.b[i])}")
        for k in range(row_starts[i], row_starts[i + 1]):
            out.append(f"  {_fmt(instance.a_vals[k])} x{instance.a_cols[k]}")
    out.append("end")
    return "\n".join(out) + "\n"


def _parse_bound(token: str, lineno: int) -> float:
    t = token.lower()
    if t in ("-inf", "-infinity"):
        return -math.inf
    if t in ("+inf", "inf", "+infinity", "infinity"):
        return math.inf
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"bad bound value {token!r}", lineno) from None


def parse_native(text: str) -> MilpInstance:
    """Parse the native format, normalizing >= and = rows to <= form."""
    name = None
    maximize = False
    var_index: dict[str, int] = {}
    lower: list[float] = []
    upper: list[float] = []
    integrality: list[bool] = []
    obj_terms: dict[int, float] = {}
    rows: list[tuple[str, float, dict[int, float]]] = []
    row_names: set[str] = set()
    target: dict[int, float] | None = None  # term sink: obj_terms or a row's dict
    target_label = ""
    saw_end = False

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if saw_end:
            raise ParseError("content after end", lineno)
        tok = line.split()
        head = tok[0]
        if name is None:
            if head != "milp" or len(tok) != 3:
                raise ParseError("expected header 'milp <name> <min|max>'", lineno)
            if tok[2] not in ("min", "max"):
                raise ParseError(f"unknown sense {tok[2]!r}", lineno)
            name, maximize = tok[1], tok[2] == "max"
        elif head == "var":
            if len(tok) != 5:
                raise ParseError("expected 'var <name> <lb> <ub> <int|cont>'", lineno)
            if target is not None:
                raise ParseError("var declared after obj/row sections", lineno)
            if tok[1] in var_index:
                raise ParseError(f"duplicate variable name {tok[1]!r}", lineno)
            lb, ub = _parse_bound(tok[2], lineno), _parse_bound(tok[3], lineno)
            if math.isfinite(lb) and math.isfinite(ub) and lb > ub:
                raise ParseError(f"variable {tok[1]!r} has lb > ub", lineno)
            if tok[4] not in ("int", "cont"):
                raise ParseError(f"unknown variable kind {tok[4]!r}", lineno)
            var_index[tok[1]] = len(lower)
            lower.append(lb)
            upper.append(ub)
            integrality.append(tok[4] == "int")
        elif head == "obj":
            if len(tok) != 1:
                raise ParseError("expected bare 'obj'", lineno)
            target, target_label = obj_terms, "obj"
        elif head == "row":
            if len(tok) != 4 or tok[2] not in ("<=", ">=", "="):
                raise ParseError("expected 'row <name> <op> <rhs>'", lineno)
            if tok[1] in row_names:
                raise ParseError(f"duplicate row name {tok[1]!r}", lineno)
            row_names.add(tok[1])
            terms: dict[int, float] = {}
            op_rhs = _parse_bound(tok[3], lineno)
            if not math.isfinite(op_rhs):
                raise ParseError("row rhs must be finite", lineno)
            rows.append((tok[2], op_rhs, terms))
            target, target_label = terms, tok[1]
        elif head == "end":
            saw_end = True
        else:
            if len(tok) != 2:
                raise ParseError(f"unrecognized line {line!r}", lineno)
            if target is None:
                raise ParseError("coefficient term outside obj/row section", lineno)
            try:
                coef = float(tok[0])
            except ValueError:
                raise ParseError(f"unrecognized line {line!r}", lineno) from None
            if tok[1] not in var_index:
                raise ParseError(f"undeclared variable {tok[1]!r}", lineno)
            j = var_index[tok[1]]
            if j in target:
                raise ParseError(
                    f"duplicate term for {tok[1]!r} in {target_label}", lineno
                )
            target[j] = coef

    if name is None:
        raise ParseError("empty document")
    if not saw_end:
        raise ParseError("missing 'end'")
    if not lower:
        raise ParseError("no variables declared")

    n = len(lower)
    c = np.zeros(n)
    for j, coef in obj_terms.items():
        c[j] = coef

    a_rows: list[int] = []
    a_cols: list[int] = []
    a_vals: list[float] = []
    b: list[float] = []

    def emit(terms: dict[int, float], rhs: float, flip: bool):
        i = len(b)
        s = -1.0 if flip else 1.0
        for j, coef in terms.items():
            a_rows.append(i)
            a_cols.append(j)
            a_vals.append(s * coef)
        b.append(s * rhs)

    for op, rhs, terms in rows:
        if op == "<=":
            emit(terms, rhs, flip=False)
        elif op == ">=":
            emit(terms, rhs, flip=True)
        else:  # equality becomes a <= pair
            emit(terms, rhs, flip=False)
            emit(terms, rhs, flip=True)

    return _build_parsed(name, maximize, c, a_rows, a_cols, a_vals, b, lower, upper,
                         integrality)


def _build_parsed(name, maximize, c, a_rows, a_cols, a_vals, b, lower, upper,
                  integrality, extra_meta=None):
    meta = dict(extra_meta or {})
    c = np.asarray(c, dtype=np.float64)
    if maximize:
        c = -c
        meta["negated_from_max"] = True
    try:
        return MilpInstance(
            name=name,
            c=c,
            a_rows=np.array(a_rows, dtype=np.int64),
            a_cols=np.array(a_cols, dtype=np.int64),
            a_vals=np.array(a_vals, dtype=np.float64),
            b=np.array(b, dtype=np.float64),
            lower=np.array(lower, dtype=np.float64),
            upper=np.array(upper, dtype=np.float64),
            integrality=np.array(integrality, dtype=bool),
            meta=meta,
        )
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


# ---------------------------------------------------------------------------
# MPS subset reader: NAME / ROWS / COLUMNS (with INTORG markers) / RHS /
# BOUNDS / ENDATA. RANGES and anything else is rejected.
# ---------------------------------------------------------------------------

_MPS_SECTIONS = {"NAME", "ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA", "RANGES"}


def parse_mps(text: str) -> MilpInstance:
    """Parse a strict MPS subset into canonical <= form.

    Default variable bounds are [0, +inf); BV sets a binary [0, 1]. Only one
    N row (the objective) is accepted and the sense is minimization.
    """
    name = "mps"
    section = None
    row_sense: dict[str, str] = {}
    row_order: list[str] = []
    obj_row: str | None = None
    col_index: dict[str, int] = {}
    col_int: list[bool] = []
    col_entries: list[dict[str, float]] = []
    obj_coef: dict[int, float] = {}
    rhs: dict[str, float] = {}
    bounds: dict[int, list[float]] = {}
    in_integer = False
    saw_endata = False

    def col_id(cname: str) -> int:
        if cname not in col_index:
            col_index[cname] = len(col_index)
            col_int.append(in_integer)
            col_entries.append({})
        return col_index[cname]

    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("*"):
            continue
        is_header = not raw[0].isspace()
        tok = raw.split()
        if is_header:
            word = tok[0].upper()
            if word not in _MPS_SECTIONS:
                raise ParseError(f"unsupported MPS section {tok[0]!r}", lineno)
            if word == "RANGES":
                raise ParseError("RANGES section is unsupported", lineno)
            section = word
            if word == "NAME" and len(tok) > 1:
                name = tok[1]
            if word == "ENDATA":
                saw_endata = True
            continue
        if section == "ROWS":
            if len(tok) != 2:
                raise ParseError("ROWS entries need '<type> <name>'", lineno)
            sense, rname = tok[0].upper(), tok[1]
            if rname in row_sense or rname == obj_row:
                raise ParseError(f"duplicate row name {rname!r}", lineno)
            if sense == "N":
                if obj_row is not None:
                    raise ParseError("multiple objective (N) rows", lineno)
                obj_row = rname
            elif sense in ("L", "G", "E"):
                row_sense[rname] = sense
                row_order.append(rname)
            else:
                raise ParseError(f"unknown row type {tok[0]!r}", lineno)
        elif section == "COLUMNS":
            if len(tok) >= 3 and tok[1].strip("'\"").upper() == "MARKER":
                marker = tok[-1].strip("'\"").upper()
                if marker == "INTORG":
                    in_integer = True
                elif marker == "INTEND":
                    in_integer = False
                else:
                    raise ParseError(f"unknown marker {tok[-1]!r}", lineno)
                continue
            if len(tok) not in (3, 5):
                raise ParseError("COLUMNS entries need name + (row, value) pairs",
                                 lineno)
            j = col_id(tok[0])
            for rname, val in zip(tok[1::2], tok[2::2]):
                try:
                    v = float(val)
                except ValueError:
                    raise ParseError(f"bad coefficient {val!r}", lineno) from None
                if rname == obj_row:
                    obj_coef[j] = obj_coef.get(j, 0.0) + v
                elif rname in row_sense:
                    col_entries[j][rname] = col_entries[j].get(rname, 0.0) + v
                else:
                    raise ParseError(f"unknown row {rname!r}", lineno)
        elif section == "RHS":
            vals = tok[1:] if len(tok) % 2 == 1 else tok
            if len(vals) % 2 or not vals:
                raise ParseError("RHS entries need (row, value) pairs", lineno)
            for rname, val in zip(vals[0::2], vals[1::2]):
                if rname not in row_sense and rname != obj_row:
                    raise ParseError(f"unknown row {rname!r}", lineno)
                if rname in row_sense:
                    rhs[rname] = float(val)
        elif section == "BOUNDS":
            btype = tok[0].upper()
            if btype in ("FR", "MI", "PL", "BV"):
                if len(tok) != 3:
                    raise ParseError("bound entry needs '<type> <set> <col>'", lineno)
                cname = tok[2]
                val = None
            elif btype in ("UP", "LO", "FX"):
                if len(tok) != 4:
                    raise ParseError(
                        "bound entry needs '<type> <set> <col> <value>'", lineno
                    )
                cname = tok[2]
                try:
                    val = float(tok[3])
                except ValueError:
                    raise ParseError(f"bad bound value {tok[3]!r}", lineno) from None
            else:
                raise ParseError(f"unsupported bound type {tok[0]!r}", lineno)
            if cname not in col_index:
                raise ParseError(f"unknown column {cname!r}", lineno)
            j = col_index[cname]
            lo, hi = bounds.get(j, [0.0, math.inf])
            if btype == "UP":
                hi = val
                if val < 0 and bounds.get(j, [0.0])[0] == 0.0:
                    lo = -math.inf  # classic MPS convention for negative UP
            elif btype == "LO":
                lo = val
            elif btype == "FX":
                lo = hi = val
            elif btype == "FR":
                lo, hi = -math.inf, math.inf
            elif btype == "MI":
                lo = -math.inf
            elif btype == "PL":
                hi = math.inf
            elif btype == "BV":
                lo, hi = 0.0, 1.0
                col_int[j] = True
            bounds[j] = [lo, hi]
        elif section in ("NAME", None):
            raise ParseError("data before any section", lineno)

    if not saw_endata:
        raise ParseError("missing ENDATA")
    if obj_row is None:
        raise ParseError("no objective (N) row declared")
    if not col_index:
        raise ParseError("no columns declared")

    n = len(col_index)
    lower = np.zeros(n)
    upper = np.full(n, math.inf)
    for j, (lo, hi) in bounds.items():
        lower[j], upper[j] = lo, hi
    c = np.zeros(n)
    for j, v in obj_coef.items():
        c[j] = v

    a_rows: list[int] = []
    a_cols: list[int] = []
    a_vals: list[float] = []
    b: list[float] = []

    def emit(rname: str, flip: bool):
        i = len(b)
        s = -1.0 if flip else 1.0
        for j in range(n):
            v = col_entries[j].get(rname)
            if v is not None and v != 0.0:
                a_rows.append(i)
                a_cols.append(j)
                a_vals.append(s * v)
        b.append(s * rhs.get(rname, 0.0))

    for rname in row_order:
        sense = row_sense[rname]
        if sense == "L":
            emit(rname, flip=False)
        elif sense == "G":
            emit(rname, flip=True)
        else:
            emit(rname, flip=False)
            emit(rname, flip=True)

    meta = {"var_names": [cn for cn, _ in sorted(col_index.items(), key=lambda kv: kv[1])]}
    return _build_parsed(name, False, c, a_rows, a_cols, a_vals, b, lower, upper,
                         col_int, extra_meta=meta)


def parse_instance(text: str) -> MilpInstance:
    """Parse either format; MPS is recognized by its section headers."""
    for line in text.splitlines():
        s = line.strip()
        if not s or s.startswith("#") or s.startswith("*"):
            continue
        first = s.split()[0].upper()
        if first in ("NAME", "ROWS", "OBJSENSE"):
            return parse_mps(text)
        return parse_native(text)
    raise ParseError("empty document")


# ---------------------------------------------------------------------------
# instance generators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeneratorConfig:
    family: str
    rows: int
    cols: int
    density: float
    seed: int

    def __post_init__(self):
        if self.family not in GENERATOR_FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("rows and cols must be positive")
        if not (0.0 < self.density <= 1.0):
            raise ValueError("density must lie in (0, 1]")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.density * self.rows * self.cols < self.cols:
            raise ValueError(
                "density*rows*cols must be at least cols so every column can "
                "appear in some row"
            )


def generate(config: GeneratorConfig) -> MilpInstance:
    """Build a feasible instance; infeasible draws retry with a perturbed seed."""
    seed = config.seed
    for attempt in range(50):
        inst, witness = _BUILDERS[config.family](config, seed)
        if evaluate_solution(inst, witness).feasible:
            if attempt:
                inst.meta["generator_attempts"] = attempt + 1
                inst.meta["generator_seed_used"] = seed
            return inst
        seed += 1
    raise RuntimeError(f"could not generate a feasible instance for {config}")


def _instance_name(config: GeneratorConfig) -> str:
    return (
        f"{config.family}_{config.rows}x{config.cols}"
        f"_d{config.density:g}_s{config.seed}"
    )


def _coverage_pattern(rng, rows, cols, density, min_row=1):
    M = rng.random((rows, cols)) < density
    for i in range(rows):
        while M[i].sum() < min_row:
            M[i, rng.integers(cols)] = True
    for j in np.where(~M.any(axis=0))[0]:
        M[rng.integers(rows), j] = True
    return M


def _build_set_cover(config: GeneratorConfig, seed: int):
    rng = np.random.default_rng(seed)
    rows, cols = config.rows, config.cols
    # rows need two members or they fix a variable; coverage-correlated costs
    # keep the LP relaxation fractional instead of trivially integral
    M = _coverage_pattern(rng, rows, cols, config.density, min_row=min(2, cols))
    c = M.sum(axis=0).astype(np.float64) + rng.integers(0, 4, cols)
    a_rows, a_cols = np.nonzero(M)
    inst = MilpInstance(
        name=_instance_name(config),
        c=c,
        a_rows=a_rows,
        a_cols=a_cols,
        a_vals=np.full(len(a_rows), -1.0),
        b=np.full(rows, -1.0),
        lower=np.zeros(cols),
        upper=np.ones(cols),
        integrality=np.ones(cols, dtype=bool),
    )
    return inst, np.ones(cols)


def _build_multiknapsack(config: GeneratorConfig, seed: int):
    rng = np.random.default_rng(seed)
    rows, cols = config.rows, config.cols
    M = _coverage_pattern(rng, rows, cols, config.density)
    W = rng.integers(1, 21, (rows, cols)).astype(np.float64) * M
    b = np.maximum(1.0, np.floor(0.5 * W.sum(axis=1)))
    profit = rng.integers(1, 11, cols).astype(np.float64)
    a_rows, a_cols = np.nonzero(M)
    inst = MilpInstance(
        name=_instance_name(config),
        c=-profit,
        a_rows=a_rows,
        a_cols=a_cols,
        a_vals=W[a_rows, a_cols],
        b=b,
        lower=np.zeros(cols),
        upper=np.ones(cols),
        integrality=np.ones(cols, dtype=bool),
    )
    return inst, np.zeros(cols)


def _build_bin_pack_apportion(config: GeneratorConfig, seed: int):
    """Covering-plus-capacity mix: binary open-worker vars, continuous flows.

    rows = number of jobs; cols = total variables. Workers K = max(2, cols//5)
    get binary open indicators; the remaining cols - K variables are continuous
    flows, each tied to a (job, worker) pair. Every job keeps at least one flow.
    """
    rng = np.random.default_rng(seed)
    jobs, cols = config.rows, config.cols
    workers = max(2, cols // 5)
    flows = cols - workers
    if flows < jobs:
        raise ValueError(
            "bin_pack_apportion needs cols >= max(2, cols//5) + rows "
            "(one flow per job)"
        )
    flow_job = np.concatenate(
        [np.arange(jobs), rng.integers(0, jobs, flows - jobs)]
    )
    flow_worker = rng.integers(0, workers, flows)
    demand = rng.uniform(1.0, 5.0, jobs)
    capacity = 1.8 * demand.sum() / workers

    n = workers + flows
    c = np.concatenate([np.ones(workers), 0.01 * rng.uniform(0.5, 1.5, flows)])
    lower = np.zeros(n)
    upper = np.concatenate([np.ones(workers), demand[flow_job]])
    integrality = np.concatenate(
        [np.ones(workers, dtype=bool), np.zeros(flows, dtype=bool)]
    )

    a_rows: list[int] = []
    a_cols: list[int] = []
    a_vals: list[float] = []
    b: list[float] = []
    for j in range(jobs):  # covering: total flow of each job meets its demand
        for t in np.where(flow_job == j)[0]:
            a_rows.append(len(b))
            a_cols.append(workers + int(t))
            a_vals.append(-1.0)
        b.append(-float(demand[j]))
    for k in range(workers):  # capacity: flows on a worker need it open
        i = len(b)
        a_rows.append(i)
        a_cols.append(k)
        a_vals.append(-capacity)
        for t in np.where(flow_worker == k)[0]:
            a_rows.append(i)
            a_cols.append(workers + int(t))
            a_vals.append(1.0)
        b.append(0.0)

    inst = MilpInstance(
        name=_instance_name(config),
        c=c,
        a_rows=np.array(a_rows),
        a_cols=np.array(a_cols),
        a_vals=np.array(a_vals),
        b=np.array(b),
        lower=lower,
        upper=upper,
        integrality=integrality,
    )

    # greedy witness: all workers open, fill each job's flows within capacity
    witness = np.zeros(n)
    witness[:workers] = 1.0
    remaining_cap = np.full(workers, capacity)
    for j in range(jobs):
        need = demand[j]
        for t in np.where(flow_job == j)[0]:
            k = flow_worker[t]
            amt = min(need, remaining_cap[k], upper[workers + t])
            witness[workers + t] = amt
            remaining_cap[k] -= amt
            need -= amt
            if need <= 1e-12:
                break
    return inst, witness


_BUILDERS = {
    "set_cover": _build_set_cover,
    "multiknapsack": _build_multiknapsack,
    "bin_pack_apportion": _build_bin_pack_apportion,
}
