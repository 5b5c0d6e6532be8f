"""Bipartite state extraction: constraint, edge, and variable features.

The state mirrors the instance's constraint/variable incidence structure.
Constraint rows carry 5 features, edges 1, variables 19, in the fixed column
orders below. Norm-based features use Euclidean norms; zero norms are guarded
to 0 and flagged on the returned state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .milp import MilpInstance
from .simplex import BASIC, LOWER, UPPER, ZERO, LpSolution, LpStatus

C_COLUMNS = ("obj_cos_sim", "bias", "is_tight", "dualsol_val", "age")

V_COLUMNS = (
    "type_binary",
    "type_integer",
    "type_impl_integer",
    "type_continuous",
    "coef",
    "has_lb",
    "has_ub",
    "sol_is_at_lb",
    "sol_is_at_ub",
    "sol_frac",
    "basis_lower",
    "basis_basic",
    "basis_upper",
    "basis_zero",
    "reduced_cost",
    "age",
    "sol_val",
    "inc_val",
    "avg_inc_val",
)

_AT_BOUND_TOL = 1e-6


@dataclass
class TreeStats:
    """Episode-level counters feeding the age and incumbent features."""

    total_lps: int
    row_first_tight: np.ndarray  # LP index when first seen tight; -1 never
    var_first_basic: np.ndarray  # LP index when first seen basic; -1 never
    incumbent_value: float
    incumbent_x: np.ndarray | None
    incumbent_count: int
    incumbent_sum: np.ndarray

    @classmethod
    def empty(cls, instance: MilpInstance) -> "TreeStats":
        return cls(
            total_lps=1,
            row_first_tight=np.full(instance.m, -1, dtype=np.int64),
            var_first_basic=np.full(instance.n, -1, dtype=np.int64),
            incumbent_value=math.inf,
            incumbent_x=None,
            incumbent_count=0,
            incumbent_sum=np.zeros(instance.n),
        )


@dataclass
class BipartiteState:
    """Feature tensors: C is m x 5, V is n x 19, edges one per nonzero of A."""

    C: np.ndarray
    edge_row: np.ndarray
    edge_col: np.ndarray
    edge_val: np.ndarray
    V: np.ndarray
    zero_norm_objective: bool = False
    zero_norm_rows: tuple[int, ...] = ()

    @property
    def m(self) -> int:
        return self.C.shape[0]

    @property
    def n(self) -> int:
        return self.V.shape[0]

    @property
    def nnz(self) -> int:
        return len(self.edge_val)


def _age(first_seen: np.ndarray, total_lps: int) -> np.ndarray:
    out = np.zeros(len(first_seen))
    seen = first_seen >= 0
    if total_lps > 0:
        out[seen] = (total_lps - first_seen[seen]) / total_lps
    return np.clip(out, 0.0, 1.0)


def extract_state(
    instance: MilpInstance,
    lp: LpSolution,
    lower: np.ndarray,
    upper: np.ndarray,
    stats: TreeStats,
) -> BipartiteState:
    """Build the bipartite state of one node from its LP solution.

    ``lower``/``upper`` are the node's local bounds; ``stats`` supplies the
    episode counters for the age and incumbent features.
    """
    if lp.status is not LpStatus.OPTIMAL:
        raise ValueError("state extraction needs an OPTIMAL LP solution")
    n, m = instance.n, instance.m
    x = lp.x
    c = instance.c

    c_norm = float(np.linalg.norm(c))
    zero_obj = c_norm == 0.0
    c_scale = 0.0 if zero_obj else 1.0 / c_norm

    row_norm = np.zeros(m)
    np.add.at(row_norm, instance.a_rows, instance.a_vals**2)
    row_norm = np.sqrt(row_norm)
    zero_rows = tuple(int(i) for i in np.where(row_norm == 0.0)[0])
    row_scale = np.zeros(m)
    nz = row_norm > 0.0
    row_scale[nz] = 1.0 / row_norm[nz]

    # constraint features
    dot_ac = np.zeros(m)
    np.add.at(dot_ac, instance.a_rows, instance.a_vals * c[instance.a_cols])
    cos = dot_ac * row_scale * c_scale
    C = np.empty((m, 5))
    C[:, 0] = cos
    C[:, 1] = instance.b * row_scale
    C[:, 2] = lp.is_tight.astype(np.float64)
    C[:, 3] = lp.y * c_scale
    C[:, 4] = _age(stats.row_first_tight, stats.total_lps)

    # edge features: coefficient normalized per constraint row
    edge_val = instance.a_vals * row_scale[instance.a_rows]

    # variable features
    V = np.zeros((n, 19))
    ints = instance.integrality
    finite_lo = np.isfinite(lower)
    finite_hi = np.isfinite(upper)
    binary = ints & finite_lo & finite_hi & (lower == 0.0) & (upper == 1.0)
    V[:, 0] = binary
    V[:, 1] = ints & ~binary
    # type_impl_integer stays 0: the generators never produce implied integers
    V[:, 3] = ~ints
    V[:, 4] = c * c_scale
    V[:, 5] = finite_lo
    V[:, 6] = finite_hi
    V[:, 7] = finite_lo & (np.abs(x - lower) <= _AT_BOUND_TOL)
    V[:, 8] = finite_hi & (np.abs(x - upper) <= _AT_BOUND_TOL)
    frac = x - np.floor(x)
    V[:, 9] = np.where(ints, frac, 0.0)
    basis = lp.basis_status[:n]
    V[:, 10] = basis == LOWER
    V[:, 11] = basis == BASIC
    V[:, 12] = basis == UPPER
    V[:, 13] = basis == ZERO
    V[:, 14] = lp.reduced_costs * c_scale
    V[:, 15] = _age(stats.var_first_basic, stats.total_lps)
    V[:, 16] = x
    if stats.incumbent_x is not None:
        V[:, 17] = stats.incumbent_x
    if stats.incumbent_count > 0:
        V[:, 18] = stats.incumbent_sum / stats.incumbent_count

    return BipartiteState(
        C=C,
        edge_row=instance.a_rows.copy(),
        edge_col=instance.a_cols.copy(),
        edge_val=edge_val,
        V=V,
        zero_norm_objective=zero_obj,
        zero_norm_rows=zero_rows,
    )
