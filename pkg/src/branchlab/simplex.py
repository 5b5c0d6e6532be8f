"""Bounded-variable primal simplex with warm starts for bound-change resolves.

The solver works on the slack form [A | I] x = b where structural variables
keep their box bounds and slacks live in [0, +inf). Dense basis inverse,
Dantzig pricing with a Bland fallback after a run of degenerate pivots, and a
composite phase 1 that prices out-of-bound basic variables (the violated-row
slacks at a cold start, or whatever a warm basis left infeasible).
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .milp import MilpInstance

# basis status codes, also used per-column in warm-start tokens
LOWER, BASIC, UPPER, ZERO = 0, 1, 2, 3

_FEAS_TOL = 1e-9
_DUAL_TOL = 1e-9
_PIVOT_TOL = 1e-10
_REFACTOR_EVERY = 50

TIGHTNESS_TOL = 1e-6


class LpStatus(str, Enum):
    OPTIMAL = "OPTIMAL"
    INFEASIBLE = "INFEASIBLE"
    UNBOUNDED = "UNBOUNDED"
    ITERATION_LIMIT = "ITERATION_LIMIT"


@dataclass
class LpSolution:
    """Solve outcome. x, z, y, reduced_costs are meaningful when OPTIMAL.

    ``basis_status`` covers all n + m columns (structurals then slacks), so the
    BASIC entries always number exactly m.
    """

    status: LpStatus
    x: np.ndarray
    z: float
    y: np.ndarray
    reduced_costs: np.ndarray
    basis_status: np.ndarray
    is_tight: np.ndarray
    iterations: int

    def basis(self) -> "LpBasis":
        return LpBasis(self.basis_status.copy())


@dataclass(frozen=True)
class LpBasis:
    """Opaque warm-start token: the basis status vector of a previous solve."""

    status: np.ndarray


def _effective_bounds(instance, lower, upper):
    lo = instance.lower if lower is None else np.asarray(lower, dtype=np.float64)
    hi = instance.upper if upper is None else np.asarray(upper, dtype=np.float64)
    if len(lo) != instance.n or len(hi) != instance.n:
        raise ValueError("bound override length mismatch")
    if np.any(lo < instance.lower - 1e-9) or np.any(hi > instance.upper + 1e-9):
        raise ValueError("bound overrides must tighten the instance bounds")
    return lo, hi


def solve_relaxation(
    instance: MilpInstance,
    lower=None,
    upper=None,
    warm: LpBasis | LpSolution | None = None,
    pivot_cap: int | None = None,
) -> LpSolution:
    """Solve the LP relaxation under optional tightened bounds.

    ``warm`` may be an LpBasis or a previous LpSolution from the same (m, n)
    shape; an unusable basis silently falls back to a cold start.
    """
    lo, hi = _effective_bounds(instance, lower, upper)
    if np.any(lo > hi):
        return _empty_domain_solution(instance)
    warm_status = None
    if warm is not None:
        warm_status = warm.status if isinstance(warm, LpBasis) else warm.basis_status
        if len(warm_status) != instance.n + instance.m:
            warm_status = None
    return _Simplex(instance, lo, hi, pivot_cap).solve(warm_status)


def resolve_with_bound_change(
    instance: MilpInstance,
    base: LpSolution,
    var: int,
    side: str,
    value: float,
    lower=None,
    upper=None,
    pivot_cap: int | None = None,
) -> LpSolution:
    """Re-solve after one bound move, warm-started from ``base``.

    ``side`` is "raise_lower_to" or "lower_upper_to"; ``lower``/``upper`` give
    the bounds ``base`` was solved under (instance bounds when omitted).
    """
    if base.status is not LpStatus.OPTIMAL:
        raise ValueError("warm resolve requires an OPTIMAL base solution")
    lo, hi = _effective_bounds(instance, lower, upper)
    lo, hi = lo.copy(), hi.copy()
    if side == "raise_lower_to":
        if value < lo[var] - 1e-9:
            raise ValueError("raise_lower_to must not loosen the bound")
        lo[var] = value
    elif side == "lower_upper_to":
        if value > hi[var] + 1e-9:
            raise ValueError("lower_upper_to must not loosen the bound")
        hi[var] = value
    else:
        raise ValueError(f"unknown side {side!r}")
    if lo[var] > hi[var]:
        return _empty_domain_solution(instance)
    return _Simplex(instance, lo, hi, pivot_cap).solve(base.basis_status)


def _empty_domain_solution(instance) -> LpSolution:
    n, m = instance.n, instance.m
    return LpSolution(
        status=LpStatus.INFEASIBLE,
        x=np.zeros(n),
        z=np.inf,
        y=np.zeros(m),
        reduced_costs=np.zeros(n),
        basis_status=np.full(n + m, LOWER, dtype=np.int8),
        is_tight=np.zeros(m, dtype=bool),
        iterations=0,
    )


def _slack_form(instance) -> np.ndarray:
    """Dense [A | I] of the instance, cached on the instance's meta dict."""
    cached = instance.meta.get("_slack_form")
    if cached is not None and cached.shape == (instance.m, instance.n + instance.m):
        return cached
    if instance.m:
        form = np.hstack([instance.dense_matrix(), np.eye(instance.m)])
    else:
        form = np.zeros((0, instance.n))
    instance.meta["_slack_form"] = form
    return form


class _Simplex:
    def __init__(self, instance, lo, hi, pivot_cap):
        self.inst = instance
        n, m = instance.n, instance.m
        self.n, self.m = n, m
        self.A = _slack_form(instance)
        self.b = instance.b.astype(np.float64)
        self.lb = np.concatenate([lo, np.zeros(m)])
        self.ub = np.concatenate([hi, np.full(m, np.inf)])
        self.cost = np.concatenate([instance.c, np.zeros(m)])
        self.max_iter = pivot_cap if pivot_cap is not None else 50 * (n + m)
        self.trace = os.environ.get("BRANCHLAB_LP_TRACE") == "1"

    # -- start bases ------------------------------------------------------

    def _cold_start(self):
        ncols = self.n + self.m
        status = np.empty(ncols, dtype=np.int8)
        for j in range(self.n):
            if np.isfinite(self.lb[j]):
                status[j] = LOWER
            elif np.isfinite(self.ub[j]):
                status[j] = UPPER
            else:
                status[j] = ZERO
        status[self.n:] = BASIC
        basis = np.arange(self.n, ncols)
        Binv = np.eye(self.m)
        return status, basis, Binv

    def _try_warm_start(self, warm_status):
        status = warm_status.astype(np.int8).copy()
        basis = np.where(status == BASIC)[0]
        if len(basis) != self.m:
            return None
        # repair nonbasic statuses that conflict with the current bounds
        for j in np.where(status != BASIC)[0]:
            if status[j] == LOWER and not np.isfinite(self.lb[j]):
                status[j] = UPPER if np.isfinite(self.ub[j]) else ZERO
            elif status[j] == UPPER and not np.isfinite(self.ub[j]):
                status[j] = LOWER if np.isfinite(self.lb[j]) else ZERO
            elif status[j] == ZERO and np.isfinite(self.lb[j]):
                status[j] = LOWER
            elif status[j] == ZERO and np.isfinite(self.ub[j]):
                status[j] = UPPER
        if self.m == 0:
            return status, basis, np.zeros((0, 0))
        try:
            Binv = np.linalg.inv(self.A[:, basis])
        except np.linalg.LinAlgError:
            return None
        if not np.isfinite(Binv).all():
            return None
        return status, basis, Binv

    # -- core loop ---------------------------------------------------------

    def solve(self, warm_status=None) -> LpSolution:
        start = self._try_warm_start(warm_status) if warm_status is not None else None
        self.status, self.basis, self.Binv = start if start else self._cold_start()
        self.xN = self._nonbasic_values()
        self.xB = self._basic_values()

        degenerate_run = 0
        bland = False
        result = LpStatus.ITERATION_LIMIT
        it = 0
        while it < self.max_iter:
            if it and it % _REFACTOR_EVERY == 0:
                self._refactor()
            below = self.xB < self.lb[self.basis] - _FEAS_TOL
            above = self.xB > self.ub[self.basis] + _FEAS_TOL
            phase1 = bool(below.any() or above.any())
            if phase1:
                cost = np.zeros(self.n + self.m)
                cost[self.basis[below]] = -1.0
                cost[self.basis[above]] = 1.0
            else:
                cost = self.cost

            y = cost[self.basis] @ self.Binv if self.m else np.zeros(0)
            d = cost - y @ self.A if self.m else cost.copy()

            entering, direction = self._price(d, bland)
            if entering is None:
                result = LpStatus.INFEASIBLE if phase1 else LpStatus.OPTIMAL
                break

            w = self.Binv @ self.A[:, entering] if self.m else np.zeros(0)
            step, kind, pos, leave_side = self._ratio_test(
                entering, direction, w, below, above, bland
            )
            if kind == "unbounded":
                # a phase-1 ray would contradict bounded infeasibility; treat
                # as numerical failure rather than claim UNBOUNDED
                result = LpStatus.ITERATION_LIMIT if phase1 else LpStatus.UNBOUNDED
                break

            if self.trace:
                print(
                    f"[lp] it={it} phase={1 if phase1 else 2} enter={entering} "
                    f"dir={direction} step={step:.3e} kind={kind}"
                )

            degenerate_run = degenerate_run + 1 if step <= 1e-11 else 0
            if degenerate_run > 2 * (self.n + self.m):
                bland = True

            self._apply_step(entering, direction, w, step, kind, pos, leave_side)
            it += 1

        return self._finish(result, it)

    def _nonbasic_values(self):
        v = np.zeros(self.n + self.m)
        lower_mask = self.status == LOWER
        upper_mask = self.status == UPPER
        v[lower_mask] = self.lb[lower_mask]
        v[upper_mask] = self.ub[upper_mask]
        return v

    def _basic_values(self):
        if self.m == 0:
            return np.zeros(0)
        nb = self.status != BASIC
        rhs = self.b - self.A[:, nb] @ self.xN[nb]
        return self.Binv @ rhs

    def _refactor(self):
        if self.m == 0:
            return
        try:
            self.Binv = np.linalg.inv(self.A[:, self.basis])
        except np.linalg.LinAlgError:
            pass  # keep the product-form inverse
        self.xB = self._basic_values()

    def _price(self, d, bland):
        status = self.status
        can_up = (status == LOWER) | (status == ZERO)
        can_dn = (status == UPPER) | (status == ZERO)
        up_ok = can_up & (d < -_DUAL_TOL)
        dn_ok = can_dn & (d > _DUAL_TOL)
        eligible = np.where(up_ok | dn_ok)[0]
        if len(eligible) == 0:
            return None, 0
        if bland:
            e = int(eligible[0])
        else:
            e = int(eligible[np.argmax(np.abs(d[eligible]))])
        return e, (1 if up_ok[e] else -1)

    def _ratio_test(self, entering, direction, w, below, above, bland):
        """Smallest blocking step for the entering move.

        Returns (step, kind, basis_pos, leave_side) with kind in
        {"pivot", "flip", "unbounded"}. Infeasible basic variables block when
        they reach the bound they violate; feasible ones at either bound.
        """
        delta = -direction * w
        lbv, ubv = self.lb[self.basis], self.ub[self.basis]
        usable = np.abs(w) > _PIVOT_TOL
        t = np.full(self.m, np.inf)
        side = np.full(self.m, LOWER, dtype=np.int8)
        feas = usable & ~below & ~above
        with np.errstate(divide="ignore", invalid="ignore"):
            dn = feas & (delta < 0) & np.isfinite(lbv)
            t[dn] = (self.xB[dn] - lbv[dn]) / -delta[dn]
            up = feas & (delta > 0) & np.isfinite(ubv)
            t[up] = (ubv[up] - self.xB[up]) / delta[up]
            bl = usable & below & (delta > 0)
            t[bl] = (lbv[bl] - self.xB[bl]) / delta[bl]
            ab = usable & above & (delta < 0)
            t[ab] = (ubv[ab] - self.xB[ab]) / delta[ab]
        side[up | ab] = UPPER
        np.maximum(t, 0.0, out=t)

        flip_step = np.inf
        if np.isfinite(self.lb[entering]) and np.isfinite(self.ub[entering]):
            flip_step = self.ub[entering] - self.lb[entering]

        t_pivot = t.min() if self.m else np.inf
        if not np.isfinite(t_pivot):
            if not np.isfinite(flip_step):
                return np.inf, "unbounded", -1, LOWER
            return flip_step, "flip", -1, LOWER
        if flip_step < t_pivot - 1e-12:
            return flip_step, "flip", -1, LOWER
        near = np.where(t <= t_pivot + 1e-9)[0]
        if bland:
            pos = int(near[np.argmin(self.basis[near])])
        else:
            # largest pivot magnitude for stability, then lowest variable index
            aw = np.abs(w[near])
            best = aw.max()
            cand = near[aw >= best - 1e-15]
            pos = int(cand[np.argmin(self.basis[cand])])
        return float(t[pos]), "pivot", pos, int(side[pos])

    def _apply_step(self, entering, direction, w, step, kind, pos, leave_side):
        delta = -direction * w
        if kind == "flip":
            self.xB += step * delta
            self.status[entering] = UPPER if direction == 1 else LOWER
            self.xN[entering] = (
                self.ub[entering] if direction == 1 else self.lb[entering]
            )
            return
        # pivot: entering becomes basic at position pos, leaver snaps to bound
        leaving = self.basis[pos]
        enter_start = (
            self.xN[entering] if self.status[entering] != ZERO else 0.0
        )
        self.xB += step * delta
        enter_val = enter_start + direction * step
        bound = self.lb[leaving] if leave_side == LOWER else self.ub[leaving]
        self.status[leaving] = leave_side
        self.xN[leaving] = bound
        self.status[entering] = BASIC
        self.xN[entering] = 0.0
        self.basis[pos] = entering
        self.xB[pos] = enter_val
        # product-form update of the basis inverse
        piv = w[pos]
        row = self.Binv[pos] / piv
        self.Binv -= np.outer(w, row)
        self.Binv[pos] = row

    def _finish(self, result, iterations) -> LpSolution:
        n, m = self.n, self.m
        x_full = self.xN.copy()
        x_full[self.basis] = self.xB
        x = x_full[:n]
        if result is LpStatus.OPTIMAL:
            y = self.cost[self.basis] @ self.Binv if m else np.zeros(0)
            rc = self.inst.c - (y @ self.A[:, :n] if m else 0.0)
            z = float(self.inst.c @ x)
        else:
            y = np.zeros(m)
            rc = np.zeros(n)
            z = np.inf if result is LpStatus.INFEASIBLE else -np.inf
        activity = self.A[:, :n] @ x if m else np.zeros(0)
        tight = np.abs(activity - self.b) <= TIGHTNESS_TOL * np.maximum(
            1.0, np.abs(self.b)
        )
        return LpSolution(
            status=result,
            x=x,
            z=z,
            y=y,
            reduced_costs=np.asarray(rc, dtype=np.float64),
            basis_status=self.status.copy(),
            is_tight=tight,
            iterations=iterations,
        )
