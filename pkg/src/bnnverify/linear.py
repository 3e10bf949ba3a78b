"""Linear constraint core: variables, bounds, equations, assignment.

Feasibility and optimization run a bounded-variable two-phase primal
simplex built from scratch (dense tableau, Dantzig pricing with a Bland
fallback after a degenerate streak). Branch scoping is a trail of bound
changes plus equation/variable counts; push/pop restores exact state.

Tolerances: equation satisfaction 1e-6, pivot floor 1e-10, bound
comparison 1e-9.
"""

from dataclasses import dataclass

import numpy as np

from ._kernels import pivot

EQ_TOL = 1e-6
BOUND_TOL = 1e-9
PIVOT_FLOOR = 1e-10
FEAS_TOL = 1e-7
BLAND_AFTER = 100


class NumericalInstabilityError(Exception):
    """Simplex could not make reliable progress (tiny pivots / iteration cap)."""


@dataclass
class LinearEquation:
    """Sum of coeffs[x] * x equals constant."""

    coeffs: dict
    constant: float

    def __post_init__(self):
        self.coeffs = {x: float(c) for x, c in self.coeffs.items() if c != 0.0}
        if not self.coeffs:
            raise ValueError("equation needs at least one nonzero coefficient")
        self.constant = float(self.constant)

    def residual(self, assignment):
        return sum(c * assignment[x] for x, c in self.coeffs.items()) - self.constant


class LinearCore:
    """Mutable store of bounds, equations and the current assignment."""

    def __init__(self):
        self.lowers = []
        self.uppers = []
        self.assignment = []
        self.equations = []
        self._trail = []  # (var, old_lo, old_hi) bound-change records
        self.iterations = 0  # simplex pivots performed, cumulative

    @property
    def n_vars(self):
        return len(self.lowers)

    def declare_variable(self):
        self.lowers.append(-np.inf)
        self.uppers.append(np.inf)
        self.assignment.append(0.0)
        return len(self.lowers) - 1

    def tighten_bounds(self, x, lower=None, upper=None):
        """Monotone tighten; returns False iff the interval became empty."""
        old_lo, old_hi = self.lowers[x], self.uppers[x]
        new_lo = old_lo if lower is None else max(old_lo, float(lower))
        new_hi = old_hi if upper is None else min(old_hi, float(upper))
        if new_lo != old_lo or new_hi != old_hi:
            self._trail.append((x, old_lo, old_hi))
            self.lowers[x] = new_lo
            self.uppers[x] = new_hi
        return new_lo <= new_hi + BOUND_TOL

    def assert_equation(self, eq):
        for x in eq.coeffs:
            if x >= self.n_vars:
                raise ValueError(f"equation references undeclared variable {x}")
        self.equations.append(eq)

    def assert_leq(self, coeffs, rhs):
        """Add sum(coeffs) <= rhs via a fresh nonnegative slack variable."""
        items = {x: c for x, c in coeffs.items() if c != 0.0}
        if len(items) == 1:
            ((x, c),) = items.items()
            if c > 0:
                return self.tighten_bounds(x, upper=rhs / c)
            return self.tighten_bounds(x, lower=rhs / c)
        s = self.declare_variable()
        self.tighten_bounds(s, lower=0.0)
        items[s] = 1.0
        self.assert_equation(LinearEquation(items, rhs))
        return True

    # -- branch scoping ----------------------------------------------------

    def push(self):
        return (len(self._trail), len(self.equations), self.n_vars)

    def pop(self, mark):
        trail_len, n_eqs, n_vars = mark
        while len(self._trail) > trail_len:
            x, old_lo, old_hi = self._trail.pop()
            self.lowers[x] = old_lo
            self.uppers[x] = old_hi
        del self.equations[n_eqs:]
        del self.lowers[n_vars:]
        del self.uppers[n_vars:]
        del self.assignment[n_vars:]

    # -- solving -----------------------------------------------------------

    def _build_system(self, hints=None):
        n = self.n_vars
        lo = np.array(self.lowers, dtype=float)
        hi = np.array(self.uppers, dtype=float)
        rows = []
        rhs = []
        for eq in self.equations:
            row = np.zeros(n)
            for x, c in eq.coeffs.items():
                row[x] = c
            rows.append(row)
            rhs.append(eq.constant)
        extra_cols = 0
        obj_hint = None
        if hints:
            extra_cols = 2 * len(hints)
            obj_hint = np.zeros(n + extra_cols)
            rows = [np.concatenate([r, np.zeros(extra_cols)]) for r in rows]
            col = n
            for x, target in hints.items():
                row = np.zeros(n + extra_cols)
                row[x] = 1.0
                row[col] = -1.0
                row[col + 1] = 1.0
                rows.append(row)
                rhs.append(float(target))
                obj_hint[col] = 1.0
                obj_hint[col + 1] = 1.0
                col += 2
            lo = np.concatenate([lo, np.zeros(extra_cols)])
            hi = np.concatenate([hi, np.full(extra_cols, np.inf)])
        A = np.array(rows) if rows else np.zeros((0, len(lo)))
        b = np.array(rhs)
        return A, b, lo, hi, obj_hint

    def find_feasible(self, hints=None):
        """An assignment satisfying all equations and bounds, or None.

        With hints (a var -> value map), prefers solutions keeping hinted
        variables at their target values (minimizes total L1 deviation).
        """
        if any(
            self.lowers[x] > self.uppers[x] + BOUND_TOL for x in range(self.n_vars)
        ):
            return None
        A, b, lo, hi, obj_hint = self._build_system(hints)
        objective = obj_hint if obj_hint is not None else np.zeros(A.shape[1])
        status, _, x = _solve_lp(A, b, lo, hi, objective, self)
        if status != "optimal":
            return None
        self.assignment = list(x[: self.n_vars])
        return np.array(self.assignment)

    def optimize(self, objective, direction):
        """Optimize a sparse linear objective over the current relaxation.

        Returns ('optimal', value, assignment), ('infeasible', None, None)
        or ('unbounded', None, None).
        """
        if direction not in ("min", "max"):
            raise ValueError("direction must be 'min' or 'max'")
        A, b, lo, hi, _ = self._build_system()
        c = np.zeros(A.shape[1])
        sgn = 1.0 if direction == "min" else -1.0
        for x, coef in objective.items():
            c[x] = sgn * coef
        status, value, x = _solve_lp(A, b, lo, hi, c, self)
        if status != "optimal":
            return status, None, None
        return "optimal", sgn * value, x[: self.n_vars]

    def check_assignment(self, assignment=None, tol=EQ_TOL):
        """True iff the assignment satisfies every equation and bound."""
        a = self.assignment if assignment is None else assignment
        for eq in self.equations:
            if abs(eq.residual(a)) > tol:
                return False
        for x in range(self.n_vars):
            if not (
                self.lowers[x] - BOUND_TOL <= a[x] <= self.uppers[x] + BOUND_TOL
            ):
                return False
        return True


def _initial_values(lo, hi):
    x = np.zeros(len(lo))
    for j in range(len(lo)):
        if np.isfinite(lo[j]):
            x[j] = lo[j]
        elif np.isfinite(hi[j]):
            x[j] = min(hi[j], 0.0)
    return x


def _solve_lp(A, b, lo, hi, c, stats):
    """Two-phase bounded-variable simplex. Returns (status, objective, x)."""
    m, n = A.shape
    x0 = _initial_values(lo, hi)
    resid = b - A @ x0 if m else np.zeros(0)
    ncols = n + m
    T = np.zeros((m, ncols + 1))
    T[:, :n] = A
    T[:, -1] = b
    for i in range(m):
        # artificial column oriented so its starting value is |resid_i| >= 0
        if resid[i] >= 0:
            T[i, n + i] = 1.0
        else:
            T[i, :] *= -1.0
            T[i, n + i] = 1.0
    lo_full = np.concatenate([lo, np.zeros(m)])
    hi_full = np.concatenate([hi, np.full(m, np.inf)])
    xval = np.concatenate([x0, np.abs(resid)])
    basis = list(range(n, ncols))
    in_basis = np.zeros(ncols, dtype=bool)
    in_basis[n:] = True

    if m:
        c1 = np.zeros(ncols)
        c1[n:] = 1.0
        status = _iterate(T, basis, in_basis, xval, lo_full, hi_full, c1, stats)
        if status != "optimal":  # phase 1 is bounded below by 0
            raise NumericalInstabilityError("phase-1 simplex did not converge")
        if float(np.sum(xval[n:])) > FEAS_TOL:
            return "infeasible", None, None
        hi_full[n:] = 0.0  # freeze artificials for phase 2
        xval[n:] = np.where(in_basis[n:], xval[n:], 0.0)

    c2 = np.zeros(ncols)
    c2[:n] = c
    status = _iterate(T, basis, in_basis, xval, lo_full, hi_full, c2, stats)
    if status == "unbounded":
        return "unbounded", None, None
    return "optimal", float(c @ xval[:n]), xval[:n].copy()


def _iterate(T, basis, in_basis, xval, lo, hi, c, stats):
    m, total = T.shape
    ncols = total - 1
    degen_streak = 0
    max_iter = 500 + 50 * (m + ncols)
    for _ in range(max_iter):
        # refresh basic values from the tableau
        nb = np.where(~in_basis)[0]
        if m:
            xb = T[:, -1] - T[:, nb] @ xval[nb]
            for r, var in enumerate(basis):
                xval[var] = xb[r]
        # reduced costs
        if m:
            y = c[basis]
            d = c - y @ T[:, :ncols]
        else:
            d = c.copy()
        use_bland = degen_streak >= BLAND_AFTER
        je, sigma = _pick_entering(d, nb, xval, lo, hi, use_bland)
        if je is None:
            return "optimal"
        # ratio test
        col = T[:, je] if m else np.zeros(0)
        t_enter = (hi[je] - xval[je]) if sigma > 0 else (xval[je] - lo[je])
        t_best = t_enter
        leave_row = -1
        leave_at_lower = True
        for i in range(m):
            delta = sigma * col[i]
            var = basis[i]
            if delta > PIVOT_FLOOR:
                if np.isfinite(lo[var]):
                    limit = (xval[var] - lo[var]) / delta
                    if limit < t_best - BOUND_TOL or (
                        limit < t_best + BOUND_TOL
                        and (leave_row < 0 or abs(col[i]) > abs(col[leave_row]))
                    ):
                        t_best, leave_row, leave_at_lower = limit, i, True
            elif delta < -PIVOT_FLOOR:
                if np.isfinite(hi[var]):
                    limit = (hi[var] - xval[var]) / (-delta)
                    if limit < t_best - BOUND_TOL or (
                        limit < t_best + BOUND_TOL
                        and (leave_row < 0 or abs(col[i]) > abs(col[leave_row]))
                    ):
                        t_best, leave_row, leave_at_lower = limit, i, False
        if not np.isfinite(t_best):
            return "unbounded"
        t_best = max(t_best, 0.0)
        degen_streak = degen_streak + 1 if t_best <= BOUND_TOL else 0
        stats.iterations += 1
        if leave_row < 0:
            # entering variable flips to its opposite bound; no pivot
            xval[je] = hi[je] if sigma > 0 else lo[je]
            continue
        if abs(T[leave_row, je]) < PIVOT_FLOOR:
            raise NumericalInstabilityError(
                f"pivot magnitude {abs(T[leave_row, je]):.2e} below floor"
            )
        leaving = basis[leave_row]
        xval[leaving] = lo[leaving] if leave_at_lower else hi[leaving]
        xval[je] = xval[je] + sigma * t_best
        pivot(T, leave_row, je)
        basis[leave_row] = je
        in_basis[leaving] = False
        in_basis[je] = True
    raise NumericalInstabilityError("simplex iteration cap exceeded")


def _pick_entering(d, nb, xval, lo, hi, use_bland):
    best = None
    best_score = 0.0
    for j in nb:
        if lo[j] == hi[j]:
            continue  # fixed variable can never move
        dj = d[j]
        at_lo = xval[j] <= lo[j] + BOUND_TOL
        at_hi = xval[j] >= hi[j] - BOUND_TOL
        if dj < -EQ_TOL and not at_hi:
            score, sigma = -dj, 1.0
        elif dj > EQ_TOL and not at_lo:
            score, sigma = dj, -1.0
        else:
            continue
        if use_bland:
            return j, sigma
        if score > best_score:
            best, best_score = (j, sigma), score
    if best is None:
        return None, 0.0
    return best
