"""Geometry of the jump generating function.

For a finite-support measure the generating function

    phi(a) = sum_z mu(z) exp(a . z)

is an exact finite sum, smooth and strictly convex.  Its unit sublevel
set D = {phi <= 1} is compact whenever the support positively spans
R^d, and each unit direction q picks out the unique boundary point
a(q) where q is the outward normal, equivalently where the mean of the
exponentially tilted walk is parallel to q.  This module computes
a(q), the convex conjugate of log phi, quasipotentials, the action of
piecewise-linear paths, and the positivity margins used by the
exponential exit-moment estimates.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

from .errors import SolverError, ValidationError
from .measures import JumpMeasure, lambda_of

#: |phi(a) - 1| tolerance for points on the boundary of D
PHI_TOL = 1e-10
#: angular tolerance (radians) between grad phi(a(q)) and q
DIR_TOL = 1e-8
#: sentinel returned by the conjugate outside the support hull
INF = math.inf


class GenFun:
    """Evaluator for phi, its gradient and Hessian."""

    __slots__ = ("measure", "_z", "_p")

    def __init__(self, measure: JumpMeasure):
        self.measure = measure
        self._z = measure.support.astype(float)
        self._p = measure.probabilities

    @property
    def dim(self) -> int:
        return self.measure.dim

    def phi(self, a: Sequence[float]) -> float:
        a = np.asarray(a, dtype=float)
        with np.errstate(over="ignore"):
            return float(np.dot(self._p, np.exp(self._z @ a)))

    def grad_phi(self, a: Sequence[float]) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        w = self._p * np.exp(self._z @ a)
        return w @ self._z

    def hessian_phi(self, a: Sequence[float]) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        w = self._p * np.exp(self._z @ a)
        return (self._z * w[:, None]).T @ self._z


def phi(gf: GenFun, a: Sequence[float]) -> float:
    """phi(a), the exact finite sum over the atoms."""
    return gf.phi(a)


def grad_phi(gf: GenFun, a: Sequence[float]) -> np.ndarray:
    """Gradient of phi; at a on the boundary of D this is the tilted-walk mean."""
    return gf.grad_phi(a)


@dataclass(frozen=True)
class DirectionSolve:
    """Boundary point of D whose outward normal is the direction q."""

    q: np.ndarray
    a: np.ndarray
    residual_phi: float
    residual_dir: float
    tilted_mean_norm: float

    def check(self, phi_tol: float = PHI_TOL, dir_tol: float = DIR_TOL) -> None:
        if self.residual_phi > phi_tol or self.residual_dir > dir_tol:
            raise SolverError(
                f"direction solve residuals {self.residual_phi:.2e}/"
                f"{self.residual_dir:.2e} exceed tolerances", best=self)


def _direction_residuals(gf: GenFun, a: np.ndarray, q: np.ndarray) -> Tuple[float, float, float]:
    g = gf.grad_phi(a)
    gn = float(np.linalg.norm(g))
    if gn == 0.0:
        return abs(gf.phi(a) - 1.0), math.pi, 0.0
    # atan2 of the orthogonal part stays accurate for tiny angles, where
    # acos of the normalized dot product bottoms out around sqrt(eps)
    along = float(np.dot(g, q))
    perp = float(np.linalg.norm(g - along * q))
    return abs(gf.phi(a) - 1.0), math.atan2(perp, along), gn


def _newton_direction(gf: GenFun, q: np.ndarray, max_iter: int) -> Optional[np.ndarray]:
    """Damped Newton on (grad phi - s q, phi - 1) in the unknowns (a, s)."""
    d = gf.dim
    a = np.zeros(d)
    s = max(float(np.dot(gf.grad_phi(a), q)), 1e-3)

    def residual(a, s):
        return np.concatenate([gf.grad_phi(a) - s * q, [gf.phi(a) - 1.0]])

    r = residual(a, s)
    for _ in range(max_iter):
        if np.linalg.norm(r) < 1e-14:
            break
        jac = np.zeros((d + 1, d + 1))
        jac[:d, :d] = gf.hessian_phi(a)
        jac[:d, d] = -q
        jac[d, :d] = gf.grad_phi(a)
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            return None
        # backtracking line search on the residual norm
        t = 1.0
        base = np.linalg.norm(r)
        for _ in range(40):
            a_new = a + t * step[:d]
            s_new = s + t * step[d]
            r_new = residual(a_new, s_new)
            if np.linalg.norm(r_new) < (1.0 - 0.25 * t) * base:
                a, s, r = a_new, s_new, r_new
                break
            t *= 0.5
        else:
            return None
    if s <= 0 or np.linalg.norm(r) > 1e-11:
        return None
    return a


def _tilt_argmin(gf: GenFun, kappa: float, q: np.ndarray, a0: np.ndarray) -> np.ndarray:
    """Minimize phi(a) - kappa * a.q (strictly convex, coercive)."""
    a = a0.copy()
    for _ in range(200):
        g = gf.grad_phi(a) - kappa * q
        if np.linalg.norm(g) < 1e-14 * max(1.0, kappa):
            return a
        h = gf.hessian_phi(a)
        try:
            step = np.linalg.solve(h, -g)
        except np.linalg.LinAlgError:
            step = -g
        t = 1.0
        f0 = gf.phi(a) - kappa * float(np.dot(a, q))
        gd = float(np.dot(g, step))
        for _ in range(60):
            cand = a + t * step
            if gf.phi(cand) - kappa * float(np.dot(cand, q)) <= f0 + 1e-4 * t * gd:
                break
            t *= 0.5
        a = a + t * step
    return a


def solve_direction(gf: GenFun, q: Sequence[float], max_iter: int = 80) -> DirectionSolve:
    """Find a(q): the point of the boundary of D with outward normal q.

    q must be a unit vector.  A damped Newton solve of the coupled
    system {phi(a) = 1, grad phi(a) = s q, s > 0} is tried first; if it
    stalls, the solve falls back to a bracketed scalar search in the
    tilt strength kappa, where each inner step minimizes
    phi(a) - kappa a.q (whose optimizer automatically has tilted mean
    kappa q) and the bracket encloses phi = 1.
    """
    q = np.asarray(q, dtype=float)
    if abs(np.linalg.norm(q) - 1.0) > 1e-12:
        raise ValidationError("q must be a unit vector")
    if float(np.linalg.norm(gf.measure.mean)) <= 1e-12:
        raise SolverError(
            "zero-drift measure: D degenerates to a point and the direction "
            "map is undefined", best=np.zeros(gf.dim))

    a = _newton_direction(gf, q, max_iter)
    if a is None:
        # nested search: kappa -> phi(argmin phi - kappa a.q) is increasing
        a_cur = _tilt_argmin(gf, 1e-8, q, np.zeros(gf.dim))
        lo, lo_a = 1e-8, a_cur
        if gf.phi(lo_a) > 1.0 + PHI_TOL:
            raise SolverError("interior minimum of phi exceeds 1; measure degenerate",
                              best=lo_a)
        hi = 1.0
        hi_a = _tilt_argmin(gf, hi, q, lo_a)
        for _ in range(200):
            if gf.phi(hi_a) > 1.0:
                break
            lo, lo_a = hi, hi_a
            hi *= 2.0
            hi_a = _tilt_argmin(gf, hi, q, hi_a)
        else:
            raise SolverError("failed to bracket phi = 1 along the tilt family", best=hi_a)
        a = lo_a
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            mid_a = _tilt_argmin(gf, mid, q, a)
            a = mid_a
            if gf.phi(mid_a) > 1.0:
                hi = mid
            else:
                lo = mid
            if abs(gf.phi(mid_a) - 1.0) < 1e-14:
                break
        # polish with the full Newton system from the bracketed point
        polished = _polish_direction(gf, q, a)
        if polished is not None:
            a = polished

    rphi, rdir, gn = _direction_residuals(gf, a, q)
    if gn <= 1e-9:
        raise SolverError(
            "gradient of phi vanishes on the boundary of D (zero-drift "
            "degenerate measure); the direction map is undefined", best=a)
    solve = DirectionSolve(q=q, a=a, residual_phi=rphi, residual_dir=rdir,
                           tilted_mean_norm=gn)
    solve.check()
    return solve


def _polish_direction(gf: GenFun, q: np.ndarray, a0: np.ndarray) -> Optional[np.ndarray]:
    d = gf.dim
    a = a0.copy()
    s = max(float(np.dot(gf.grad_phi(a), q)), 1e-12)
    for _ in range(50):
        r = np.concatenate([gf.grad_phi(a) - s * q, [gf.phi(a) - 1.0]])
        if np.linalg.norm(r) < 1e-15:
            break
        jac = np.zeros((d + 1, d + 1))
        jac[:d, :d] = gf.hessian_phi(a)
        jac[:d, d] = -q
        jac[d, :d] = gf.grad_phi(a)
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            return None
        a = a + step[:d]
        s = s + step[d]
    return a if s > 0 else None


def hull_position(gf: GenFun, v: Sequence[float]) -> float:
    """Largest t such that v is a convex combination with weights >= t.

    Positive: v is in the relative interior of the support hull.
    Zero (within LP tolerance): on the boundary.  -inf: outside.
    """
    z = gf.measure.support.astype(float)
    n, d = z.shape
    v = np.asarray(v, dtype=float)
    # variables: lambda_1..lambda_n, t;  maximize t
    c = np.zeros(n + 1)
    c[-1] = -1.0
    a_eq = np.zeros((d + 1, n + 1))
    a_eq[:d, :n] = z.T
    a_eq[d, :n] = 1.0
    b_eq = np.concatenate([v, [1.0]])
    a_ub = np.zeros((n, n + 1))
    a_ub[:, :n] = -np.eye(n)
    a_ub[:, n] = 1.0
    res = linprog(c, A_ub=a_ub, b_ub=np.zeros(n), A_eq=a_eq, b_eq=b_eq,
                  bounds=[(None, None)] * n + [(None, None)], method="highs")
    if not res.success:
        return -INF
    return float(-res.fun)


def legendre(gf: GenFun, v: Sequence[float], tol: float = 1e-12,
             max_iter: int = 200) -> float:
    """Convex conjugate (log phi)*(v) = sup_a (a.v - log phi(a)).

    Damped Newton on the strictly concave objective.  Returns +inf for
    v outside the convex hull of the support; for v on the hull
    boundary the supremum is approached but not attained, and the
    value reached when the iterates are cut off is returned with a
    warning.
    """
    v = np.asarray(v, dtype=float)
    pos = hull_position(gf, v)
    if pos == -INF or pos < -1e-9:
        return INF
    boundary = pos <= 1e-11
    if boundary:
        warnings.warn("v lies on the support hull boundary; the supremum is "
                      "approached but not attained, the returned value is a "
                      "large finite approximation")

    a = np.zeros(gf.dim)
    val = 0.0
    vscale = 1.0 + float(np.abs(v).max())
    for _ in range(max_iter):
        p = gf.phi(a)
        g = v - gf.grad_phi(a) / p
        val = float(np.dot(a, v)) - math.log(p)
        if np.linalg.norm(g) < tol * vscale:
            return max(val, 0.0)
        gp = gf.grad_phi(a) / p
        h = gf.hessian_phi(a) / p - np.outer(gp, gp)
        try:
            step = np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            step = g
        t = 1.0
        gd = float(np.dot(g, step))
        for _ in range(60):
            cand = a + t * step
            cand_val = float(np.dot(cand, v)) - math.log(gf.phi(cand))
            if cand_val >= val + 1e-4 * t * gd:
                break
            t *= 0.5
        else:
            # improvements below float resolution: converged for all purposes
            return max(val, 0.0)
        if t * float(np.linalg.norm(step)) < 1e-15 * (1.0 + np.linalg.norm(a)):
            return max(val, 0.0)
        a = a + t * step
        if np.linalg.norm(a) > 400.0:
            warnings.warn("conjugate optimizer diverging; v lies on the support hull "
                          "boundary, returning the value reached so far")
            return max(val, 0.0)
    if boundary:
        warnings.warn("conjugate did not converge; v lies on the support hull boundary")
        return max(val, 0.0)
    raise SolverError(f"conjugate Newton failed to converge at v={v}", best=(a, val))


def support_value(gf: GenFun, w: Sequence[float]) -> float:
    """sup_{a in D} a.w = a(w).w, with the convention 0 at w = 0."""
    w = np.asarray(w, dtype=float)
    n = float(np.linalg.norm(w))
    if n <= 1e-14:
        return 0.0
    solve = solve_direction(gf, w / n)
    return float(np.dot(solve.a, w))


def quasipotential(gf: GenFun, q: Sequence[float], qp: Sequence[float]) -> float:
    """sup_{a in D} a.(q - q'), the Green-function decay rate between scaled points."""
    q = np.asarray(q, dtype=float)
    qp = np.asarray(qp, dtype=float)
    return support_value(gf, q - qp)


def lambda_pair(gf: GenFun, q: Sequence[float]) -> Tuple[float, float]:
    """The two positivity margins built from support values.

    First component: sup a.q + sup a.(-q) (positive off zero, 1-homogeneous).
    Second: sup a.q + sup a.(M/|M| - q) (positive off the mean ray).
    """
    q = np.asarray(q, dtype=float)
    m = gf.measure.mean
    mn = np.linalg.norm(m)
    if mn <= 1e-14:
        raise ValidationError("lambda_pair requires a non-zero mean")
    lam = support_value(gf, q) + support_value(gf, -q)
    lam_m = support_value(gf, q) + support_value(gf, m / mn - q)
    return lam, lam_m


@dataclass(frozen=True)
class TailDecay:
    """Exponential tail certificate: tail(r) <= coefficient * exp(-theta r).

    For finite support the tail vanishes identically beyond
    ``support_radius``; the exponential bound is kept because it is
    what downstream integrability arguments consume.
    """

    theta: float
    coefficient: float
    support_radius: float

    def bound(self, r: float) -> float:
        return self.coefficient * math.exp(-self.theta * r)


def tail_decay_rate(gf: GenFun) -> TailDecay:
    """A rate theta > 0 with sum_{|z| >= r} mu(z) <= C exp(-theta r).

    Uses theta = 1 and C = 2d * max_e phi(theta e / sqrt(d)) over signed
    unit axis directions e: any z with Euclidean norm >= r has some
    coordinate of size >= r/sqrt(d), so the axis tilts control the tail.
    """
    d = gf.dim
    theta = 1.0
    c = 0.0
    for i in range(d):
        for sign in (1.0, -1.0):
            e = np.zeros(d)
            e[i] = sign * theta
            c = max(c, gf.phi(e))
    radius = float(np.linalg.norm(gf.measure.support.astype(float), axis=1).max())
    return TailDecay(theta=theta / math.sqrt(d), coefficient=2 * d * c,
                     support_radius=radius)


def rate_functional(gf: GenFun, breakpoints: Sequence[Tuple[float, Sequence[float]]],
                    lam: Sequence[int]) -> float:
    """Action of a piecewise-linear path: sum of (dt) * (log phi)*(slope).

    ``breakpoints`` is an ordered list of (t_j, x_j).  The path must
    stay in {x : x^i >= 0 for i in lam}; a path that leaves it has
    infinite action (+inf is returned, not raised).  Because the
    region is convex, segment confinement reduces to breakpoint
    confinement.
    """
    if len(breakpoints) < 2:
        raise ValidationError("need at least two breakpoints")
    times = [float(t) for t, _ in breakpoints]
    if any(t1 >= t2 for t1, t2 in zip(times, times[1:])):
        raise ValidationError("breakpoint times must be strictly increasing")
    lam = sorted(set(int(i) for i in lam))
    pts = [np.asarray(x, dtype=float) for _, x in breakpoints]
    for x in pts:
        if any(x[i] < 0.0 for i in lam):
            return INF
    total = 0.0
    for (t0, x0), (t1, x1) in zip(zip(times, pts), zip(times[1:], pts[1:])):
        dt = t1 - t0
        slope = (x1 - x0) / dt
        piece = legendre(gf, slope)
        if piece == INF:
            return INF
        total += dt * piece
    return total


def exit_moment_margin(measure: JumpMeasure, lam: frozenset) -> float:
    """A certified epsilon > 0 with E_x[exp(eps |S(tau)|); tau < tau_lam] finite.

    Constructive search over the supersets L' of lam (L' != all
    coordinates): for each, find interior points of D of the form
    -delta * sum_{i notin L'} M^i e_i + sigma * sum_{i in L'} e_i and
    return the worst min(sigma, delta * min_{i notin L'} M^i) margin.
    Requires every coordinate of the mean to be non-negative.
    """
    gf = GenFun(measure)
    d = measure.dim
    m = measure.mean
    if any(c < -1e-12 for c in m):
        raise ValidationError("margin construction needs a componentwise non-negative mean")
    lam = frozenset(lam)
    drifting = [i for i in range(d) if i not in lam]
    if not drifting:
        raise ValidationError("kill set covers all coordinates; no exit event to bound")

    def sigma_max(base: np.ndarray, direction: np.ndarray) -> float:
        lo, hi = 0.0, 1.0
        if gf.phi(base + hi * direction) < 1.0:
            for _ in range(60):
                hi *= 2.0
                if gf.phi(base + hi * direction) >= 1.0 or hi > 1e6:
                    break
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if gf.phi(base + mid * direction) < 1.0:
                lo = mid
            else:
                hi = mid
        return lo

    best = INF
    others = [i for i in drifting]
    for mask in range(1 << len(others)):
        extra = {others[k] for k in range(len(others)) if mask >> k & 1}
        lp = lam | extra
        comp = [i for i in range(d) if i not in lp]
        if not comp:
            continue
        dir_up = np.zeros(d)
        for i in lp:
            dir_up[i] = 1.0
        margin_here = 0.0
        for delta in (0.01, 0.05, 0.1, 0.2, 0.4, 0.8, 1.6):
            base = np.zeros(d)
            for i in comp:
                base[i] = -delta * m[i]
            if gf.phi(base) >= 1.0:
                continue
            down = delta * min(m[i] for i in comp)
            if lp:
                sig = sigma_max(base, dir_up)
                margin_here = max(margin_here, min(sig, down))
            else:
                margin_here = max(margin_here, down)
        if margin_here <= 0.0:
            raise SolverError(f"no interior margin found for coordinate set {sorted(lp)}")
        best = min(best, margin_here)
    return 0.95 * best
