"""Constructors for positive harmonic functions of the fully killed walk.

All constructions share one shape: a free part evaluated at the start
point minus the expectation of the same quantity at the walk's exit,

    h(x) = base(x) - E_x[ base(S(tau)); event ],

where base couples an exponential tilt to a polynomial in the
zero-drift coordinates.  The expectation is computed by one absorbing
solve per refinement round with the reward attached to the killing
transitions; harmonicity and strict positivity are then verified on a
window shrunk by one jump collar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import UnsupportedStructureError, ValidationError
from .genfun import GenFun, solve_direction
from .green import ExitFunctionalTable, Window, exit_functional, twist
from .induced import InducedChain, induced_chain, harmonic_1d, product_harmonic
from .measures import JumpMeasure, WalkSpec, lambda_of, marginal_measure

#: scaled residual allowed for an input factor claimed harmonic
FACTOR_RESIDUAL_TOL = 1e-6


@dataclass
class HarmonicFunction:
    """Evaluable harmonic function with provenance and error certificate."""

    provenance: str
    q: Optional[np.ndarray]
    a: np.ndarray
    factor: Optional[Callable]
    window: Window
    values: np.ndarray
    table: ExitFunctionalTable = field(repr=False)
    verified_region: Window = None

    def evaluate(self, x: Sequence[int]) -> float:
        x = tuple(int(c) for c in x)
        idx = tuple(c - l for c, l in zip(x, self.window.lo))
        return float(self.values[idx])

    __call__ = evaluate

    def error_bound(self, x: Sequence[int]) -> float:
        return self.table.error_bound(tuple(int(c) for c in x))

    def to_csv(self, path) -> None:
        import csv
        d = self.window.dim
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# provenance={self.provenance}\n")
            writer = csv.writer(fh)
            writer.writerow([f"x{i + 1}" for i in range(d)] + ["h", "error_bound"])
            for pt in self.window.points():
                writer.writerow([*map(int, pt), repr(self.evaluate(pt)),
                                 repr(self.error_bound(pt))])


def _require_killed(spec: WalkSpec) -> None:
    if not spec.killed_full():
        raise ValidationError("harmonic builders expect the fully killed walk")


def _verified(box: Window, spec: WalkSpec) -> Window:
    # a window edge at 1 needs no collar: targets below it are killed and
    # contribute zero, so no evaluation is required there
    collar = max(spec.measure.max_jump_norm(), 1)
    lo = tuple(l if l == 1 else l + collar for l in box.lo)
    hi = tuple(h - collar for h in box.hi)
    return Window(lo, hi)


def _check_factor(measure: JumpMeasure, lam: Tuple[int, ...], f: Callable,
                  probe: int = 10) -> None:
    """Reject factors that are not harmonic for the induced chain."""
    if not lam:
        return
    marg = marginal_measure(measure, lam)
    pts = Window(tuple([1] * len(lam)), tuple([probe] * len(lam))).points()
    for u in pts:
        acc = 0.0
        for z, p in marg.atoms.items():
            t = u + np.asarray(z)
            if (t >= 1).all():
                acc += p * float(f(tuple(int(c) for c in t)))
        fu = float(f(tuple(int(c) for c in u)))
        if abs(acc - fu) > FACTOR_RESIDUAL_TOL * (1.0 + abs(fu)):
            raise ValidationError(
                f"factor is not harmonic for the induced chain at u={tuple(u)}: "
                f"residual {abs(acc - fu):.2e}")


def build_theorem1(spec: WalkSpec, f: Optional[Callable], box: Window,
                   tol: float = 1e-12, rounds: Optional[int] = None,
                   max_rounds: int = 18) -> HarmonicFunction:
    """h(x) = f(x^L) - E_x[f(S^L(tau)); tau < tau_L], L the zero-mean coordinates.

    The mean must be componentwise non-negative and not identically
    zero.  ``f`` is a positive harmonic function of the induced chain
    on L, taking a |L|-tuple; None stands for the constant 1 (the only
    choice when L is empty).
    """
    _require_killed(spec)
    m = spec.measure.mean
    if any(c < -1e-12 for c in m):
        raise ValidationError("theorem-1 construction needs a non-negative mean")
    lam = tuple(sorted(lambda_of(m)))
    if len(lam) == spec.dim:
        raise ValidationError("zero mean vector: drift condition violated")
    if f is None:
        f = lambda u: 1.0
    _check_factor(spec.measure, lam, f)

    lam_arr = np.array(lam, dtype=int)

    def reward(targets: np.ndarray) -> np.ndarray:
        if len(lam) == 0:
            return np.ones(len(targets))
        return np.array([float(f(tuple(int(c) for c in w[lam_arr])))
                         for w in targets])

    def lam_alive(targets: np.ndarray) -> np.ndarray:
        ok = np.ones(len(targets), dtype=bool)
        for i in lam:
            ok &= targets[:, i] >= 1
        return ok

    table = exit_functional(spec, box, reward, lam_alive, tol=tol,
                            rounds=rounds, max_rounds=max_rounds)
    pts = box.points()
    if len(lam) == 0:
        base = np.ones(len(pts))
    else:
        base = np.array([float(f(tuple(int(c) for c in p[lam_arr]))) for p in pts])
    values = base - table.values.ravel()
    return HarmonicFunction(provenance="theorem1", q=None, a=np.zeros(spec.dim),
                            factor=f, window=box,
                            values=values.reshape(box.shape), table=table,
                            verified_region=_verified(box, spec))


def _axis_moves_only(measure: JumpMeasure) -> bool:
    return all(sum(1 for c in z if c != 0) <= 1 for z in measure.atoms)


def build_corollary(spec: WalkSpec, q: Sequence[float], box: Window,
                    tol: float = 1e-12, rounds: Optional[int] = None,
                    max_rounds: int = 18) -> HarmonicFunction:
    """Harmonic function attached to the boundary direction q.

    Dispatch on the zero set of q: all coordinates positive uses the
    pure exponential tilt; a single zero coordinate couples the tilt
    with that coordinate; several zero coordinates require axis-only
    jumps and couple the tilt with the product over the zero set.  In
    every case

        h_q(x) = e^{a(q).x} prod_{i in L(q)} x^i
                 - E_x[ e^{a(q).S(tau)} prod_{i in L(q)} S^i(tau); tau < inf ].
    """
    _require_killed(spec)
    q = np.asarray(q, dtype=float)
    lamq = tuple(sorted(lambda_of(q)))
    if any(c < -1e-12 for c in q):
        raise ValidationError("q must lie in the non-negative part of the sphere")
    if len(lamq) >= 2 and not _axis_moves_only(spec.measure):
        raise UnsupportedStructureError(
            "several zero coordinates of q need axis-only jumps; no induced "
            "harmonic function is available otherwise")
    a = solve_direction(GenFun(spec.measure), q).a
    lam_arr = np.array(lamq, dtype=int)

    def base_vals(pts: np.ndarray) -> np.ndarray:
        vals = np.exp(pts.astype(float) @ a)
        if len(lamq):
            vals = vals * np.prod(pts[:, lam_arr].astype(float), axis=1)
        return vals

    table = exit_functional(spec, box, base_vals, None, tol=tol,
                            rounds=rounds, max_rounds=max_rounds)
    pts = box.points()
    values = base_vals(pts) - table.values.ravel()
    if len(lamq) == 0:
        provenance = "cor1.0" if float(np.abs(a).max()) <= 1e-12 else "cor1.2"
    elif len(lamq) == 1:
        provenance = "cor1.3"
    else:
        provenance = "cor1.4"
    return HarmonicFunction(provenance=provenance, q=q, a=a, factor=None,
                            window=box, values=values.reshape(box.shape),
                            table=table, verified_region=_verified(box, spec))


def build_prop11(spec: WalkSpec, box: Window, tol: float = 1e-12,
                 rounds: Optional[int] = None, max_rounds: int = 18
                 ) -> HarmonicFunction:
    """h(x) = x^i - E_x[S^i(tau)] when exactly one mean coordinate is zero."""
    _require_killed(spec)
    m = spec.measure.mean
    lam = tuple(sorted(lambda_of(m)))
    if len(lam) != 1:
        raise ValidationError("exactly one zero-mean coordinate required")
    if any(c < -1e-12 for c in m):
        raise ValidationError("needs a non-negative mean")
    i = lam[0]

    def reward(targets: np.ndarray) -> np.ndarray:
        return targets[:, i].astype(float)

    table = exit_functional(spec, box, reward, None, tol=tol, rounds=rounds,
                            max_rounds=max_rounds)
    pts = box.points()
    values = pts[:, i].astype(float) - table.values.ravel()
    return HarmonicFunction(provenance="prop1.1", q=None, a=np.zeros(spec.dim),
                            factor=None, window=box,
                            values=values.reshape(box.shape), table=table,
                            verified_region=_verified(box, spec))


def build_prop12(spec: WalkSpec, box: Window, tol: float = 1e-12,
                 rounds: Optional[int] = None, max_rounds: int = 18
                 ) -> HarmonicFunction:
    """h(x) = prod_{i in L(M)} x^i - E_x[prod S^i(tau); tau < inf].

    Needs the projected law on the zero-mean coordinates to move one
    coordinate at a time.
    """
    _require_killed(spec)
    m = spec.measure.mean
    lam = tuple(sorted(lambda_of(m)))
    if not lam or len(lam) == spec.dim:
        raise ValidationError("need a proper non-empty zero-mean coordinate set")
    marg = marginal_measure(spec.measure, lam)
    if not _axis_moves_only(marg):
        raise UnsupportedStructureError(
            "projected law moves several coordinates at once")
    lam_arr = np.array(lam, dtype=int)

    def reward(targets: np.ndarray) -> np.ndarray:
        return np.prod(targets[:, lam_arr].astype(float), axis=1)

    table = exit_functional(spec, box, reward, None, tol=tol, rounds=rounds,
                            max_rounds=max_rounds)
    pts = box.points()
    values = np.prod(pts[:, lam_arr].astype(float), axis=1) - table.values.ravel()
    return HarmonicFunction(provenance="prop1.2", q=None, a=np.zeros(spec.dim),
                            factor=None, window=box,
                            values=values.reshape(box.shape), table=table,
                            verified_region=_verified(box, spec))


def build_corollary_twisted(spec: WalkSpec, q: Sequence[float], box: Window,
                            tol: float = 1e-12, rounds: Optional[int] = None,
                            max_rounds: int = 18) -> HarmonicFunction:
    """Same target function as :func:`build_corollary`, via the tilted walk.

    Builds the theorem-1 function for the a(q)-tilted walk with its
    induced-chain factor and multiplies back the exponential.  Serves
    as an independent second route for cross-checks.
    """
    _require_killed(spec)
    q = np.asarray(q, dtype=float)
    a = solve_direction(GenFun(spec.measure), q).a
    tilted = twist(spec, a)
    lamq = tuple(sorted(lambda_of(q)))
    if not lamq:
        factor = None
    else:
        chain = induced_chain(tilted.measure, lamq)
        if len(lamq) == 1:
            one = harmonic_1d(chain.base)
            factor = lambda u: float(one(int(u[0])))
        else:
            prod = product_harmonic(chain)
            factor = lambda u: float(prod(u))
    inner = build_theorem1(tilted, factor, box, tol=tol, rounds=rounds,
                           max_rounds=max_rounds)
    pts = box.points()
    values = np.exp(pts.astype(float) @ a) * inner.values.ravel()
    out = HarmonicFunction(provenance="cor-twist", q=q, a=a, factor=factor,
                           window=box, values=values.reshape(box.shape),
                           table=inner.table,
                           verified_region=inner.verified_region)
    return out


def verify_harmonic(h: HarmonicFunction, spec: WalkSpec, region: Window) -> float:
    """Largest scaled harmonicity defect of h over the region.

    For each x, sums mu(x'-x) h(x') over x' still in the orthant (the
    killed mass contributes zero) and compares with h(x).  The region
    plus one jump collar must stay inside the evaluability window.
    """
    _require_killed(spec)
    pts = region.points()
    collar = spec.measure.max_jump_norm()
    for i in range(region.dim):
        if h.window.lo[i] != 1 and region.lo[i] - collar < h.window.lo[i]:
            raise ValidationError("region touches the evaluability boundary (low side)")
        if region.hi[i] + collar > h.window.hi[i]:
            raise ValidationError("region touches the evaluability boundary (high side)")
    acc = np.zeros(len(pts))
    for z, p in spec.measure.atoms.items():
        tgt = pts + np.asarray(z, dtype=np.int64)
        alive = (tgt >= 1).all(axis=1)
        if not alive.any():
            continue
        offs = tgt[alive] - np.array(h.window.lo)
        idx = np.ravel_multi_index(offs.T, h.window.shape)
        acc[alive] += p * h.values.ravel()[idx]
    offs = pts - np.array(h.window.lo)
    own = h.values.ravel()[np.ravel_multi_index(offs.T, h.window.shape)]
    scaled = np.abs(acc - own) / (1.0 + np.abs(own))
    return float(scaled.max())


def verify_positive(h: HarmonicFunction, region: Window) -> float:
    """Minimum of h over the region (contract: strictly positive)."""
    pts = region.points()
    offs = pts - np.array(h.window.lo)
    vals = h.values.ravel()[np.ravel_multi_index(offs.T, h.window.shape)]
    return float(vals.min())
