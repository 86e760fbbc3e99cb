"""Exact Green functions of killed walks on truncated windows.

The walk restricted to a finite window is strictly substochastic, so
expected visit counts solve a sparse linear system.  Truncation at the
window edge loses the mass of paths that leave and later return; the
certificate for that deficit is obtained by re-solving on a ladder of
geometrically inflated windows and extrapolating the observed
geometric decay of the successive differences.  The same absorbing
systems, with rewards attached to the killing transitions, compute
expectations of exit functionals, which is how the renewal-equation
decomposition and the harmonic-function builders are powered.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError, TruncationError, ValidationError
from .genfun import GenFun, PHI_TOL
from .measures import JumpMeasure, Vector, WalkSpec

#: default relative tolerance for window-refinement stopping
DEFAULT_TOL = 1e-10
#: safety factor applied to the extrapolated refinement tail
TRUNC_SAFETY = 4.0
#: direct sparse factorization is used up to this many unknowns in d >= 3
DIRECT_LIMIT_3D = 60_000


# ---------------------------------------------------------------------------
# windows
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Window:
    """Axis-aligned lattice box, inclusive on both ends."""

    lo: Tuple[int, ...]
    hi: Tuple[int, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValidationError("window lo/hi dimension mismatch")
        if any(l > h for l, h in zip(self.lo, self.hi)):
            raise ValidationError(f"empty window {self.lo}..{self.hi}")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(h - l + 1 for l, h in zip(self.lo, self.hi))

    @property
    def size(self) -> int:
        n = 1
        for s in self.shape:
            n *= s
        return n

    def contains(self, pt: Sequence[int]) -> bool:
        return all(l <= int(c) <= h for l, c, h in zip(self.lo, pt, self.hi))

    def index(self, pt: Sequence[int]) -> int:
        if not self.contains(pt):
            raise KeyError(f"{tuple(pt)} outside window {self.lo}..{self.hi}")
        return int(np.ravel_multi_index(
            tuple(int(c) - l for c, l in zip(pt, self.lo)), self.shape))

    def points(self) -> np.ndarray:
        """All lattice points, shape (size, dim), in raveled order."""
        grids = np.meshgrid(*[np.arange(l, h + 1) for l, h in zip(self.lo, self.hi)],
                            indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)

    def inflate(self, pad: int, kill_set: frozenset = frozenset()) -> "Window":
        """Grow by ``pad`` on every side, flooring killed coordinates at 1."""
        lo = tuple(max(1, l - pad) if i in kill_set else l - pad
                   for i, l in enumerate(self.lo))
        hi = tuple(h + pad for h in self.hi)
        return Window(lo, hi)


def window_around(spec: WalkSpec, pts: Sequence[Sequence[int]], pad: int) -> Window:
    """Bounding window of the given points padded by ``pad``."""
    arr = np.asarray(pts, dtype=np.int64).reshape(-1, spec.dim)
    lo = tuple(int(c) - pad for c in arr.min(axis=0))
    hi = tuple(int(c) + pad for c in arr.max(axis=0))
    lo = tuple(max(1, l) if i in spec.kill_set else l for i, l in enumerate(lo))
    return Window(lo, hi)


# ---------------------------------------------------------------------------
# transition systems on a window
# ---------------------------------------------------------------------------

@dataclass
class TransitionSystem:
    """One-step structure of a killed walk restricted to a window.

    ``matrix`` holds the alive-to-alive transitions inside the window.
    ``leak`` is the per-state probability of jumping out of the window
    while still alive (the truncated mass).  ``deaths`` lists, per
    atom, the rows that die through it together with their landing
    points outside the state space.
    """

    spec: WalkSpec
    window: Window
    matrix: sp.csr_matrix
    leak: np.ndarray
    deaths: List[Tuple[np.ndarray, np.ndarray, float]]
    _lu: object = field(default=None, repr=False)
    _matrix_t: object = field(default=None, repr=False)

    def death_reward(self, reward: Callable[[np.ndarray], np.ndarray],
                     mask: Optional[Callable[[np.ndarray], np.ndarray]] = None
                     ) -> np.ndarray:
        """Per-state expected one-step reward collected at death.

        ``reward`` maps an (n, dim) array of landing points to values;
        ``mask`` optionally restricts to a sub-event of the death.
        """
        r = np.zeros(self.window.size)
        for rows, targets, p in self.deaths:
            if len(rows) == 0:
                continue
            vals = np.asarray(reward(targets), dtype=float)
            if mask is not None:
                vals = vals * mask(targets)
            np.add.at(r, rows, p * vals)
        return r

    def death_mass(self, mask: Optional[Callable[[np.ndarray], np.ndarray]] = None
                   ) -> np.ndarray:
        return self.death_reward(lambda t: np.ones(len(t)), mask)

    def solve(self, b: np.ndarray, transpose: bool = False) -> np.ndarray:
        """Solve (I - P) v = b, or the transposed system."""
        a = sp.identity(self.window.size, format="csr") - self.matrix
        n = self.window.size
        if self.window.dim <= 2 or n <= DIRECT_LIMIT_3D:
            if self._lu is None:
                self._lu = spla.splu(a.tocsc())
            return self._lu.solve(b, trans="T" if transpose else "N")
        return self._iterative_solve(a, b, transpose)

    def _iterative_solve(self, a, b, transpose):
        p = self.matrix.T.tocsr() if transpose else self.matrix
        v = b.astype(float).copy()
        term = b.astype(float)
        scale = max(float(np.abs(b).max()), 1e-300)
        prev_norm = math.inf
        for it in range(1, 300_001):
            term = p @ term
            v += term
            norm = float(np.abs(term).max())
            if norm <= 1e-16 * max(scale, float(np.abs(v).max())):
                return v
            if it % 500 == 0:
                if norm >= prev_norm:
                    break
                prev_norm = norm
        # geometric decay too slow or absent: direct Krylov attempt
        at = a.T.tocsr() if transpose else a
        try:
            ilu = spla.spilu(at.tocsc(), drop_tol=1e-5, fill_factor=12)
            pre = spla.LinearOperator(at.shape, ilu.solve)
            sol, info = spla.bicgstab(at, b, rtol=1e-13, atol=0.0, maxiter=4000, M=pre)
        except Exception as exc:
            raise SolverError(f"iterative Green solve failed: {exc}") from exc
        if info != 0:
            raise SolverError(f"iterative Green solve did not converge (info={info})")
        return sol


def transition_system(spec: WalkSpec, window: Window) -> TransitionSystem:
    """Assemble the in-window substochastic matrix and its boundary fluxes."""
    d = spec.dim
    if window.dim != d:
        raise ValidationError("window dimension mismatch")
    for i in spec.kill_set:
        if window.lo[i] < 1:
            raise ValidationError("window dips below 1 on a killed coordinate")
    pts = window.points()
    n = window.size
    lo = np.array(window.lo, dtype=np.int64)
    hi = np.array(window.hi, dtype=np.int64)
    kill = sorted(spec.kill_set)

    rows_all, cols_all, vals_all = [], [], []
    leak = np.zeros(n)
    deaths: List[Tuple[np.ndarray, np.ndarray, float]] = []
    for z, p in spec.measure.atoms.items():
        tgt = pts + np.asarray(z, dtype=np.int64)
        alive = np.ones(n, dtype=bool)
        for i in kill:
            alive &= tgt[:, i] >= 1
        in_box = np.all((tgt >= lo) & (tgt <= hi), axis=1)
        keep = alive & in_box
        if keep.any():
            rows = np.nonzero(keep)[0]
            offs = tgt[keep] - lo
            cols = np.ravel_multi_index(offs.T, window.shape)
            rows_all.append(rows)
            cols_all.append(cols)
            vals_all.append(np.full(len(rows), p))
        esc = alive & ~in_box
        if esc.any():
            leak[esc] += p
        dead = ~alive
        if dead.any():
            rows = np.nonzero(dead)[0]
            deaths.append((rows, tgt[dead], p))
    if rows_all:
        matrix = sp.csr_matrix(
            (np.concatenate(vals_all),
             (np.concatenate(rows_all), np.concatenate(cols_all))),
            shape=(n, n))
    else:
        matrix = sp.csr_matrix((n, n))
    return TransitionSystem(spec=spec, window=window, matrix=matrix,
                            leak=leak, deaths=deaths)


# ---------------------------------------------------------------------------
# refinement ladder
# ---------------------------------------------------------------------------

def _ladder_pads(measure: JumpMeasure, base: Window, rounds: int) -> List[int]:
    # pad_k = (2^k - 1) s doubles the window extent each round, so both
    # polynomially and exponentially decaying truncation deficits give
    # geometrically shrinking round-to-round differences
    c = max(measure.max_jump_norm(), 1)
    extent = max(h - l + 1 for l, h in zip(base.lo, base.hi))
    s = max(c, (extent + 1) // 2)
    return [(2 ** k - 1) * s for k in range(rounds)]


def _extrapolate_tail(diffs: List[float]) -> float:
    """Certificate for the remaining refinement error after the last round."""
    if not diffs:
        return 0.0
    last = diffs[-1]
    if last == 0.0:
        return 0.0
    if len(diffs) >= 2 and diffs[-2] > 0.0:
        rho = last / diffs[-2]
    else:
        rho = 0.5
    rho = min(max(rho, 0.02), 0.95)
    return TRUNC_SAFETY * last * rho / (1.0 - rho)


def _diverging(diffs: List[float]) -> bool:
    return len(diffs) >= 3 and diffs[-1] >= diffs[-2] >= diffs[-3] > 0


class _Refiner:
    """Runs a per-window computation over the inflation ladder.

    ``compute(window) -> np.ndarray`` returns the quantities of
    interest (a flat vector, constant length across rounds); rounds
    stop once the max-abs difference between consecutive rounds drops
    below tol * (1 + scale), or after ``rounds`` solves when a fixed
    count is requested.
    """

    def __init__(self, spec: WalkSpec, base: Window, tol: float,
                 rounds: Optional[int], max_rounds: int,
                 cell_budget: int = 8_000_000):
        self.spec = spec
        self.base = base
        self.tol = tol
        self.rounds = rounds
        self.max_rounds = rounds if rounds is not None else max_rounds
        self.cell_budget = cell_budget

    def run(self, compute: Callable[[Window], np.ndarray]):
        pads = _ladder_pads(self.spec.measure, self.base, max(self.max_rounds, 2))
        diffs: List[float] = []
        prev = None
        result = None
        window = None
        for k in range(self.max_rounds):
            pad = pads[k] if k < len(pads) else 2 * pads[-1]
            candidate = self.base.inflate(pad, self.spec.kill_set)
            if candidate.size > self.cell_budget and result is not None:
                warnings.warn("window refinement stopped by the cell budget; "
                              "the truncation certificate may be loose")
                break
            window = candidate
            result = compute(window)
            if prev is not None:
                diffs.append(float(np.abs(result - prev).max()))
                scale = 1.0 + float(np.abs(result).max())
                if self.rounds is None and diffs[-1] <= self.tol * scale:
                    break
                if _diverging(diffs):
                    raise SolverError(
                        "values do not stabilize under window growth; the walk "
                        "looks recurrent here -- add a kill set or drift")
            prev = result
        return result, diffs, window


# ---------------------------------------------------------------------------
# Green tables
# ---------------------------------------------------------------------------

def spec_hash(spec: WalkSpec) -> str:
    payload = repr((sorted(spec.measure.atoms.items()), sorted(spec.kill_set)))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass
class GreenTable:
    """Green values G(source, .) (or G(., target)) on a window.

    ``trunc_error`` bounds the truncation deficit of every stored
    entry, from the geometric extrapolation of the refinement ladder.
    """

    spec: WalkSpec
    window: Window
    source: Vector
    values: np.ndarray
    trunc_error: float
    direction: str = "from"
    exit_prob: float = 0.0
    diffs: List[float] = field(default_factory=list)

    def value(self, pt: Sequence[int]) -> float:
        pt = tuple(int(c) for c in pt)
        if not self.spec.in_state_space(pt):
            return 0.0
        return float(self.values[tuple(c - l for c, l in zip(pt, self.window.lo))]) \
            if self.window.contains(pt) else 0.0

    def to_csv(self, path) -> None:
        import csv
        d = self.window.dim
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# spec_hash={spec_hash(self.spec)}\n")
            fh.write(f"# box={self.window.lo}..{self.window.hi}\n")
            fh.write(f"# source={self.source} direction={self.direction}\n")
            fh.write(f"# trunc_error={self.trunc_error!r}\n")
            writer = csv.writer(fh)
            writer.writerow([f"x{i + 1}" for i in range(d)] + ["value"])
            for pt, v in zip(self.window.points(), self.values.ravel()):
                writer.writerow([*map(int, pt), repr(float(v))])


def _green_field(spec: WalkSpec, point: Sequence[int], box: Window,
                 direction: str, tol: float, rounds: Optional[int],
                 max_rounds: int) -> GreenTable:
    point = tuple(int(c) for c in point)
    if not spec.in_state_space(point):
        raise ValidationError(f"{point} outside the state space")
    if not box.contains(point):
        raise ValidationError(f"{point} outside the window")
    transpose = direction == "from"
    exit_prob = 0.0

    def compute(window: Window) -> np.ndarray:
        nonlocal exit_prob
        system = transition_system(spec, window)
        b = np.zeros(window.size)
        b[window.index(point)] = 1.0
        v = system.solve(b, transpose=transpose)
        if transpose:
            exit_prob = float(np.dot(v, system.leak))
        sub = _restrict(v, window, box)
        return sub

    refiner = _Refiner(spec, box, tol, rounds, max_rounds)
    vals, diffs, _ = refiner.run(compute)
    trunc = _extrapolate_tail(diffs)
    return GreenTable(spec=spec, window=box, source=point,
                      values=vals.reshape(box.shape), trunc_error=trunc,
                      direction=direction, exit_prob=exit_prob, diffs=diffs)


def _restrict(v: np.ndarray, window: Window, sub: Window) -> np.ndarray:
    arr = v.reshape(window.shape)
    slices = tuple(slice(l - wl, l - wl + (h - l + 1))
                   for l, h, wl in zip(sub.lo, sub.hi, window.lo))
    return arr[slices].ravel().copy()


def green_table(spec: WalkSpec, x: Sequence[int], box: Window,
                tol: float = DEFAULT_TOL, rounds: Optional[int] = None,
                max_rounds: int = 24) -> GreenTable:
    """Expected visit counts G(x, x') for every x' in the window.

    Solves (I - P)^T g = e_x on an inflation ladder of windows until
    the values on the requested window stabilize; the certificate
    ``trunc_error`` extrapolates the remaining deficit.  Pass
    ``rounds`` to pin the ladder length (useful for matched
    comparisons).
    """
    return _green_field(spec, x, box, "from", tol, rounds, max_rounds)


def green_to_target(spec: WalkSpec, xp: Sequence[int], box: Window,
                    tol: float = DEFAULT_TOL, rounds: Optional[int] = None,
                    max_rounds: int = 24) -> GreenTable:
    """Green values G(w, xp) for every w in the window (backward solve)."""
    return _green_field(spec, xp, box, "to", tol, rounds, max_rounds)


def green_oracle(spec: WalkSpec, x: Sequence[int], xp: Sequence[int],
                 horizon: int, max_cells: int = 3_000_000) -> float:
    """Lower bound on G(x, xp): the exact partial sum over t <= horizon.

    Forward dynamic programming on a window wide enough for the
    diffusive spread at the horizon; mass leaving the window is
    dropped, which keeps the result a valid lower bound and monotone
    nondecreasing in the horizon.
    """
    d = spec.dim
    x = tuple(int(c) for c in x)
    xp = tuple(int(c) for c in xp)
    if not spec.in_state_space(x):
        raise ValidationError(f"{x} outside the state space")
    if not spec.in_state_space(xp):
        return 0.0
    m = max(spec.measure.max_jump_norm(), 1)
    drift = float(np.abs(spec.measure.mean).max())
    reach = int(min(horizon * m,
                    4.0 * m * math.sqrt(max(horizon, 1)) + drift * horizon + 8 * m))
    window = window_around(spec, [x, xp], reach)
    while window.size > max_cells and reach > 4 * m:
        reach = max(4 * m, reach // 2)
        window = window_around(spec, [x, xp], reach)
    if window.size > max_cells:
        warnings.warn("green_oracle window capped by the cell budget; "
                      "result is a (possibly loose) lower bound")

    dist = np.zeros(window.shape)
    dist[tuple(c - l for c, l in zip(x, window.lo))] = 1.0
    target_idx = tuple(c - l for c, l in zip(xp, window.lo))
    kill = sorted(spec.kill_set)
    lo = window.lo

    # per killed coordinate, indices of the in-window layers with value < 1
    # never exist because the window is floored at 1 on killed coordinates;
    # killing is enforced by dropping shifts that cross the floor.
    total = dist[target_idx]
    atoms = [(np.asarray(z, dtype=int), p) for z, p in spec.measure.atoms.items()]
    for _ in range(horizon):
        new = np.zeros_like(dist)
        for z, p in atoms:
            src, dst = _shift_slices(window.shape, z)
            if src is None:
                continue
            new[dst] += p * dist[src]
        dist = new
        total += dist[target_idx]
        if not dist.any():
            break
    return float(total)


def _shift_slices(shape, z):
    src, dst = [], []
    for n, step in zip(shape, z):
        step = int(step)
        if step >= 0:
            if step >= n:
                return None, None
            src.append(slice(0, n - step))
            dst.append(slice(step, n))
        else:
            if -step >= n:
                return None, None
            src.append(slice(-step, n))
            dst.append(slice(0, n + step))
    return tuple(src), tuple(dst)


# ---------------------------------------------------------------------------
# exponential change of measure
# ---------------------------------------------------------------------------

def twist(spec: WalkSpec, a: Sequence[float], tol: float = PHI_TOL) -> WalkSpec:
    """Exponentially tilted walk with jump law mu(z) exp(a.z).

    Requires a on the boundary of D so the tilted law is stochastic.
    """
    gf = GenFun(spec.measure)
    a = np.asarray(a, dtype=float)
    resid = abs(gf.phi(a) - 1.0)
    if resid > tol:
        raise ValidationError(f"phi(a) - 1 = {resid:.2e}; a is not on the boundary of D")
    atoms = {z: p * math.exp(float(np.dot(a, z)))
             for z, p in spec.measure.atoms.items()}
    total = math.fsum(atoms.values())
    atoms = {z: p / total for z, p in atoms.items()}
    return WalkSpec(JumpMeasure(atoms, dim=spec.dim), spec.kill_set)


def check_twist_identity(spec: WalkSpec, a: Sequence[float], x: Sequence[int],
                         xp: Sequence[int], box: Window,
                         rounds: int = 3) -> float:
    """Relative deviation between G_a(x,x') and exp(a.(x'-x)) G(x,x').

    Both sides are computed on the same window ladder, so the
    truncated path families match and the deviation reflects solver
    accuracy only.
    """
    a = np.asarray(a, dtype=float)
    tw = twist(spec, a)
    g = green_table(spec, x, box, rounds=rounds)
    ga = green_table(tw, x, box, rounds=rounds)
    lhs = ga.value(xp)
    rhs = math.exp(float(np.dot(a, np.asarray(xp) - np.asarray(x)))) * g.value(xp)
    if lhs == 0.0 and rhs == 0.0:
        return 0.0
    return abs(lhs - rhs) / max(abs(lhs), 1e-300)


# ---------------------------------------------------------------------------
# renewal decomposition
# ---------------------------------------------------------------------------

@dataclass
class RenewalSplit:
    """Principal part and remainder of the renewal decomposition.

    main  = G_L(x,x') - E_x[G_L(S(tau),x'); tau < tau_L, |S(tau)| < delta |x'|]
    remainder = E_x[G_L(S(tau),x'); tau < tau_L, |S(tau)| >= delta |x'|]

    and main - remainder recovers the fully killed G(x,x').
    """

    main: float
    remainder: float
    delta: float
    green_lambda: float
    error: float


def renewal_split(spec: WalkSpec, lam: frozenset, x: Sequence[int],
                  xp: Sequence[int], delta: float, box: Window,
                  tol: float = 1e-11, max_rounds: int = 18) -> RenewalSplit:
    """Split G(x,x') into the partially killed main part and the far remainder.

    ``spec`` must be the fully killed walk; ``lam`` selects the
    coordinates whose killing is kept in the principal part.  The exit
    distribution over {tau < tau_lam} is accumulated from the same
    absorbing solve that produces the visit counts, and the partially
    killed Green values entering the rewards come from one backward
    solve per refinement round.
    """
    if not spec.killed_full():
        raise ValidationError("renewal_split expects the fully killed walk")
    lam = frozenset(int(i) for i in lam)
    x = tuple(int(c) for c in x)
    xp = tuple(int(c) for c in xp)
    if not (spec.in_state_space(x) and spec.in_state_space(xp)):
        raise ValidationError("x and x' must lie in the positive orthant")
    if not (box.contains(x) and box.contains(xp)):
        raise ValidationError("x and x' must lie inside the window")
    spec_l = WalkSpec(spec.measure, lam)
    collar = max(spec.measure.max_jump_norm(), 1)
    threshold = float(delta) * float(np.linalg.norm(xp))
    lam_sorted = sorted(lam)

    def lam_alive(targets: np.ndarray) -> np.ndarray:
        ok = np.ones(len(targets), dtype=bool)
        for i in lam_sorted:
            ok &= targets[:, i] >= 1
        return ok

    def compute(window: Window) -> np.ndarray:
        # partially killed Green values on a window large enough for the
        # exit landing points of the fully killed walk
        lam_lo = tuple(window.lo[i] if i in lam else window.lo[i] - 3 * collar - 8
                       for i in range(spec.dim))
        lam_hi = tuple(h + collar for h in window.hi)
        box_l = Window(lam_lo, lam_hi)
        sys_l = transition_system(spec_l, box_l)
        b = np.zeros(box_l.size)
        b[box_l.index(xp)] = 1.0
        h = sys_l.solve(b, transpose=False)  # h[w] = G_L(w, xp) on box_l

        def reward(targets: np.ndarray) -> np.ndarray:
            vals = np.zeros(len(targets))
            for j, w in enumerate(targets):
                if box_l.contains(w):
                    vals[j] = h[box_l.index(w)]
            return vals

        def near(targets: np.ndarray) -> np.ndarray:
            return (np.linalg.norm(targets.astype(float), axis=1)
                    < threshold) & lam_alive(targets)

        def far(targets: np.ndarray) -> np.ndarray:
            return (np.linalg.norm(targets.astype(float), axis=1)
                    >= threshold) & lam_alive(targets)

        sys_z = transition_system(spec, window)
        visits = sys_z.solve(_unit(window, x), transpose=True)
        e_near = float(np.dot(visits, sys_z.death_reward(reward, near)))
        e_far = float(np.dot(visits, sys_z.death_reward(reward, far)))
        g_l_x = h[box_l.index(x)]
        return np.array([g_l_x - e_near, e_far, g_l_x])

    refiner = _Refiner(spec, box, tol, None, max_rounds)
    (main, rem, g_l), diffs, _ = refiner.run(compute)
    err = _extrapolate_tail(diffs)
    if diffs and diffs[-1] > 1e3 * tol * (1.0 + abs(main)):
        raise TruncationError(
            f"renewal window ladder stalled at diff {diffs[-1]:.2e}; "
            f"enlarge the base window beyond {box.lo}..{box.hi}")
    return RenewalSplit(main=float(main), remainder=float(rem), delta=float(delta),
                        green_lambda=float(g_l), error=err)


def _unit(window: Window, pt: Sequence[int]) -> np.ndarray:
    b = np.zeros(window.size)
    b[window.index(pt)] = 1.0
    return b


# ---------------------------------------------------------------------------
# absorbing exit functionals (shared by the harmonic builders)
# ---------------------------------------------------------------------------

@dataclass
class ExitFunctionalTable:
    """E_x[reward(S(tau)); event] for every x in the window, with certificate."""

    spec: WalkSpec
    window: Window
    values: np.ndarray
    pointwise_error: np.ndarray
    tail_error: float

    def value(self, pt: Sequence[int]) -> float:
        idx = tuple(c - l for c, l in zip(pt, self.window.lo))
        return float(self.values[idx])

    def error_bound(self, pt: Sequence[int]) -> float:
        idx = tuple(c - l for c, l in zip(pt, self.window.lo))
        return float(self.pointwise_error[idx]) + self.tail_error


def exit_functional(spec: WalkSpec, box: Window,
                    reward: Callable[[np.ndarray], np.ndarray],
                    event_mask: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                    tol: float = DEFAULT_TOL, rounds: Optional[int] = None,
                    max_rounds: int = 24) -> ExitFunctionalTable:
    """Expected reward collected at the walk's death, started anywhere in the box.

    One forward absorbing solve per refinement round: the reward is
    attached to the killing transitions and (I - P) E = r is solved on
    the inflated window, then restricted to the requested box.
    """

    def compute(window: Window) -> np.ndarray:
        system = transition_system(spec, window)
        r = system.death_reward(reward, event_mask)
        e = system.solve(r, transpose=False)
        return _restrict(e, window, box)

    refiner = _Refiner(spec, box, tol, rounds, max_rounds)
    vals, diffs, _ = refiner.run(compute)
    last = diffs[-1] if diffs else 0.0
    pointwise = np.full(box.shape, last)
    return ExitFunctionalTable(spec=spec, window=box,
                               values=vals.reshape(box.shape),
                               pointwise_error=pointwise,
                               tail_error=_extrapolate_tail(diffs))
