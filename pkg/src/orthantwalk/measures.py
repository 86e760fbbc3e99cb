"""Finite-support jump measures on Z^d and killed-walk specifications.

A walk is described by a jump measure mu (finite support, probabilities
summing to one) together with a kill set: the subset of coordinates
whose positivity is enforced.  The walk lives on

    Z^{L,d}_+ = {x in Z^d : x^i >= 1 for all i in L}

and is absorbed the first time it steps outside.  Kill set = all
coordinates gives the fully killed walk; kill set = empty gives the
free walk.  Coordinate indices are 0-based throughout.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import ValidationError

Vector = Tuple[int, ...]

#: probabilities must sum to one within this tolerance at construction
PROB_SUM_TOL = 1e-9
#: |M^i| below this counts as a zero mean coordinate
ZERO_MEAN_TOL = 1e-12


def _as_vector(z: Sequence[int], dim: int) -> Vector:
    v = tuple(int(c) for c in z)
    if len(v) != dim:
        raise ValidationError(f"atom {z!r} has length {len(v)}, expected {dim}")
    return v


class JumpMeasure:
    """Finite-support probability measure on Z^d with cached mean.

    Parameters
    ----------
    atoms : mapping from integer vectors to probabilities, all > 0.
    dim : lattice dimension; inferred from the first atom if omitted.
    """

    __slots__ = ("dim", "atoms", "mean", "_support", "_probs")

    def __init__(self, atoms: Mapping[Sequence[int], float], dim: Optional[int] = None):
        items = list(atoms.items())
        if not items:
            raise ValidationError("measure needs at least one atom")
        if dim is None:
            dim = len(items[0][0])
        if dim <= 0:
            raise ValidationError("dimension must be positive")
        clean: Dict[Vector, float] = {}
        for z, p in items:
            v = _as_vector(z, dim)
            p = float(p)
            if p <= 0.0:
                raise ValidationError(f"atom {v} has non-positive probability {p}")
            if v in clean:
                raise ValidationError(f"duplicate atom {v}")
            clean[v] = p
        total = math.fsum(clean.values())
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise ValidationError(f"probabilities sum to {total!r}, not 1")
        self.dim = dim
        self.atoms = clean
        support = np.array(sorted(clean), dtype=np.int64).reshape(len(clean), dim)
        probs = np.array([clean[tuple(z)] for z in support], dtype=float)
        self._support = support
        self._probs = probs
        mean = probs @ support
        mean.flags.writeable = False
        self.mean = mean

    @property
    def support(self) -> np.ndarray:
        """Support points as an (n_atoms, dim) integer array (sorted)."""
        return self._support

    @property
    def probabilities(self) -> np.ndarray:
        """Probabilities aligned with :attr:`support`."""
        return self._probs

    def max_jump_norm(self) -> int:
        """Largest sup-norm of a support point."""
        return int(np.abs(self._support).max())

    def __eq__(self, other) -> bool:
        return isinstance(other, JumpMeasure) and self.atoms == other.atoms

    def __hash__(self):
        return hash(tuple(sorted(self.atoms.items())))

    def __repr__(self) -> str:
        return f"JumpMeasure(dim={self.dim}, n_atoms={len(self.atoms)})"


def mean_vector(measure: JumpMeasure) -> np.ndarray:
    """Mean jump, the exact probability-weighted sum of the atoms."""
    return measure.mean.copy()


def lambda_of(v: Sequence[float], tol: float = ZERO_MEAN_TOL) -> frozenset:
    """Indices of (numerically) zero coordinates of a vector."""
    return frozenset(i for i, c in enumerate(v) if abs(float(c)) <= tol)


@dataclass(frozen=True)
class WalkSpec:
    """A jump measure plus the set of coordinates whose exit kills the walk.

    ``kill_set == frozenset(range(d))`` is the fully killed walk,
    ``kill_set == frozenset()`` is the free walk.
    """

    measure: JumpMeasure
    kill_set: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        d = self.measure.dim
        ks = frozenset(int(i) for i in self.kill_set)
        if any(i < 0 or i >= d for i in ks):
            raise ValidationError(f"kill set {sorted(ks)} out of range for dim {d}")
        object.__setattr__(self, "kill_set", ks)

    @property
    def dim(self) -> int:
        return self.measure.dim

    def in_state_space(self, x: Sequence[int]) -> bool:
        """Is x in Z^{L,d}_+, i.e. strictly positive on all killed coordinates?"""
        return all(int(x[i]) >= 1 for i in self.kill_set)

    def killed_full(self) -> bool:
        return self.kill_set == frozenset(range(self.dim))


def killed_walk(measure: JumpMeasure) -> WalkSpec:
    """The walk killed on exit from the full positive orthant."""
    return WalkSpec(measure, frozenset(range(measure.dim)))


def free_walk(measure: JumpMeasure) -> WalkSpec:
    return WalkSpec(measure, frozenset())


@dataclass(frozen=True)
class AssumptionReport:
    """Outcome of the standing-assumption checks for a jump measure.

    ``a1_irreducible`` maps each tested kill set to the windowed-BFS
    verdict; ``a1_all`` is their conjunction.  The BFS runs inside the
    window [1, W]^d, which is sufficient but not necessary for
    irreducibility, so a False entry means "not certified", not
    "disproved".
    """

    a1_irreducible: Mapping[frozenset, bool]
    a2_finite: bool
    a3_nonzero_mean: bool
    a4_axis_jumps_on_lambda_m: bool
    a4prime_axis_jumps: bool
    lambda_of_mean: frozenset

    @property
    def a1_all(self) -> bool:
        return all(self.a1_irreducible.values())

    @property
    def ok(self) -> bool:
        """A1 certified on every tested kill set and the mean is non-zero."""
        return self.a1_all and self.a3_nonzero_mean


def _axis_moves_only(vectors: Iterable[Sequence[int]]) -> bool:
    for z in vectors:
        if sum(1 for c in z if c != 0) > 1:
            return False
    return True


def _bfs_window_reachable(measure: JumpMeasure, kill_set: frozenset,
                          start: Vector, targets: Iterable[Vector],
                          window: int) -> bool:
    """BFS over support steps inside [1, window]^d; True if all targets hit."""
    d = measure.dim
    todo = set(targets)
    todo.discard(start)
    if not todo:
        return True
    seen = {start}
    queue = deque([start])
    steps = [tuple(z) for z in measure.atoms]
    while queue and todo:
        s = queue.popleft()
        for z in steps:
            t = tuple(s[i] + z[i] for i in range(d))
            if t in seen or any(c < 1 or c > window for c in t):
                continue
            seen.add(t)
            todo.discard(t)
            queue.append(t)
    return not todo


def _check_a1(measure: JumpMeasure, kill_set: frozenset) -> bool:
    d = measure.dim
    m = measure.max_jump_norm()
    window = max(4 * m * d, 2 * m + 3)
    base = tuple([m + 1] * d)
    probes: List[Vector] = [base]
    for i in range(d):
        for delta in (1, -1):
            p = list(base)
            p[i] += delta
            if all(1 <= c <= window for c in p):
                probes.append(tuple(p))
    return all(
        _bfs_window_reachable(measure, kill_set, p, probes, window)
        for p in probes
    )


def validate(measure: JumpMeasure) -> AssumptionReport:
    """Check the standing assumptions on a jump measure.

    Irreducibility is certified per kill set by breadth-first
    reachability between a probe set (base point and its axis shifts)
    inside the window [1, 4*m*d]^d, m the largest jump sup-norm.  All
    2^d kill sets are tested for d <= 4; beyond that only the empty
    set, the zero-mean coordinate set and the full set.
    """
    if measure.dim <= 0:
        raise ValidationError("dimension must be positive")
    total = math.fsum(measure.atoms.values())
    if abs(total - 1.0) > PROB_SUM_TOL:
        raise ValidationError(f"probabilities sum to {total!r}, not 1")

    d = measure.dim
    lam_m = lambda_of(measure.mean)
    if d <= 4:
        subsets = []
        for mask in range(1 << d):
            subsets.append(frozenset(i for i in range(d) if mask >> i & 1))
    else:
        subsets = [frozenset(), lam_m, frozenset(range(d))]
    a1 = {lam: _check_a1(measure, lam) for lam in subsets}

    marg_support = {tuple(z[i] for i in sorted(lam_m)) for z in measure.atoms} if lam_m else set()
    return AssumptionReport(
        a1_irreducible=a1,
        a2_finite=True,
        a3_nonzero_mean=bool(np.linalg.norm(measure.mean) > ZERO_MEAN_TOL),
        a4_axis_jumps_on_lambda_m=_axis_moves_only(marg_support) if lam_m else True,
        a4prime_axis_jumps=_axis_moves_only(measure.atoms),
        lambda_of_mean=lam_m,
    )


def marginal_measure(measure: JumpMeasure, lam: Iterable[int]) -> JumpMeasure:
    """Project the measure onto the coordinates in ``lam`` (sorted order).

    The projected atoms are accumulated, so the result may carry an
    atom at the origin even if the original measure does not.
    """
    lam = sorted(set(int(i) for i in lam))
    if not lam:
        raise ValidationError("marginal over the empty coordinate set is undefined")
    if any(i < 0 or i >= measure.dim for i in lam):
        raise ValidationError(f"coordinates {lam} out of range")
    out: Dict[Vector, float] = {}
    for z, p in measure.atoms.items():
        u = tuple(z[i] for i in lam)
        out[u] = out.get(u, 0.0) + p
    return JumpMeasure(out, dim=len(lam))


def communication_path(spec: WalkSpec, x: Sequence[int], xp: Sequence[int],
                       max_factor: Optional[int] = None) -> Optional[List[Vector]]:
    """Shortest support-step path from x to xp inside the state space.

    BFS over jump steps confined to the bounding box of {x, xp}
    inflated by a collar proportional to the jump range; each visited
    point keeps every killed coordinate >= 1.  Returns the list of
    steps, or None when the windowed search is exhausted.
    """
    d = spec.dim
    x = _as_vector(x, d)
    xp = _as_vector(xp, d)
    for pt in (x, xp):
        if not spec.in_state_space(pt):
            raise ValidationError(f"{pt} is outside the state space")
    if x == xp:
        return []
    m = spec.measure.max_jump_norm()
    if max_factor is None:
        max_factor = 4 * d * m
    collar = 2 * d * m + 2
    lo = [min(x[i], xp[i]) - collar for i in range(d)]
    hi = [max(x[i], xp[i]) + collar for i in range(d)]
    for i in spec.kill_set:
        lo[i] = max(lo[i], 1)
    dist = sum(abs(x[i] - xp[i]) for i in range(d))
    cap = max_factor * dist + max_factor

    steps = [tuple(z) for z in spec.measure.atoms]
    parent: Dict[Vector, Tuple[Vector, Vector]] = {}
    seen = {x}
    queue = deque([(x, 0)])
    while queue:
        s, n = queue.popleft()
        if n >= cap:
            continue
        for z in steps:
            t = tuple(s[i] + z[i] for i in range(d))
            if t in seen:
                continue
            if any(t[i] < lo[i] or t[i] > hi[i] for i in range(d)):
                continue
            seen.add(t)
            parent[t] = (s, z)
            if t == xp:
                path = []
                cur = t
                while cur != x:
                    prev, step = parent[cur]
                    path.append(step)
                    cur = prev
                path.reverse()
                return path
            queue.append((t, n + 1))
    return None


# ---------------------------------------------------------------------------
# measure file format: a header line "dim <d>", then one line per atom
#     atom <z_1> ... <z_d> <p>
# Blank lines and lines starting with '#' are ignored.  Duplicate atoms
# are rejected.
# ---------------------------------------------------------------------------

def load_measure(path) -> JumpMeasure:
    """Parse a jump measure from its text-file representation."""
    dim = None
    atoms: Dict[Vector, float] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "dim":
                if dim is not None:
                    raise ValidationError(f"{path}:{lineno}: repeated dim header")
                dim = int(parts[1])
            elif parts[0] == "atom":
                if dim is None:
                    raise ValidationError(f"{path}:{lineno}: atom before dim header")
                if len(parts) != dim + 2:
                    raise ValidationError(
                        f"{path}:{lineno}: expected {dim} coordinates and one probability")
                z = tuple(int(c) for c in parts[1:1 + dim])
                if z in atoms:
                    raise ValidationError(f"{path}:{lineno}: duplicate atom {z}")
                atoms[z] = float(parts[-1])
            else:
                raise ValidationError(f"{path}:{lineno}: unknown record {parts[0]!r}")
    if dim is None:
        raise ValidationError(f"{path}: missing dim header")
    return JumpMeasure(atoms, dim=dim)


def dump_measure(measure: JumpMeasure, path) -> None:
    """Write a measure in the format read by :func:`load_measure`."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"dim {measure.dim}\n")
        for z in sorted(measure.atoms):
            coords = " ".join(str(c) for c in z)
            fh.write(f"atom {coords} {measure.atoms[z]!r}\n")
