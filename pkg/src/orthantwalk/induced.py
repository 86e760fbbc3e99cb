"""Induced chains on the killed coordinates and their harmonic functions.

Projecting the walk onto a coordinate subset L gives a random walk on
Z^L whose killed version (all coordinates of Z^L_+ enforced) is the
induced chain.  When the projection has zero mean its positive
harmonic functions are known explicitly in two cases: a single
coordinate, where f(k) = k - E_k(overshoot at the first entry into
k <= 0), and product-form kernels moving one coordinate at a time,
where f factorizes over the axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError, UnsupportedStructureError, ValidationError
from .measures import JumpMeasure, WalkSpec, ZERO_MEAN_TOL, marginal_measure
from . import green as green_mod

#: adaptive plateau solves stop when the queried value moves less than this
OVERSHOOT_TOL = 1e-9


@dataclass(frozen=True)
class InducedChain:
    """Killed projection of a walk onto the coordinates in ``lam``.

    ``lam`` is stored sorted; the projected measure lives on Z^|lam|
    with coordinates in that order.  ``lam`` empty encodes the
    constant sentinel chain (never killed, single absorbing-free
    state), whose harmonic functions are the constants.
    """

    base: Optional[JumpMeasure]
    lam: Tuple[int, ...]

    @property
    def is_constant(self) -> bool:
        return len(self.lam) == 0

    @property
    def dim(self) -> int:
        return len(self.lam)

    def walk_spec(self) -> WalkSpec:
        if self.is_constant:
            raise UnsupportedStructureError("constant sentinel chain has no walk")
        return WalkSpec(self.base, frozenset(range(self.dim)))


def induced_chain(measure: JumpMeasure, lam: Sequence[int]) -> InducedChain:
    """Induced chain of the walk on the coordinate subset ``lam``."""
    lam = tuple(sorted(set(int(i) for i in lam)))
    if not lam:
        return InducedChain(base=None, lam=())
    return InducedChain(base=marginal_measure(measure, lam), lam=lam)


# ---------------------------------------------------------------------------
# one-dimensional overshoot harmonic function
# ---------------------------------------------------------------------------

def _as_1d_atoms(nu) -> Dict[int, float]:
    if isinstance(nu, JumpMeasure):
        if nu.dim != 1:
            raise ValidationError("expected a one-dimensional measure")
        return {z[0]: p for z, p in nu.atoms.items()}
    return {int(k): float(p) for k, p in dict(nu).items()}


def _check_zero_mean(atoms: Dict[int, float]) -> None:
    mean = math.fsum(k * p for k, p in atoms.items())
    if abs(mean) > ZERO_MEAN_TOL:
        raise ValidationError(f"overshoot formula needs a zero-mean step law, got mean {mean!r}")


def _overshoot_vector(atoms: Dict[int, float], n: int) -> np.ndarray:
    """Solve u(k) = sum_j nu(j) [k+j <= 0 ? k+j : u(min(k+j, n))] on 1..n."""
    rows, cols, vals = [], [], []
    b = np.zeros(n)
    for j, p in atoms.items():
        for k in range(1, n + 1):
            t = k + j
            if t <= 0:
                b[k - 1] += p * t
            else:
                rows.append(k - 1)
                cols.append(min(t, n) - 1)
                vals.append(p)
    a = sp.identity(n, format="csr") - sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return spla.spsolve(a.tocsc(), b)


def overshoot_mean_1d(nu, k: int, tol: float = OVERSHOOT_TOL) -> float:
    """E_k of the walk's position at its first entry into {<= 0}.

    The linear system on {1..n} is closed with a plateau (u constant
    beyond n) and n is doubled until the value at the queried k moves
    by less than ``tol``.  Requires a zero-mean, finite-support step
    law; the value is always in [-(largest down-jump), 0].
    """
    atoms = _as_1d_atoms(nu)
    _check_zero_mean(atoms)
    k = int(k)
    if k < 1:
        raise ValidationError("k must be a positive integer")
    if min(atoms) >= -1:
        return 0.0  # never jumps past the boundary
    n = max(64, 4 * k)
    prev = _overshoot_vector(atoms, n)[k - 1]
    for _ in range(24):
        n *= 2
        cur = _overshoot_vector(atoms, n)[k - 1]
        if abs(cur - prev) < tol:
            return float(cur)
        prev = cur
    raise SolverError(f"overshoot plateau did not stabilize by n={n}", best=prev)


@dataclass
class OneDimHarmonic:
    """Positive harmonic function f(k) = k - E_k(overshoot) of a killed 1D walk."""

    nu: Dict[int, float]
    overshoot: np.ndarray
    plateau: float
    plateau_cut: int

    def overshoot_mean(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=int)
        out = np.where(k <= self.plateau_cut,
                       self.overshoot[np.minimum(k, self.plateau_cut) - 1],
                       self.plateau)
        return out if out.shape else float(out)

    def __call__(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        return k - self.overshoot_mean(k.astype(int))

    def residual(self, k_max: int = 200) -> float:
        """Largest scaled harmonicity defect over 1..k_max."""
        worst = 0.0
        for k in range(1, k_max + 1):
            acc = 0.0
            for j, p in self.nu.items():
                t = k + j
                if t > 0:
                    acc += p * float(self(t))
            fk = float(self(k))
            worst = max(worst, abs(acc - fk) / (1.0 + fk))
        return worst


def harmonic_1d(nu, tol: float = OVERSHOOT_TOL) -> OneDimHarmonic:
    """Build the overshoot harmonic function of a zero-mean 1D killed walk."""
    atoms = _as_1d_atoms(nu)
    _check_zero_mean(atoms)
    if min(atoms) >= -1:
        n = 64
        return OneDimHarmonic(nu=atoms, overshoot=np.zeros(n), plateau=0.0,
                              plateau_cut=n)
    n = 128
    u = _overshoot_vector(atoms, n)
    for _ in range(24):
        u2 = _overshoot_vector(atoms, 2 * n)
        if abs(u2[n - 1] - u[n - 1]) < tol and abs(u2[0] - u[0]) < tol:
            # keep the doubled solve; its first half is the converged range
            return OneDimHarmonic(nu=atoms, overshoot=u2[:n], plateau=float(u2[n - 1]),
                                  plateau_cut=n)
        n *= 2
        u = u2
    raise SolverError(f"overshoot plateau did not stabilize by n={n}")


# ---------------------------------------------------------------------------
# product-form harmonic functions
# ---------------------------------------------------------------------------

@dataclass
class ProductHarmonic:
    """Axis-factorized harmonic function of a one-coordinate-at-a-time chain.

    ``weights[i]`` is the original measure's mass on moves of axis i
    (they sum to 1 minus the mass at the origin); the factors are the
    one-dimensional overshoot harmonics of the normalized axis laws.
    """

    factors: List[OneDimHarmonic]
    weights: List[float]

    def __call__(self, u) -> float:
        u = np.asarray(u, dtype=int)
        out = 1.0
        for i, f in enumerate(self.factors):
            out *= float(f(int(u[i])))
        return out


def product_harmonic(chain: InducedChain) -> ProductHarmonic:
    """Factorized harmonic function for an axis-move, zero-mean induced chain.

    Requires every atom of the projected law to move at most one
    coordinate.  Laziness (mass at the origin) is removed by
    normalization, which does not change the harmonic functions.
    """
    if chain.is_constant:
        raise UnsupportedStructureError("constant chain has no product structure")
    nu = chain.base
    m = nu.dim
    mean = nu.mean
    if float(np.abs(mean).max()) > ZERO_MEAN_TOL:
        raise ValidationError("product harmonic needs a zero-mean projected law")
    lazy = 0.0
    axis_atoms: List[Dict[int, float]] = [dict() for _ in range(m)]
    for z, p in nu.atoms.items():
        moving = [i for i in range(m) if z[i] != 0]
        if len(moving) > 1:
            raise UnsupportedStructureError(
                "projected law moves several coordinates at once; "
                "no product-form harmonic function is available")
        if not moving:
            lazy += p
            continue
        i = moving[0]
        axis_atoms[i][z[i]] = axis_atoms[i].get(z[i], 0.0) + p
    weights = [math.fsum(a.values()) for a in axis_atoms]
    if any(w <= 0 for w in weights):
        raise UnsupportedStructureError("some coordinate never moves")
    factors = []
    for i in range(m):
        normalized = {k: p / weights[i] for k, p in axis_atoms[i].items()}
        factors.append(harmonic_1d(normalized))
    return ProductHarmonic(factors=factors, weights=weights)


# ---------------------------------------------------------------------------
# convergence norm
# ---------------------------------------------------------------------------

def _perron_value(p: sp.csr_matrix, tol: float = 1e-12,
                  max_iter: int = 500_000) -> float:
    """Perron eigenvalue by power iteration.

    Iterates on P + I so that period-2 kernels (for instance the plain
    +-1 walk, whose truncation is bipartite) converge too; the unit
    shift is subtracted from the Rayleigh quotient at the end.
    """
    n = p.shape[0]
    shifted = (p + sp.identity(n, format="csr")).tocsr()
    x = np.full(n, 1.0)
    x /= np.abs(x).max()
    prev_val = 0.0
    for it in range(max_iter):
        y = shifted @ x
        top = float(np.abs(y).max())
        if top == 0.0:
            return 0.0
        y /= top
        if float(np.abs(y - x).max()) <= tol and abs(top - prev_val) <= tol:
            x = y
            break
        prev_val = top
        x = y
    else:
        raise SolverError("power iteration did not converge")
    # Rayleigh quotient sharpens the final estimate
    px = shifted @ x
    lam = float(np.dot(x, px) / np.dot(x, x))
    return lam - 1.0


def convergence_norm(chain: InducedChain, box_sizes: Sequence[int],
                     tol: float = 1e-12) -> List[float]:
    """Perron eigenvalues of the chain truncated to {1..n}^L, one per n.

    The sequence is nondecreasing in n and its supremum over all
    finite truncations is the convergence norm of the killed kernel.
    """
    if chain.is_constant:
        raise UnsupportedStructureError("constant chain has no convergence norm")
    nu = chain.base
    m = nu.dim
    out = []
    for n in box_sizes:
        window = green_mod.Window(tuple([1] * m), tuple([int(n)] * m))
        system = green_mod.transition_system(chain.walk_spec(), window)
        out.append(_perron_value(system.matrix, tol=tol))
    return out


# ---------------------------------------------------------------------------
# hitting probabilities
# ---------------------------------------------------------------------------

def hitting_prob(chain: InducedChain, u_hat: Sequence[int], u: Sequence[int],
                 method: str = "exact", horizon: Optional[int] = None,
                 n_paths: int = 100_000, seed: int = 0,
                 box_pad: Optional[int] = None) -> float:
    """P(the chain started at u_hat ever visits u).

    ``exact`` evaluates g(u_hat, u) / g(u, u) from one backward
    absorbing solve.  ``mc`` simulates paths to a horizon that scales
    with the squared distance and treats censored paths as misses (the
    censored fraction is reported through a warning when sizable).
    """
    if chain.is_constant:
        return 1.0
    spec = chain.walk_spec()
    u_hat = tuple(int(c) for c in u_hat)
    u = tuple(int(c) for c in u)
    if not (spec.in_state_space(u_hat) and spec.in_state_space(u)):
        raise ValidationError("points must lie in the positive orthant of the chain")
    if u_hat == u:
        return 1.0
    if method == "exact":
        if box_pad is None:
            box_pad = 4 * max(max(u), max(u_hat)) + 16
        box = green_mod.window_around(spec, [u_hat, u], box_pad)
        table = green_mod.green_to_target(spec, u, box, tol=1e-12, max_rounds=10)
        num = table.value(u_hat)
        den = table.value(u)
        if den <= 0:
            raise SolverError("degenerate diagonal Green value")
        return min(max(num / den, 0.0), 1.0)
    if method == "mc":
        from .montecarlo import hitting_estimate
        if horizon is None:
            dist2 = sum((a - b) ** 2 for a, b in zip(u_hat, u))
            horizon = 200 * max(dist2, 1)
        est = hitting_estimate(spec, u_hat, u, n_paths=n_paths, horizon=horizon,
                               seed=seed)
        return est.mean
    raise ValidationError(f"unknown method {method!r}")
