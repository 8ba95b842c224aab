"""Flat torus fibers, constant Kahler metrics, Fourier mode sets, quasi-periodic grids.

Fibers live on the fixed real torus R^{2n}/Z^{2n} with real coordinates
(x, y) in [0,1)^{2n}; the complex structure enters only through the period
matrix tau via z = x + tau y.  This lets a family vary tau(s) without
re-meshing.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import InconsistentAutomorphy, NonPositiveMetric

TWO_PI = 2.0 * np.pi


def _as_matrix(tau) -> np.ndarray:
    t = np.asarray(tau, dtype=complex)
    if t.ndim == 0:
        t = t.reshape(1, 1)
    return t


def _check_positive(matrix: np.ndarray, what: str) -> None:
    m = np.asarray(matrix, dtype=complex)
    if not np.allclose(m, m.conj().T, atol=1e-12):
        raise NonPositiveMetric(f"{what} is not hermitian")
    w = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    if w.min() <= 0:
        raise NonPositiveMetric(f"{what} is not positive definite (min eig {w.min():.3e})")


@dataclass(frozen=True)
class Lattice:
    """Complex torus C^n / (Z^n + tau Z^n), n in {1, 2}."""

    tau: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "tau", _as_matrix(self.tau))
        n = self.tau.shape[0]
        if self.tau.shape != (n, n) or n not in (1, 2):
            raise NonPositiveMetric(f"period matrix must be n x n with n in {{1,2}}, got {self.tau.shape}")
        _check_positive(self.tau.imag, "Im(tau)")

    @property
    def n(self) -> int:
        return self.tau.shape[0]

    @property
    def im_tau(self) -> np.ndarray:
        return self.tau.imag.copy()


@dataclass(frozen=True)
class FiberChart:
    """A flat torus fiber: lattice plus constant hermitian metric g_{a b-bar}.

    The Kahler form is omega = i g_{a b-bar} dz^a wedge dz-bar^b; the volume
    integral of omega^n/n! has the closed form Pf(-2 Im(C^T g C-bar)) with
    C = [I | tau], which build_fiber confirms against quadrature in tests.
    """

    lattice: Lattice
    metric: np.ndarray
    volume: float = field(init=False)

    def __post_init__(self):
        g = np.asarray(self.metric, dtype=complex)
        if g.ndim == 0:
            g = g.reshape(1, 1)
        object.__setattr__(self, "metric", g)
        n = self.lattice.n
        if g.shape != (n, n):
            raise NonPositiveMetric(f"metric must be {n} x {n}")
        _check_positive(g, "fiber metric")
        object.__setattr__(self, "volume", _symplectic_volume(self.lattice.tau, g))

    @property
    def n(self) -> int:
        return self.lattice.n

    @property
    def tau(self) -> np.ndarray:
        return self.lattice.tau

    @property
    def metric_inv(self) -> np.ndarray:
        """g^{b-bar a}, the inverse transposed pairing used in contractions."""
        return np.linalg.inv(self.metric)

    def dz_from_real(self) -> np.ndarray:
        """C with dz = C d(x,y): shape (n, 2n)."""
        n = self.n
        return np.hstack([np.eye(n, dtype=complex), self.tau])

    def wirtinger(self) -> tuple[np.ndarray, np.ndarray]:
        """Rows are (d x^b/d z^a, d y^b/d z^a) resp. the z-bar version.

        Returns (Jz, Jzbar), each (n, 2n): partial of (x, y) w.r.t. z^a resp.
        z-bar^a, so that for a function f on the real torus,
        (d f / d z^a) = sum_j Jz[a, j] * (d f / d xi^j).
        """
        n = self.n
        tau = self.tau
        w = np.linalg.inv(tau - tau.conj())
        dy_dz = w.T
        dx_dz = (np.eye(n) - tau @ w).T
        dy_dzbar = -w.T
        dx_dzbar = (tau @ w).T
        return (np.hstack([dx_dz, dy_dz]), np.hstack([dx_dzbar, dy_dzbar]))


def _symplectic_volume(tau: np.ndarray, g: np.ndarray) -> float:
    n = tau.shape[0]
    c = np.hstack([np.eye(n, dtype=complex), tau])
    m = c.T @ g @ c.conj()
    omega = -2.0 * m.imag
    det = np.linalg.det(omega)
    if det <= 0:
        raise NonPositiveMetric("fiber volume form is degenerate")
    return float(np.sqrt(det))


def build_fiber(lattice: Lattice, metric) -> FiberChart:
    """Fiber chart with metric positivity checked and volume evaluated."""
    return FiberChart(lattice, np.asarray(metric, dtype=complex))


@dataclass(frozen=True)
class ModeSet:
    """Fourier modes e_k = exp(2 pi i (kx . x + ky . y)), |k|_inf <= K.

    Per mode the frequency covectors xi, xi-bar satisfy
    d/dz^a e_k = i xi_a(k) e_k and d/dz-bar^a e_k = i xibar_a(k) e_k.
    An optional character shift is added by the bundle layer, not here.
    """

    fiber: FiberChart
    cutoff: int
    modes: np.ndarray = field(init=False)       # (m, 2n) int
    xi: np.ndarray = field(init=False)           # (m, n) complex
    xibar: np.ndarray = field(init=False)        # (m, n) complex

    def __post_init__(self):
        if self.cutoff < 1:
            raise ValueError("cutoff K must be >= 1")
        n = self.fiber.n
        rng = range(-self.cutoff, self.cutoff + 1)
        modes = np.array(sorted(itertools.product(rng, repeat=2 * n)), dtype=int)
        object.__setattr__(self, "modes", modes)
        kx = modes[:, :n].astype(float)
        ky = modes[:, n:].astype(float)
        tau = self.fiber.tau
        w = np.linalg.inv(tau - tau.conj())
        # xi_a = 2 pi (kx . (I - tau w) + ky . w)[a]
        xi = TWO_PI * (kx @ (np.eye(n) - tau @ w) + ky @ w)
        xibar = TWO_PI * (kx @ (tau @ w) - ky @ w)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "xibar", xibar)

    @property
    def count(self) -> int:
        return self.modes.shape[0]

    def index_of(self, k) -> int:
        k = np.asarray(k, dtype=int)
        hit = np.where((self.modes == k).all(axis=1))[0]
        if hit.size != 1:
            raise KeyError(f"mode {k} not in set")
        return int(hit[0])

    def scalar_eigenvalues(self, shift_z=None) -> np.ndarray:
        """Closed-form Laplacian eigenvalue per mode on functions.

        shift_z is the per-component covariant shift t with
        nabla_a e_k = i (xi_a + t_a) e_k; trivial bundle means t = 0.
        """
        t = np.zeros(self.fiber.n, dtype=complex) if shift_z is None else np.asarray(shift_z)
        eta = self.xi + t[None, :]
        ginv = self.fiber.metric_inv
        return np.einsum("ma,ab,mb->m", eta, ginv.T, eta.conj()).real


def mode_set(fiber: FiberChart, cutoff: int) -> ModeSet:
    return ModeSet(fiber, cutoff)


# 4th-order central difference stencil: f' ~ (8(f1 - f-1) - (f2 - f-2)) / 12h
_STENCIL = ((1, 8.0 / 12.0), (-1, -8.0 / 12.0), (2, -1.0 / 12.0), (-2, 1.0 / 12.0))


@dataclass(frozen=True)
class QuasiGrid:
    """N x N real-torus grid carrying degree-d automorphy data (n = 1 only).

    Sections of the degree-d bundle are stored in the unitary gauge
    f-tilde = h^{1/2} f, in which the two lattice translations act by the
    pure phases  f(x+1, y) = f(x, y)  and
    f(x, y+1) = exp(-pi i d Re(tau) - 2 pi i d (x + Re(tau) y)) f(x, y).
    Those phases commute up to exp(2 pi i d) = 1, which is the consistency
    condition for integer d.  Central stencils crossing the y-seam multiply
    wrapped values by the phase.
    """

    fiber: FiberChart
    resolution: int
    degree: int

    def __post_init__(self):
        if self.fiber.n != 1:
            raise InconsistentAutomorphy("quasi-periodic grids support n = 1 only")
        if self.resolution < 8 * max(abs(self.degree), 1):
            raise InconsistentAutomorphy("need N >= 8 d for the automorphy phases to resolve")
        phase = np.exp(2j * np.pi * self.degree)
        if abs(phase - 1.0) > 1e-12:
            raise InconsistentAutomorphy("translation phases fail to commute: d not an integer")

    @property
    def count(self) -> int:
        return self.resolution ** 2

    @property
    def spacing(self) -> float:
        return 1.0 / self.resolution

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened x and y node coordinates, x fastest."""
        n = self.resolution
        t = np.arange(n) / n
        yy, xx = np.meshgrid(t, t, indexing="ij")
        return xx.ravel(), yy.ravel()

    def _lambda(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Translation phase: f(x, y+1) = lambda(x, y) f(x, y)."""
        d = self.degree
        r = float(self.fiber.tau[0, 0].real)
        return np.exp(-1j * np.pi * d * r - TWO_PI * 1j * d * (x + r * y))

    def shift_y(self, values: np.ndarray, offset: int) -> np.ndarray:
        """values sampled at (x, y + offset/N), automorphy phase applied at the seam."""
        if offset == 0:
            return values
        n = self.resolution
        v = values.reshape(n, n, *values.shape[1:])
        rolled = np.roll(v, -offset, axis=0)
        x, y = self.points()
        x = x.reshape(n, n)
        y = y.reshape(n, n)
        out = rolled.copy()
        idx = np.arange(n) + offset
        wrapped = (idx >= n) if offset > 0 else (idx < 0)
        if wrapped.any():
            if offset > 0:
                y_fold = y[wrapped, :] + offset / n - 1.0
                ph = self._lambda(x[wrapped, :], y_fold)
            else:
                y_fold = y[wrapped, :] + offset / n + 1.0
                ph = 1.0 / self._lambda(x[wrapped, :], y_fold - 1.0)
            out[wrapped] = out[wrapped] * ph.reshape(ph.shape + (1,) * (values.ndim - 1))
        return out.reshape(values.shape)

    def shift_x(self, values: np.ndarray, offset: int) -> np.ndarray:
        n = self.resolution
        v = values.reshape(n, n, *values.shape[1:])
        return np.roll(v, -offset, axis=1).reshape(values.shape)

    def deriv_x(self, values: np.ndarray) -> np.ndarray:
        h = self.spacing
        out = np.zeros_like(values, dtype=complex)
        for off, w in _STENCIL:
            out += w * self.shift_x(values, off)
        return out / h

    def deriv_y(self, values: np.ndarray) -> np.ndarray:
        h = self.spacing
        out = np.zeros_like(values, dtype=complex)
        for off, w in _STENCIL:
            out += w * self.shift_y(values, off)
        return out / h


# ---------------------------------------------------------------------------
# increasing multi-index bookkeeping shared by forms and operators

def increasing_tuples(n: int, p: int) -> list[tuple[int, ...]]:
    return list(itertools.combinations(range(n), p))


class IndexAlgebra:
    """Insert/remove bookkeeping for strictly increasing multi-indices.

    Skew coefficients are stored only at increasing tuples; inserting a bare
    index a in front of a tuple A and re-sorting costs the sign (-1)^pos of
    moving dz^a past the first pos factors.
    """

    _cache: dict[int, "IndexAlgebra"] = {}

    def __init__(self, n: int):
        self.n = n
        self.tuples = {p: increasing_tuples(n, p) for p in range(n + 1)}
        self.pos = {p: {t: i for i, t in enumerate(ts)} for p, ts in self.tuples.items()}

    @classmethod
    def get(cls, n: int) -> "IndexAlgebra":
        if n not in cls._cache:
            cls._cache[n] = cls(n)
        return cls._cache[n]

    def size(self, p: int) -> int:
        return len(self.tuples[p])

    def insert(self, a: int, t: tuple[int, ...]):
        """Canonical slot of sorted((a,) + t).  None if a already occurs."""
        if a in t:
            return None
        pos = 0
        while pos < len(t) and t[pos] < a:
            pos += 1
        merged = t[:pos] + (a,) + t[pos:]
        return self.pos[len(merged)][merged], (-1.0) ** pos

    @staticmethod
    def remove(t: tuple[int, ...], slot: int):
        """Drop entry number slot from t: (smaller tuple, sign (-1)^slot)."""
        return t[:slot] + t[slot + 1:], (-1.0) ** slot

    def minor_gram(self, ginv: np.ndarray, p: int) -> np.ndarray:
        """G[C, A] = det(ginv[c_i, a_j]) over increasing p-tuples.

        ginv is g^{b-bar a} indexed [b, a]; the determinant pairs the barred
        tuple C (rows) against the unbarred tuple A (columns).
        """
        ts = self.tuples[p]
        out = np.zeros((len(ts), len(ts)), dtype=complex)
        for ic, c in enumerate(ts):
            for ia, a in enumerate(ts):
                out[ic, ia] = 1.0 if p == 0 else np.linalg.det(ginv[np.ix_(c, a)])
        return out
