"""Hermitian holomorphic bundles on a torus fiber.

Every supported bundle is diagonal: a direct sum of components, each a flat
unitary character line or a degree-d automorphy line.  Per component the
covariant derivatives act as

    nabla_a   e_k = i (xi_a(k)    + shift_z[a])    e_k      (Fourier)
    nabla_a-bar e_k = i (xibar_a(k) + shift_zbar[a]) e_k

on Fourier modes, or as 4th-order stencils plus a multiplier field in the
unitary gauge on quasi-periodic grids.  Fiber curvature Theta_{a b-bar} is a
constant matrix per component (zero for flat kinds, pi d / Im(tau) for the
degree-d bundle with the translation-invariant metric).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InconsistentAutomorphy, Unsupported
from .geometry import TWO_PI, FiberChart, QuasiGrid


def character_shifts(fiber: FiberChart, chi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Frequency shifts of the flat unitary character chi in [0,1)^{2n}.

    These are the xi / xibar covectors of the fractional mode chi, so a mode
    k is covariantly constant exactly when k + chi lies in Z^{2n}.
    """
    n = fiber.n
    chi = np.asarray(chi, dtype=float)
    kx, ky = chi[:n], chi[n:]
    tau = fiber.tau
    w = np.linalg.inv(tau - tau.conj())
    shift_z = TWO_PI * (kx @ (np.eye(n) - tau @ w) + ky @ w)
    shift_zbar = TWO_PI * (kx @ (tau @ w) - ky @ w)
    return shift_z, shift_zbar


@dataclass(frozen=True)
class BundleComponent:
    """One diagonal line: frequency shifts, automorphy degree, curvature."""

    shift_z: np.ndarray        # (n,) complex
    shift_zbar: np.ndarray     # (n,) complex
    degree: int = 0
    label: tuple = ()

    def curvature(self, fiber: FiberChart) -> np.ndarray:
        """Constant Theta_{a b-bar} on the fiber for this component."""
        n = fiber.n
        if self.degree == 0:
            return np.zeros((n, n), dtype=complex)
        t = float(fiber.tau[0, 0].imag)
        return np.array([[np.pi * self.degree / t]], dtype=complex)


@dataclass(frozen=True)
class BundleData:
    """A direct sum of character lines or a single automorphy line.

    kind is one of "trivial", "character", "character_sum", "automorphy",
    "end".  For "end" the components enumerate ordered pairs (i, j) of the
    base bundle's components and carry the difference shifts, so that the
    commutator action of curvature terms is again diagonal.
    """

    kind: str
    components: tuple[BundleComponent, ...]
    degree: int = 0
    base_rank: int = 0
    chars: np.ndarray | None = None

    @property
    def rank(self) -> int:
        return len(self.components)

    def curvatures(self, fiber: FiberChart) -> np.ndarray:
        """Stacked constant Theta_{a b-bar}, shape (rank, n, n)."""
        return np.stack([c.curvature(fiber) for c in self.components])

    def is_fiberwise_flat(self, fiber: FiberChart) -> bool:
        return bool(np.max(np.abs(self.curvatures(fiber))) < 1e-14)


def trivial_bundle(fiber: FiberChart, rank: int = 1) -> BundleData:
    z = np.zeros(fiber.n, dtype=complex)
    comps = tuple(BundleComponent(z, z, 0, (i,)) for i in range(rank))
    return BundleData("trivial", comps)


def character_bundle(fiber: FiberChart, chi) -> BundleData:
    chi = np.asarray(chi, dtype=float)
    sz, szb = character_shifts(fiber, chi)
    return BundleData("character", (BundleComponent(sz, szb, 0, (0,)),),
                      chars=chi.reshape(1, -1))


def character_sum_bundle(fiber: FiberChart, chis) -> BundleData:
    chis = np.asarray(chis, dtype=float)
    comps = []
    for i, chi in enumerate(chis):
        sz, szb = character_shifts(fiber, chi)
        comps.append(BundleComponent(sz, szb, 0, (i,)))
    return BundleData("character_sum", tuple(comps), chars=chis)


def pic_deformation_bundle(fiber: FiberChart, us) -> BundleData:
    """Sum of flat unitary lines given by dbar-shifts u_j (Pic^0 parameters).

    The holomorphic structure is dbar + u_j dz-bar per component; with the
    flat metric the (1,0) shift is the conjugate i u-bar.
    """
    us = np.atleast_2d(np.asarray(us, dtype=complex))
    comps = []
    for j, u in enumerate(us):
        shift_zbar = -1j * u
        shift_z = np.conj(shift_zbar)
        comps.append(BundleComponent(shift_z, shift_zbar, 0, (j,)))
    kind = "character" if len(comps) == 1 else "character_sum"
    return BundleData(kind, tuple(comps))


def automorphy_bundle(fiber: FiberChart, degree: int) -> BundleData:
    """Degree-d line bundle with the translation-invariant-curvature metric.

    Negative degree is the dual line; d = 0 is rejected (use trivial).
    """
    if fiber.n != 1:
        raise InconsistentAutomorphy("automorphy bundles are implemented for n = 1")
    if degree == 0:
        raise InconsistentAutomorphy("degree must be nonzero")
    z = np.zeros(1, dtype=complex)
    return BundleData("automorphy", (BundleComponent(z, z, degree, (0,)),),
                      degree=degree)


def end_bundle(bundle: BundleData) -> BundleData:
    """End(E) = E (x) E^*, diagonal in the character components.

    Curvature terms act by the commutator, which on the (i, j) component is
    multiplication by Theta_i - Theta_j.
    """
    if bundle.kind not in ("trivial", "character", "character_sum"):
        raise Unsupported("end_bundle supports character-type bundles only")
    r = bundle.rank
    comps = []
    for i in range(r):
        for j in range(r):
            ci, cj = bundle.components[i], bundle.components[j]
            comps.append(BundleComponent(ci.shift_z - cj.shift_z,
                                         ci.shift_zbar - cj.shift_zbar,
                                         0, (i, j)))
    return BundleData("end", tuple(comps), base_rank=r)


def grid_multipliers(bundle: BundleData, grid: QuasiGrid) -> tuple[np.ndarray, np.ndarray]:
    """Unitary-gauge multiplier fields m_z, m_zbar, shape (rank, npts).

    nabla-tilde_z = D_z + m_z and nabla-tilde_zbar = D_zbar + m_zbar; for the
    degree-d metric both multipliers equal i pi d y, and compatibility with
    the unit metric is m_z = -conj(m_zbar).
    """
    x, y = grid.points()
    mz = np.zeros((bundle.rank, grid.count), dtype=complex)
    mzb = np.zeros((bundle.rank, grid.count), dtype=complex)
    for c, comp in enumerate(bundle.components):
        if comp.degree != 0:
            mz[c] = 1j * np.pi * comp.degree * y
            mzb[c] = 1j * np.pi * comp.degree * y
        else:
            mz[c] = 1j * comp.shift_z[0]
            mzb[c] = 1j * comp.shift_zbar[0]
    return mz, mzb


def chern_data(bundle: BundleData, fiber: FiberChart):
    """Connection and curvature coefficients (theta, Theta).

    theta is returned per component: a constant (rank, n) array for flat
    kinds, or a callable theta(x, y) -> (rank, n, npts) for automorphy kinds
    (theta_z = 2 pi i d y in the holomorphic gauge).  Theta is the constant
    (rank, n, n) stack; for characters it vanishes identically and for
    degree d one has (i / 2 pi) * integral(Theta) = d.
    """
    thetas = bundle.curvatures(fiber)
    if bundle.kind == "automorphy":
        d = bundle.degree
        if fiber.n != 1:
            raise InconsistentAutomorphy("automorphy bundles are implemented for n = 1")

        def theta_fn(x, y):
            return (TWO_PI * 1j * d * np.asarray(y))[None, None, :]

        return theta_fn, thetas
    theta_const = np.stack([1j * np.conj(c.shift_zbar) for c in bundle.components])
    return theta_const, thetas


def bundle_degree(bundle: BundleData, fiber: FiberChart) -> float:
    """(i / 2 pi) * integral of Theta over the fiber (n = 1 components summed)."""
    if fiber.n != 1:
        raise Unsupported("degree check implemented for n = 1")
    t = float(fiber.tau[0, 0].imag)
    total = 0.0
    for comp in bundle.components:
        theta = comp.curvature(fiber)[0, 0]
        total += float((1j * theta * (-2j * t) / TWO_PI).real)
    return total
