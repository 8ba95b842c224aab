"""One-parameter families: horizontal lifts, Kodaira-Spencer data, Lie derivatives.

Three family kinds are realized, all with potential-based total-space forms
omega = i del delbar Phi so that d omega = 0 holds exactly:

* complex_structure: tau(s) varies (symmetric, Im positive), fibers carry the
  unit-volume metric from Phi = (Im z)^T (Im tau)^{-1} (Im z); bundle is a sum
  of fixed flat unitary characters (default trivial).
* character_path: fixed fiber; the Pic^0 parameters u_j(s) of a character sum
  move holomorphically and the metric factors exp(-kappa_j |s - s0|^2) feed
  the base curvature Theta_{s s-bar} = kappa_j.
* theta: degree-d automorphy line over a varying tau(s), with the 2 pi |d|
  scaled potential, so the fiber form equals sign(d) i Theta exactly and the
  horizontal lift is the same as in the untwisted case.

A ProductKaehlerTerm beta adds beta * i ds wedge ds-bar to omega: it shifts
the geodesic curvature by exactly beta and must leave every curvature value
unchanged, which is the gauge-invariance acceptance channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import operators as ops
from .bundles import (BundleData, automorphy_bundle, character_bundle,
                      character_shifts, character_sum_bundle, end_bundle,
                      pic_deformation_bundle, trivial_bundle)
from .errors import DegenerateFiber, MissingSDerivative, RankZero
from .forms import (Backend, FourierBackend, GridBackend, PQForm,
                    TangentValuedForm, constant_form, cup, cup_bar, l2_inner,
                    wedge_end, zero_form)
from .geometry import (FiberChart, IndexAlgebra, Lattice, ModeSet, QuasiGrid,
                       build_fiber, mode_set)
from .jets import Jet, imag_jet
from .theta import theta_sections, theta_sections_dtau


@dataclass(frozen=True)
class TauPath:
    """Holomorphic period path with exact first and second derivatives."""

    tau0: np.ndarray
    velocity: np.ndarray
    s0: complex
    accel: np.ndarray | None = None

    def value(self, s: complex) -> np.ndarray:
        ds = s - self.s0
        out = self.tau0 + ds * self.velocity
        if self.accel is not None:
            out = out + 0.5 * ds * ds * self.accel
        return out

    def d1(self, s: complex) -> np.ndarray:
        if self.accel is None:
            return np.asarray(self.velocity, dtype=complex)
        return self.velocity + (s - self.s0) * self.accel

    def d2(self, s: complex) -> np.ndarray:
        if self.accel is None:
            return np.zeros_like(np.asarray(self.tau0, dtype=complex))
        return np.asarray(self.accel, dtype=complex)


def tau_line(tau0, s0: complex, velocity=None) -> TauPath:
    """tau(s) = tau0 + (s - s0) * velocity; default velocity is the identity
    direction (tau(s) = s for n = 1 with tau0 = s0)."""
    t0 = np.asarray(tau0, dtype=complex)
    if t0.ndim == 0:
        t0 = t0.reshape(1, 1)
    vel = np.eye(t0.shape[0], dtype=complex) if velocity is None else np.asarray(velocity, dtype=complex)
    if vel.ndim == 0:
        vel = vel.reshape(1, 1)
    return TauPath(t0, vel, s0)


@dataclass(frozen=True)
class FamilyDescriptor:
    """All data a run needs to rebuild fibers, bundles and frames at any s."""

    kind: str                     # complex_structure | character_path | theta
    s0: complex
    tau_path: TauPath
    degree: int = 0               # theta kind; sign selects dual lines
    chars: np.ndarray | None = None       # fixed characters (complex_structure)
    u0: np.ndarray | None = None          # Pic^0 offsets at s0 (character_path)
    du: np.ndarray | None = None          # holomorphic Pic^0 velocities
    kappa: np.ndarray | None = None       # metric-factor curvatures per line
    beta: float = 0.0             # pullback term beta_{s s-bar}
    use_end: bool = False         # evaluate on End(E) rather than E
    label: str = ""

    @property
    def n(self) -> int:
        return self.tau_path.tau0.shape[0]

    @property
    def potential_scale(self) -> float:
        return 2.0 * np.pi * abs(self.degree) if self.kind == "theta" else 1.0

    def with_beta(self, beta: float) -> "FamilyDescriptor":
        return replace(self, beta=beta)

    # -- geometry -----------------------------------------------------------

    def tau_jet(self, s: complex) -> Jet:
        return Jet.holomorphic(self.tau_path.value(s), self.tau_path.d1(s))

    def fiber_at(self, s: complex) -> FiberChart:
        tau = self.tau_path.value(s)
        if np.linalg.eigvalsh(tau.imag).min() <= 0:
            raise DegenerateFiber(f"Im tau lost positivity at s = {s}")
        p = np.linalg.inv(tau.imag)
        metric = 0.5 * self.potential_scale * 0.5 * (p + p.T)
        return build_fiber(Lattice(tau), metric)

    def bundle_at(self, s: complex, fiber: FiberChart) -> BundleData:
        if self.kind == "theta":
            return automorphy_bundle(fiber, self.degree)
        if self.kind == "character_path":
            us = self.u0 + (s - self.s0) * self.du
            base = pic_deformation_bundle(fiber, us.reshape(-1, 1))
            if len(us) > 1:
                base = replace(base, kind="character_sum")
            return end_bundle(base) if self.use_end else base
        chars = self.chars if self.chars is not None else np.zeros((1, 2 * self.n))
        base = character_sum_bundle(fiber, chars) if len(chars) > 1 else (
            character_bundle(fiber, chars[0]) if np.any(chars) else trivial_bundle(fiber, len(chars)))
        return end_bundle(base) if self.use_end else base

    def make_backend(self, s: complex, cutoff: int | None = None,
                     resolution: int | None = None) -> Backend:
        fiber = self.fiber_at(s)
        if self.kind == "theta":
            if resolution is None:
                raise ValueError("theta families need a grid resolution")
            return GridBackend(fiber, QuasiGrid(fiber, resolution, self.degree))
        if cutoff is None:
            raise ValueError("flat families need a Fourier cutoff")
        return FourierBackend(fiber, mode_set(fiber, cutoff))

    # -- metric-factor weights for Gram evaluation off the base point -------

    def component_weights(self, s: complex, bundle: BundleData) -> np.ndarray:
        """Multiplicative h-factors exp(-kappa |s-s0|^2) per component."""
        r = bundle.rank
        if self.kind != "character_path" or self.kappa is None:
            return np.ones(r)
        d2 = abs(s - self.s0) ** 2
        if bundle.kind == "end":
            rb = bundle.base_rank
            out = np.ones(r)
            for c, comp in enumerate(bundle.components):
                i, j = comp.label
                out[c] = np.exp(-(self.kappa[i] - self.kappa[j]) * d2)
            return out
        return np.exp(-np.asarray(self.kappa) * d2)


# convenience constructors -------------------------------------------------

def elliptic_family(s0: complex = 1j, velocity: complex = 1.0, beta: float = 0.0,
                    rank: int = 1, use_end: bool = False) -> FamilyDescriptor:
    """Untwisted elliptic-curve family tau(s) = s0 + velocity (s - s0)."""
    return FamilyDescriptor("complex_structure", s0, tau_line(s0, s0, velocity),
                            chars=np.zeros((rank, 2)), beta=beta, use_end=use_end,
                            label="elliptic")


def torus_family(tau0, s0: complex, velocity, beta: float = 0.0) -> FamilyDescriptor:
    """Untwisted n = 2 family along a symmetric velocity direction."""
    path = tau_line(tau0, s0, velocity)
    n = path.tau0.shape[0]
    return FamilyDescriptor("complex_structure", s0, path,
                            chars=np.zeros((1, 2 * n)), beta=beta, label="torus2")


def character_family(tau0=1j, s0: complex = 0.0, u0=(0.0,), du=(0.0,),
                     kappa=(0.0,), beta: float = 0.0,
                     use_end: bool = False) -> FamilyDescriptor:
    """Product family with moving flat characters and metric factors."""
    u0 = np.asarray(u0, dtype=complex)
    du = np.asarray(du, dtype=complex)
    kap = np.asarray(kappa, dtype=float)
    return FamilyDescriptor("character_path", s0, tau_line(tau0, s0, 0.0),
                            u0=u0, du=du, kappa=kap, beta=beta, use_end=use_end,
                            label="character")


def theta_family(degree: int = 1, s0: complex = 1j, velocity: complex = 1.0,
                 beta: float = 0.0) -> FamilyDescriptor:
    return FamilyDescriptor("theta", s0, tau_line(s0, s0, velocity),
                            degree=degree, beta=beta, label=f"theta{degree}")


# --------------------------------------------------------------------------
# horizontal data

@dataclass
class HorizontalData:
    """Per-(family, s) package of horizontal-lift data on the fiber.

    a_lin stores the y-linear horizontal correction a^al = a_lin[al, be] y^be
    (exactly y-linear on all supported families).  eta holds the constant
    coefficients of the (0,1)-form eta_s per bundle component, theta_vv the
    constant hermitian form Theta(v, v-bar) per component.
    """

    family: FamilyDescriptor
    s: complex
    fiber: FiberChart
    a_lin: np.ndarray           # (n, n)
    ks: np.ndarray              # (n, n): A^al_{be-bar}
    c0: float                   # constant geodesic curvature (incl. beta)
    eta: np.ndarray             # (rank, n)
    theta_vv: np.ndarray        # (rank,)

    def ks_form(self, backend: Backend) -> TangentValuedForm:
        return TangentValuedForm(backend, self.ks)

    def eta_form(self, backend: Backend, bundle: BundleData) -> PQForm:
        """eta_s as a bundle-endomorphism-valued (0,1)-form (diagonal)."""
        table = np.zeros((1, self.fiber.n, bundle.rank), dtype=complex)
        for c in range(bundle.rank):
            table[0, :, c] = self.eta[c]
        out = constant_form(backend, bundle, 0, 1, table)
        return out

    def eta_bar_form(self, backend: Backend, bundle: BundleData) -> PQForm:
        """eta_{s-bar} = -(v-bar cup Theta)|fiber: constant (1,0)-form.

        For our families eta_{s-bar} = -conj-coefficients of eta_s placed on
        dz (the mixed curvature is Theta_{z s-bar} = conj(Theta_{s z-bar})
        with the orientation flip absorbed here).
        """
        table = np.zeros((self.fiber.n, 1, bundle.rank), dtype=complex)
        for c in range(bundle.rank):
            table[:, 0, c] = -np.conj(self.eta[c])
        return constant_form(backend, bundle, 1, 0, table)

    # -- sampled coefficient fields (identity suite) ------------------------

    def sample_points(self, m: int = 5) -> np.ndarray:
        """Deterministic z-samples (as u = Im z vectors) inside the fiber."""
        n = self.fiber.n
        rng = np.random.default_rng(70707)
        t = self.fiber.tau.imag
        y = 0.05 + 0.9 * rng.random((m, n))
        return y @ t.T

    def geometry_jets(self, u: np.ndarray) -> dict:
        """Jets of the omega coefficients at a point with Im z = u.

        Returns g (matrix jet), g_s_bcol[(beta,)] = g_{s beta-bar} jets,
        g_ssbar (value), a (vector of jets), c (value incl. beta).
        """
        fam = self.family
        c_scale = fam.potential_scale
        tau = fam.tau_jet(self.s)
        taup = Jet.holomorphic(fam.tau_path.d1(self.s), fam.tau_path.d2(self.s))
        t = imag_jet(tau)
        p = t.inv()
        g = p * (0.5 * c_scale)
        uj = Jet.const(u.astype(complex))
        if fam.kind == "character_path":
            n = fam.n
            zero = Jet.const(np.zeros(n, dtype=complex))
            return {"g": g, "g_sb": zero, "g_ssbar": 0.0,
                    "a": zero, "c": fam.beta}
        ptau = p.matmul(taup).matmul(p)
        g_sb = ptau.matmul(uj) * (-0.5 * c_scale)         # vector jet over beta
        a = taup.matmul(p).matmul(uj)                     # vector jet over alpha
        # g_ssbar = C u^T [P Tsb P Ts P + P Ts P Tsb P] u (value level)
        pv = p.value
        ts = taup.value / 2j
        tsb = -np.conj(taup.value) / 2j
        m1 = pv @ tsb @ pv @ ts @ pv
        m2 = pv @ ts @ pv @ tsb @ pv
        g_ssbar = float(np.real(c_scale * u @ (m1 + m2) @ u))
        c_val = g_ssbar - float(np.real(
            g_sb.value @ np.linalg.inv(g.value) @ np.conj(g_sb.value)))
        return {"g": g, "g_sb": g_sb, "g_ssbar": g_ssbar,
                "a": a, "c": c_val + fam.beta}

    def c_values(self, points_u: np.ndarray) -> np.ndarray:
        return np.array([self.geometry_jets(u)["c"] for u in points_u])


def horizontal_data(family: FamilyDescriptor, s: complex) -> HorizontalData:
    fiber = family.fiber_at(s)
    n = family.n
    taup = family.tau_path.d1(s)
    if family.kind == "character_path":
        a_lin = np.zeros((n, n), dtype=complex)
        ks = np.zeros((n, n), dtype=complex)
        r = len(family.u0)
        eta = np.zeros((r, n), dtype=complex)
        eta[:, 0] = -family.du
        tvv = np.asarray(family.kappa, dtype=float).copy()
        if family.use_end:
            eta_e = np.zeros((r * r, n), dtype=complex)
            tvv_e = np.zeros(r * r)
            for i in range(r):
                for j in range(r):
                    eta_e[i * r + j] = eta[i] - eta[j]
                    tvv_e[i * r + j] = tvv[i] - tvv[j]
            eta, tvv = eta_e, tvv_e
        return HorizontalData(family, s, fiber, a_lin, ks, family.beta, eta, tvv)

    p = np.linalg.inv(fiber.tau.imag)
    a_lin = taup.copy()                     # a^al = (tau' P u)_al = (tau' y)_al
    ks = 0.5j * (taup @ p)
    if family.kind == "theta":
        rank = 1
        eta = np.zeros((rank, n), dtype=complex)
        tvv = np.zeros(rank)                # sign(d) * c(omega) with c == 0
    else:
        rank = len(family.chars) if family.chars is not None else 1
        if family.use_end:
            rank = rank * rank
        eta = np.zeros((rank, n), dtype=complex)
        tvv = np.zeros(rank)
    return HorizontalData(family, s, fiber, a_lin, ks, family.beta, eta, tvv)


@dataclass
class SectionHandle:
    """A fiberwise-harmonic representative with analytic s-dependence.

    form is the value at the base point; ds and dsbar are the covariant
    s-derivatives of the coefficient functions in the admissible chart (None
    when the construction does not provide them).
    """

    form: PQForm
    ds: PQForm | None = None
    dsbar: PQForm | None = None

    def require_ds(self) -> PQForm:
        if self.ds is None:
            raise MissingSDerivative("representative lacks an analytic d/ds handle")
        return self.ds

    def require_dsbar(self) -> PQForm:
        if self.dsbar is None:
            raise MissingSDerivative("representative lacks an analytic d/ds-bar handle")
        return self.dsbar


def _a_term(hd: HorizontalData, psi: PQForm, barred: bool) -> PQForm:
    """a^al nabla_al psi resp. the conjugate; a is y-linear on the fiber."""
    out = psi.zero_like()
    n = psi.n
    a_lin = np.conj(hd.a_lin) if barred else hd.a_lin
    if np.max(np.abs(a_lin)) == 0.0:
        return out
    grads = [ops._cov_deriv(psi.backend, psi.bundle, psi.coeff, al, barred=barred)
             for al in range(n)]
    if psi.backend.kind == "fourier":
        scale = max(float(np.max(np.abs(g))) for g in grads)
        if scale > 1e-12 * max(float(np.max(np.abs(psi.coeff))), 1.0):
            raise MissingSDerivative(
                "y-linear horizontal term on a non-constant Fourier representative")
        return out
    x, y = psi.backend.grid.points()
    for al in range(n):
        a_field = sum(a_lin[al, be] * y for be in range(n))  # n = 1 on grids
        out.coeff += a_field[:, None, None, None] * grads[al]
    return out


def _replacement_term(hd: HorizontalData, psi: PQForm, barred: bool) -> PQForm:
    """sum_mu (da)[slot_mu -> al] psi replacements; da = -ks (resp. conj)."""
    n = psi.n
    alg = IndexAlgebra.get(n)
    da = -(np.conj(hd.ks) if barred else hd.ks)   # da[m, al] = d_m a^al (symmetric)
    out = psi.zero_like()
    tuples = alg.tuples[psi.q] if barred else alg.tuples[psi.p]
    for it, t in enumerate(tuples):
        acc = 0.0
        for mu in range(len(t)):
            for al in range(n):
                rep = ops._replace_slot(alg, t, mu, al)
                if rep is None:
                    continue
                j, sgn = rep
                w = da[t[mu], al]
                if barred:
                    acc = acc + sgn * w * psi.coeff[:, :, j, :]
                else:
                    acc = acc + sgn * w * psi.coeff[:, j, :, :]
        if barred:
            out.coeff[:, :, it, :] += acc
        else:
            out.coeff[:, it, :, :] += acc
    return out


def lie_components(hd: HorizontalData, handle: SectionHandle) -> dict[str, PQForm | None]:
    """Type components of the Lie derivatives along v and v-bar.

    Keys: lv_prime (p,q), lv_dbl (p-1,q+1), lvbar_prime (p,q),
    lvbar_dbl (p+1,q-1); entries are None outside the bidegree range.
    The double-primed parts are the cup products with the Kodaira-Spencer
    tensor; the primed parts assemble the coordinate expressions from the
    analytic s-derivative of the representative.
    """
    psi = handle.form
    backend = psi.backend
    a_form = hd.ks_form(backend)
    lv_prime = handle.require_ds() + _a_term(hd, psi, barred=False) \
        + _replacement_term(hd, psi, barred=False)
    lvbar_prime = handle.require_dsbar() + _a_term(hd, psi, barred=True) \
        + _replacement_term(hd, psi, barred=True)
    lv_dbl = cup(a_form, psi) if (psi.p >= 1 and psi.q < psi.n) else None
    lvbar_dbl = cup_bar(a_form, psi) if (psi.q >= 1 and psi.p < psi.n) else None
    return {"lv_prime": lv_prime, "lv_dbl": lv_dbl,
            "lvbar_prime": lvbar_prime, "lvbar_dbl": lvbar_dbl}


def semmes_defect(family: FamilyDescriptor, s: complex, c_override=None,
                  samples: int = 7) -> float:
    """Max defect of det(G_total) = c(omega) det(g) over fiber samples.

    Evaluating both sides of the top-degree identity reduces to this Schur
    relation between the omega coefficients; the optional c_override feeds
    the sensitivity channel.
    """
    hd = horizontal_data(family, s)
    worst = 0.0
    for u in hd.sample_points(samples):
        jets = hd.geometry_jets(u)
        g = jets["g"].value
        gsb = jets["g_sb"].value
        c = jets["c"] if c_override is None else c_override(jets["c"])
        gss = jets["g_ssbar"] + family.beta
        n = g.shape[0]
        big = np.zeros((n + 1, n + 1), dtype=complex)
        big[:n, :n] = g
        big[n, :n] = gsb                    # g_{s beta-bar}
        big[:n, n] = np.conj(gsb)           # g_{alpha s-bar}
        big[n, n] = gss
        lhs = np.linalg.det(big)
        rhs = c * np.linalg.det(g)
        worst = max(worst, abs(lhs - rhs) / abs(np.linalg.det(g)))
    return worst
