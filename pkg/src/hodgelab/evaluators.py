"""Fiberwise-harmonic frames and the curvature evaluators.

Frames are built analytically per family (constant-coefficient projections of
flat classes for untwisted families, theta series for automorphy lines) and
carry exact s-derivative handles; the evaluators assemble the curvature of
the L2 metric on the direct image from fiberwise data only.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import operators as ops
from .bundles import BundleData
from .errors import (HarmonicLeak, IllConditionedGram, NotFiberwiseFlat,
                     NotParallel, NotProductFamily, NotUntwisted,
                     ProjectionResidual, RankZero)
from .family import (FamilyDescriptor, HorizontalData, SectionHandle,
                     horizontal_data, lie_components)
from .forms import (Backend, GridBackend, PQForm, TangentValuedForm,
                    constant_form, cup, cup_bar, l2_inner, wedge_end, zero_form)
from .geometry import IndexAlgebra
from .jets import Jet
from .theta import theta_sections, theta_sections_dtau

GRAM_CONDITION_GATE = 1e8

#: audited sign table: the factors relating our canonical-storage cup
#: products to the terms of the minimal-solution equations.  Each entry is
#: frozen by a direct numerical pin against the defining quantity (the
#: Cartan formula for the double-primed Lie components, dbar / dbar* of the
#: primed ones for the w-vectors); the pinning tests re-assert them.
SIGN_TABLE = {
    "lv_dbl_vs_cup": +1.0,          # L''_v psi = cup(A, psi)
    "lvbar_dbl_vs_cup_bar": +1.0,   # L''_vbar psi = cup_bar(A, psi)
    "ws_del_cup": -1.0,             # w_s: del(cup(A, psi)) term
    "ws_cup_del": +1.0,             # w_s: cup(A, del psi) term
    "ws_eta_wedge": +1.0,           # w_s: eta wedge psi term (quadratic use)
    "wsbar_del_cup": +1.0,          # w_sbar: del*(cup_bar(A, psi)) term
    "wsbar_cup_del": -1.0,          # w_sbar: cup_bar(A, del* psi) term
    "wsbar_lambda_eta": +1.0,       # w_sbar: [Lambda, i eta_bar] psi (quadratic)
}


# ---------------------------------------------------------------------------
# harmonic frames

@dataclass
class FrameMember:
    label: str
    handle: SectionHandle
    evaluate: object              # callable (s, backend, bundle) -> PQForm


@dataclass
class HarmonicFrame:
    family: FamilyDescriptor
    s: complex
    p: int
    q: int
    backend: Backend
    bundle: BundleData
    members: list[FrameMember]
    gram: np.ndarray = field(init=False)

    def __post_init__(self):
        k = len(self.members)
        gram = np.zeros((k, k), dtype=complex)
        for i in range(k):
            for j in range(k):
                gram[i, j] = l2_inner(self.members[i].handle.form,
                                      self.members[j].handle.form)
        self.gram = gram
        if k:
            w = np.linalg.eigvalsh(0.5 * (gram + gram.conj().T))
            if w.min() <= 0 or w.max() / w.min() > GRAM_CONDITION_GATE:
                raise IllConditionedGram(f"Gram eigenvalues {w}")

    @property
    def rank(self) -> int:
        return len(self.members)

    def forms(self) -> list[PQForm]:
        return [m.handle.form for m in self.members]

    def harmonic_defect(self) -> float:
        return max((ops.laplacian(f, "dbar").norm() / max(f.norm(), 1e-30)
                    for f in self.forms()), default=0.0)


def _minor_det_jet(w: Jet, rows: tuple[int, ...], cols: tuple[int, ...]) -> Jet:
    """Determinant jet of a sub-matrix of a matrix jet (sizes 0..2)."""
    k = len(rows)
    if k == 0:
        return Jet.const(1.0 + 0j)
    if k == 1:
        return w.entry(rows[0], cols[0])
    a = w.entry(rows[0], cols[0]) * w.entry(rows[1], cols[1])
    b = w.entry(rows[0], cols[1]) * w.entry(rows[1], cols[0])
    return a - b


def flat_frame_tables(family: FamilyDescriptor, s: complex, p: int, q: int):
    """Coefficient jets of the holomorphic flat-class frame, untwisted case.

    Member (A, B) is the fiber (p, q)-part of dz^A wedge dy^B; its
    coefficient on dz^A wedge dz-bar^{B'} is (-1)^q det(W[B, B']) with
    W = (tau - tau-bar)^{-1}, which varies holomorphically in s.
    """
    alg = IndexAlgebra.get(family.n)
    tau = family.tau_jet(s)
    w = (tau - tau.conj()).inv()
    tables = {}
    for a_t in alg.tuples[p]:
        for b_t in alg.tuples[q]:
            coeffs = {}
            for bp in alg.tuples[q]:
                coeffs[bp] = _minor_det_jet(w, b_t, bp) * ((-1.0) ** q)
            tables[(a_t, b_t)] = coeffs
    return tables


def _flat_member(family, s, p, q, backend, bundle, comp, a_t, b_t) -> FrameMember:
    alg = IndexAlgebra.get(family.n)

    def build(at_s, be, bu):
        tabs = flat_frame_tables(family, at_s, p, q)[(a_t, b_t)]
        table = np.zeros((alg.size(p), alg.size(q), bu.rank), dtype=complex)
        for bp, jet in tabs.items():
            table[alg.pos[p][a_t], alg.pos[q][bp], comp] = jet.value
        return constant_form(be, bu, p, q, table)

    tabs = flat_frame_tables(family, s, p, q)[(a_t, b_t)]
    base = np.zeros((alg.size(p), alg.size(q), bundle.rank), dtype=complex)
    dtab = np.zeros_like(base)
    dbtab = np.zeros_like(base)
    for bp, jet in tabs.items():
        base[alg.pos[p][a_t], alg.pos[q][bp], comp] = jet.value
        dtab[alg.pos[p][a_t], alg.pos[q][bp], comp] = jet.ds
        dbtab[alg.pos[p][a_t], alg.pos[q][bp], comp] = jet.dsbar
    handle = SectionHandle(
        form=constant_form(backend, bundle, p, q, base),
        ds=constant_form(backend, bundle, p, q, dtab),
        dsbar=constant_form(backend, bundle, p, q, dbtab),
    )
    return FrameMember(f"c{comp}A{a_t}B{b_t}", handle, build)


def _theta_members(family, s, p, q, backend, bundle) -> list[FrameMember]:
    d = family.degree
    grid = backend.grid
    x, y = grid.points()

    def conn_s_field(at_s, gx, gy):
        # theta^{conn}_s = -Phi_s for the positive line, +Phi_s for the dual
        tau = complex(family.tau_path.value(at_s)[0, 0])
        taup = complex(family.tau_path.d1(at_s)[0, 0])
        t = tau.imag
        u = gy * t
        c_scale = family.potential_scale
        phi_s = -c_scale * u * u * taup / (2j * t * t)
        return -phi_s if d > 0 else phi_s

    members = []
    if d > 0 and q == 0:
        for j in range(d):
            def build(at_s, be, bu, j=j):
                tau = complex(family.tau_path.value(at_s)[0, 0])
                gx, gy = be.grid.points()
                vals = theta_sections(tau, d, gx, gy)[j]
                f = zero_form(be, bu, p, q)
                f.coeff[:, 0, 0, 0] = vals
                return f

            tau0 = complex(family.tau_path.value(s)[0, 0])
            taup = complex(family.tau_path.d1(s)[0, 0])
            vals = theta_sections(tau0, d, x, y)[j]
            dvals = taup * theta_sections_dtau(tau0, d, x, y)[j] \
                + conn_s_field(s, x, y) * vals
            form = zero_form(backend, bundle, p, q)
            form.coeff[:, 0, 0, 0] = vals
            dsf = zero_form(backend, bundle, p, q)
            dsf.coeff[:, 0, 0, 0] = dvals
            dbf = zero_form(backend, bundle, p, q)
            members.append(FrameMember(f"theta{j}", SectionHandle(form, dsf, dbf), build))
        return members

    if d < 0 and q == 1:
        # metric-dual sections: unitary-gauge coefficient conj(theta-tilde);
        # holomorphic normalization divides by the Serre pairing matrix
        dd = -d

        def pairing(at_s, be):
            tau = complex(family.tau_path.value(at_s)[0, 0])
            gx, gy = be.grid.points()
            secs = theta_sections(tau, dd, gx, gy)
            t = tau.imag
            pmat = np.zeros((dd, dd), dtype=complex)
            for a in range(dd):
                for b in range(dd):
                    pmat[a, b] = (-2j * t) * np.mean(np.conj(secs[a]) * secs[b])
            return np.linalg.inv(pmat), secs

        for j in range(dd):
            def build(at_s, be, bu, j=j):
                cinv, secs = pairing(at_s, be)
                f = zero_form(be, bu, p, q)
                for m in range(dd):
                    f.coeff[:, 0, 0, 0] += cinv[j, m] * np.conj(secs[m])
                return f

            form = build(s, backend, bundle)
            # d/ds and d/ds-bar of the normalized dual frame: assembled from
            # the anti-holomorphic series derivative and the pairing jet by
            # central-difference-free jet algebra is involved; the metric-dual
            # member (before normalization) has ds = 0 and a closed-form
            # ds-bar, which identity checks use via the unnormalized handle.
            members.append(FrameMember(f"dualtheta{j}", SectionHandle(form, None, None), build))
        return members

    return members


def dual_theta_unnormalized(family, s, backend, bundle, j: int = 0,
                            q: int = 1, p: int = 1) -> SectionHandle:
    """Metric-dual theta representative with analytic ds / ds-bar handles.

    In the holomorphic gauge this is h(., theta_j) with covariant
    s-derivative zero; the ds-bar handle carries the anti-holomorphic series
    derivative plus the gauge term -Phi_{s-bar} conj(theta-tilde).
    """
    d = family.degree
    if d >= 0:
        raise RankZero("dual frames need a negative-degree family")
    dd = -d
    tau = complex(family.tau_path.value(s)[0, 0])
    taup = complex(family.tau_path.d1(s)[0, 0])
    t = tau.imag
    x, y = backend.grid.points()
    u = y * t
    c_scale = family.potential_scale
    phi_s = -c_scale * u * u * taup / (2j * t * t)
    phi_sbar = np.conj(phi_s)
    vals = np.conj(theta_sections(tau, dd, x, y)[j])
    dvals = np.conj(taup * theta_sections_dtau(tau, dd, x, y)[j]) - phi_sbar * vals
    form = zero_form(backend, bundle, p, q)
    form.coeff[:, 0, 0, 0] = vals
    dsb = zero_form(backend, bundle, p, q)
    dsb.coeff[:, 0, 0, 0] = dvals
    return SectionHandle(form, zero_form(backend, bundle, p, q), dsb)


def expected_rank(family: FamilyDescriptor, p: int, q: int) -> int:
    n = family.n
    binom = IndexAlgebra.get(n)
    if family.kind == "theta":
        d = family.degree
        if d > 0:
            return d if q == 0 else 0
        return -d if q == 1 else 0
    size = binom.size(p) * binom.size(q)
    if family.kind == "character_path":
        us = family.u0
        if family.use_end:
            r = len(us)
            count = sum(1 for i in range(r) for j in range(r)
                        if abs(us[i] - us[j]) < 1e-12)
        else:
            count = sum(1 for u in us if abs(u) < 1e-12)
        return count * size
    chars = family.chars
    count = sum(1 for c in chars if np.allclose(np.mod(c, 1.0), 0.0))
    if family.use_end:
        count = count * count
    return count * size


def harmonic_frame(family: FamilyDescriptor, s: complex, p: int, q: int,
                   backend: Backend) -> HarmonicFrame:
    """Closed-form holomorphic frame, harmonic-projected on grid backends."""
    bundle = family.bundle_at(s, backend.fiber)
    rank = expected_rank(family, p, q)
    if rank == 0:
        raise RankZero(f"direct image has rank zero at (p,q)=({p},{q})")
    alg = IndexAlgebra.get(family.n)
    members: list[FrameMember] = []
    if family.kind == "theta":
        members = _theta_members(family, s, p, q, backend, bundle)
    else:
        for comp, bc in enumerate(bundle.components):
            if np.max(np.abs(bc.shift_zbar)) > 1e-12:
                continue
            for a_t in alg.tuples[p]:
                for b_t in alg.tuples[q]:
                    members.append(_flat_member(family, s, p, q, backend,
                                                bundle, comp, a_t, b_t))
    frame = HarmonicFrame(family, s, p, q, backend, bundle, members)
    if frame.rank != rank:
        raise RankZero(f"frame rank {frame.rank} disagrees with table {rank}")
    defect = frame.harmonic_defect()
    tol = 1e-10 if backend.kind == "fourier" else 1e-3
    if defect > tol:
        raise ProjectionResidual(f"frame harmonicity defect {defect:.2e}")
    if backend.kind == "grid":
        for m in frame.members:
            m.handle.form = ops.harmonic_projection(m.handle.form)
        frame.__post_init__()
    return frame


# ---------------------------------------------------------------------------
# curvature reports

@dataclass
class CurvatureReport:
    """Frame-pair curvature values with a named per-term breakdown."""

    family_label: str
    s: complex
    p: int
    q: int
    evaluator: str
    labels: list[str]
    value: np.ndarray
    breakdown: dict[str, np.ndarray]
    gram: np.ndarray
    backend_kind: str
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        total = sum(self.breakdown.values())
        err = float(np.max(np.abs(total - self.value))) if self.value.size else 0.0
        if err > 1e-12 * max(1.0, float(np.max(np.abs(self.value))) if self.value.size else 1.0):
            raise AssertionError(f"breakdown does not sum to value: {err}")

    @property
    def rank1_normalized(self) -> float | None:
        if self.value.shape != (1, 1):
            return None
        return float(np.real(self.value[0, 0] / self.gram[0, 0]))

    def hermitian_defect(self) -> float:
        return float(np.max(np.abs(self.value - self.value.conj().T))) if self.value.size else 0.0


_BREAKDOWN_KEYS = ("lie_commutator", "theta_vv", "green_ws", "green_wsbar",
                   "cup_s", "cup_sbar")


def _empty_terms(k: int) -> dict[str, np.ndarray]:
    return {key: np.zeros((k, k), dtype=complex) for key in _BREAKDOWN_KEYS}


def w_vectors(hd: HorizontalData, psi: PQForm, backend: Backend,
              bundle: BundleData) -> tuple[PQForm, PQForm]:
    """The dbar- and dbar*-images of the primed Lie derivatives.

    w_s = del(A cup psi) + A cup del psi + eta wedge psi and w_sbar is the
    conjugate-side combination; signs follow the audited table.
    """
    n = psi.n
    a = hd.ks_form(backend)
    st = SIGN_TABLE
    # w_s: (p-1, q+2)? no: del raises p: del(cup) is (p, q+1); all terms (p, q+1)
    ws = zero_form(backend, bundle, psi.p, psi.q + 1) if psi.q < n else None
    if ws is not None:
        if psi.p >= 1:
            ws = ws + st["ws_del_cup"] * ops.del_h(cup(a, psi))
        if psi.p < n:
            ws = ws + st["ws_cup_del"] * cup(a, ops.del_h(psi))
        if np.max(np.abs(hd.eta)) > 0:
            eta = hd.eta_form(backend, bundle)
            ws = ws + st["ws_eta_wedge"] * wedge_end(eta, psi)
    else:
        ws = zero_form(backend, bundle, psi.p, max(psi.q, 0))
    # w_sbar: all terms (p, q-1)
    wsb = zero_form(backend, bundle, psi.p, psi.q - 1) if psi.q >= 1 else None
    if wsb is not None:
        if psi.p < n and psi.q >= 1:
            cb = cup_bar(a, psi)                       # (p+1, q-1)
            wsb = wsb + st["wsbar_del_cup"] * ops.del_star(cb)
        if psi.p >= 1 and psi.q >= 1:
            wsb = wsb + st["wsbar_cup_del"] * cup_bar(a, ops.del_star(psi))
        if np.max(np.abs(hd.eta)) > 0:
            etab = hd.eta_bar_form(backend, bundle)
            wsb = wsb + st["wsbar_lambda_eta"] * lambda_eta_commutator(etab, psi)
    else:
        wsb = zero_form(backend, bundle, psi.p, 0)
    return ws, wsb


def lambda_eta_commutator(etab: PQForm, psi: PQForm) -> PQForm:
    """[Lambda, i eta_bar] psi with edge bidegrees treated as zero."""
    n = psi.n
    out = zero_form(psi.backend, psi.bundle, psi.p, psi.q - 1) if psi.q >= 1 else None
    if out is None:
        return zero_form(psi.backend, psi.bundle, psi.p, 0)
    wedge = wedge_end(etab, psi)          # (p+1, q)
    out = out + ops.lambda_op(1j * wedge)
    if psi.p >= 1 and psi.q >= 1:
        lam = ops.lambda_op(psi)          # (p-1, q-1)
        out = out + (-1.0) * wedge_end(1j * etab, lam)
    return out


def lie_pairing(hd: HorizontalData, chi: PQForm, psi: PQForm) -> complex:
    """<L_{[v, v-bar]} chi, psi> by the five-term constant-c pairing.

    On every supported family the geodesic curvature is constant on fibers,
    so the gradient terms vanish and the pairing reduces to the three
    c-weighted terms (which cancel identically for constant c, keeping the
    value gauge-invariant under beta shifts).
    """
    c0 = hd.c0
    n = chi.n
    total = 0.0 + 0j
    box = ops.laplacian(chi, "del")
    total += c0 * l2_inner(box, psi)
    if chi.p < n:
        total -= c0 * l2_inner(ops.del_h(chi), ops.del_h(psi))
    if chi.p >= 1:
        total -= c0 * l2_inner(ops.del_star(chi), ops.del_star(psi))
    return total


def theta_vv_pairing(hd: HorizontalData, chi: PQForm, psi: PQForm) -> complex:
    """<Theta(v, v-bar) chi, psi>: constant per component (commutator on End)."""
    weighted = chi.copy()
    for c in range(chi.bundle.rank):
        weighted.coeff[..., c] = hd.theta_vv[c] * chi.coeff[..., c]
    return l2_inner(weighted, psi)


def _pair_matrix(forms_a: list[PQForm], forms_b: list[PQForm]) -> np.ndarray:
    k = len(forms_a)
    out = np.zeros((k, k), dtype=complex)
    for i in range(k):
        for j in range(k):
            out[i, j] = l2_inner(forms_a[i], forms_b[j])
    return out


def curvature_main(family: FamilyDescriptor, s: complex,
                   frame: HarmonicFrame) -> CurvatureReport:
    """Full curvature tensor of the direct image via the general formula."""
    hd = horizontal_data(family, s)
    k = frame.rank
    if k == 0:
        raise RankZero("empty frame")
    be, bu = frame.backend, frame.bundle
    terms = _empty_terms(k)
    forms = frame.forms()
    a = hd.ks_form(be)
    ws_list, wsb_list, cup_list, cupb_list = [], [], [], []
    for f in forms:
        ws, wsb = w_vectors(hd, f, be, bu)
        ws_list.append(ws)
        wsb_list.append(wsb)
        cup_list.append(cup(a, f) if (f.p >= 1 and f.q < f.n) else None)
        cupb_list.append(cup_bar(a, f) if (f.q >= 1 and f.p < f.n) else None)
    g_ws = [ops.green(w) if w.norm() > 0 else w for w in ws_list]
    g_wsb = [ops.green(w) if w.norm() > 0 else w for w in wsb_list]
    for i in range(k):
        for j in range(k):
            terms["lie_commutator"][i, j] = lie_pairing(hd, forms[i], forms[j])
            terms["theta_vv"][i, j] = theta_vv_pairing(hd, forms[i], forms[j])
            terms["green_ws"][i, j] = -l2_inner(g_ws[i], ws_list[j])
            terms["green_wsbar"][i, j] = l2_inner(g_wsb[i], wsb_list[j])
            if cup_list[i] is not None:
                terms["cup_s"][i, j] = l2_inner(cup_list[i], cup_list[j])
            if cupb_list[i] is not None:
                terms["cup_sbar"][i, j] = -l2_inner(cupb_list[i], cupb_list[j])
    value = sum(terms.values())
    return CurvatureReport(family.label, s, frame.p, frame.q, "main",
                           [m.label for m in frame.members], value, terms,
                           frame.gram, be.kind)


def curvature_griffiths(family: FamilyDescriptor, s: complex,
                        frame: HarmonicFrame) -> CurvatureReport:
    """Untwisted Hodge-bundle curvature: harmonic parts of the cup images."""
    hd = horizontal_data(family, s)
    if np.max(np.abs(hd.eta)) > 0 or not frame.bundle.is_fiberwise_flat(frame.backend.fiber):
        raise NotUntwisted("griffiths evaluator needs a trivial twist")
    if np.max(np.abs(hd.theta_vv)) > 0:
        raise NotUntwisted("griffiths evaluator needs vanishing base curvature")
    k = frame.rank
    be = frame.backend
    a = hd.ks_form(be)
    forms = frame.forms()
    terms = _empty_terms(k)
    hcup, hcupb = [], []
    for f in forms:
        hcup.append(ops.harmonic_projection(cup(a, f)) if f.p >= 1 else None)
        hcupb.append(ops.harmonic_projection(cup_bar(a, f))
                     if (f.q >= 1 and f.p < f.n) else None)
    for i in range(k):
        for j in range(k):
            if hcup[i] is not None:
                terms["cup_s"][i, j] = l2_inner(hcup[i], hcup[j])
            if hcupb[i] is not None:
                terms["cup_sbar"][i, j] = -l2_inner(hcupb[i], hcupb[j])
    value = sum(terms.values())
    return CurvatureReport(family.label, s, frame.p, frame.q, "griffiths",
                           [m.label for m in frame.members], value, terms,
                           frame.gram, be.kind)


def curvature_line_p0(family: FamilyDescriptor, s: complex, frame: HarmonicFrame,
                      shift: float = 1.0) -> CurvatureReport:
    """Positive line bundle, q = 0: the (box + 1)^{-1} / box^{-1} formula.

    shift is exposed for the sensitivity control only; the theorem value is
    shift = 1.
    """
    if family.kind != "theta" or family.degree <= 0:
        raise NotFiberwiseFlat("line_p0 needs a fiberwise positive line")
    if frame.q != 0:
        raise RankZero("line_p0 applies at q = 0")
    hd = horizontal_data(family, s)
    n, p = family.n, frame.p
    k = frame.rank
    be, bu = frame.backend, frame.bundle
    a = hd.ks_form(be)
    forms = frame.forms()
    terms = _empty_terms(k)
    cups = [cup(a, f) if p >= 1 else None for f in forms]
    dels = [ops.del_h(f) if p < n else None for f in forms]
    cup_dels = [cup(a, d) if d is not None else None for d in dels]
    sol_cup = [ops.green_shifted(cf, shift) if cf is not None else None for cf in cups]
    sol_cd = []
    for cd in cup_dels:
        if cd is None:
            sol_cd.append(None)
            continue
        leak = ops.harmonic_projection(cd).norm()
        if leak > 1e-6 * max(cd.norm(), 1e-30):
            raise HarmonicLeak(f"box^-1 argument has harmonic part {leak:.2e}")
        sol_cd.append(ops.green(cd))
    # the theorem's geodesic curvature is the one of omega = i Theta itself;
    # a pullback gauge term is stripped here (it shifts c but not the value)
    c0 = hd.c0 - family.beta
    for i in range(k):
        for j in range(k):
            lie = (n - p) * c0 * frame.gram[i, j]
            tvv = c0 * frame.gram[i, j]
            if dels[i] is not None:
                lie -= c0 * l2_inner(dels[i], dels[j])
            terms["lie_commutator"][i, j] = lie
            terms["theta_vv"][i, j] = tvv
            green_ws = 0.0 + 0j
            if cups[i] is not None:
                green_ws += (n - p + 1) * l2_inner(sol_cup[i], cups[j])
                green_ws -= l2_inner(cups[i], cups[j])
                terms["cup_s"][i, j] = l2_inner(cups[i], cups[j])
            if cup_dels[i] is not None:
                green_ws -= l2_inner(sol_cd[i], cup_dels[j])
            terms["green_ws"][i, j] = green_ws
    value = sum(terms.values())
    return CurvatureReport(family.label, s, frame.p, frame.q, "line_p0",
                           [m.label for m in frame.members], value, terms,
                           frame.gram, be.kind, notes={"shift": shift})


def curvature_line_nq(family: FamilyDescriptor, s: complex,
                      frame: HarmonicFrame) -> CurvatureReport:
    """Negative line bundle, p = n: the (box - 1)^{-1} formula with the
    harmonic/orthogonal split.

    The displayed coefficients (q - 1) and (q + 1) are implemented verbatim;
    the geodesic-curvature weights vanish identically on the supported
    families (c(i Theta-potential) = 0), so they are structural only.
    """
    if family.kind != "theta" or family.degree >= 0:
        raise NotFiberwiseFlat("line_nq needs a fiberwise negative line")
    n, p, q = family.n, frame.p, frame.q
    if p != n or q < 1:
        raise RankZero("line_nq applies at p = n, q >= 1")
    hd = horizontal_data(family, s)
    k = frame.rank
    be, bu = frame.backend, frame.bundle
    a = hd.ks_form(be)
    forms = frame.forms()
    terms = _empty_terms(k)
    cups = [cup(a, f) if (f.p >= 1 and f.q < n) else None for f in forms]  # (n-1, q+1)
    delstars = [ops.del_star(f) for f in forms]                   # (n-1, q)
    cupb_ds = [cup_bar(a, d) if (d.q >= 1 and d.p < n) else None for d in delstars]
    sol_cup = [ops.green_shifted(cf, -1.0) if cf is not None and cf.norm() > 0
               else None for cf in cups]
    sol_cbd = [ops.green(cd) if cd is not None and cd.norm() > 0 else None
               for cd in cupb_ds]
    c0 = hd.c0 - family.beta
    for i in range(k):
        for j in range(k):
            terms["lie_commutator"][i, j] = (q - 1) * c0 * frame.gram[i, j] \
                + c0 * l2_inner(delstars[i], delstars[j])
            if sol_cup[i] is not None:
                terms["green_ws"][i, j] = -(q + 1) * l2_inner(sol_cup[i], cups[j])
            if sol_cbd[i] is not None:
                terms["green_wsbar"][i, j] = l2_inner(sol_cbd[i], cupb_ds[j])
    value = sum(terms.values())
    return CurvatureReport(family.label, s, frame.p, frame.q, "line_nq",
                           [m.label for m in frame.members], value, terms,
                           frame.gram, be.kind)


def eta_parallel_defect(hd: HorizontalData, backend: Backend,
                        bundle: BundleData, eta_form: PQForm | None = None) -> float:
    """Fiberwise covariant derivative of eta_s (zero for constants)."""
    eta = eta_form if eta_form is not None else hd.eta_form(backend, bundle)
    total = 0.0
    for al in range(eta.n):
        for barred in (False, True):
            g = ops._cov_deriv(backend, bundle, eta.coeff, al, barred=barred)
            total = max(total, float(np.max(np.abs(g))))
    return total


def curvature_flat(family: FamilyDescriptor, s: complex, frame: HarmonicFrame,
                   eta_override: PQForm | None = None) -> CurvatureReport:
    """Fiberwise flat bundles with parallel eta_s."""
    hd = horizontal_data(family, s)
    be, bu = frame.backend, frame.bundle
    if not bu.is_fiberwise_flat(be.fiber):
        raise NotFiberwiseFlat("bundle is not flat on the fiber")
    if eta_parallel_defect(hd, be, bu, eta_override) > 1e-10:
        raise NotParallel("eta_s is not fiberwise parallel")
    k = frame.rank
    forms = frame.forms()
    a = hd.ks_form(be)
    terms = _empty_terms(k)
    eta = hd.eta_form(be, bu)
    etab = hd.eta_bar_form(be, bu)
    # Theta(v, v-bar) decomposition: harmonic part + Green of the three terms
    hterm = [_apply_component_weights(f, hd.theta_vv) for f in forms]
    bracket = wedge_end(eta, etab, action="auto" if bu.kind != "end" else "commutator") \
        if np.max(np.abs(hd.eta)) > 0 else None
    gsource = zero_form(be, bu, 0, 0)
    if bracket is not None:
        lam = ops.lambda_op(1j * bracket) if (bracket.p >= 1 and bracket.q >= 1) else None
        if lam is not None:
            gsource = gsource + lam
    if np.max(np.abs(hd.ks)) > 0 and np.max(np.abs(hd.eta)) > 0:
        gsource = gsource + ops.dbar_star(cup(a, etab)) if etab.p >= 1 else gsource
        cbe = cup_bar(a, eta)
        gsource = gsource + ops.del_star(cbe) if cbe.p >= 1 else gsource
    green_fn = ops.green(gsource) if gsource.norm() > 0 else None
    hcup, hcupb = [], []
    for f in forms:
        hcup.append(ops.harmonic_projection(cup(a, f)) if f.p >= 1 else None)
        hcupb.append(ops.harmonic_projection(cup_bar(a, f))
                     if (f.q >= 1 and f.p < f.n) else None)
    for i in range(k):
        for j in range(k):
            tv = l2_inner(hterm[i], forms[j])
            if green_fn is not None:
                acted = _end_multiply(green_fn, forms[i])
                tv += l2_inner(acted, forms[j])
            terms["theta_vv"][i, j] = tv
            if hcup[i] is not None:
                terms["cup_s"][i, j] = l2_inner(hcup[i], hcup[j])
            if hcupb[i] is not None:
                terms["cup_sbar"][i, j] = -l2_inner(hcupb[i], hcupb[j])
    value = sum(terms.values())
    return CurvatureReport(family.label, s, frame.p, frame.q, "flat",
                           [m.label for m in frame.members], value, terms,
                           frame.gram, be.kind)


def _apply_component_weights(psi: PQForm, weights: np.ndarray) -> PQForm:
    out = psi.copy()
    for c in range(psi.bundle.rank):
        out.coeff[..., c] = weights[c] * psi.coeff[..., c]
    return out


def _end_multiply(func_form: PQForm, psi: PQForm) -> PQForm:
    """Multiply psi by an End-valued (0,0) function with the right action."""
    return wedge_end(func_form, psi, action="auto")


def curvature_he(family: FamilyDescriptor, s: complex,
                 frame: HarmonicFrame) -> CurvatureReport:
    """Hermite-Einstein product families (flat tori have Einstein factor 0)."""
    if family.kind != "character_path":
        raise NotProductFamily("hermite-einstein evaluator needs a product family")
    hd = horizontal_data(family, s)
    be, bu = frame.backend, frame.bundle
    k = frame.rank
    forms = frame.forms()
    terms = _empty_terms(k)
    eta = hd.eta_form(be, bu)
    etab = hd.eta_bar_form(be, bu)
    have_eta = np.max(np.abs(hd.eta)) > 0
    hterm = [_apply_component_weights(f, hd.theta_vv) for f in forms]
    green_fn = None
    if have_eta:
        bracket = wedge_end(eta, etab, action="commutator" if bu.kind == "end" else "auto")
        if bracket.p >= 1 and bracket.q >= 1:
            lam = ops.lambda_op(1j * bracket)
            if lam.norm() > 0:
                green_fn = ops.green(lam)
    wedges = [wedge_end(eta, f) if have_eta and f.q < f.n else None for f in forms]
    lams = [lambda_eta_commutator(etab, f) if have_eta and f.q >= 1 else None
            for f in forms]
    g_wed = [ops.green(w) if w is not None and w.norm() > 0 else None for w in wedges]
    for i in range(k):
        for j in range(k):
            # Theta_{s s-bar} is constant per component, hence its own
            # harmonic part; the action on End is the commutator (diagonal)
            tv = l2_inner(hterm[i], forms[j])
            if green_fn is not None:
                tv += l2_inner(_end_multiply(green_fn, forms[i]), forms[j])
            terms["theta_vv"][i, j] = tv
            if g_wed[i] is not None:
                terms["green_ws"][i, j] = -l2_inner(g_wed[i], wedges[j])
            if lams[i] is not None and lams[i].norm() > 0:
                terms["green_wsbar"][i, j] = l2_inner(ops.green(lams[i]), lams[j])
    value = sum(terms.values())
    return CurvatureReport(family.label, s, frame.p, frame.q, "hermite_einstein",
                           [m.label for m in frame.members], value, terms,
                           frame.gram, be.kind)


def wp_suite(family: FamilyDescriptor, s: complex, backend: Backend) -> dict:
    """Weil-Petersson checks for flat character families on End(E)."""
    if family.kind != "character_path":
        raise NotProductFamily("wp suite needs a product family")
    hd = horizontal_data(family, s)
    bundle = family.bundle_at(s, backend.fiber)
    eta = hd.eta_form(backend, bundle)
    etab = hd.eta_bar_form(backend, bundle)
    out: dict = {}
    # WP norm two ways: Lambda-trace route vs plain L2 route
    wp_l2 = l2_inner(eta, eta).real
    out["wp_norm_sq"] = wp_l2
    out["wp_norm_sq_lambda"] = _wp_lambda_route(backend, bundle, hd)
    out["wp_route_delta"] = abs(out["wp_norm_sq"] - out["wp_norm_sq_lambda"])
    # eta^q wedge powers: harmonicity
    n = backend.fiber.n
    powers = {}
    current = eta
    harm_defects = []
    for qq in range(2, n + 2):
        if current.q + 1 > n:
            break
        nxt = wedge_end(eta, current, action="commutator") if bundle.kind == "end" else None
        if nxt is None:
            break
        nxt = 0.5 * nxt
        harm_defects.append(ops.laplacian(nxt, "dbar").norm() if nxt.norm() > 0 else 0.0)
        powers[qq] = nxt
        current = nxt
    if eta.norm() > 0:
        harm_defects.append(ops.laplacian(eta, "dbar").norm() / eta.norm())
    out["eta_power_harmonicity"] = max(harm_defects, default=0.0)
    # curvWP with kappa = eta_s
    if bundle.kind == "end" and eta.norm() > 0:
        br = wedge_end(eta, etab, action="commutator")
        lam_br = ops.lambda_op(1j * br) if (br.p >= 1 and br.q >= 1) else None
        t1 = 0.0
        if lam_br is not None and lam_br.norm() > 0:
            t1 = 2.0 * l2_inner(ops.green(lam_br), lam_br).real
        sq = wedge_end(eta, eta, action="commutator")
        t2 = 0.0
        if sq.norm() > 0:
            t2 = -l2_inner(ops.green(sq), sq).real
        out["curv_wp_sectional"] = t1 + t2
    else:
        out["curv_wp_sectional"] = 0.0
    # curvflat values for psi = eta^q
    vals = {}
    if bundle.kind == "end" and eta.norm() > 0:
        br = wedge_end(eta, etab, action="commutator")
        lam_br = ops.lambda_op(1j * br) if (br.p >= 1 and br.q >= 1) else None
        psi_q = eta
        for qq in range(1, n + 1):
            if psi_q is None or psi_q.norm() == 0:
                vals[qq] = 0.0
                continue
            t1 = 0.0
            if lam_br is not None and lam_br.norm() > 0:
                t1 = l2_inner(_end_multiply(ops.green(lam_br), psi_q), psi_q).real
            mixed = wedge_end(etab, psi_q, action="commutator")
            lam_mixed = ops.lambda_op(1j * mixed) if (mixed.p >= 1 and mixed.q >= 1) else None
            t2 = 0.0
            if lam_mixed is not None and lam_mixed.norm() > 0:
                t2 = l2_inner(ops.green(lam_mixed), lam_mixed).real
            vals[qq] = t1 + t2
            psi_q = powers.get(qq + 1)
    else:
        vals = {qq: 0.0 for qq in range(1, n + 1)}
    out["curv_flat_values"] = vals
    out["semi_positive"] = all(v >= -1e-10 for v in vals.values())
    # harmonic-projection drop of the base-curvature term for End bundles
    if bundle.kind == "end":
        kap = hd.theta_vv
        probe = _random_end_form(backend, bundle, seed=11)
        acted = _apply_component_weights(probe, kap)
        out["theta_ss_drop"] = abs(l2_inner(acted, probe))
    else:
        out["theta_ss_drop"] = 0.0
    return out


def _wp_lambda_route(backend, bundle, hd) -> float:
    """|eta|^2 via the Lambda-trace of eta wedge_h eta-bar."""
    ginv = backend.fiber.metric_inv
    total = 0.0
    for c in range(bundle.rank):
        v = hd.eta[c]
        total += float(np.real(v @ ginv.T @ np.conj(v)))
    return total * backend.fiber.volume


def _random_end_form(backend, bundle, seed: int) -> PQForm:
    from .forms import random_form

    return random_form(backend, bundle, 0, 1, seed=seed, band=1)
