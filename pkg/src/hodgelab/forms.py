"""Bundle-valued (p, q)-forms: canonical skew storage, products, inner products.

Coefficients psi^c_{A_p B-bar_q} are stored only at strictly increasing
multi-indices, shape (npts, nA, nB, rank); the full skew tensor is implied.
The npts axis enumerates Fourier modes or grid nodes depending on backend.
All index algebra below is backend-agnostic; only integration weights and
pointwise evaluation differ.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bundles import BundleData, grid_multipliers
from .errors import DegreeError, RankMismatch, ShapeMismatch
from .geometry import FiberChart, IndexAlgebra, ModeSet, QuasiGrid


# ---------------------------------------------------------------------------
# backends

@dataclass(frozen=True)
class FourierBackend:
    """Band-limited fields: axis 0 runs over the Fourier modes of a ModeSet."""

    fiber: FiberChart
    modes: ModeSet

    kind = "fourier"

    @property
    def npts(self) -> int:
        return self.modes.count

    def integrate(self, per_point: np.ndarray) -> complex:
        # Parseval: the fiber mean of a pointwise product of fields equals the
        # coefficient sum, and dV = volume * d(mean).
        return complex(self.fiber.volume * per_point.sum(axis=0))

    def value_grid(self) -> tuple[np.ndarray, np.ndarray]:
        """Uniform sample points for exact quadrature of band-limited products."""
        n = self.fiber.n
        m = 4 * self.modes.cutoff + 3
        axes = [np.arange(m) / m for _ in range(2 * n)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([a.ravel() for a in mesh], axis=-1)
        return pts[:, :n], pts[:, n:]

    def to_values(self, coeff: np.ndarray) -> np.ndarray:
        """Evaluate mode coefficients on value_grid(); exact for this band."""
        n = self.fiber.n
        k = self.modes.cutoff
        m = 4 * k + 3
        extra = coeff.shape[1:]
        cube = coeff.reshape((2 * k + 1,) * (2 * n) + extra)
        target = np.zeros((m,) * (2 * n) + extra, dtype=complex)
        idx = np.arange(-k, k + 1) % m
        target[np.ix_(*([idx] * (2 * n)))] = cube
        axes = tuple(range(2 * n))
        vals = np.fft.ifftn(target, axes=axes) * (m ** (2 * n))
        return vals.reshape((m ** (2 * n),) + extra)

    def integrate_values(self, values: np.ndarray) -> complex:
        return complex(self.fiber.volume * values.mean(axis=0))


@dataclass(frozen=True)
class GridBackend:
    """Pointwise fields on a quasi-periodic N x N grid (n = 1)."""

    fiber: FiberChart
    grid: QuasiGrid

    kind = "grid"

    @property
    def npts(self) -> int:
        return self.grid.count

    def integrate(self, per_point: np.ndarray) -> complex:
        return complex(self.fiber.volume * per_point.mean(axis=0))

    def value_grid(self) -> tuple[np.ndarray, np.ndarray]:
        x, y = self.grid.points()
        return x[:, None], y[:, None]

    def to_values(self, coeff: np.ndarray) -> np.ndarray:
        return coeff

    integrate_values = integrate


Backend = FourierBackend | GridBackend


# ---------------------------------------------------------------------------
# raw index algebra on stored skew coefficients

def _merge_sign(s: tuple[int, ...], t: tuple[int, ...]):
    """Sign of sorting the concatenation of two disjoint increasing tuples."""
    inv = sum(1 for a in s for b in t if a > b)
    merged = tuple(sorted(s + t))
    return merged, (-1.0) ** inv


def wedge_coeff(n: int, a_co: np.ndarray, pa: int, qa: int,
                b_co: np.ndarray, pb: int, qb: int,
                combine, out_rank: int) -> np.ndarray:
    """Wedge of stored skew coefficients; bundle slots merged by combine(x, y).

    combine maps (a-coefficient slice [pts, ra], b-slice [pts, rb]) to the
    result slice [pts, out_rank] and encodes the bundle action (scalar,
    module, composition; commutators are assembled by the callers).
    """
    alg = IndexAlgebra.get(n)
    p, q = pa + pb, qa + qb
    if p > n or q > n:
        raise DegreeError("wedge exceeds top degree")
    npts = a_co.shape[0]
    out = np.zeros((npts, alg.size(p), alg.size(q), out_rank), dtype=complex)
    for ia, ta in enumerate(alg.tuples[pa]):
        for ib, tb in enumerate(alg.tuples[qa]):
            for ja, sa in enumerate(alg.tuples[pb]):
                if set(ta) & set(sa):
                    continue
                for jb, sb in enumerate(alg.tuples[qb]):
                    if set(tb) & set(sb):
                        continue
                    am, sgn_a = _merge_sign(ta, sa)
                    bm, sgn_b = _merge_sign(tb, sb)
                    sign = sgn_a * sgn_b * (-1.0) ** (pb * qa)
                    out[:, alg.pos[p][am], alg.pos[q][bm], :] += (
                        sign * combine(a_co[:, ia, ib], b_co[:, ja, jb]))
    return out


def cup_coeff(n: int, a_mat: np.ndarray, psi: np.ndarray, p: int, q: int) -> np.ndarray:
    """Tangent-(0,1) cup: contraction into the first dz slot, (p,q) -> (p-1,q+1).

    a_mat is A^a_{b-bar}, shape (n, n) [upper, lower-bar], constant on the
    fiber.  The canonical-order result carries the (-1)^(p-1) sign from
    moving the new dz-bar past the remaining dz factors.
    """
    if p < 1:
        raise DegreeError("cup needs p >= 1")
    if q + 1 > n:
        raise DegreeError("cup exceeds top anti-holomorphic degree")
    alg = IndexAlgebra.get(n)
    npts, _, _, rank = psi.shape
    out = np.zeros((npts, alg.size(p - 1), alg.size(q + 1), rank), dtype=complex)
    sign_p = (-1.0) ** (p - 1)
    for ig, tg in enumerate(alg.tuples[p - 1]):          # remaining dz tuple
        for ie, te in enumerate(alg.tuples[q + 1]):      # target dz-bar tuple
            acc = np.zeros((npts, rank), dtype=complex)
            for nu in range(q + 1):
                rest, sgn_rm = IndexAlgebra.remove(te, nu)
                beta = te[nu]
                jb = alg.pos[q][rest]
                for sigma in range(n):
                    ins = alg.insert(sigma, tg)
                    if ins is None:
                        continue
                    ja, sgn_in = ins
                    acc += (sgn_rm * sgn_in * a_mat[sigma, beta]) * psi[:, ja, jb, :]
            out[:, ig, ie, :] = sign_p * acc
    return out


def cup_bar_coeff(n: int, abar_mat: np.ndarray, psi: np.ndarray, p: int, q: int) -> np.ndarray:
    """Conjugate cup: contraction into the first dz-bar slot, (p,q) -> (p+1,q-1).

    abar_mat is A-bar^{b-bar}_a, shape (n, n) [upper-bar, lower].  The global
    (-1)^p is part of the audited sign table: it makes the conjugate cup the
    exact formal adjoint of the forward cup for symmetric tensors, which the
    adjointness tests pin at every bidegree.
    """
    if q < 1:
        raise DegreeError("conjugate cup needs q >= 1")
    if p + 1 > n:
        raise DegreeError("conjugate cup exceeds top holomorphic degree")
    alg = IndexAlgebra.get(n)
    npts, _, _, rank = psi.shape
    out = np.zeros((npts, alg.size(p + 1), alg.size(q - 1), rank), dtype=complex)
    sign_p = (-1.0) ** p
    for i_f, tf in enumerate(alg.tuples[p + 1]):         # target dz tuple
        for i_d, td in enumerate(alg.tuples[q - 1]):     # remaining dz-bar tuple
            acc = np.zeros((npts, rank), dtype=complex)
            for mu in range(p + 1):
                rest, sgn_rm = IndexAlgebra.remove(tf, mu)
                alpha = tf[mu]
                ja = alg.pos[p][rest]
                for beta in range(n):
                    ins = alg.insert(beta, td)
                    if ins is None:
                        continue
                    jb, sgn_in = ins
                    acc += (sgn_rm * sgn_in * abar_mat[beta, alpha]) * psi[:, ja, jb, :]
            out[:, i_f, i_d, :] = sign_p * acc
    return out


def contract_z(vec_vals: np.ndarray, psi: "PQForm") -> "PQForm":
    """Interior product with w = w^a d/dz^a; vec_vals has shape (n,) or (n, npts)."""
    n, p, q = psi.n, psi.p, psi.q
    if p < 1:
        raise DegreeError("contract_z needs p >= 1")
    alg = IndexAlgebra.get(n)
    out = zero_form(psi.backend, psi.bundle, p - 1, q)
    vec = np.asarray(vec_vals, dtype=complex)
    for ig, tg in enumerate(alg.tuples[p - 1]):
        acc = 0.0
        for a in range(n):
            ins = alg.insert(a, tg)
            if ins is None:
                continue
            ja, sgn = ins
            w = vec[a] if vec.ndim == 1 else vec[a][:, None, None]
            acc = acc + sgn * w * psi.coeff[:, ja, :, :]
        out.coeff[:, ig, :, :] = acc
    return out


def contract_zbar(vec_vals: np.ndarray, psi: "PQForm") -> "PQForm":
    """Interior product with w = w^b d/dz-bar^b, carrying the (-1)^p sign of
    passing the dz factors."""
    n, p, q = psi.n, psi.p, psi.q
    if q < 1:
        raise DegreeError("contract_zbar needs q >= 1")
    alg = IndexAlgebra.get(n)
    out = zero_form(psi.backend, psi.bundle, p, q - 1)
    vec = np.asarray(vec_vals, dtype=complex)
    sign_p = (-1.0) ** p
    for i_d, td in enumerate(alg.tuples[q - 1]):
        acc = 0.0
        for b in range(n):
            ins = alg.insert(b, td)
            if ins is None:
                continue
            jb, sgn = ins
            w = vec[b] if vec.ndim == 1 else vec[b][:, None, None]
            acc = acc + sgn * w * psi.coeff[:, :, jb, :]
        out.coeff[:, :, i_d, :] = sign_p * acc
    return out


def pointwise_inner_coeff(n: int, chi: np.ndarray, psi: np.ndarray,
                          p: int, q: int, ginv: np.ndarray) -> np.ndarray:
    """(chi, psi) pointwise along axis 0; unit bundle metric per component."""
    alg = IndexAlgebra.get(n)
    gp = alg.minor_gram(ginv, p)
    gq = alg.minor_gram(ginv, q)
    return np.einsum("xabc,xdec,da,be->x", chi, np.conj(psi), gp, gq, optimize=True)


# ---------------------------------------------------------------------------
# form objects

@dataclass
class PQForm:
    """An E-valued (p, q)-form over one fiber in canonical skew storage."""

    backend: Backend
    bundle: BundleData
    p: int
    q: int
    coeff: np.ndarray

    def __post_init__(self):
        alg = IndexAlgebra.get(self.n)
        want = (self.backend.npts, alg.size(self.p), alg.size(self.q), self.bundle.rank)
        if self.coeff.shape != want:
            raise ShapeMismatch(f"coefficient array has shape {self.coeff.shape}, want {want}")

    @property
    def n(self) -> int:
        return self.backend.fiber.n

    @property
    def bidegree(self) -> tuple[int, int]:
        return (self.p, self.q)

    def zero_like(self, p=None, q=None) -> "PQForm":
        return zero_form(self.backend, self.bundle, self.p if p is None else p,
                         self.q if q is None else q)

    def copy(self) -> "PQForm":
        return PQForm(self.backend, self.bundle, self.p, self.q, self.coeff.copy())

    def __add__(self, other: "PQForm") -> "PQForm":
        _check_compatible(self, other)
        return PQForm(self.backend, self.bundle, self.p, self.q, self.coeff + other.coeff)

    def __sub__(self, other: "PQForm") -> "PQForm":
        _check_compatible(self, other)
        return PQForm(self.backend, self.bundle, self.p, self.q, self.coeff - other.coeff)

    def __mul__(self, scalar) -> "PQForm":
        return PQForm(self.backend, self.bundle, self.p, self.q, self.coeff * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "PQForm":
        return self * (-1.0)

    def norm(self) -> float:
        return float(np.sqrt(max(l2_inner(self, self).real, 0.0)))


@dataclass(frozen=True)
class TangentValuedForm:
    """A (0,1)-form with values in the holomorphic tangent bundle, constant
    coefficients A^a_{b-bar} (all Kodaira-Spencer representatives on our
    homogeneous families are constant)."""

    backend: Backend
    coeff: np.ndarray  # (n, n): [upper, lower-bar]

    def conj_matrix(self) -> np.ndarray:
        """A-bar^{b-bar}_a as an (n, n) [upper-bar, lower] array."""
        return np.conj(self.coeff)

    def symmetry_defect(self) -> float:
        """Max deviation of A_{b-bar d-bar} = g_{a d-bar} A^a_{b-bar} from symmetry."""
        g = self.backend.fiber.metric
        low = np.einsum("ad,ab->bd", g, self.coeff)
        return float(np.max(np.abs(low - low.T)))

    def l2_norm_sq(self) -> float:
        """Squared L2 norm: |A|^2 contracts the upper index with g and the
        barred index with g-inverse."""
        g = self.backend.fiber.metric
        ginv = self.backend.fiber.metric_inv
        val = np.einsum("ab,cd,ac,bd->", self.coeff, np.conj(self.coeff), g, ginv)
        return float(val.real) * self.backend.fiber.volume


def _check_compatible(a: PQForm, b: PQForm) -> None:
    if a.backend is not b.backend or a.bundle is not b.bundle:
        raise ShapeMismatch("forms live on different backends or bundles")
    if a.bidegree != b.bidegree:
        raise ShapeMismatch(f"bidegree mismatch {a.bidegree} vs {b.bidegree}")


def zero_form(backend: Backend, bundle: BundleData, p: int, q: int) -> PQForm:
    alg = IndexAlgebra.get(backend.fiber.n)
    co = np.zeros((backend.npts, alg.size(p), alg.size(q), bundle.rank), dtype=complex)
    return PQForm(backend, bundle, p, q, co)


def constant_form(backend: Backend, bundle: BundleData, p: int, q: int,
                  table: np.ndarray) -> PQForm:
    """Form with z-independent coefficients table[nA, nB, rank].

    On the Fourier backend the constant sits at the zero mode; on grids it is
    broadcast to every node.
    """
    out = zero_form(backend, bundle, p, q)
    table = np.asarray(table, dtype=complex)
    if backend.kind == "fourier":
        k0 = backend.modes.index_of(np.zeros(2 * backend.fiber.n, dtype=int))
        out.coeff[k0] = table
    else:
        out.coeff[:] = table[None, ...]
    return out


def l2_inner(chi: PQForm, psi: PQForm) -> complex:
    """Global L2 inner product <chi, psi> with respect to omega|fiber and h."""
    _check_compatible(chi, psi)
    per = pointwise_inner_coeff(chi.n, chi.coeff, psi.coeff, chi.p, chi.q,
                                chi.backend.fiber.metric_inv)
    return chi.backend.integrate(per)


def cup(a: TangentValuedForm, psi: PQForm) -> PQForm:
    """A cup psi, lowering p by one and raising q by one."""
    co = cup_coeff(psi.n, a.coeff, psi.coeff, psi.p, psi.q)
    return PQForm(psi.backend, psi.bundle, psi.p - 1, psi.q + 1, co)


def cup_bar(a: TangentValuedForm, psi: PQForm) -> PQForm:
    """A-bar cup psi, raising p by one and lowering q by one."""
    co = cup_bar_coeff(psi.n, a.conj_matrix(), psi.coeff, psi.p, psi.q)
    return PQForm(psi.backend, psi.bundle, psi.p + 1, psi.q - 1, co)


def _mode_or_point_product(backend: Backend, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Product of two scalar fields along axis 0 (convolution on Fourier).

    Coefficients beyond the cutoff are truncated; callers that need exact
    products keep their operand bands at or below a third of the cutoff.
    """
    if backend.kind == "grid":
        return x * y
    k = backend.modes.cutoff
    n = backend.fiber.n
    k0 = backend.modes.index_of(np.zeros(2 * n, dtype=int))
    # fast path: zero-mode-supported operand is just a scale
    for a, b in ((x, y), (y, x)):
        nz = np.nonzero(a)[0]
        if nz.size == 0:
            return np.zeros_like(y)
        if nz.size == 1 and nz[0] == k0:
            return a[k0] * b
    import scipy.signal

    shape = (2 * k + 1,) * (2 * n)
    full = scipy.signal.fftconvolve(x.reshape(shape), y.reshape(shape))
    sl = tuple(slice(k, 3 * k + 1) for _ in range(2 * n))
    return np.ascontiguousarray(full[sl]).reshape(-1)


def wedge_end(eta: PQForm, psi: PQForm, action: str = "auto") -> PQForm:
    """Graded wedge with bundle action.

    action: "scalar" multiplies components slotwise (eta rank 1 or matching),
    "module" lets an End-valued eta act on an E-valued psi, "commutator" is
    the graded commutator of two End-valued forms, "compose" is plain
    composition.  "auto" picks from the bundle kinds.
    """
    if eta.backend is not psi.backend:
        raise ShapeMismatch("wedge across backends")
    backend = psi.backend
    if action == "auto":
        if eta.bundle.kind == "end" and psi.bundle.kind == "end":
            action = "commutator"
        elif eta.bundle.kind == "end":
            action = "module"
        else:
            action = "scalar"

    if action == "scalar":
        if eta.bundle.rank not in (1, psi.bundle.rank):
            raise RankMismatch("scalar wedge needs rank 1 or matching rank")

        def combine(x, y):
            return _pointwise_rank_product(backend, x, y)

        co = wedge_coeff(psi.n, eta.coeff, eta.p, eta.q, psi.coeff, psi.p, psi.q,
                         combine, psi.bundle.rank)
        return PQForm(backend, psi.bundle, eta.p + psi.p, eta.q + psi.q, co)

    if action == "module":
        r = psi.bundle.rank
        if eta.bundle.base_rank != r:
            raise RankMismatch("module action needs End(E) against E")

        def combine(x, y):
            out = np.zeros((x.shape[0], r), dtype=complex)
            for i in range(r):
                for j in range(r):
                    out[:, i] += _mode_or_point_product(backend, x[:, i * r + j], y[:, j])
            return out

        co = wedge_coeff(psi.n, eta.coeff, eta.p, eta.q, psi.coeff, psi.p, psi.q,
                         combine, r)
        return PQForm(backend, psi.bundle, eta.p + psi.p, eta.q + psi.q, co)

    if action in ("commutator", "compose"):
        if eta.bundle.kind != "end" or psi.bundle.kind != "end":
            raise RankMismatch("commutator wedge needs End-valued forms")
        r = eta.bundle.base_rank
        co1 = _compose_wedge(backend, eta, psi, r)
        if action == "compose":
            return PQForm(backend, psi.bundle, eta.p + psi.p, eta.q + psi.q, co1)
        sign = (-1.0) ** ((eta.p + eta.q) * (psi.p + psi.q))
        co2 = _compose_wedge(backend, psi, eta, r)
        return PQForm(backend, psi.bundle, eta.p + psi.p, eta.q + psi.q, co1 - sign * co2)

    raise ValueError(f"unknown action {action!r}")


def _pointwise_rank_product(backend: Backend, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    out = np.zeros((x.shape[0], y.shape[-1]), dtype=complex)
    for c in range(y.shape[-1]):
        xc = x[:, 0] if x.shape[-1] == 1 else x[:, c]
        out[:, c] = _mode_or_point_product(backend, xc, y[:, c])
    return out


def _compose_wedge(backend: Backend, eta: PQForm, psi: PQForm, r: int) -> np.ndarray:
    def combine(x, y):
        out = np.zeros((x.shape[0], r * r), dtype=complex)
        for i in range(r):
            for j in range(r):
                for k in range(r):
                    out[:, i * r + j] += _mode_or_point_product(
                        backend, x[:, i * r + k], y[:, k * r + j])
        return out

    return wedge_coeff(psi.n, eta.coeff, eta.p, eta.q, psi.coeff, psi.p, psi.q,
                       combine, r * r)


def random_form(backend: Backend, bundle: BundleData, p: int, q: int, seed: int,
                band: int | None = None) -> PQForm:
    """Deterministic pseudo-random form with standard complex Gaussian entries.

    Fourier: coefficients fill modes up to the requested band (default the
    full cutoff).  Grid: a smooth band-limited periodic field, times the
    first theta section for automorphy components so that the stored values
    carry the right translation phases.
    """
    rng = np.random.default_rng(seed)
    out = zero_form(backend, bundle, p, q)
    shape = out.coeff.shape

    def gauss(size):
        return rng.standard_normal(size) + 1j * rng.standard_normal(size)

    if backend.kind == "fourier":
        b = backend.modes.cutoff if band is None else band
        mask = (np.abs(backend.modes.modes).max(axis=1) <= b)
        co = gauss(shape)
        co[~mask] = 0.0
        out.coeff[:] = co
        return out

    grid = backend.grid
    x, y = grid.points()
    b = 3 if band is None else band
    for c, comp in enumerate(bundle.components):
        base = np.zeros(grid.count, dtype=complex)
        for kx in range(-b, b + 1):
            for ky in range(-b, b + 1):
                base += gauss(()) * np.exp(2j * np.pi * (kx * x + ky * y))
        if comp.degree != 0:
            from .theta import theta_sections

            tau = complex(backend.fiber.tau[0, 0])
            ref = theta_sections(tau, abs(comp.degree), x, y)[0]
            base = base * (ref if comp.degree > 0 else np.conj(ref))
        out.coeff[:, :, :, c] = base[:, None, None] * gauss(shape[1:3])[None, :, :]
    return out


# ---------------------------------------------------------------------------
# serialization

def pqform_to_dict(psi: PQForm) -> dict:
    backend = psi.backend
    desc: dict = {
        "bidegree": [psi.p, psi.q],
        "backend": backend.kind,
        "tau": _c2l(backend.fiber.tau),
        "metric": _c2l(backend.fiber.metric),
        "bundle": {"kind": psi.bundle.kind, "rank": psi.bundle.rank,
                   "degree": psi.bundle.degree},
        "coeff_re": np.real(psi.coeff).tolist(),
        "coeff_im": np.imag(psi.coeff).tolist(),
    }
    if backend.kind == "fourier":
        desc["cutoff"] = backend.modes.cutoff
    else:
        desc["resolution"] = backend.grid.resolution
    return desc


def pqform_from_dict(desc: dict, backend: Backend, bundle: BundleData) -> PQForm:
    p, q = desc["bidegree"]
    co = np.asarray(desc["coeff_re"], dtype=float) + 1j * np.asarray(desc["coeff_im"], dtype=float)
    return PQForm(backend, bundle, p, q, co.astype(complex))


def _c2l(arr: np.ndarray) -> list:
    return [[f"{v.real!r}+{v.imag!r}j" for v in row] for row in np.asarray(arr, dtype=complex)]
