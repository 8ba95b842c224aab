"""Classical theta series for degree-d automorphy lines on C / (Z + tau Z).

The degree-d space of holomorphic sections has the basis

    theta_j(z) = sum_m exp(pi i tau d (m + j/d)^2 + 2 pi i d (m + j/d) z)

for j = 0..d-1, with automorphy theta(z + 1) = theta(z) and
theta(z + tau) = exp(-pi i d tau - 2 pi i d z) theta(z).  Values are
returned in the unitary gauge (multiplied by exp(-pi d (Im z)^2 / Im tau)),
in which the translation factors are the pure phases used by QuasiGrid.
"""

from __future__ import annotations

import numpy as np


def _msum(tau: complex, d: int, frac: float, x, y, weight_fn):
    """sum_m weight(nu) exp(pi i tau d nu^2 + 2 pi i d nu z), nu = m + frac."""
    t = tau.imag
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    # gauge-weighted terms decay like exp(-pi d t (nu + y)^2)
    reach = np.sqrt(42.0 / (np.pi * d * t))
    m_lo = int(np.floor(-frac - y.max() - reach)) - 1
    m_hi = int(np.ceil(-frac - y.min() + reach)) + 1
    z = x + tau * y
    gauge = np.exp(-np.pi * d * t * y * y)
    out = np.zeros(np.broadcast(x, y).shape, dtype=complex)
    for m in range(m_lo, m_hi + 1):
        nu = m + frac
        term = np.exp(1j * np.pi * tau * d * nu * nu + 2j * np.pi * d * nu * z)
        out = out + weight_fn(nu) * term
    return gauge * out


def theta_sections(tau: complex, d: int, x, y) -> np.ndarray:
    """Unitary-gauge values of the d theta sections: shape (d, npts)."""
    if d < 1:
        raise ValueError("theta sections need degree >= 1")
    return np.stack([_msum(tau, d, j / d, x, y, lambda nu: 1.0) for j in range(d)])


def theta_sections_dtau(tau: complex, d: int, x, y) -> np.ndarray:
    """d/d tau of the holomorphic-gauge sections, then moved to unitary gauge.

    Term-wise the tau-derivative multiplies by pi i d nu^2; the unitary gauge
    factor is applied at the same tau (the gauge change of the s-derivative is
    handled by the caller via the connection term).
    """
    if d < 1:
        raise ValueError("theta sections need degree >= 1")
    return np.stack([
        _msum(tau, d, j / d, x, y, lambda nu: 1j * np.pi * d * nu * nu)
        for j in range(d)
    ])
