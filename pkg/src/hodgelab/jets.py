"""First-order (s, s-bar) jets of scalars and small matrices.

A Jet tracks a value together with its holomorphic and anti-holomorphic
derivatives with respect to one complex base parameter.  Frame coefficients
and metric data of a family are assembled from the primitives tau(s) and
conj(tau)(s-bar) by jet arithmetic, which keeps every s-derivative used in
Lie-derivative formulas analytic (no numerical differentiation).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Jet:
    value: object
    ds: object
    dsbar: object

    @staticmethod
    def const(value) -> "Jet":
        z = np.zeros_like(np.asarray(value, dtype=complex))
        if z.ndim == 0:
            z = 0j
        return Jet(value, z, z)

    @staticmethod
    def holomorphic(value, derivative) -> "Jet":
        z = np.zeros_like(np.asarray(value, dtype=complex))
        if z.ndim == 0:
            z = 0j
        return Jet(value, derivative, z)

    def conj(self) -> "Jet":
        return Jet(np.conj(self.value), np.conj(self.dsbar), np.conj(self.ds))

    def __add__(self, other) -> "Jet":
        other = as_jet(other)
        return Jet(self.value + other.value, self.ds + other.ds,
                   self.dsbar + other.dsbar)

    __radd__ = __add__

    def __neg__(self) -> "Jet":
        return Jet(-np.asarray(self.value, dtype=complex),
                   -np.asarray(self.ds, dtype=complex),
                   -np.asarray(self.dsbar, dtype=complex))

    def __sub__(self, other) -> "Jet":
        return self + (-as_jet(other))

    def __rsub__(self, other) -> "Jet":
        return as_jet(other) + (-self)

    def __mul__(self, other) -> "Jet":
        other = as_jet(other)
        return Jet(self.value * other.value,
                   self.ds * other.value + self.value * other.ds,
                   self.dsbar * other.value + self.value * other.dsbar)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Jet":
        other = as_jet(other)
        inv = other.reciprocal()
        return self * inv

    def __rtruediv__(self, other) -> "Jet":
        return as_jet(other) * self.reciprocal()

    def reciprocal(self) -> "Jet":
        v = 1.0 / self.value
        return Jet(v, -v * self.ds * v, -v * self.dsbar * v)

    def matmul(self, other: "Jet") -> "Jet":
        return Jet(self.value @ other.value,
                   self.ds @ other.value + self.value @ other.ds,
                   self.dsbar @ other.value + self.value @ other.dsbar)

    def inv(self) -> "Jet":
        v = np.linalg.inv(self.value)
        return Jet(v, -v @ self.ds @ v, -v @ self.dsbar @ v)

    def transpose(self) -> "Jet":
        return Jet(np.asarray(self.value).T, np.asarray(self.ds).T,
                   np.asarray(self.dsbar).T)

    def entry(self, i, j) -> "Jet":
        return Jet(self.value[i, j], self.ds[i, j], self.dsbar[i, j])


def as_jet(x) -> Jet:
    if isinstance(x, Jet):
        return x
    return Jet.const(x)


def imag_jet(tau: Jet) -> Jet:
    """Jet of Im(tau) = (tau - conj(tau)) / 2i for holomorphic tau."""
    return (tau - tau.conj()) * (-0.5j)
