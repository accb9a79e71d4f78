"""Truncated rescaled Fourier lattice, dispersion and resonance moduli.

Wavenumbers live on (1/L)Z^d, represented throughout by their integer
numerators n (so k = n/L).  A LatticeSpec fixes the dimension, the period
parameter L, the mass m and the truncation radius kmax; every other module
works with coefficient vectors indexed by the lattice's mode list.
"""

from dataclasses import dataclass
from functools import cached_property
import itertools

import numpy as np


@dataclass(frozen=True)
class LatticeSpec:
    """Truncated lattice {n/L : |n_i| <= kmax*L} with dispersion sqrt(m+|k|^2)."""

    d: int
    L: float
    m: float
    kmax: float

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.L <= 0 or self.m <= 0 or self.kmax <= 0:
            raise ValueError("L, m, kmax must be positive")
        K = self.kmax * self.L
        if abs(K - round(K)) > 1e-9:
            raise ValueError("kmax*L must be an integer so the cube is symmetric")

    @property
    def nmax(self) -> int:
        """Integer truncation per axis: modes have |n_i| <= nmax."""
        return int(round(self.kmax * self.L))

    @cached_property
    def modes(self) -> np.ndarray:
        """(nmodes, d) int array of numerators, lexicographic order."""
        rng = range(-self.nmax, self.nmax + 1)
        return np.array(list(itertools.product(rng, repeat=self.d)), dtype=np.int64)

    @cached_property
    def nmodes(self) -> int:
        return self.modes.shape[0]

    @cached_property
    def index(self) -> dict:
        return {tuple(n): i for i, n in enumerate(self.modes)}

    @cached_property
    def kvec(self) -> np.ndarray:
        """(nmodes, d) float array of wavenumbers k = n/L."""
        return self.modes / self.L

    @cached_property
    def omega(self) -> np.ndarray:
        """Dispersion <k> per mode."""
        return np.sqrt(self.m + np.sum(self.kvec**2, axis=-1))

    @cached_property
    def neg(self) -> np.ndarray:
        """Index map i -> index of -k_i (the cube is symmetric)."""
        return np.array([self.index[tuple(-n)] for n in self.modes], dtype=np.int64)

    @cached_property
    def zero_index(self) -> int:
        return self.index[(0,) * self.d]

    def contains(self, n) -> bool:
        """Whether the integer numerator tuple/array lies in the cube."""
        if isinstance(n, (tuple, list)):
            nmax = self.nmax
            return all(-nmax <= x <= nmax for x in n)
        n = np.asarray(n)
        return bool(np.all(np.abs(n) <= self.nmax))

    def ball(self, radius: float) -> list:
        """Mode indices with |k| <= radius (Euclidean)."""
        r2 = np.sum(self.kvec**2, axis=-1)
        return list(np.nonzero(r2 <= radius**2 + 1e-12)[0])

    @cached_property
    def pair_out(self) -> np.ndarray:
        """(nmodes, nmodes) output index of k_i + k_j, or -1 if it leaves the cube."""
        out = np.full((self.nmodes, self.nmodes), -1, dtype=np.int64)
        s = self.modes[:, None, :] + self.modes[None, :, :]
        ok = np.all(np.abs(s) <= self.nmax, axis=-1)
        ii, jj = np.nonzero(ok)
        flat = s[ii, jj]
        # encode numerators to flat cube coordinates for O(1) lookup
        width = 2 * self.nmax + 1
        code = np.zeros(len(ii), dtype=np.int64)
        for a in range(self.d):
            code = code * width + (flat[:, a] + self.nmax)
        lut = np.full(width**self.d, -1, dtype=np.int64)
        own = np.zeros(self.nmodes, dtype=np.int64)
        for a in range(self.d):
            own = own * width + (self.modes[:, a] + self.nmax)
        lut[own] = np.arange(self.nmodes)
        out[ii, jj] = lut[code]
        return out


def dispersion(spec: LatticeSpec, k) -> np.ndarray:
    """<k> = sqrt(m + |k|^2) for wavenumbers k of shape (..., d)."""
    k = np.asarray(k, dtype=float)
    return np.sqrt(spec.m + np.sum(k * k, axis=-1))


def delta2(spec: LatticeSpec, i1: int, i2: int, k1, k2):
    """Quadratic resonance modulus <k1+k2> - i1<k1> - i2<k2>, signs i in {+1,-1}."""
    k1 = np.asarray(k1, dtype=float)
    k2 = np.asarray(k2, dtype=float)
    return dispersion(spec, k1 + k2) - i1 * dispersion(spec, k1) - i2 * dispersion(spec, k2)


def delta3(spec: LatticeSpec, i1: int, i2: int, i3: int, k1, k2, k3):
    """Cubic resonance modulus <k1+k2+k3> - i1<k1> - i2<k2> - i3<k3>."""
    k1 = np.asarray(k1, dtype=float)
    k2 = np.asarray(k2, dtype=float)
    k3 = np.asarray(k3, dtype=float)
    return (
        dispersion(spec, k1 + k2 + k3)
        - i1 * dispersion(spec, k1)
        - i2 * dispersion(spec, k2)
        - i3 * dispersion(spec, k3)
    )


@dataclass
class SpectralField:
    """Coefficient vector over a lattice's modes, tagged with a colour in {0, 1}."""

    lattice: LatticeSpec
    colour: int
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape[-1] != self.lattice.nmodes:
            raise ValueError("coefficient vector does not match the lattice")

    def conj_sign(self, iota: int) -> np.ndarray:
        """f^iota: f itself for iota=+1, conj(f(-k)) for iota=-1."""
        return signed_view(self.coeffs, self.lattice, iota)


def signed_view(coeffs: np.ndarray, spec: LatticeSpec, iota: int) -> np.ndarray:
    """Apply the sign/conjugation action on a raw coefficient array."""
    if iota == 1:
        return coeffs
    return np.conj(coeffs[..., spec.neg])


def pair_sum(spec: LatticeSpec, f: np.ndarray, g: np.ndarray, weight=None) -> np.ndarray:
    """Plain paired sum h(k) = sum_{k1+k2=k} w(k1,k2) f(k1) g(k2), truncated.

    `weight` is an optional (nmodes, nmodes) array.  Dense reference
    implementation; the integrator has a fast FFT path for separable weights.
    """
    outer = f[:, None] * g[None, :]
    if weight is not None:
        outer = outer * weight
    out_idx = spec.pair_out
    ok = out_idx >= 0
    h = np.zeros(spec.nmodes, dtype=complex)
    np.add.at(h, out_idx[ok], outer[ok])
    return h


def convolve(spec: LatticeSpec, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Product in physical space: (2 pi L)^{-d/2} sum_{k1+k2=k} f(k1) g(k2)."""
    return pair_sum(spec, f, g) / (2 * np.pi * spec.L) ** (spec.d / 2)


def to_physical(spec: LatticeSpec, coeffs: np.ndarray, ngrid: int | None = None) -> np.ndarray:
    """Sample u(x) = (2 pi L)^{-d/2} sum_k c(k) e^{ikx} on a uniform grid.

    Grid points are x_j = 2 pi L j / ngrid per axis.
    """
    if ngrid is None:
        ngrid = 4 * spec.nmax + 1
    if ngrid < 2 * spec.nmax + 1:
        raise ValueError("grid too coarse for the truncation")
    shape = (ngrid,) * spec.d
    dense = np.zeros(shape, dtype=complex)
    idx = tuple(spec.modes[:, a] % ngrid for a in range(spec.d))
    dense[idx] = coeffs
    u = np.fft.ifftn(dense) * ngrid**spec.d
    return u / (2 * np.pi * spec.L) ** (spec.d / 2)


def from_physical(spec: LatticeSpec, u: np.ndarray) -> np.ndarray:
    """Inverse of to_physical (exact when the grid resolves the truncation)."""
    ngrid = u.shape[0]
    dense = np.fft.fftn(u) / ngrid**spec.d
    idx = tuple(spec.modes[:, a] % ngrid for a in range(spec.d))
    return dense[idx] * (2 * np.pi * spec.L) ** (spec.d / 2)


def transform_roundtrip(spec: LatticeSpec, coeffs: np.ndarray) -> float:
    """Max abs error of from_physical(to_physical(c)) against c."""
    return float(np.max(np.abs(from_physical(spec, to_physical(spec, coeffs)) - coeffs)))


def l2_physical(spec: LatticeSpec, coeffs: np.ndarray, ngrid: int | None = None) -> float:
    """L^2 norm of the sampled field (trapezoid = exact for trig polynomials)."""
    u = to_physical(spec, coeffs, ngrid)
    ngrid = u.shape[0]
    cell = (2 * np.pi * spec.L / ngrid) ** spec.d
    return float(np.sqrt(cell * np.sum(np.abs(u) ** 2)))
