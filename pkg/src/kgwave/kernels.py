"""Interaction kernels: quadratic/cubic coefficients, cutoffs, effective kernels.

Colour conventions: eta in {0, 1}, etabar = 1 - eta.  Signs iota in {+1, -1}.
All kernel evaluations take wavenumbers (arrays of shape (..., d)) rather than
mode indices, so the same code serves the lattice and the continuum system.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .lattice import LatticeSpec, dispersion


@dataclass(frozen=True)
class NonlinearityModel:
    """Pair of symmetric quadratic symbols Q^0, Q^1.

    Q maps (eta, xi1, xi2) -> complex, vectorised over leading axes.  Models
    whose symbol depends only on xi1+xi2 expose `sum_profile` (eta, s) so the
    integrator can use FFT convolutions; it must satisfy
    Q(eta, xi1, xi2) == sum_profile(eta, xi1+xi2).
    """

    name: str
    Q: Callable
    sum_profile: Callable | None = None

    def __call__(self, eta, xi1, xi2):
        return self.Q(eta, np.asarray(xi1, dtype=float), np.asarray(xi2, dtype=float))


def _rational_bump(s, width):
    r2 = np.sum(s * s, axis=-1)
    return r2 / (width + r2)


def make_model(name: str) -> NonlinearityModel:
    """Built-in models: 'test-real', 'test-complex', 'zero'.

    The two colours get different profile *widths* (not just overall scales):
    a purely scalar colour dependence would cancel from the cubic kernel,
    whose two factors carry one colour each, and degenerate the cross system.
    """
    width = {0: 1.0, 1: 3.0}
    if name == "test-real":
        def prof(eta, s):
            return _rational_bump(np.asarray(s, dtype=float), width[eta]) + 0j

        return NonlinearityModel(name, lambda e, a, b: prof(e, a + b), prof)
    if name == "test-complex":
        # odd phase keeps Q(-xi1,-xi2) = conj Q(xi1,xi2)
        def prof(eta, s):
            s = np.asarray(s, dtype=float)
            r2 = np.sum(s * s, axis=-1)
            theta = (1.0 + eta) * np.sum(s, axis=-1) / (1.0 + r2)
            return _rational_bump(s, width[eta]) * np.exp(1j * theta)

        return NonlinearityModel(name, lambda e, a, b: prof(e, a + b), prof)
    if name == "zero":
        def zero(eta, a, b):
            a = np.asarray(a, dtype=float)
            return np.zeros(np.broadcast_shapes(a.shape[:-1], np.asarray(b).shape[:-1]), dtype=complex)

        return NonlinearityModel(name, zero, lambda e, s: np.zeros(np.asarray(s).shape[:-1], dtype=complex))
    raise ValueError(f"unknown model {name!r}")


def q2(model: NonlinearityModel, spec: LatticeSpec, eta: int, k1, k2):
    """Quadratic kernel Q^eta(k1,k2) / (4 (2 pi)^{d/2} <k1> <k2>)."""
    k1 = np.asarray(k1, dtype=float)
    k2 = np.asarray(k2, dtype=float)
    norm = 4.0 * (2 * np.pi) ** (spec.d / 2) * dispersion(spec, k1) * dispersion(spec, k2)
    return model(eta, k1, k2) / norm


def q3(model: NonlinearityModel, spec: LatticeSpec, eta: int, iota: int, k1, k2, k3):
    """Cubic kernel from the quadratic cancellation step.

    q^eta_iota(k1,k2,k3) = 4<k1+k3> / (m + 2((k1+k2+k3).k2 - iota <k1+k2+k3><k2>))
                           * q^{1-eta}(k1,k3) * q^eta(k1+k3, k2).
    The denominator is bounded below by m in absolute value.
    """
    k1 = np.asarray(k1, dtype=float)
    k2 = np.asarray(k2, dtype=float)
    k3 = np.asarray(k3, dtype=float)
    ktot = k1 + k2 + k3
    denom = spec.m + 2.0 * (
        np.sum(ktot * k2, axis=-1) - iota * dispersion(spec, ktot) * dispersion(spec, k2)
    )
    pref = 4.0 * dispersion(spec, k1 + k3) / denom
    return pref * q2(model, spec, 1 - eta, k1, k3) * q2(model, spec, eta, k1 + k3, k2)


# ---------------------------------------------------------------------------
# cutoffs


def chi(x):
    """C^2 profile: 1 on [0,1], 0 on [2,inf), quintic smoothstep between."""
    x = np.asarray(x, dtype=float)
    s = np.clip(x - 1.0, 0.0, 1.0)
    return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s * s)


@dataclass(frozen=True)
class CutoffSpec:
    """Scale-separation cutoff: pair sums compared against eps^gamma."""

    gamma: float
    epsilon: float

    @property
    def scale(self) -> float:
        return self.epsilon ** (-self.gamma)


STARS = ("lowl", "lowm", "lowr", "high")

# which pair of children is forced small by each low cutoff, as index pairs
MARKED_CHILDREN = {"lowl": (1, 2), "lowm": (0, 2), "lowr": (0, 1)}


def chi_star(cut: CutoffSpec, star: str, k1, k2, k3):
    """Partition of unity over triples selecting which pair sum is small."""
    k1 = np.asarray(k1, dtype=float)
    k2 = np.asarray(k2, dtype=float)
    k3 = np.asarray(k3, dtype=float)
    a = cut.scale

    def n(u):
        return np.sqrt(np.sum(u * u, axis=-1))

    c12 = chi(a * n(k1 + k2))
    c13 = chi(a * n(k1 + k3))
    c23 = chi(a * n(k2 + k3))
    if star == "lowl":
        return c23 * (1 - c12) * (1 - c13)
    if star == "lowm":
        return c13 * (1 - c23) * (1 - c12)
    if star == "lowr":
        return c12 * (1 - c13) * (1 - c23)
    if star == "high":
        return (
            1.0
            - c23 * (1 - c12) * (1 - c13)
            - c13 * (1 - c23) * (1 - c12)
            - c12 * (1 - c13) * (1 - c23)
        )
    raise ValueError(f"unknown star {star!r}")


# ---------------------------------------------------------------------------
# effective kernels


def kernelN(model: NonlinearityModel, spec: LatticeSpec, eta: int, xi, zeta):
    """N^eta(xi, zeta) = q^eta_+(xi, zeta, -zeta) - conj q^eta_-(xi, -zeta, zeta)."""
    zeta = np.asarray(zeta, dtype=float)
    return q3(model, spec, eta, +1, xi, zeta, -zeta) - np.conj(
        q3(model, spec, eta, -1, xi, -zeta, zeta)
    )


def kernelP(model: NonlinearityModel, spec: LatticeSpec, sign: int, xi, zeta):
    """P_sign(xi, zeta) = conj q^1_sign(xi, s zeta, -s zeta) - q^0_sign(xi, s zeta, -s zeta)."""
    zeta = np.asarray(zeta, dtype=float)
    a = sign * zeta
    return np.conj(q3(model, spec, 1, sign, xi, a, -a)) - q3(model, spec, 0, sign, xi, a, -a)


def kernelN_explicit(model: NonlinearityModel, spec: LatticeSpec, eta: int, xi, zeta):
    """Closed form of N^eta, used as an independent cross-check."""
    xi = np.asarray(xi, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    wx = dispersion(spec, xi)
    wz = dispersion(spec, zeta)
    dot = np.sum(xi * zeta, axis=-1)
    pref = 1.0 / (4.0 * (2 * np.pi) ** spec.d * wx * wz**2)
    t1 = model(1 - eta, xi, -zeta) * model(eta, xi - zeta, zeta) / (spec.m + 2.0 * (dot - wx * wz))
    t2 = np.conj(model(1 - eta, xi, zeta) * model(eta, xi + zeta, -zeta)) / (
        spec.m - 2.0 * (dot - wx * wz)
    )
    return pref * (t1 - t2)


def kernelP_explicit(model: NonlinearityModel, spec: LatticeSpec, sign: int, xi, zeta):
    """Closed form of P_sign, used as an independent cross-check."""
    xi = np.asarray(xi, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    wx = dispersion(spec, xi)
    wz = dispersion(spec, zeta)
    dot = np.sum(xi * zeta, axis=-1)
    denom = spec.m + sign * 2.0 * (dot - wx * wz)
    pref = 1.0 / (4.0 * (2 * np.pi) ** spec.d * wx * wz**2 * denom)
    a = -sign * zeta  # second slot of the Q factors
    term = np.conj(model(0, xi, a)) * np.conj(model(1, xi + a, -a)) - model(1, xi, a) * model(
        0, xi + a, -a
    )
    return pref * term
