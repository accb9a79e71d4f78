"""Random initial data: mode-wise correlated complex Gaussians.

Each mode k carries a pair (mu^0_k, mu^1_k) with
    E mu = 0,   E mu mu' = 0,   E mu^a_k conj(mu^b_k') = delta_{k,k'} M^{ab}(k),
where [M^{ab}(k)] is a 2x2 Hermitian PSD matrix supported in a ball.  Draws use
a counter-based generator keyed by (master_seed, sample_index) so that sample i
is reproducible independently of batching or worker scheduling.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .lattice import LatticeSpec


@dataclass(frozen=True)
class SpectrumSet:
    """Covariance functions M00, M11 (real >= 0) and M01 (complex), radius R.

    Each callable takes wavenumbers of shape (..., d).  Required:
    |M01|^2 <= M00*M11 pointwise and support inside |k| <= R.
    """

    M00: Callable
    M11: Callable
    M01: Callable
    R: float

    def matrices(self, k) -> np.ndarray:
        """(..., 2, 2) Hermitian covariance matrices at wavenumbers k."""
        k = np.asarray(k, dtype=float)
        a = np.asarray(self.M00(k), dtype=float)
        b = np.asarray(self.M11(k), dtype=float)
        c = np.asarray(self.M01(k), dtype=complex)
        out = np.zeros(a.shape + (2, 2), dtype=complex)
        out[..., 0, 0] = a
        out[..., 1, 1] = b
        out[..., 0, 1] = c
        out[..., 1, 0] = np.conj(c)
        return out


def default_spectrum(R: float = 2.0) -> SpectrumSet:
    """Smooth bump of radius R with cross correlation 0.5 e^{i pi/4} M00."""

    def bump(k):
        k = np.asarray(k, dtype=float)
        r2 = np.sum(k * k, axis=-1) / R**2
        out = np.zeros_like(r2)
        inside = r2 < 1.0
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
        return out

    return SpectrumSet(
        M00=bump,
        M11=bump,
        M01=lambda k: 0.5 * np.exp(1j * np.pi / 4) * bump(k),
        R=R,
    )


@dataclass(frozen=True)
class EnsembleConfig:
    master_seed: int
    nsamples: int


def _cholesky2(M: np.ndarray) -> np.ndarray:
    """Lower Cholesky factors of (..., 2, 2) PSD Hermitian matrices.

    Handles semi-definite matrices (zero diagonal forces zero off-diagonal by
    the Cauchy-Schwarz constraint, which we enforce by masking).
    """
    a = np.real(M[..., 0, 0])
    c = M[..., 1, 0]
    b = np.real(M[..., 1, 1])
    L = np.zeros_like(M)
    sa = np.sqrt(np.maximum(a, 0.0))
    L[..., 0, 0] = sa
    with np.errstate(divide="ignore", invalid="ignore"):
        l21 = np.where(sa > 0, c / np.where(sa > 0, sa, 1.0), 0.0)
    L[..., 1, 0] = l21
    L[..., 1, 1] = np.sqrt(np.maximum(b - np.abs(l21) ** 2, 0.0))
    return L


def draw_mu(spec: LatticeSpec, spectrum: SpectrumSet, master_seed: int, sample: int,
            nsamples: int = 1) -> np.ndarray:
    """Draw (nsamples, 2, nmodes) arrays of (mu^0, mu^1) coefficients.

    Sample index i uses Philox key (master_seed, sample + i): extending a run
    or re-chunking it never changes previously drawn samples.
    """
    Lch = _cholesky2(spectrum.matrices(spec.kvec))  # (nmodes, 2, 2)
    out = np.zeros((nsamples, 2, spec.nmodes), dtype=complex)
    for i in range(nsamples):
        bg = np.random.Philox(key=np.array([master_seed, sample + i], dtype=np.uint64))
        rng = np.random.Generator(bg)
        z = (rng.standard_normal((spec.nmodes, 2)) + 1j * rng.standard_normal((spec.nmodes, 2))) / np.sqrt(2.0)
        out[i] = np.einsum("kab,kb->ak", Lch, z)
    return out


def build_initial(spec: LatticeSpec, mu: np.ndarray):
    """Physical-side initial data from a single draw mu of shape (2, nmodes).

    Returns (u_hat, ut_hat, v_hat, vt_hat): Fourier coefficients of the two
    field components and their time derivatives at t=0; each is Hermitian
    (hat(f)(-k) = conj hat(f)(k)) so the physical fields are real.
    """
    w = spec.omega
    neg = spec.neg
    res = []
    for eta in (0, 1):
        m = mu[eta]
        f = (m + np.conj(m[neg])) / (2.0 * w)
        ft = (m - np.conj(m[neg])) / 2j
        res.extend([f, ft])
    return tuple(res)
