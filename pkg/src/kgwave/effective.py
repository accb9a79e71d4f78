"""Effective correlation dynamics: closed system, invariants, Picard bounds.

On kinetic time scales the three correlation profiles (rho0, rho1, rhox)
close on themselves:

    d/dt rho0 = 4 rho0 * Int Im(N0(k, k2) conj rhox(k2)) dk2
    d/dt rho1 = 4 rho1 * Int Im(N1(k, k2) rhox(k2)) dk2
    d/dt rhox = 2i rhox * Int (P-(k, k2) rhox(k2) + P+(k, k2) conj rhox(k2)) dk2

The kernel identity N0 - conj N1 = conj P- - P+ makes |rhox| / sqrt(rho0 rho1)
a pointwise invariant, and each equation integrates to an exponential of the
accumulated coupling.  The Taylor/Picard coefficients of the solution satisfy
the same recursion as the size-graded resonant sums and obey Catalan-type
bounds that make the series converge on a kernel-dependent time interval.
"""

from dataclasses import dataclass
import math

import numpy as np

from .kernels import chi_star, kernelN, kernelP


@dataclass(frozen=True)
class QuadratureGrid:
    """Point set and weights approximating Int f(k) dk by sum w_i f(k_i)."""

    points: np.ndarray  # (N, d)
    weights: np.ndarray  # (N,)

    @classmethod
    def from_lattice(cls, spec, radius=None):
        idx = spec.ball(radius) if radius is not None else np.arange(spec.nmodes)
        pts = spec.kvec[idx]
        w = np.full(len(idx), spec.L ** (-spec.d))
        return cls(pts, w)

    @property
    def size(self):
        return len(self.weights)

    def neg_index(self):
        """Index of -k for each point; raises if the set is not symmetric."""
        key = {tuple(p): i for i, p in enumerate(np.round(self.points, 12))}
        out = np.empty(self.size, dtype=np.int64)
        for i, p in enumerate(np.round(self.points, 12)):
            j = key.get(tuple(-p))
            if j is None:
                raise ValueError("grid is not symmetric under k -> -k")
            out[i] = j
        return out


@dataclass(frozen=True)
class CrossKernels:
    """Weighted kernel matrices of the closed correlation system."""

    N0: np.ndarray  # (N, N), complex
    N1: np.ndarray
    Pm: np.ndarray
    Pp: np.ndarray


def build_kernels(model, spec, grid: QuadratureGrid, cutoff=None) -> CrossKernels:
    """Kernel matrices over (k, k2) on the grid, optionally with the low-pair
    cutoff of the truncated dynamics (the cutoff tends to one pointwise)."""
    pts = grid.points
    N = grid.size
    K = np.broadcast_to(pts[:, None, :], (N, N, pts.shape[1]))
    K2 = np.broadcast_to(pts[None, :, :], (N, N, pts.shape[1]))
    w = 1.0
    if cutoff is not None:
        w = chi_star(cutoff, "lowr", K2, -K2, K)
    return CrossKernels(
        N0=kernelN(model, spec, 0, K, K2) * w,
        N1=kernelN(model, spec, 1, K, K2) * w,
        Pm=kernelP(model, spec, -1, K, K2) * w,
        Pp=kernelP(model, spec, +1, K, K2) * w,
    )


def initial_state(spectrum, grid: QuadratureGrid):
    """(rho0, rho1, rhox) at time zero from the covariance spectrum."""
    M = spectrum.matrices(grid.points)
    return np.stack(
        [
            M[:, 0, 0].real.astype(complex),
            M[:, 1, 1].real.astype(complex),
            M[:, 0, 1].astype(complex),
        ]
    )


def cross_rhs(state, kernels: CrossKernels, grid: QuadratureGrid):
    rho0, rho1, rhox = state
    w = grid.weights
    w0 = (kernels.N0 @ (w * np.conj(rhox))).imag
    w1 = (kernels.N1 @ (w * rhox)).imag
    wx = kernels.Pm @ (w * rhox) + kernels.Pp @ (w * np.conj(rhox))
    return np.stack([4.0 * rho0 * w0, 4.0 * rho1 * w1, 2.0j * rhox * wx])


def integrate_cross(kernels, grid, state0, t_final, nsteps, t_out=None):
    """Classic RK4 on the closed system, also accumulating the couplings.

    Returns (times, states, accums) where states has shape (T, 3, N) and
    accums (T, 3, N) holds the jointly integrated exponents: rho0(t) should
    equal rho0(0) * exp(4 * accum0(t)), and similarly for rho1 and (with a
    complex exponent) rhox.
    """
    if t_out is None:
        t_out = np.linspace(0.0, t_final, 9)
    t_out = np.asarray(t_out, dtype=float)
    dt = t_final / nsteps if nsteps > 0 else 0.0
    w = grid.weights

    def rhs(full):
        state = full[:3]
        rho0, rho1, rhox = state
        w0 = (kernels.N0 @ (w * np.conj(rhox))).imag
        w1 = (kernels.N1 @ (w * rhox)).imag
        wx = kernels.Pm @ (w * rhox) + kernels.Pp @ (w * np.conj(rhox))
        dstate = np.stack([4.0 * rho0 * w0, 4.0 * rho1 * w1, 2.0j * rhox * wx])
        dacc = np.stack([w0.astype(complex), w1.astype(complex), wx])
        return np.concatenate([dstate, dacc])

    full = np.concatenate([np.asarray(state0, dtype=complex), np.zeros_like(state0)])
    t = 0.0
    states, accums, times = [], [], []
    targets = list(t_out)

    def record():
        states.append(full[:3].copy())
        accums.append(full[3:].copy())
        times.append(t)

    if targets and abs(targets[0]) < 1e-14:
        record()
        targets.pop(0)
    for step in range(nsteps):
        k1 = rhs(full)
        k2 = rhs(full + 0.5 * dt * k1)
        k3 = rhs(full + 0.5 * dt * k2)
        k4 = rhs(full + dt * k3)
        full = full + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = (step + 1) * dt
        while targets and t >= targets[0] - 1e-12:
            record()
            targets.pop(0)
    return np.array(times), np.array(states), np.array(accums)


def invariant_ratio(state):
    """|rhox| / sqrt(rho0 rho1), pointwise; conserved by the closed system."""
    rho0, rho1, rhox = state
    denom = np.sqrt(np.abs(rho0.real * rho1.real))
    out = np.full(rhox.shape, np.nan)
    ok = denom > 0
    out[ok] = np.abs(rhox[ok]) / denom[ok]
    return out


def exponential_residual(state0, state, accum):
    """Max deviation between the state and its exponential reconstruction."""
    rec0 = state0[0] * np.exp(4.0 * accum[0].real)
    rec1 = state0[1] * np.exp(4.0 * accum[1].real)
    recx = state0[2] * np.exp(2.0j * accum[2])
    scale = max(np.abs(state).max(), 1e-300)
    return (
        max(
            np.abs(state[0] - rec0).max(),
            np.abs(state[1] - rec1).max(),
            np.abs(state[2] - recx).max(),
        )
        / scale
    )


# ---------------------------------------------------------------------------
# Taylor/Picard expansion


def taylor_coefficients(kernels, grid, state0, nmax):
    """Coefficient arrays g_n with rho(t) ~ sum_n g_n t^n, per component.

    Same recursion as the size-graded resonant mode sums; the n-th coefficient
    couples all splits n1 + n2 = n - 1 through the kernel integrals.
    """
    w = grid.weights
    g = [np.asarray(state0, dtype=complex)]
    for n in range(1, nmax + 1):
        acc = np.zeros_like(g[0])
        for n1 in range(n):
            n2 = n - 1 - n1
            w0 = (kernels.N0 @ (w * np.conj(g[n2][2]))).imag
            w1 = (kernels.N1 @ (w * g[n2][2])).imag
            wx = kernels.Pm @ (w * g[n2][2]) + kernels.Pp @ (w * np.conj(g[n2][2]))
            acc[0] += 4.0 * g[n1][0] * w0
            acc[1] += 4.0 * g[n1][1] * w1
            acc[2] += 2.0j * g[n1][2] * wx
        g.append(acc / n)
    return g


def field_norm(grid, f):
    """max of the sup norm and the weighted lattice-integral norm."""
    a = np.abs(np.asarray(f))
    return max(a.max(initial=0.0), float(np.sum(grid.weights * a)))


def kernel_norm(grid, K):
    """max of sup |K| and both weighted marginal sums (Schur-type norm)."""
    a = np.abs(K)
    row = float((a @ grid.weights).max(initial=0.0))
    col = float((grid.weights @ a).max(initial=0.0))
    return max(float(a.max(initial=0.0)), row, col)


def catalan(n: int) -> int:
    return math.comb(2 * n, n) // (n + 1)


def picard_bound(kernels, grid, state0, n: int) -> float:
    """Provable bound on the n-th Taylor coefficient: c_n (8 K M)^n M."""
    K = max(
        kernel_norm(grid, kernels.N0),
        kernel_norm(grid, kernels.N1),
        kernel_norm(grid, kernels.Pm) + kernel_norm(grid, kernels.Pp),
    )
    M = max(field_norm(grid, state0[i]) for i in range(3))
    return catalan(n) * (8.0 * K * M) ** n * M


def growth_rate(kernels, grid, state0) -> float:
    """Rate Lambda with coefficient norms <= Lambda^n M; series converges for
    t < 1/(4 Lambda) with geometric tail (Lambda t)^n."""
    K = max(
        kernel_norm(grid, kernels.N0),
        kernel_norm(grid, kernels.N1),
        kernel_norm(grid, kernels.Pm) + kernel_norm(grid, kernels.Pp),
    )
    M = max(field_norm(grid, state0[i]) for i in range(3))
    return 32.0 * K * M


def default_horizon(kernels, grid, state0) -> float:
    """Time horizon on which the expansion provably converges fast."""
    lam = growth_rate(kernels, grid, state0)
    return 0.25 / lam if lam > 0 else 1.0
