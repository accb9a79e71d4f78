"""Interaction-picture dynamics: bilinear/trilinear operators, iterates, solvers.

Everything acts on profile coefficient arrays indexed by a LatticeSpec's modes,
one array per colour.  The evolution equation in these variables is

    d/dt X^eta(t,k) = i eps L^{-d/2} sum_{k1+k2=k} sum_{i1,i2}
                      q^eta(k1,k2) e^{i t D^{(i1,i2)}_{k1,k2}} X^{etabar,i1}(k1) X^{etabar,i2}(k2)

with X^{eta,-}(k) = conj X^eta(-k).  The phase always factors per mode, which
both the dense and the FFT fast path exploit.
"""

from dataclasses import dataclass
from functools import lru_cache
import itertools

import numpy as np

from .kernels import STARS, chi_star, q2, q3
from .lattice import LatticeSpec, signed_view

SIGNS = (1, -1)


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    t_final: float
    scheme: str = "rk4"  # "rk4" or "rk4-normal-form"

    @staticmethod
    def stable_dt(stack, safety: float = 0.1) -> float:
        """dt such that dt * max|Delta| <= safety over the truncated lattice."""
        wmax = float(np.max(stack.lattice.omega))
        return safety / (3.0 * wmax)


class DysonStack:
    """Operators and iterates for one (lattice, model, cutoff, eps) choice."""

    def __init__(self, lattice, model, cutoff, eps):
        self.lattice = lattice
        self.model = model
        self.cutoff = cutoff
        self.eps = eps
        self._xcache = {}
        self._mu = None

    # -- cached dense tables -------------------------------------------------

    @lru_cache(maxsize=None)
    def _q2_matrix(self, eta):
        kv = self.lattice.kvec
        return q2(self.model, self.lattice, eta, kv[:, None, :], kv[None, :, :])

    @lru_cache(maxsize=None)
    def _delta2_matrix(self, i1, i2):
        spec = self.lattice
        w = spec.omega
        out_idx = spec.pair_out
        wsum = np.where(out_idx >= 0, spec.omega[np.clip(out_idx, 0, None)], 0.0)
        D = wsum - i1 * w[:, None] - i2 * w[None, :]
        # dropped pairs never contribute; keep their modulus away from 0
        return np.where(out_idx >= 0, D, 1.0)

    @lru_cache(maxsize=None)
    def _triples(self):
        """Index arrays (i, j, l, out) of admissible triples k_i+k_j+k_l.

        Admissible means the output and the hidden intermediate k_i+k_l (the
        erased pair node behind the cubic kernel) both stay inside the cube,
        matching the truncation semantics of the tree expansion.
        """
        spec = self.lattice
        if spec.nmodes > 4000:
            raise ValueError("trilinear operators are dense; use a fixture-sized lattice")
        po = spec.pair_out
        ii, ll = np.nonzero(po >= 0)
        mid = po[ii, ll]
        outs = po[mid]  # (npairs, nmodes): (k_i + k_l) + k_j
        pp, jj = np.nonzero(outs >= 0)
        return ii[pp], jj, ll[pp], outs[pp, jj]

    @lru_cache(maxsize=None)
    def _q3_vec(self, eta, iota):
        i, j, l, _ = self._triples()
        kv = self.lattice.kvec
        return q3(self.model, self.lattice, eta, iota, kv[i], kv[j], kv[l])

    @lru_cache(maxsize=None)
    def _chi_vec(self, star):
        i, j, l, _ = self._triples()
        kv = self.lattice.kvec
        return chi_star(self.cutoff, star, kv[i], kv[j], kv[l])

    @lru_cache(maxsize=None)
    def _delta3_vec(self, i1, i2, i3):
        i, j, l, o = self._triples()
        w = self.lattice.omega
        return w[o] - i1 * w[i] - i2 * w[j] - i3 * w[l]

    # -- operators -------------------------------------------------------------

    def opB(self, eta, i1, i2, t, f, g):
        """Normal-form pair operator with the 1/Delta weight and e^{itDelta} phase."""
        spec = self.lattice
        D = self._delta2_matrix(i1, i2)
        W = self._q2_matrix(eta) / D * np.exp(1j * t * D)
        out_idx = spec.pair_out
        ok = out_idx >= 0
        vals = (f[:, None] * g[None, :] * W)[ok]
        out = np.zeros(spec.nmodes, dtype=complex)
        np.add.at(out, out_idx[ok], vals)
        out[spec.zero_index] = 0.0
        return out / spec.L ** (spec.d / 2)

    def opC(self, eta, star, i1, i2, i3, t, f, g, h):
        """Cutoff trilinear operator with the cubic kernel and phase."""
        spec = self.lattice
        i, j, l, o = self._triples()
        D = self._delta3_vec(i1, i2, i3)
        vals = (
            self._chi_vec(star)
            * self._q3_vec(eta, i2)
            * np.exp(1j * t * D)
            * f[i]
            * g[j]
            * h[l]
        )
        out = np.zeros(spec.nmodes, dtype=complex)
        np.add.at(out, o, vals)
        out[spec.zero_index] = 0.0
        return out / spec.L**spec.d

    def opC_nocut(self, eta, i1, i2, i3, t, f, g, h):
        """Trilinear operator without the scale cutoffs (their sum is 1)."""
        spec = self.lattice
        i, j, l, o = self._triples()
        D = self._delta3_vec(i1, i2, i3)
        vals = self._q3_vec(eta, i2) * np.exp(1j * t * D) * f[i] * g[j] * h[l]
        out = np.zeros(spec.nmodes, dtype=complex)
        np.add.at(out, o, vals)
        out[spec.zero_index] = 0.0
        return out / spec.L**spec.d

    # -- iterates ----------------------------------------------------------------

    def set_realisation(self, mu):
        """Fix the initial draw (2, nmodes) used by the iterate recursion."""
        self._mu = np.asarray(mu, dtype=complex)
        self._xcache = {}

    def X(self, n, t):
        """Iterate X_n(t) as a (2, nmodes) array for the fixed realisation."""
        key = (n, round(float(t), 12))
        if key in self._xcache:
            return self._xcache[key]
        spec = self.lattice
        if n == 0:
            out = self._mu.copy()
        else:
            out = np.zeros((2, spec.nmodes), dtype=complex)
            for eta in (0, 1):
                acc = np.zeros(spec.nmodes, dtype=complex)
                # boundary pair terms over n1+n2 = n-1
                for n1 in range(n):
                    n2 = n - 1 - n1
                    X1 = self.X(n1, t)
                    X2 = self.X(n2, t)
                    for i1, i2 in itertools.product(SIGNS, repeat=2):
                        f = signed_view(X1[1 - eta], spec, i1)
                        g = signed_view(X2[1 - eta], spec, i2)
                        acc += self.eps * self.opB(eta, i1, i2, t, f, g)
                        if n1 == 0 and n2 == 0:
                            acc -= self.eps * self.opB(eta, i1, i2, 0.0, f, g)
                # integrated cubic terms over n1+n2+n3 = n-2
                if n >= 2:
                    def integrand(tau):
                        v = np.zeros(spec.nmodes, dtype=complex)
                        for n1 in range(n - 1):
                            for n2 in range(n - 1 - n1):
                                n3 = n - 2 - n1 - n2
                                Xa = self.X(n1, tau)
                                Xb = self.X(n2, tau)
                                Xc = self.X(n3, tau)
                                for i1, i2, i3 in itertools.product(SIGNS, repeat=3):
                                    f = signed_view(Xa[eta], spec, i1)
                                    g = signed_view(Xb[1 - eta], spec, i2)
                                    h = signed_view(Xc[eta], spec, i3)
                                    for star in STARS:
                                        v += self.opC(eta, star, i1, i2, i3, tau, f, g, h)
                        return v

                    acc += -1j * self.eps**2 * adaptive_gl(integrand, 0.0, t, spec.nmodes)
                out[eta] = acc
        self._xcache[key] = out
        return out

    def dyson_iterate(self, n, t):
        return self.X(n, t)

    def dyson_partial_sum(self, N, t):
        return sum(self.X(n, t) for n in range(N + 1))

    # -- direct integration ------------------------------------------------------

    def rhs(self, tau, X):
        """d/dtau of the batched state X of shape (S, 2, nmodes)."""
        spec = self.lattice
        w = spec.omega
        out = np.zeros_like(X)
        phase = {i: np.exp(-1j * i * tau * w) for i in SIGNS}
        fast = self.model.sum_profile is not None
        for eta in (0, 1):
            src = X[:, 1 - eta, :]
            if fast:
                s = (src * phase[1] + np.conj(src[:, spec.neg]) * phase[-1]) / w
                conv = _fft_pairsum(spec, s, s)
                prof = self.model.sum_profile(eta, spec.kvec)
                acc = conv * prof / (4.0 * (2 * np.pi) ** (spec.d / 2)) * np.exp(1j * tau * w)
            else:
                acc = np.zeros_like(src)
                Q = self._q2_matrix(eta)
                out_idx = spec.pair_out
                ok = out_idx >= 0
                flat = out_idx[ok]
                views = {
                    i: signed_view(src, spec, i) * phase[i] for i in SIGNS
                }
                wout = np.where(out_idx >= 0, w[np.clip(out_idx, 0, None)], 0.0)
                for i1, i2 in itertools.product(SIGNS, repeat=2):
                    W = Q * np.exp(1j * tau * wout)
                    vals = (views[i1][:, :, None] * views[i2][:, None, :] * W[None])[:, ok]
                    for s_ in range(X.shape[0]):
                        np.add.at(acc[s_], flat, vals[s_])
            acc[:, spec.zero_index] = 0.0
            out[:, eta, :] = 1j * self.eps / spec.L ** (spec.d / 2) * acc
        return out

    def direct_integrate(self, mu, cfg: IntegratorConfig, t_out):
        """Integrate batched draws mu (S, 2, nmodes) and sample at times t_out.

        Returns an array (len(t_out), S, 2, nmodes) of profile coefficients.
        """
        X = np.array(mu, dtype=complex)
        if X.ndim == 2:
            X = X[None]
        t_out = list(t_out)
        snaps = np.zeros((len(t_out), *X.shape), dtype=complex)
        t = 0.0
        k_out = 0
        while k_out < len(t_out) and t_out[k_out] <= t + 1e-14:
            snaps[k_out] = X
            k_out += 1
        step = self._nf_step if cfg.scheme == "rk4-normal-form" else self._rk4_step
        if cfg.scheme == "rk4-normal-form":
            X = self._to_nf(0.0, X)
        while k_out < len(t_out):
            target = t_out[k_out]
            nsteps = max(1, int(np.ceil((target - t) / cfg.dt - 1e-12)))
            dt = (target - t) / nsteps
            for _ in range(nsteps):
                X = step(t, X, dt)
                t += dt
            t = target
            snaps[k_out] = self._from_nf(t, X) if cfg.scheme == "rk4-normal-form" else X
            k_out += 1
        return snaps

    def _rk4_step(self, t, X, dt):
        k1 = self.rhs(t, X)
        k2 = self.rhs(t + dt / 2, X + dt / 2 * k1)
        k3 = self.rhs(t + dt / 2, X + dt / 2 * k2)
        k4 = self.rhs(t + dt, X + dt * k3)
        return X + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    # -- normal-form route ---------------------------------------------------

    def _pair_term(self, t, X):
        """eps * sum over signs of the boundary pair operator, batched."""
        spec = self.lattice
        out = np.zeros_like(X)
        for s_ in range(X.shape[0]):
            for eta in (0, 1):
                for i1, i2 in itertools.product(SIGNS, repeat=2):
                    f = signed_view(X[s_, 1 - eta], spec, i1)
                    g = signed_view(X[s_, 1 - eta], spec, i2)
                    out[s_, eta] += self.eps * self.opB(eta, i1, i2, t, f, g)
        return out

    def _to_nf(self, t, X):
        return X - self._pair_term(t, X)

    def _from_nf(self, t, Z, iters=8):
        X = Z.copy()
        for _ in range(iters):
            X = Z + self._pair_term(t, X)
        return X

    def _nf_rhs(self, t, Z):
        X = self._from_nf(t, Z)
        spec = self.lattice
        out = np.zeros_like(Z)
        for s_ in range(Z.shape[0]):
            for eta in (0, 1):
                acc = np.zeros(spec.nmodes, dtype=complex)
                for i1, i2, i3 in itertools.product(SIGNS, repeat=3):
                    f = signed_view(X[s_, eta], spec, i1)
                    g = signed_view(X[s_, 1 - eta], spec, i2)
                    h = signed_view(X[s_, eta], spec, i3)
                    acc += self.opC_nocut(eta, i1, i2, i3, t, f, g, h)
                out[s_, eta] = -1j * self.eps**2 * acc
        return out

    def _nf_step(self, t, Z, dt):
        k1 = self._nf_rhs(t, Z)
        k2 = self._nf_rhs(t + dt / 2, Z + dt / 2 * k1)
        k3 = self._nf_rhs(t + dt / 2, Z + dt / 2 * k2)
        k4 = self._nf_rhs(t + dt, Z + dt * k3)
        return Z + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _fft_pairsum(spec: LatticeSpec, f, g):
    """Zero-padded FFT evaluation of sum_{k1+k2=k} f(k1) g(k2), truncated.

    f, g are (..., nmodes) arrays over the lattice's lexicographic mode order.
    """
    nmax = spec.nmax
    width = 2 * nmax + 1
    P = 1
    while P < 2 * width:
        P *= 2
    lead = f.shape[:-1]
    cube = (width,) * spec.d
    fa = f.reshape(lead + cube)
    ga = g.reshape(lead + cube)
    pad = [(0, 0)] * len(lead) + [(0, P - width)] * spec.d
    axes = tuple(range(len(lead), len(lead) + spec.d))
    F = np.fft.fftn(np.pad(fa, pad), axes=axes)
    G = np.fft.fftn(np.pad(ga, pad), axes=axes)
    conv = np.fft.ifftn(F * G, axes=axes)
    # index n in [-nmax, nmax] sits at position (n + nmax); sums at (n + 2 nmax)
    sl = tuple([slice(None)] * len(lead) + [slice(nmax, nmax + width)] * spec.d)
    out = conv[sl]
    return out.reshape(lead + (spec.nmodes,))


_GL_NODES = {}


def _gl(npts):
    if npts not in _GL_NODES:
        _GL_NODES[npts] = np.polynomial.legendre.leggauss(npts)
    return _GL_NODES[npts]


def adaptive_gl(fun, a, b, size, tol=1e-10, depth=0):
    """Adaptive Gauss-Legendre quadrature of a vector-valued integrand."""
    if b <= a:
        return np.zeros(size, dtype=complex)

    def gl(npts):
        x, w = _gl(npts)
        xs = 0.5 * (b - a) * x + 0.5 * (a + b)
        vals = [fun(t) for t in xs]
        return 0.5 * (b - a) * sum(wi * vi for wi, vi in zip(w, vals))

    coarse = gl(7)
    fine = gl(15)
    err = np.max(np.abs(fine - coarse))
    scale = max(1.0, float(np.max(np.abs(fine))))
    if err <= tol * scale or depth >= 12:
        return fine
    mid = 0.5 * (a + b)
    return adaptive_gl(fun, a, mid, size, tol, depth + 1) + adaptive_gl(
        fun, mid, b, size, tol, depth + 1
    )


def correlations_mc(snaps, trim: float = 0.0):
    """Ensemble correlations from snapshots (T, S, 2, nmodes).

    Returns dict with keys 'rho0', 'rho1' (E|X^eta|^2) and 'rhox'
    (E X^0 conj X^1), each (T, nmodes), plus matching '*_stderr' arrays.
    With trim > 0, the fraction of samples with the largest sup-norm is
    dropped (reported separately by the experiment driver).
    """
    T, S = snaps.shape[:2]
    keep = np.arange(S)
    if trim > 0:
        norms = np.max(np.abs(snaps), axis=(0, 2, 3))
        cut = max(1, int(np.ceil(S * (1.0 - trim))))
        keep = np.argsort(norms)[:cut]
    x0 = snaps[:, keep, 0, :]
    x1 = snaps[:, keep, 1, :]
    out = {}
    for name, vals in (
        ("rho0", np.abs(x0) ** 2 + 0j),
        ("rho1", np.abs(x1) ** 2 + 0j),
        ("rhox", x0 * np.conj(x1)),
    ):
        out[name] = vals.mean(axis=1)
        nkeep = vals.shape[1]
        var = np.var(vals.real, axis=1) + np.var(vals.imag, axis=1)
        out[name + "_stderr"] = np.sqrt(var / nkeep)
    return out
