"""Paired trees: second moments of the iterates, Wick oracle, bush structure.

A coupling glues two signed/coloured trees by an involution sigma that pairs
each minus-sign leaf with a plus-sign leaf (across both trees).  Leaves are
addressed by (side, path) with side in {0, 1}.  The expectation of
X_{n1}^{eta1,iota1}(k) X_{n2}^{eta2,iota2}(-k) is the sum of the coupling
evaluations over all couplings of the corresponding signed/coloured trees.
"""

from dataclasses import dataclass
import itertools

import numpy as np

from .diagrams import (
    ExpPoly,
    SignedColouredTree,
    children,
    enumerate_signed_coloured,
    leaf_paths,
    node_paths,
    node_quantities,
    subtree,
    time_factor,
    count_ternary,
    order,
)
from .kernels import MARKED_CHILDREN, q2, q3
from .lattice import dispersion


@dataclass(frozen=True)
class Coupling:
    """Two signed/coloured trees plus a minus-to-plus leaf pairing."""

    sct1: SignedColouredTree
    sct2: SignedColouredTree
    sigma: tuple  # sorted ((minus_key, plus_key), ...), key = (side, path)

    @property
    def sigma_map(self):
        out = {}
        for a, b in self.sigma:
            out[a] = b
            out[b] = a
        return out

    def sct(self, side):
        return self.sct1 if side == 0 else self.sct2

    def key(self):
        return (self.sct1.to_sexp(), self.sct2.to_sexp(), self.sigma)

    @property
    def size(self):
        return order(self.sct1.tree) + order(self.sct2.tree)


def signed_leaves(sct: SignedColouredTree, side: int):
    phi = sct.phi_map
    minus = [(side, p) for p in leaf_paths(sct.tree) if phi[p] == -1]
    plus = [(side, p) for p in leaf_paths(sct.tree) if phi[p] == 1]
    return minus, plus


def enumerate_couplings(n1, n2, eta1, eta2, iota1, iota2):
    """All couplings of order-(n1, n2) trees with the given root data."""
    out = []
    for s1 in enumerate_signed_coloured(n1, eta1, iota1):
        m1, p1 = signed_leaves(s1, 0)
        for s2 in enumerate_signed_coloured(n2, eta2, iota2):
            m2, p2 = signed_leaves(s2, 1)
            minus = m1 + m2
            plus = p1 + p2
            if len(minus) != len(plus):
                continue
            for perm in itertools.permutations(plus):
                sigma = tuple(sorted(zip(minus, perm)))
                out.append(Coupling(s1, s2, sigma))
    return out


def coupling_decorations(C: Coupling, ctx):
    """Admissible decorations: dicts (side, path) -> numerator tuple.

    Minus leaves range over the support, sigma partners are opposite, and
    both trees must satisfy the same in-cube constraints as single-tree
    decorations (including the hidden intermediate of ternary nodes).
    """
    smap = C.sigma_map
    minus = [a for a, b in C.sigma]
    trees = (C.sct1.tree, C.sct2.tree)
    out = []
    for choice in itertools.product(ctx.support, repeat=len(minus)):
        kappa = {}
        for mkey, val in zip(minus, choice):
            kappa[mkey] = val
            kappa[smap[mkey]] = tuple(-v for v in val)
        ok = True
        for side in (0, 1):
            tree = trees[side]
            for p in sorted(node_paths(tree), key=len, reverse=True):
                t = subtree(tree, p)
                kids = [kappa[(side, p + (i,))] for i in range(len(children(t)))]
                s = tuple(sum(v) for v in zip(*kids))
                if not ctx.lattice.contains(s):
                    ok = False
                    break
                if t[0] == "t":
                    hidden = tuple(a + b for a, b in zip(kids[0], kids[2]))
                    if not ctx.lattice.contains(hidden):
                        ok = False
                        break
                kappa[(side, p)] = s
            if not ok:
                break
        if ok:
            out.append(kappa)
    return out


def evalFC(C: Coupling, ctx, spectrum, t, k_out=None):
    """Evaluate a coupling at slow time t (dynamics at eps^{-2} t).

    Returns the array over output numerators k (the first tree's root), or the
    scalar at k_out when that is given.  The second tree's root is forced to
    -k by the pairing.
    """
    spec = ctx.lattice
    scale = ctx.eps ** (-2.0)
    n = C.size
    nB = sum(
        1
        for side in (0, 1)
        for p in node_paths(C.sct(side).tree)
        if subtree(C.sct(side).tree, p)[0] in ("bin", "bst")
    )
    nT = count_ternary(C.sct1.tree) + count_ternary(C.sct2.tree)
    pref = ctx.eps**nB / spec.L ** (n * spec.d / 2) * (-1j) ** nT
    col1 = C.sct1.col_map
    col2 = C.sct2.col_map
    smap = C.sigma_map
    acc = np.zeros(spec.nmodes, dtype=complex)
    for kappa in coupling_decorations(C, ctx):
        root1 = kappa[(0, ())]
        if n >= 1 and all(v == 0 for v in root1):
            continue
        val = 1.0 + 0j
        omega_out = 0.0
        tf = ExpPoly.const(1.0)
        for side, sct in ((0, C.sct1), (1, C.sct2)):
            sub = {p: v for (s, p), v in kappa.items() if s == side}
            qprod, Omega, w_out = node_quantities(sct, ctx, sub)
            val *= qprod
            omega_out += w_out
            tf = tf * time_factor(sct.tree, Omega, time_scale=scale)
        for mkey, pkey in C.sigma:
            cm = (col1 if mkey[0] == 0 else col2)[mkey[1]]
            cp = (col1 if pkey[0] == 0 else col2)[pkey[1]]
            kneg = np.asarray(kappa[mkey], dtype=float) / spec.L
            Mmat = spectrum.matrices(-kneg)
            val *= np.conj(Mmat[cm, cp])
        val *= np.exp(1j * omega_out * scale * t) * tf(t)
        acc[spec.index[root1]] += val
    acc *= pref
    if k_out is None:
        return acc
    return acc[spec.index[tuple(k_out)]]


def second_moment(n1, n2, eta1, eta2, iota1, iota2, ctx, spectrum, t):
    """Sum of all coupling evaluations: E X_{n1}^{eta1,iota1}(k) X_{n2}^{eta2,iota2}(-k)."""
    total = np.zeros(ctx.lattice.nmodes, dtype=complex)
    for C in enumerate_couplings(n1, n2, eta1, eta2, iota1, iota2):
        total += evalFC(C, ctx, spectrum, t)
    return total


# ---------------------------------------------------------------------------
# Wick oracle: symbolic iterates + Gaussian pairing (independent of trees)


class _Poly(dict):
    """Multilinear polynomial in Gaussian symbols with ExpPoly coefficients.

    Keys are sorted tuples of symbols (colour, conj_flag, mode_index).
    """

    def add_term(self, mono, coeff):
        if mono in self:
            self[mono] = self[mono] + coeff
        else:
            self[mono] = coeff


def _poly_mul(a: _Poly, b: _Poly) -> _Poly:
    out = _Poly()
    for m1, c1 in a.items():
        for m2, c2 in b.items():
            out.add_term(tuple(sorted(m1 + m2)), c1 * c2)
    return out


def _field_conj(field, spec):
    """Signed view iota=-1 of a symbolic field {mode_index: _Poly}."""
    out = {}
    for i, poly in field.items():
        j = spec.neg[i]
        np_ = _Poly()
        for mono, coeff in poly.items():
            np_.add_term(tuple(sorted((c, 1 - f, k) for (c, f, k) in mono)), coeff.conj())
        out[j] = np_
    return out


class SymbolicIterates:
    """Iterates as polynomials in the initial Gaussians, exact in time."""

    def __init__(self, ctx, spectrum):
        self.ctx = ctx
        self.spec = ctx.lattice
        self.spectrum = spectrum
        self._cache = {}

    def field(self, n, eta):
        key = (n, eta)
        if key in self._cache:
            return self._cache[key]
        spec = self.spec
        if n == 0:
            out = {}
            for numer in self.ctx.support:
                i = spec.index[numer]
                p = _Poly()
                p.add_term(((eta, 0, i),), ExpPoly.const(1.0))
                out[i] = p
        else:
            out = {}
            for n1 in range(n):
                n2 = n - 1 - n1
                for i1, i2 in itertools.product((1, -1), repeat=2):
                    f = self._signed(self.field(n1, 1 - eta), i1)
                    g = self._signed(self.field(n2, 1 - eta), i2)
                    self._accum_B(out, eta, i1, i2, f, g, boundary0=(n == 1))
            if n >= 2:
                for n1 in range(n - 1):
                    for n2 in range(n - 1 - n1):
                        n3 = n - 2 - n1 - n2
                        for i1, i2, i3 in itertools.product((1, -1), repeat=3):
                            f = self._signed(self.field(n1, eta), i1)
                            g = self._signed(self.field(n2, 1 - eta), i2)
                            h = self._signed(self.field(n3, eta), i3)
                            self._accum_C(out, eta, i1, i2, i3, f, g, h)
        self._cache[key] = out
        return out

    def _signed(self, field, iota):
        return field if iota == 1 else _field_conj(field, self.spec)

    def _accum_B(self, out, eta, i1, i2, f, g, boundary0):
        """eps * (B(t, f, g) - [n=1 only] B(0, f, g)) accumulated into out."""
        spec = self.spec
        ctx = self.ctx
        kv = spec.kvec
        w = spec.omega
        for ia, pa in f.items():
            for ib, pb in g.items():
                io = spec.pair_out[ia, ib]
                if io < 0 or io == spec.zero_index:
                    continue
                delta = w[io] - i1 * w[ia] - i2 * w[ib]
                coeff = ctx.eps * q2(ctx.model, spec, eta, kv[ia], kv[ib]) / delta
                coeff = coeff / spec.L ** (spec.d / 2)
                prod = _poly_mul(pa, pb)
                tgt = out.setdefault(io, _Poly())
                for mono, c in prod.items():
                    term = c.shift_freq(delta).scale(coeff)
                    tgt.add_term(mono, term)
                    if boundary0:
                        tgt.add_term(mono, ExpPoly.const(-coeff * complex(c(0.0))))

    def _accum_C(self, out, eta, i1, i2, i3, f, g, h):
        """-i eps^2 Int_0^t C(tau, f, g, h) dtau accumulated into out.

        The scale cutoffs sum to one, so they drop out of the full iterate.
        The hidden intermediate k1+k3 must stay in the cube.
        """
        spec = self.spec
        ctx = self.ctx
        kv = spec.kvec
        w = spec.omega
        for ia, pa in f.items():
            for ic, pc in h.items():
                ihid = spec.pair_out[ia, ic]
                if ihid < 0:
                    continue
                for ib, pb in g.items():
                    io = spec.pair_out[ihid, ib]
                    if io < 0 or io == spec.zero_index:
                        continue
                    delta = w[io] - i1 * w[ia] - i2 * w[ib] - i3 * w[ic]
                    kern = q3(ctx.model, spec, eta, i2, kv[ia], kv[ib], kv[ic])
                    coeff = -1j * ctx.eps**2 * kern / spec.L**spec.d
                    prod = _poly_mul(_poly_mul(pa, pb), pc)
                    tgt = out.setdefault(io, _Poly())
                    for mono, c in prod.items():
                        tgt.add_term(mono, c.integrate(delta).scale(coeff))


def _pair_expect(s1, s2, spectrum, spec):
    (c1, f1, k1), (c2, f2, k2) = s1, s2
    if f1 == f2 or k1 != k2:
        return 0j
    M = spectrum.matrices(spec.kvec[k1])
    if f1 == 0:  # E mu conj(mu)
        return complex(M[c1, c2])
    return complex(np.conj(M[c1, c2]))


def _isserlis(mono, spectrum, spec):
    if len(mono) == 0:
        return 1.0 + 0j
    if len(mono) % 2 == 1:
        return 0j
    first, rest = mono[0], mono[1:]
    total = 0j
    for i in range(len(rest)):
        pe = _pair_expect(first, rest[i], spectrum, spec)
        if pe != 0:
            total += pe * _isserlis(rest[:i] + rest[i + 1 :], spectrum, spec)
    return total


def wick_bruteforce(n1, n2, eta1, eta2, iota1, iota2, ctx, spectrum, t):
    """E X_{n1}^{eta1,iota1}(T, k) X_{n2}^{eta2,iota2}(T, -k) at T = eps^{-2} t.

    Built from the symbolic iterate recursion plus Gaussian pairing; shares no
    combinatorial code with the coupling enumeration.
    """
    spec = ctx.lattice
    sym = SymbolicIterates(ctx, spectrum)
    F1 = sym._signed(sym.field(n1, eta1), iota1)
    F2 = sym._signed(sym.field(n2, eta2), iota2)
    T = t * ctx.eps ** (-2.0)
    out = np.zeros(spec.nmodes, dtype=complex)
    for i, p1 in F1.items():
        j = spec.neg[i]
        p2 = F2.get(j)
        if p2 is None:
            continue
        total = 0j
        for m1, c1 in p1.items():
            v1 = complex(c1(T))
            if v1 == 0:
                continue
            for m2, c2 in p2.items():
                ev = _isserlis(tuple(sorted(m1 + m2)), spectrum, spec)
                if ev != 0:
                    total += v1 * complex(c2(T)) * ev
        out[i] = total
    return out


# ---------------------------------------------------------------------------
# bushes


def marked_positions(tree, path=()):
    """All positions that are marked children of low ternary nodes."""
    out = set()
    if tree[0] == "t" and tree[1] in MARKED_CHILDREN:
        for i in MARKED_CHILDREN[tree[1]]:
            out.add(path + (i,))
    for i, c in enumerate(children(tree)):
        out |= marked_positions(c, path + (i,))
    return out


def prebush(tree, path=()):
    """Leaves reachable from `path` without passing a marked position below it."""
    sub = subtree(tree, path)
    if sub[0] == "leaf":
        return {path}
    marked = MARKED_CHILDREN.get(sub[1], ()) if sub[0] == "t" else ()
    out = set()
    for i in range(len(children(sub))):
        if i not in marked:
            out |= prebush(tree, path + (i,))
    return out


def bush(tree, path):
    """Union of the prebushes of the marked children of a low node."""
    sub = subtree(tree, path)
    if sub[0] != "t" or sub[1] not in MARKED_CHILDREN:
        raise ValueError("bush is defined for low ternary nodes only")
    out = set()
    for i in MARKED_CHILDREN[sub[1]]:
        out |= prebush(tree, path + (i,))
    return out


def low_nodes(tree):
    return [p for p in node_paths(tree) if subtree(tree, p)[0] == "t" and subtree(tree, p)[1] in MARKED_CHILDREN]


def offspring(tree, path):
    """Leaves below some marked position at or below `path`."""
    out = set()
    for m in marked_positions(tree):
        if m[: len(path)] == path:
            out |= {l for l in leaf_paths(tree) if l[: len(m)] == m}
    return out


@dataclass
class BushReport:
    """Bush decomposition of a coupling, with self-coupled bush count."""

    bushes: dict  # (side, low-node path) -> frozenset of (side, leaf path)
    prebushes: dict  # (side, node path) -> frozenset
    n_scb: int


def bush_analysis(C: Coupling) -> BushReport:
    smap = C.sigma_map
    phi = {0: C.sct1.phi_map, 1: C.sct2.phi_map}
    bushes = {}
    prebushes = {}
    n_scb = 0
    for side in (0, 1):
        tree = C.sct(side).tree
        for p in node_paths(tree) + leaf_paths(tree):
            prebushes[(side, p)] = frozenset((side, l) for l in prebush(tree, p))
        for p in low_nodes(tree):
            b = frozenset((side, l) for l in bush(tree, p))
            bushes[(side, p)] = b
            minus = {l for l in b if phi[l[0]][l[1]] == -1}
            plus = {l for l in b if phi[l[0]][l[1]] == 1}
            if {smap[l] for l in minus} == plus and minus:
                n_scb += 1
    return BushReport(bushes, prebushes, n_scb)


def is_self_coupled(C: Coupling, side: int, path) -> bool:
    """Whether the bush of a low node is closed under the leaf pairing."""
    tree = C.sct(side).tree
    b = {(side, l) for l in bush(tree, path)}
    phi = {0: C.sct1.phi_map, 1: C.sct2.phi_map}
    smap = C.sigma_map
    minus = {l for l in b if phi[l[0]][l[1]] == -1}
    plus = {l for l in b if phi[l[0]][l[1]] == 1}
    return bool(minus) and {smap[l] for l in minus} == plus


def census_by_scb(n: int):
    """Counts of couplings of total order n by number of self-coupled bushes.

    Aggregated over all root colours and signs and all splits n1+n2=n.
    """
    counts = {}
    for n1 in range(n + 1):
        n2 = n - n1
        for eta1, eta2, i1, i2 in itertools.product((0, 1), (0, 1), (1, -1), (1, -1)):
            for C in enumerate_couplings(n1, n2, eta1, eta2, i1, i2):
                q = bush_analysis(C).n_scb
                counts[q] = counts.get(q, 0) + 1
    return counts
