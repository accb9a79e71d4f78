"""Tree expansion of the iterates: shapes, signs/colours, decorations, evaluation.

Trees are nested tuples:
    ("leaf",)                          initial-data leaf
    ("bin", A1, A2)                    boundary pair frozen at time 0
    ("bst", A1, A2)                    boundary pair at the running time
    ("t", star, A1, A2, A3)            integrated cubic node, star in STARS

The order n of a tree counts binary nodes once and ternary nodes twice; a tree
of order n has n+1 leaves.  Nodes and leaves are addressed by paths: tuples of
child indices from the root.
"""

from dataclasses import dataclass
from functools import lru_cache
import itertools
import math

import numpy as np

from .kernels import STARS, chi_star, q2, q3
from .lattice import dispersion


# ---------------------------------------------------------------------------
# exponential polynomials  sum_j c_j t^{p_j} e^{i w_j t}


class ExpPoly:
    """Finite sums of c * t^p * exp(i w t), closed under +, *, and 0..t integrals."""

    __slots__ = ("terms",)

    def __init__(self, terms=()):
        self.terms = _merge(list(terms))

    @classmethod
    def const(cls, c):
        return cls([(0.0, 0, complex(c))])

    @classmethod
    def zero(cls):
        return cls()

    def __add__(self, other):
        return ExpPoly(self.terms + other.terms)

    def __mul__(self, other):
        if isinstance(other, ExpPoly):
            return ExpPoly(
                [
                    (w1 + w2, p1 + p2, c1 * c2)
                    for (w1, p1, c1) in self.terms
                    for (w2, p2, c2) in other.terms
                ]
            )
        return self.scale(other)

    __rmul__ = __mul__

    def scale(self, c):
        return ExpPoly([(w, p, c * cc) for (w, p, cc) in self.terms])

    def conj(self):
        """Complex conjugate as a function of real t."""
        return ExpPoly([(-w, p, np.conj(c)) for (w, p, c) in self.terms])

    def shift_freq(self, w0):
        """Multiply by e^{i w0 t}."""
        return ExpPoly([(w + w0, p, c) for (w, p, c) in self.terms])

    def scale_time(self, a):
        """P(a t) as an ExpPoly in t (a real)."""
        return ExpPoly([(w * a, p, c * a**p) for (w, p, c) in self.terms])

    def __call__(self, t):
        return sum(c * t**p * np.exp(1j * w * t) for (w, p, c) in self.terms) + 0j

    def integrate(self, Omega=0.0):
        """Exact primitive: Int_0^t e^{i Omega s} P(s) ds as an ExpPoly."""
        out = []
        tol = _freq_tol([w + Omega for (w, p, c) in self.terms])
        for (w, p, c) in self.terms:
            a = w + Omega
            if abs(a) <= tol:
                # removable singularity: polynomial branch
                out.append((0.0, p + 1, c / (p + 1)))
                continue
            # iterated integration by parts:
            #   E_p = t^p e^{iat}/(ia) - (p/(ia)) E_{p-1},  E_0 = (e^{iat}-1)/(ia)
            ia = 1j * a
            coef = c
            for q in range(p, -1, -1):
                out.append((a, q, coef / ia))
                if q == 0:
                    out.append((0.0, 0, -coef / ia))
                else:
                    coef = -coef * q / ia
        return ExpPoly(out)


def _freq_tol(freqs):
    mx = max((abs(w) for w in freqs), default=0.0)
    return 1e-9 * max(mx, 1.0)


def _merge(terms):
    terms = [(float(w), int(p), complex(c)) for (w, p, c) in terms if c != 0]
    if not terms:
        return []
    tol = _freq_tol([w for w, _, _ in terms])
    terms.sort(key=lambda t: (t[1], t[0]))
    out = []
    for (w, p, c) in terms:
        if out and out[-1][1] == p and abs(out[-1][0] - w) <= tol:
            wp, pp, cp = out.pop()
            c = c + cp
            w = wp
        if c != 0:
            out.append((w, p, c))
    return [t for t in out if abs(t[2]) > 0.0]


# ---------------------------------------------------------------------------
# tree shapes

LEAF = ("leaf",)


def order(tree) -> int:
    """Expansion order: binary nodes count 1, ternary nodes count 2."""
    if tree[0] == "leaf":
        return 0
    if tree[0] in ("bin", "bst"):
        return 1 + order(tree[1]) + order(tree[2])
    return 2 + order(tree[2]) + order(tree[3]) + order(tree[4])


@lru_cache(maxsize=None)
def enumerate_trees(n: int) -> tuple:
    """All tree shapes of order n (the recursion of the iterate expansion)."""
    if n == 0:
        return (LEAF,)
    if n == 1:
        return (("bin", LEAF, LEAF), ("bst", LEAF, LEAF))
    out = []
    for star in STARS:
        for n1 in range(n - 1):
            for n2 in range(n - 1 - n1):
                n3 = n - 2 - n1 - n2
                for a1 in enumerate_trees(n1):
                    for a2 in enumerate_trees(n2):
                        for a3 in enumerate_trees(n3):
                            out.append(("t", star, a1, a2, a3))
    for n1 in range(n):
        n2 = n - 1 - n1
        for a1 in enumerate_trees(n1):
            for a2 in enumerate_trees(n2):
                out.append(("bst", a1, a2))
    return tuple(out)


def children(tree):
    if tree[0] in ("bin", "bst"):
        return tree[1:3]
    if tree[0] == "t":
        return tree[2:5]
    return ()


def walk(tree, path=()):
    """Yield (path, subtree) in depth-first order, root first."""
    yield path, tree
    for i, c in enumerate(children(tree)):
        yield from walk(c, path + (i,))


@lru_cache(maxsize=None)
def node_paths(tree):
    return tuple(p for p, t in walk(tree) if t[0] != "leaf")


@lru_cache(maxsize=None)
def leaf_paths(tree):
    return tuple(p for p, t in walk(tree) if t[0] == "leaf")


@lru_cache(maxsize=None)
def subtree(tree, path):
    for i in path:
        tree = children(tree)[i]
    return tree


def tree_to_sexp(tree) -> str:
    if tree[0] == "leaf":
        return "_"
    if tree[0] == "bin":
        return f"(Bin {tree_to_sexp(tree[1])} {tree_to_sexp(tree[2])})"
    if tree[0] == "bst":
        return f"(Bst {tree_to_sexp(tree[1])} {tree_to_sexp(tree[2])})"
    star = {"lowl": "Tlowl", "lowm": "Tlowm", "lowr": "Tlowr", "high": "Thigh"}[tree[1]]
    return f"({star} {tree_to_sexp(tree[2])} {tree_to_sexp(tree[3])} {tree_to_sexp(tree[4])})"


# ---------------------------------------------------------------------------
# signs and colours


@dataclass(frozen=True)
class SignedColouredTree:
    """Tree shape plus a sign map (all positions) and colour map (all positions).

    The root sign is the conjugation index of the whole expression; every other
    position's sign is free.  Colours are determined by the root colour: binary
    children flip, ternary outer children keep, the middle child flips.
    """

    tree: tuple
    phi: tuple  # sorted ((path, +-1), ...)
    col: tuple  # sorted ((path, 0/1), ...)

    def sign(self, path):
        return dict(self.phi)[path]

    def colour(self, path):
        return dict(self.col)[path]

    @property
    def phi_map(self):
        return dict(self.phi)

    @property
    def col_map(self):
        return dict(self.col)

    def to_sexp(self) -> str:
        phi = self.phi_map
        col = self.col_map

        def go(tree, path):
            tag = f"{'+' if phi[path] > 0 else '-'}{col[path]}"
            if tree[0] == "leaf":
                return f"_{tag}"
            name = {
                "bin": "Bin", "bst": "Bst",
            }.get(tree[0]) or {"lowl": "Tlowl", "lowm": "Tlowm", "lowr": "Tlowr", "high": "Thigh"}[tree[1]]
            kids = " ".join(go(c, path + (i,)) for i, c in enumerate(children(tree)))
            return f"({name}:{tag} {kids})"

        return go(self.tree, ())


def colour_map(tree, root_colour):
    out = {}

    def go(t, path, c):
        out[path] = c
        kids = children(t)
        if t[0] in ("bin", "bst"):
            for i, k in enumerate(kids):
                go(k, path + (i,), 1 - c)
        elif t[0] == "t":
            flips = (0, 1, 0)
            for i, k in enumerate(kids):
                go(k, path + (i,), c ^ flips[i])

    go(tree, (), root_colour)
    return out


def enumerate_signed_coloured(n: int, eta: int, iota: int):
    """All (tree, sign map, colour map) triples of order n, root colour/sign fixed."""
    out = []
    for tree in enumerate_trees(n):
        paths = [p for p, _ in walk(tree)]
        free = [p for p in paths if p != ()]
        cmap = tuple(sorted(colour_map(tree, eta).items()))
        for signs in itertools.product((1, -1), repeat=len(free)):
            phi = {(): iota}
            phi.update(zip(free, signs))
            out.append(SignedColouredTree(tree, tuple(sorted(phi.items())), cmap))
    return out


# ---------------------------------------------------------------------------
# decorations


def decorations(tree, ctx, k_out):
    """All admissible wavenumber decorations with root numerator k_out.

    Leaves range over ctx.support (mode numerators inside the spectrum ball);
    every internal node's numerator must stay inside the truncated cube, since
    the operator pipeline drops convolution outputs outside it.  For ternary
    nodes the hidden intermediate (sum of the outer children, the erased pair
    node behind the cubic kernel) must stay inside the cube too.  Returns a
    list of dicts path -> numerator tuple over all positions.
    """
    leaves = leaf_paths(tree)
    nodes = node_paths(tree)
    out = []
    k_out = tuple(k_out)
    for choice in itertools.product(ctx.support, repeat=len(leaves)):
        kappa = dict(zip(leaves, choice))
        ok = True
        for p in sorted(nodes, key=len, reverse=True):
            t = subtree(tree, p)
            s = tuple(
                sum(v) for v in zip(*(kappa[p + (i,)] for i in range(len(children(t)))))
            )
            if not ctx.lattice.contains(s):
                ok = False
                break
            if t[0] == "t":
                hidden = tuple(a + b for a, b in zip(kappa[p + (0,)], kappa[p + (2,)]))
                if not ctx.lattice.contains(hidden):
                    ok = False
                    break
            kappa[p] = s
        if ok and kappa[()] == k_out:
            out.append(kappa)
    return out


@dataclass
class EvalContext:
    """Everything a tree/coupling evaluation needs besides the realisation."""

    lattice: "LatticeSpec"
    model: "NonlinearityModel"
    cutoff: "CutoffSpec"
    eps: float
    support: tuple  # tuple of numerator tuples allowed on leaves

    @classmethod
    def build(cls, lattice, model, cutoff, eps, radius):
        idx = lattice.ball(radius)
        support = tuple(tuple(lattice.modes[i]) for i in idx)
        return cls(lattice, model, cutoff, eps, support)


def node_quantities(sct: SignedColouredTree, ctx: EvalContext, kappa: dict):
    """Per-node moduli, kernel weights and oscillation sums for one decoration.

    Returns (qprod, Omega, Omega_out) where qprod is the product of all node
    weights, Omega maps each ternary path to its oscillation sum, and
    Omega_out is the boundary oscillation carried outside the time integrals.
    """
    tree = sct.tree
    phi = sct.phi_map
    col = sct.col_map
    spec = ctx.lattice
    Lsc = spec.L

    def wav(path):
        return np.asarray(kappa[path], dtype=float) / Lsc

    tern = [p for p in node_paths(tree) if subtree(tree, p)[0] == "t"]
    # nearest ternary ancestor (itself for ternary nodes), else None
    def int_of(path):
        for cut in range(len(path), -1, -1):
            anc = path[:cut]
            if anc in tern and (anc == path or len(anc) < len(path)):
                return anc
        return None

    Omega = {p: 0.0 for p in tern}
    Omega_out = 0.0
    qprod = 1.0 + 0j
    for p in node_paths(tree):
        t = subtree(tree, p)
        kids = [p + (i,) for i in range(len(children(t)))]
        # exactly-rounded sum: resonant decorations cancel in pairs and must
        # produce a bit-exact zero regardless of term order
        delta = math.fsum(
            [phi[p] * float(dispersion(spec, wav(p)))]
            + [-phi[c] * float(dispersion(spec, wav(c))) for c in kids]
        )
        if t[0] == "bst":
            qprod *= phi[p] * q2(ctx.model, spec, col[p], wav(kids[0]), wav(kids[1])) / delta
            anc = int_of(p)
            if anc is None:
                Omega_out += delta
            else:
                Omega[anc] += delta
        elif t[0] == "bin":
            # frozen boundary pair: no oscillation, modulus enters the weight only
            qprod *= -phi[p] * q2(ctx.model, spec, col[p], wav(kids[0]), wav(kids[1])) / delta
        else:
            star = t[1]
            kl, km, kr = (wav(c) for c in kids)
            w = chi_star(ctx.cutoff, star, kl, km, kr)
            qprod *= phi[p] * w * q3(ctx.model, spec, col[p], phi[p] * phi[kids[1]], kl, km, kr)
            Omega[p] += delta
    return qprod, Omega, Omega_out


@lru_cache(maxsize=None)
def _disp_cached(m, Lsc, numer) -> float:
    # mirrors dispersion() exactly: divide each component first, then square
    return math.sqrt(m + sum((x / Lsc) ** 2 for x in numer))


def oscillation_sums(sct: SignedColouredTree, lattice, kappa: dict):
    """Omega and Omega_out exactly as node_quantities computes them, but
    without the kernel weights; cheap enough for exhaustive resonance sweeps."""
    tree = sct.tree
    phi = sct.phi_map
    m = lattice.m
    Lsc = lattice.L

    tern = [p for p in node_paths(tree) if subtree(tree, p)[0] == "t"]

    def int_of(path):
        for cut in range(len(path) - 1, -1, -1):
            anc = path[:cut]
            if anc in tern:
                return anc
        return None

    Omega = {p: 0.0 for p in tern}
    Omega_out = 0.0
    for p in node_paths(tree):
        t = subtree(tree, p)
        kids = [p + (i,) for i in range(len(children(t)))]
        delta = math.fsum(
            [phi[p] * _disp_cached(m, Lsc, tuple(kappa[p]))]
            + [-phi[c] * _disp_cached(m, Lsc, tuple(kappa[c])) for c in kids]
        )
        if t[0] == "bst":
            anc = int_of(p)
            if anc is None:
                Omega_out += delta
            else:
                Omega[anc] += delta
        elif t[0] == "t":
            Omega[p] += delta
    return Omega, Omega_out


def time_factor(tree, Omega, time_scale=1.0) -> ExpPoly:
    """Nested time integrals over the ternary forest as an ExpPoly in t.

    Each ternary node contributes Int_0^{t_parent} e^{i Omega_j s} (children
    factors)(s) ds; unconstrained top-level factors multiply.  `time_scale`
    maps t -> time_scale * t (kinetic rescaling) exactly on the frequencies.
    """
    tern = sorted(Omega.keys(), key=len)

    def factor_below(parent):
        out = ExpPoly.const(1.0)
        for p in tern:
            if len(p) > len(parent) and p[: len(parent)] == parent:
                # only direct forest children: no ternary strictly between
                if not any(
                    len(q) > len(parent) and len(q) < len(p) and p[: len(q)] == q
                    for q in tern
                ):
                    out = out * integral_of(p)
        return out

    memo = {}

    def integral_of(p):
        if p not in memo:
            memo[p] = factor_below(p).integrate(Omega[p] * time_scale)
        return memo[p]

    out = ExpPoly.const(1.0)
    for p in tern:
        if not any(len(q) < len(p) and p[: len(q)] == q for q in tern):
            out = out * integral_of(p)
    return out


def count_ternary(tree) -> int:
    return sum(1 for p in node_paths(tree) if subtree(tree, p)[0] == "t")


def leaf_value(mu, lattice, colour, sign, numer):
    """Initial-data factor X_in^{colour, sign}(k) for one leaf."""
    if sign == 1:
        return mu[colour][lattice.index[tuple(numer)]]
    return np.conj(mu[colour][lattice.index[tuple(-n for n in numer)]])


def evalF(sct: SignedColouredTree, ctx: EvalContext, mu, t: float, k_out) -> complex:
    """Evaluate one tree's contribution at time t and output numerator k_out."""
    tree = sct.tree
    n = order(tree)
    if n >= 1 and all(v == 0 for v in k_out):
        return 0j
    nT = count_ternary(tree)
    pref = ctx.eps**n / ctx.lattice.L ** (n * ctx.lattice.d / 2) * (-1j) ** nT
    total = 0j
    phi = sct.phi_map
    col = sct.col_map
    for kappa in decorations(tree, ctx, k_out):
        qprod, Omega, Omega_out = node_quantities(sct, ctx, kappa)
        tf = time_factor(tree, Omega)
        val = qprod * np.exp(1j * Omega_out * t) * tf(t)
        for lp in leaf_paths(tree):
            val *= leaf_value(mu, ctx.lattice, col[lp], phi[lp], kappa[lp])
        total += val
    return pref * total


def exppoly_integrate(poly: ExpPoly, Omega: float) -> ExpPoly:
    """Public wrapper for the exact oscillatory primitive."""
    return poly.integrate(Omega)
