"""Resonant couplings: recursion, right-normalisation, binary-tree bijection.

A low node is resonant when its bush is closed under the leaf pairing and its
marked children carry opposite signs while the unmarked child carries the
node's sign.  Couplings all of whose nodes are resonant have exactly vanishing
oscillations and grow like t^n; they are generated here recursively by gluing
two smaller resonant couplings under a fresh low root.  They reduce to the
right-normal form (all low-r nodes), which is in bijection with ordered
left/right binary trees, and their mode sums satisfy a closed recursion in
the effective kernels.
"""

from dataclasses import dataclass
from functools import lru_cache
import itertools
import math

import numpy as np

from .couplings import Coupling, bush, is_self_coupled, low_nodes
from .diagrams import (
    SignedColouredTree,
    children,
    colour_map,
    count_ternary,
    leaf_paths,
    node_paths,
    subtree,
)
from .kernels import MARKED_CHILDREN, chi_star, kernelN, kernelP


# ---------------------------------------------------------------------------
# resonant nodes


def is_resonant_node(C: Coupling, side: int, path) -> bool:
    tree = C.sct(side).tree
    sub = subtree(tree, path)
    if sub[0] != "t" or sub[1] not in MARKED_CHILDREN:
        return False
    if not is_self_coupled(C, side, path):
        return False
    phi = C.sct(side).phi_map
    m1, m2 = MARKED_CHILDREN[sub[1]]
    (u,) = tuple(i for i in range(3) if i not in (m1, m2))
    return phi[path + (m1,)] == -phi[path + (m2,)] and phi[path + (u,)] == phi[path]


def all_resonant(C: Coupling) -> bool:
    for side in (0, 1):
        tree = C.sct(side).tree
        nodes = node_paths(tree)
        if len(low_nodes(tree)) != len(nodes):
            return False
        if any(not is_resonant_node(C, side, p) for p in nodes):
            return False
    return True


def unmarked_position(star: str) -> int:
    (u,) = tuple(i for i in range(3) if i not in MARKED_CHILDREN[star])
    return u


def resonance_kind(C: Coupling, side: int, path) -> str:
    """'left', 'middle' or 'right' according to the unmarked child slot."""
    star = subtree(C.sct(side).tree, path)[1]
    return {0: "left", 1: "middle", 2: "right"}[unmarked_position(star)]


# ---------------------------------------------------------------------------
# recursive generation of fully resonant couplings


def _shift_maps(sct: SignedColouredTree, prefix):
    phi = {prefix + p: s for p, s in sct.phi_map.items()}
    col = {prefix + p: c for p, c in sct.col_map.items()}
    return phi, col


def _relabel_sigma(sigma, keymap):
    return tuple(sorted((keymap[a], keymap[b]) for a, b in sigma))


def _identity_keymap(C: Coupling):
    out = {}
    for side in (0, 1):
        for p in leaf_paths(C.sct(side).tree):
            out[(side, p)] = (side, p)
    return out


def _glue(C1: Coupling, C2: Coupling, star: str, side: int, swap: bool):
    """Attach C1's trees as the marked pair under a new low root on `side`.

    The unmarked slot takes C2's tree living on that side; C2's other tree
    becomes the opposite tree of the new coupling.  Returns None when the
    colour constraints cannot be met.
    """
    a, b = (C1.sct2, C1.sct1) if swap else (C1.sct1, C1.sct2)
    host = C2.sct(side)
    other = C2.sct(1 - side)
    u = unmarked_position(star)
    m1, m2 = MARKED_CHILDREN[star]
    slots = {u: host, m1: a, m2: b}
    iota_new = host.phi_map[()]
    eta_new = host.col_map[()] if u != 1 else 1 - host.col_map[()]
    for pos in (m1, m2):
        want = eta_new if pos != 1 else 1 - eta_new
        if slots[pos].col_map[()] != want:
            return None
    tree = ("t", star, slots[0].tree, slots[1].tree, slots[2].tree)
    phi = {(): iota_new}
    for pos in range(3):
        sphi, _ = _shift_maps(slots[pos], (pos,))
        phi.update(sphi)
    col = colour_map(tree, eta_new)
    for pos in range(3):
        _, scol = _shift_maps(slots[pos], (pos,))
        if any(col[p] != c for p, c in scol.items()):
            return None
    new_sct = SignedColouredTree(tree, tuple(sorted(phi.items())), tuple(sorted(col.items())))

    # leaf relabelling: C1's trees to the marked slots, host to the unmarked
    # slot (all on `side`), the other tree keeps its side with bare paths
    keymap = {}
    src_a = 1 if swap else 0
    for p in leaf_paths(a.tree):
        keymap[("c1", src_a, p)] = (side, (m1,) + p)
    for p in leaf_paths(b.tree):
        keymap[("c1", 1 - src_a, p)] = (side, (m2,) + p)
    for p in leaf_paths(host.tree):
        keymap[("c2", side, p)] = (side, (u,) + p)
    for p in leaf_paths(other.tree):
        keymap[("c2", 1 - side, p)] = (1 - side, p)
    sigma = tuple(
        sorted(
            [(keymap[("c1",) + m], keymap[("c1",) + p]) for m, p in C1.sigma]
            + [(keymap[("c2",) + m], keymap[("c2",) + p]) for m, p in C2.sigma]
        )
    )
    if side == 0:
        return Coupling(new_sct, other, sigma)
    return Coupling(other, new_sct, sigma)


def _leaf_sct(iota, eta):
    return SignedColouredTree(("leaf",), (((), iota),), (((), eta),))


def res0(iota, eta1, eta2) -> Coupling:
    """The unique fully resonant coupling of size zero with the given data."""
    return _res0(iota, eta1, eta2)


def _res0(iota, eta1, eta2) -> Coupling:
    s1 = _leaf_sct(iota, eta1)
    s2 = _leaf_sct(-iota, eta2)
    minus = (0, ()) if iota == -1 else (1, ())
    plus = (1, ()) if iota == -1 else (0, ())
    return Coupling(s1, s2, ((minus, plus),))


@lru_cache(maxsize=None)
def _res_level(n: int):
    """All fully resonant couplings with n nodes, keyed for deduplication."""
    if n == 0:
        return tuple(
            _res0(iota, e1, e2)
            for iota in (1, -1)
            for e1 in (0, 1)
            for e2 in (0, 1)
        )
    seen = {}
    for n1 in range(n):
        n2 = n - 1 - n1
        for C1 in _res_level(n1):
            for C2 in _res_level(n2):
                for star in ("lowl", "lowm", "lowr"):
                    for side in (0, 1):
                        for swap in (False, True):
                            C = _glue(C1, C2, star, side, swap)
                            if C is None:
                                continue
                            k = C.key()
                            if k not in seen:
                                seen[k] = C
    out = tuple(C for C in seen.values() if all_resonant(C))
    assert len(out) == len(seen), "glued coupling failed the resonance check"
    return out


def enumerate_Res(n: int, iota=None, eta1=None, eta2=None):
    """Fully resonant couplings of size n, optionally filtered by root data.

    Root signs always come in opposite pairs (iota, -iota); `iota` filters on
    the first tree's root sign, `eta1`/`eta2` on the root colours.
    """
    out = []
    for C in _res_level(n):
        if iota is not None and C.sct1.phi_map[()] != iota:
            continue
        if eta1 is not None and C.sct1.col_map[()] != eta1:
            continue
        if eta2 is not None and C.sct2.col_map[()] != eta2:
            continue
        out.append(C)
    return out


# ---------------------------------------------------------------------------
# reduction to right-resonant form


def _swap_outer(tree):
    """Turn every low-l node into a low-r node by swapping its outer children.

    The cutoff, the cubic kernel (symmetric in its outer arguments), the
    oscillation and the hidden intermediate are all invariant under this
    relabelling, so coupling values are preserved decoration by decoration.
    Returns (new_tree, pathmap old->new).
    """
    if tree[0] == "leaf":
        return tree, {(): ()}
    kids = children(tree)
    perm = list(range(len(kids)))
    head = tree[:2] if tree[0] == "t" else tree[:1]
    if tree[0] == "t" and tree[1] == "lowl":
        head = ("t", "lowr")
        perm = [2, 1, 0]
    new_kids = []
    pathmap = {(): ()}
    for new_i, old_i in enumerate(perm):
        sub_new, sub_map = _swap_outer(kids[old_i])
        new_kids.append(sub_new)
        for old_p, new_p in sub_map.items():
            pathmap[(old_i,) + old_p] = (new_i,) + new_p
    return head + tuple(new_kids), pathmap


def reduce_to_right(C: Coupling):
    """Right-normal form of a fully resonant coupling.

    Returns None when some node is middle-resonant (the coupling then has
    value zero because the quadratic kernel vanishes on opposite arguments);
    otherwise returns a coupling with only low-r nodes and the same value.
    """
    for side in (0, 1):
        for p in node_paths(C.sct(side).tree):
            if resonance_kind(C, side, p) == "middle":
                return None
    new_scts = []
    keymaps = {}
    for side in (0, 1):
        sct = C.sct(side)
        new_tree, pathmap = _swap_outer(sct.tree)
        phi = tuple(sorted((pathmap[p], s) for p, s in sct.phi_map.items()))
        col = tuple(sorted((pathmap[p], c) for p, c in sct.col_map.items()))
        new_scts.append(SignedColouredTree(new_tree, phi, col))
        for p in leaf_paths(sct.tree):
            keymaps[(side, p)] = (side, pathmap[p])
    sigma = tuple(sorted((keymaps[a], keymaps[b]) for a, b in C.sigma))
    return Coupling(new_scts[0], new_scts[1], sigma)


def right_resonant(n: int, iota=None, eta1=None, eta2=None):
    """Fully resonant couplings whose nodes are all right-resonant."""
    out = []
    for C in enumerate_Res(n, iota, eta1, eta2):
        kinds = [
            resonance_kind(C, side, p)
            for side in (0, 1)
            for p in node_paths(C.sct(side).tree)
        ]
        if all(k == "right" for k in kinds):
            out.append(C)
    return out


# ---------------------------------------------------------------------------
# ordered binary trees with left/right nodes


BLEAF = ("bleaf",)


@dataclass(frozen=True)
class BinaryTreeLR:
    """Binary tree whose nodes are 'bl' or 'br', with sign and colour maps.

    Positions are paths; child 0 inherits the parent sign, child 1 is free.
    Colours are pairs (eta, eta'): child 0 keeps the pair; child 1 gets
    (eta, 1-eta) under 'bl' and (eta', 1-eta') under 'br'.
    """

    tree: tuple
    phi: tuple  # sorted ((path, sign), ...) over nodes and leaves
    ecol: tuple  # sorted ((path, (eta, eta')), ...)

    @property
    def phi_map(self):
        return dict(self.phi)

    @property
    def ecol_map(self):
        return dict(self.ecol)


def binary_shapes(n: int):
    if n == 0:
        return [BLEAF]
    out = []
    for n1 in range(n):
        for b1 in binary_shapes(n1):
            for b2 in binary_shapes(n - 1 - n1):
                out.append(("bl", b1, b2))
                out.append(("br", b1, b2))
    return out


def binary_node_paths(tree, path=()):
    if tree[0] == "bleaf":
        return []
    return (
        [path]
        + binary_node_paths(tree[1], path + (0,))
        + binary_node_paths(tree[2], path + (1,))
    )


def binary_positions(tree, path=()):
    if tree[0] == "bleaf":
        return [path]
    return (
        [path]
        + binary_positions(tree[1], path + (0,))
        + binary_positions(tree[2], path + (1,))
    )


def binary_colours(tree, E, path=()):
    out = {path: E}
    if tree[0] == "bleaf":
        return out
    eta, etap = E
    E2 = (eta, 1 - eta) if tree[0] == "bl" else (etap, 1 - etap)
    out.update(binary_colours(tree[1], E, path + (0,)))
    out.update(binary_colours(tree[2], E2, path + (1,)))
    return out


def enumerate_binary(n: int, iota: int, E):
    """All sign/colour-decorated left/right binary trees with n nodes."""
    out = []
    for shape in binary_shapes(n):
        positions = binary_positions(shape)
        free = [p for p in positions if p and p[-1] == 1]
        col = binary_colours(shape, E)
        for signs in itertools.product((1, -1), repeat=len(free)):
            free_map = dict(zip(free, signs))
            phi = {}
            for p in sorted(positions, key=len):
                if p == ():
                    phi[p] = iota
                elif p[-1] == 0:
                    phi[p] = phi[p[:-1]]
                else:
                    phi[p] = free_map[p]
            out.append(
                BinaryTreeLR(shape, tuple(sorted(phi.items())), tuple(sorted(col.items())))
            )
    return out


# ---------------------------------------------------------------------------
# the bijection with right-normal resonant couplings


def _sub_binary(B: BinaryTreeLR, path):
    tree = B.tree
    for i in path:
        tree = tree[1 + i]
    phi = tuple(
        sorted((p[len(path) :], s) for p, s in B.phi if p[: len(path)] == path)
    )
    ecol = tuple(
        sorted((p[len(path) :], c) for p, c in B.ecol if p[: len(path)] == path)
    )
    return BinaryTreeLR(tree, phi, ecol)


def BtoR(B: BinaryTreeLR, order: dict):
    """Ordered right-normal coupling from an ordered binary tree.

    `order` maps binary node paths to distinct ranks increasing towards the
    root.  Returns (coupling, rho) with rho on ternary node keys (side, path).
    """
    if B.tree[0] == "bleaf":
        iota = B.phi_map[()]
        eta, etap = B.ecol_map[()]
        return _res0(iota, eta, etap), {}
    Bu = _sub_binary(B, (0,))
    Bm = _sub_binary(B, (1,))
    Cu, rho_u = BtoR(Bu, {p[1:]: r for p, r in order.items() if p[:1] == (0,)})
    Cm, rho_m = BtoR(Bm, {p[1:]: r for p, r in order.items() if p[:1] == (1,)})
    iota = B.phi_map[()]
    eta, etap = B.ecol_map[()]
    glue_side = 0 if B.tree[0] == "bl" else 1
    C = _glue(Cm, Cu, "lowr", glue_side, swap=False)
    assert C is not None, "binary colour table out of sync with tree colours"
    rho = {(glue_side, ()): order[()]}
    # Cm's trees land at slots 0 and 1 of the new root, Cu's glued-side tree
    # at slot 2, and Cu's other tree is the opposite tree of the coupling.
    for (s, p), r in rho_m.items():
        rho[(glue_side, (s,) + p)] = r
    for (s, p), r in rho_u.items():
        if s == glue_side:
            rho[(glue_side, (2,) + p)] = r
        else:
            rho[(s, p)] = r
    return C, rho


def _restrict_coupling(C: Coupling, sct_a, sct_b, keymap):
    """Coupling from two sub-SCTs; keymap sends old (side, path) leaf keys to
    new ones, and must cover exactly the leaves of the two subtrees."""
    sigma = []
    for a, b in C.sigma:
        if a in keymap and b in keymap:
            sigma.append((keymap[a], keymap[b]))
        elif (a in keymap) != (b in keymap):
            raise ValueError("pairing crosses the split: not a sub-coupling")
    return Coupling(sct_a, sct_b, tuple(sorted(sigma)))


def _sub_sct(sct: SignedColouredTree, path):
    tree = subtree(sct.tree, path)
    phi = tuple(sorted((p[len(path) :], s) for p, s in sct.phi if p[: len(path)] == path))
    col = tuple(sorted((p[len(path) :], c) for p, c in sct.col if p[: len(path)] == path))
    return SignedColouredTree(tree, phi, col)


def RtoB(C: Coupling, rho: dict):
    """Ordered binary tree from an ordered right-normal resonant coupling."""
    n = count_ternary(C.sct1.tree) + count_ternary(C.sct2.tree)
    iota = C.sct1.phi_map[()]
    E = (C.sct1.col_map[()], C.sct2.col_map[()])
    if n == 0:
        return (
            BinaryTreeLR(BLEAF, (((), iota),), (((), E),)),
            {},
        )
    top = max(rho, key=rho.get)
    glue_side = top[0]
    assert top == (glue_side, ()), "maximal rank must sit at a root"
    host_sct = C.sct(glue_side)
    assert host_sct.tree[0] == "t" and host_sct.tree[1] == "lowr"
    other = C.sct(1 - glue_side)

    w0 = _sub_sct(host_sct, (0,))
    w1 = _sub_sct(host_sct, (1,))
    w2 = _sub_sct(host_sct, (2,))

    km_m = {}
    for p in leaf_paths(w0.tree):
        km_m[(glue_side, (0,) + p)] = (0, p)
    for p in leaf_paths(w1.tree):
        km_m[(glue_side, (1,) + p)] = (1, p)
    Cm = _restrict_coupling(C, w0, w1, km_m)

    km_u = {}
    for p in leaf_paths(w2.tree):
        km_u[(glue_side, (2,) + p)] = (glue_side, p)
    for p in leaf_paths(other.tree):
        km_u[(1 - glue_side, p)] = (1 - glue_side, p)
    if glue_side == 0:
        Cu = _restrict_coupling(C, w2, other, km_u)
    else:
        Cu = _restrict_coupling(C, other, w2, km_u)

    rho_m = {}
    rho_u = {}
    for (s, p), r in rho.items():
        if (s, p) == top:
            continue
        if s == glue_side and p[:1] == (0,):
            rho_m[(0, p[1:])] = r
        elif s == glue_side and p[:1] == (1,):
            rho_m[(1, p[1:])] = r
        elif s == glue_side and p[:1] == (2,):
            rho_u[(glue_side, p[1:])] = r
        else:
            rho_u[(s, p)] = r

    Bu, ord_u = RtoB(Cu, rho_u)
    Bm, ord_m = RtoB(Cm, rho_m)
    shape = ("bl" if glue_side == 0 else "br", Bu.tree, Bm.tree)
    phi = {(): iota}
    ecol = {(): E}
    for p, s in Bu.phi:
        phi[(0,) + p] = s
    for p, c in Bu.ecol:
        ecol[(0,) + p] = c
    for p, s in Bm.phi:
        phi[(1,) + p] = s
    for p, c in Bm.ecol:
        ecol[(1,) + p] = c
    order = {(): rho[top]}
    order.update({(0,) + p: r for p, r in ord_u.items()})
    order.update({(1,) + p: r for p, r in ord_m.items()})
    B = BinaryTreeLR(shape, tuple(sorted(phi.items())), tuple(sorted(ecol.items())))
    return B, order


# ---------------------------------------------------------------------------
# orders and multiplicities


def linear_extensions_binary(tree):
    """All rank maps on a binary tree's nodes increasing towards the root."""
    nodes = binary_node_paths(tree)
    n = len(nodes)
    out = []
    for perm in itertools.permutations(range(1, n + 1)):
        order = dict(zip(nodes, perm))
        if all(
            order[p] > order[q]
            for p in nodes
            for q in nodes
            if p != q and q[: len(p)] == p
        ):
            out.append(order)
    return out


def linear_extensions_coupling(C: Coupling):
    """All rank maps on a coupling's ternary nodes increasing towards roots."""
    keys = [
        (side, p)
        for side in (0, 1)
        for p in node_paths(C.sct(side).tree)
        if subtree(C.sct(side).tree, p)[0] == "t"
    ]
    n = len(keys)
    out = []
    for perm in itertools.permutations(range(1, n + 1)):
        rho = dict(zip(keys, perm))
        if all(
            rho[a] > rho[b]
            for a in keys
            for b in keys
            if a != b and a[0] == b[0] and b[1][: len(a[1])] == a[1]
        ):
            out.append(rho)
    return out


def count_linear_extensions(C: Coupling) -> int:
    """Number of compatible orders via the hook-length formula on the forest."""
    total = 1
    sizes = 1

    def visit(tree):
        nonlocal total, sizes
        if tree[0] != "t":
            return 0
        cnt = 1 + sum(visit(c) for c in children(tree))
        sizes *= cnt
        return cnt

    m = sum(visit(C.sct(side).tree) for side in (0, 1))
    return math.factorial(m) // sizes


# ---------------------------------------------------------------------------
# closed recursion for the resonant sums


def rhoLn_coefficients(spec, model, cutoff, spectrum, nmax: int):
    """Coefficient arrays g such that the size-n resonant sums equal g * t^n.

    Returns dict with keys 'rho0', 'rho1', 'rhox', each a list of length
    nmax+1 of arrays over the lattice modes.  Requires the cube to contain
    twice the spectrum ball so the hidden-intermediate truncation of the
    cubic kernel never bites on resonant decorations.
    """
    R = spectrum.R
    if spec.kmax < 2 * R:
        raise ValueError("lattice cube must contain twice the spectrum ball")
    kv = spec.kvec
    N = spec.nmodes
    M = spectrum.matrices(kv)  # (N, 2, 2)
    g0 = [np.ascontiguousarray(M[:, 0, 0].real.astype(complex))]
    g1 = [np.ascontiguousarray(M[:, 1, 1].real.astype(complex))]
    gx = [np.ascontiguousarray(M[:, 0, 1])]

    # kernel matrices over (k, k2)
    Kb = np.broadcast_to(kv[:, None, :], (N, N, spec.d))
    K2b = np.broadcast_to(kv[None, :, :], (N, N, spec.d))
    chi_r = chi_star(cutoff, "lowr", K2b, -K2b, Kb)
    N0 = kernelN(model, spec, 0, Kb, K2b) * chi_r
    N1 = kernelN(model, spec, 1, Kb, K2b) * chi_r
    Pm = kernelP(model, spec, -1, Kb, K2b) * chi_r
    Pp = kernelP(model, spec, 1, Kb, K2b) * chi_r
    vol = spec.L ** (-spec.d)

    for n in range(1, nmax + 1):
        a0 = np.zeros(N, dtype=complex)
        a1 = np.zeros(N, dtype=complex)
        ax = np.zeros(N, dtype=complex)
        for n1 in range(n):
            n2 = n - 1 - n1
            w0 = vol * (N0 @ np.conj(gx[n2])).imag
            w1 = vol * (N1 @ gx[n2]).imag
            a0 += 4.0 * g0[n1] * w0
            a1 += 4.0 * g1[n1] * w1
            ax += 2.0j * gx[n1] * vol * (Pm @ gx[n2] + Pp @ np.conj(gx[n2]))
        g0.append(a0 / n)
        g1.append(a1 / n)
        gx.append(ax / n)
    return {"rho0": g0, "rho1": g1, "rhox": gx}
