import itertools
import math

import numpy as np
import pytest

from kgwave.couplings import coupling_decorations, evalFC
from kgwave.diagrams import EvalContext, node_paths, oscillation_sums, subtree
from kgwave.resonant import (
    BtoR,
    RtoB,
    count_linear_extensions,
    enumerate_Res,
    enumerate_binary,
    linear_extensions_binary,
    linear_extensions_coupling,
    reduce_to_right,
    resonance_kind,
    rhoLn_coefficients,
    right_resonant,
)

from conftest import EPS, relerr

SIGNATURES = list(itertools.product((1, -1), (0, 1), (0, 1)))


def catalan(n):
    return math.comb(2 * n, n) // (n + 1)


def test_binary_tree_counts():
    # |B_n(iota, E)| = Catalan(n) * 4^n, checked exhaustively (n=4 is in the
    # acceptance suite)
    for n in range(4):
        for iota, e, ep in SIGNATURES:
            assert len(enumerate_binary(n, iota, (e, ep))) == catalan(n) * 4**n


def test_res_counts_match_binary_counts():
    # size-n resonant couplings = 2^n * right-resonant ones, and ordered
    # right-resonant couplings biject with ordered binary trees
    for n in (1, 2):
        for iota, e, ep in SIGNATURES:
            rn = right_resonant(n, iota=iota, eta1=e, eta2=ep)
            bn = enumerate_binary(n, iota, (e, ep))
            ordered_r = sum(count_linear_extensions(C) for C in rn)
            ordered_b = sum(len(linear_extensions_binary(B.tree)) for B in bn)
            assert ordered_r == ordered_b


def test_res_requires_opposite_root_signs():
    for C in enumerate_Res(1):
        assert C.sct1.phi_map[()] == -C.sct2.phi_map[()]


def test_resonant_oscillations_vanish_exactly(spec9, model, cutoff, spectrum):
    # Omega_j = 0 bit-exactly on every decoration of every size-1 and size-2
    # resonant coupling; size 3 is in the acceptance suite
    ctx = EvalContext.build(spec9, model, cutoff, EPS, radius=2.0)
    for n, limit in ((1, None), (2, 10)):
        for C in enumerate_Res(n, iota=1, eta1=0, eta2=1)[:limit]:
            for kappa in coupling_decorations(C, ctx):
                for side in (0, 1):
                    sub = {p: k for (s, p), k in kappa.items() if s == side}
                    Omega, Omega_out = oscillation_sums(C.sct(side), spec9, sub)
                    assert Omega_out == 0.0
                    assert all(v == 0.0 for v in Omega.values())


def test_middle_resonant_couplings_evaluate_to_zero(spec9, model, cutoff, spectrum):
    ctx = EvalContext.build(spec9, model, cutoff, EPS, radius=2.0)
    seen = 0
    for C in enumerate_Res(1):
        kinds = [resonance_kind(C, s, p) for s in (0, 1) for p in node_paths(C.sct(s).tree)
                 if subtree(C.sct(s).tree, p)[0] == "t"]
        if "middle" in kinds:
            seen += 1
            assert reduce_to_right(C) is None
            val = evalFC(C, ctx, spectrum, 0.7)
            assert np.max(np.abs(val)) == 0.0
    assert seen > 0


def test_reduction_preserves_values(spec9, model, cutoff, spectrum):
    ctx = EvalContext.build(spec9, model, cutoff, EPS, radius=2.0)
    for C in enumerate_Res(1, iota=1, eta1=0, eta2=0):
        R = reduce_to_right(C)
        if R is None:
            continue
        a = evalFC(C, ctx, spectrum, 0.7)
        b = evalFC(R, ctx, spectrum, 0.7)
        assert relerr(a, b) < 1e-13


def test_multiplicity_identity_n1(spec9, model, cutoff, spectrum):
    # sum over Res_1 equals 2 * sum over right-resonant couplings; n = 2 is
    # in the acceptance suite (it costs a minute)
    ctx = EvalContext.build(spec9, model, cutoff, EPS, radius=2.0)
    t = 0.7
    for iota, e, ep in ((1, 0, 0), (1, 0, 1), (-1, 1, 0)):
        tot = sum(evalFC(C, ctx, spectrum, t) for C in enumerate_Res(1, iota, e, ep))
        red = sum(evalFC(C, ctx, spectrum, t) for C in right_resonant(1, iota, e, ep))
        assert relerr(tot, 2.0 * red, floor=1e-10) < 1e-12


def test_bijection_round_trips_n2():
    for iota, e, ep in ((1, 0, 1), (-1, 1, 1)):
        for B in enumerate_binary(2, iota, (e, ep)):
            for order in linear_extensions_binary(B.tree):
                C, rho = BtoR(B, order)
                B2, order2 = RtoB(C, rho)
                assert B2 == B
                assert order2 == order
    # and the other direction, from every ordered right-resonant coupling
    for C in right_resonant(2, iota=1, eta1=0, eta2=1):
        for rho in linear_extensions_coupling(C):
            B, order = RtoB(C, rho)
            C2, rho2 = BtoR(B, order)
            assert C2.key() == C.key()
            assert rho2 == rho


def test_hook_formula_matches_brute_count():
    for C in right_resonant(2, iota=1, eta1=0, eta2=0):
        assert count_linear_extensions(C) == len(linear_extensions_coupling(C))


def test_rhoLn_matches_direct_resonant_sums_n1(spec9, model, cutoff, spectrum):
    ctx = EvalContext.build(spec9, model, cutoff, EPS, radius=2.0)
    t = 0.7
    tables = rhoLn_coefficients(spec9, model, cutoff, spectrum, 1)
    targets = {"rho0": (0, 0), "rho1": (1, 1), "rhox": (0, 1)}
    for name, (e, ep) in targets.items():
        direct = sum(evalFC(C, ctx, spectrum, t) for C in enumerate_Res(1, 1, e, ep))
        assert relerr(tables[name][1] * t, direct, floor=1e-10) < 1e-12


def test_rhoLn_rejects_small_cube(spec5, model, cutoff, spectrum):
    # the hidden intermediate needs the cube to hold twice the spectrum ball
    with pytest.raises(ValueError):
        rhoLn_coefficients(spec5, model, cutoff, spectrum, 1)
