"""Acceptance suite: one test (and one pass/fail line) per headline property.

These are the full-strength versions of the identities that the module tests
exercise in miniature.  Several sweeps are exhaustive and take minutes; the
whole file is sized for a coffee-break run, not for the edit loop.
"""

import itertools
import math
import time

import numpy as np
import pytest

from kgwave import effective as eff
from kgwave.couplings import (
    bush,
    bush_analysis,
    coupling_decorations,
    enumerate_couplings,
    evalFC,
    low_nodes,
    marked_positions,
    prebush,
    second_moment,
    wick_bruteforce,
)
from kgwave.diagrams import (
    EvalContext,
    enumerate_signed_coloured,
    evalF,
    leaf_paths,
    node_paths,
    oscillation_sums,
    subtree,
)
from kgwave.dyson import DysonStack, IntegratorConfig
from kgwave.ensemble import draw_mu
from kgwave.experiment import ExperimentConfig, run_comparison
from kgwave.resonant import (
    BtoR,
    RtoB,
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


def report(name, ok, detail=""):
    print(f"{'PASS' if ok else 'FAIL'} {name}" + (f"  [{detail}]" if detail else ""))
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# 1. tree expansion equals the Dyson iterates


def test_01_tree_sum_equals_dyson_iterates(spec5, model, cutoff, spectrum):
    t0 = time.time()
    stack = DysonStack(spec5, model, cutoff, EPS)
    mu = draw_mu(spec5, spectrum, 11, 0)[0]
    stack.set_realisation(mu)
    ctx = EvalContext.build(spec5, model, cutoff, EPS, radius=2.0)
    worst = 0.0
    for n in (1, 2):
        for eta in (0, 1):
            trees = list(enumerate_signed_coloured(n, eta, 1))
            # normalise across the time set so the identically-zero t = 0
            # iterate is measured against the iterate's natural size
            errs, scale = [], 0.0
            for t in (0.0, 0.5):
                ref = stack.X(n, t)[eta]
                tot = np.array(
                    [sum(evalF(s, ctx, mu, t, tuple(k)) for s in trees) for k in spec5.modes]
                )
                errs.append(np.max(np.abs(tot - ref)))
                scale = max(scale, np.max(np.abs(ref)))
            worst = max(worst, max(errs) / scale)
    elapsed = time.time() - t0
    report(
        "tree-sum-vs-dyson n<=2, t in {0, 0.5}",
        worst <= 1e-8 and elapsed < 120,
        f"rel {worst:.2e}, {elapsed:.0f}s",
    )


# ---------------------------------------------------------------------------
# 2. coupling expansion equals the Wick oracle


def test_02_couplings_match_wick_oracle(spec9, model, cutoff, spectrum):
    t0 = time.time()
    ctx = EvalContext.build(spec9, model, cutoff, EPS, radius=2.0)
    t = 0.4
    worst = 0.0
    for n1, n2 in ((0, 0), (1, 1), (2, 0), (0, 2)):
        for e1, e2, i1, i2 in itertools.product((0, 1), (0, 1), (1, -1), (1, -1)):
            lhs = second_moment(n1, n2, e1, e2, i1, i2, ctx, spectrum, t)
            rhs = wick_bruteforce(n1, n2, e1, e2, i1, i2, ctx, spectrum, t)
            worst = max(worst, relerr(lhs, rhs, floor=1e-12))
    elapsed = time.time() - t0
    report(
        "couplings-vs-wick n1+n2<=2, all colours/signs",
        worst <= 1e-9 and elapsed < 300,
        f"rel {worst:.2e}, {elapsed:.0f}s",
    )


# ---------------------------------------------------------------------------
# 3. bush structure: worked example plus exhaustive partition invariants


WORKED_TREE = (
    "t", "lowl",
    ("bst", ("leaf",), ("t", "lowm", ("leaf",), ("leaf",), ("bin", ("leaf",), ("leaf",)))),
    ("leaf",),
    ("t", "high", ("leaf",), ("leaf",),
     ("t", "lowr", ("bin", ("leaf",), ("leaf",)), ("leaf",),
      ("t", "high", ("leaf",), ("leaf",), ("leaf",)))),
)

LEAF_NUMBER = {
    (0, 0): 2, (0, 1, 0): 5, (0, 1, 1): 6, (0, 1, 2, 0): 8, (0, 1, 2, 1): 9,
    (1,): 1, (2, 0): 3, (2, 1): 4, (2, 2, 0, 0): 10, (2, 2, 0, 1): 11,
    (2, 2, 1): 7, (2, 2, 2, 0): 12, (2, 2, 2, 1): 13, (2, 2, 2, 2): 14,
}


def _partition_invariants(C) -> bool:
    report_ = bush_analysis(C)
    seen = set()
    for b in report_.bushes.values():
        if seen & b:
            return False
        seen |= b
    marked_leaves = set()
    all_leaves = set()
    for side in (0, 1):
        tree = C.sct(side).tree
        leaves = {(side, p) for p in leaf_paths(tree)}
        all_leaves |= leaves
        for m in marked_positions(tree):
            marked_leaves |= {(side, p) for p in leaf_paths(tree) if p[: len(m)] == m}
    if seen != marked_leaves:
        return False
    root_pre = {(s, p) for s in (0, 1) for p in prebush(C.sct(s).tree, ())}
    return root_pre == all_leaves - marked_leaves


def test_03_bush_fixtures_and_partition_invariants():
    t0 = time.time()
    nums = lambda paths: {LEAF_NUMBER[p] for p in paths}
    exact = (
        nums(prebush(WORKED_TREE, ())) == {2, 6}
        and nums(prebush(WORKED_TREE, (2,))) == {3, 4, 12, 13, 14}
        and low_nodes(WORKED_TREE) == [(), (0, 1), (2, 2)]
        and nums(bush(WORKED_TREE, ())) == {1, 3, 4, 12, 13, 14}
        and nums(bush(WORKED_TREE, (0, 1))) == {5, 8, 9}
        and nums(bush(WORKED_TREE, (2, 2))) == {7, 10, 11}
    )
    total = 0
    bad = 0
    for order in range(5):
        for n1 in range(order + 1):
            n2 = order - n1
            for e1, e2, i1, i2 in itertools.product((0, 1), (0, 1), (1, -1), (1, -1)):
                for C in enumerate_couplings(n1, n2, e1, e2, i1, i2):
                    total += 1
                    if not _partition_invariants(C):
                        bad += 1
    elapsed = time.time() - t0
    report(
        "bush worked example + partition invariants order<=4",
        exact and bad == 0 and total > 3_000_000,
        f"{total} couplings, {bad} violations, {elapsed:.0f}s",
    )


# ---------------------------------------------------------------------------
# 4. binary-tree bijection and counts


def test_04_bijection_and_counts():
    catalan = lambda n: math.comb(2 * n, n) // (n + 1)
    counts_ok = all(
        len(enumerate_binary(n, iota, (e, ep))) == catalan(n) * 4**n
        for n in range(5)
        for iota, e, ep in SIGNATURES
    )
    round_ok = True
    for n in range(1, 4):
        for iota, e, ep in SIGNATURES:
            for B in enumerate_binary(n, iota, (e, ep)):
                for order in linear_extensions_binary(B.tree):
                    C, rho = BtoR(B, order)
                    B2, order2 = RtoB(C, rho)
                    round_ok = round_ok and B2 == B and order2 == order
            for C in right_resonant(n, iota=iota, eta1=e, eta2=ep):
                for rho in linear_extensions_coupling(C):
                    B, order = RtoB(C, rho)
                    C2, rho2 = BtoR(B, order)
                    round_ok = round_ok and C2.key() == C.key() and rho2 == rho
    report("bijection round trips n<=3; counts Catalan(n)*4^n n<=4", counts_ok and round_ok)


# ---------------------------------------------------------------------------
# 5. exact resonance nullity


def _nullity_ok(C, ctx, spec):
    for kappa in coupling_decorations(C, ctx):
        for side in (0, 1):
            sub = {p: k for (s, p), k in kappa.items() if s == side}
            Omega, Omega_out = oscillation_sums(C.sct(side), spec, sub)
            if Omega_out != 0.0 or any(v != 0.0 for v in Omega.values()):
                return False
    return True


def test_05_resonant_oscillations_vanish_exactly(spec9, model, cutoff):
    t0 = time.time()
    ctx2 = EvalContext.build(spec9, model, cutoff, EPS, radius=2.0)
    # n = 3 sweeps every decoration of ~52k couplings; a unit support radius
    # keeps that exhaustive pass affordable without changing the property
    ctx1 = EvalContext.build(spec9, model, cutoff, EPS, radius=1.0)
    checked = 0
    ok = True
    for n, ctx in ((1, ctx2), (2, ctx2), (3, ctx1)):
        for C in enumerate_Res(n):
            checked += 1
            if not _nullity_ok(C, ctx, spec9):
                ok = False
    elapsed = time.time() - t0
    report(
        "resonance nullity exact on Res_n, n<=3, all decorations",
        ok,
        f"{checked} couplings, {elapsed:.0f}s",
    )


# ---------------------------------------------------------------------------
# 6. reduction: middle couplings vanish; 2^n multiplicity identity


def test_06_reduction_and_multiplicity_identity(spec9, model, cutoff, spectrum):
    t0 = time.time()
    ctx = EvalContext.build(spec9, model, cutoff, EPS, radius=2.0)
    t = 0.7
    worst_mid = 0.0
    worst_id = 0.0
    for n in (1, 2):
        for iota, e, ep in SIGNATURES:
            tot = 0.0
            for C in enumerate_Res(n, iota, e, ep):
                val = evalFC(C, ctx, spectrum, t)
                tot = tot + val
                kinds = [
                    resonance_kind(C, s, p)
                    for s in (0, 1)
                    for p in node_paths(C.sct(s).tree)
                    if subtree(C.sct(s).tree, p)[0] == "t"
                ]
                if "middle" in kinds:
                    if reduce_to_right(C) is not None:
                        worst_mid = np.inf
                    worst_mid = max(worst_mid, float(np.max(np.abs(val))))
            red = sum(
                evalFC(C, ctx, spectrum, t) for C in right_resonant(n, iota, e, ep)
            )
            worst_id = max(worst_id, relerr(tot, (2.0**n) * red, floor=1e-10))
    elapsed = time.time() - t0
    report(
        "middle couplings vanish; sum(Res_n) = 2^n sum(R_n), n<=2",
        worst_mid <= 1e-12 and worst_id <= 1e-9,
        f"mid {worst_mid:.1e}, id rel {worst_id:.2e}, {elapsed:.0f}s",
    )


# ---------------------------------------------------------------------------
# 7. the graded recursion reproduces the direct resonant sums


def test_07_graded_recursion_vs_direct_sums(spec9, model, cutoff, spectrum):
    t0 = time.time()
    ctx = EvalContext.build(spec9, model, cutoff, EPS, radius=2.0)
    t = 0.7
    tables = rhoLn_coefficients(spec9, model, cutoff, spectrum, 2)
    worst = 0.0
    for name, (e, ep) in (("rho0", (0, 0)), ("rho1", (1, 1)), ("rhox", (0, 1))):
        for n in (1, 2):
            direct = sum(evalFC(C, ctx, spectrum, t) for C in enumerate_Res(n, 1, e, ep))
            worst = max(worst, relerr(tables[name][n] * t**n, direct, floor=1e-10))
    elapsed = time.time() - t0
    report(
        "graded recursion vs direct resonant sums n<=2",
        worst <= 1e-9,
        f"rel {worst:.2e}, {elapsed:.0f}s",
    )


# ---------------------------------------------------------------------------
# 8. conservation and exponential form of the closed system


@pytest.fixture(scope="module")
def closed_system(spec9, model, cutoff, spectrum):
    grid = eff.QuadratureGrid.from_lattice(spec9)
    kernels = eff.build_kernels(model, spec9, grid, cutoff)
    state0 = eff.initial_state(spectrum, grid)
    return grid, kernels, state0


def test_08_conservation_and_exponential_form(closed_system):
    grid, kernels, state0 = closed_system
    delta = eff.default_horizon(kernels, grid, state0)
    _, states, accums = eff.integrate_cross(kernels, grid, state0, delta, 512)
    r0 = eff.invariant_ratio(state0)
    ok = ~np.isnan(r0) & (r0 > 0)
    drift = max(
        np.max(np.abs(eff.invariant_ratio(s)[ok] - r0[ok]) / r0[ok]) for s in states
    )
    resid = max(
        eff.exponential_residual(state0, s, a) for s, a in zip(states, accums)
    )
    report(
        "invariant ratio constant + exponential reconstruction on [0, delta]",
        drift <= 1e-7 and resid <= 1e-7,
        f"drift {drift:.1e}, residual {resid:.1e}",
    )


# ---------------------------------------------------------------------------
# 9. Picard bounds and geometric convergence of the expansion


def test_09_picard_bounds_and_geometric_tail(closed_system):
    grid, kernels, state0 = closed_system
    delta = eff.default_horizon(kernels, grid, state0)
    g = eff.taylor_coefficients(kernels, grid, state0, 12)
    bound_ok = all(
        max(eff.field_norm(grid, g[n][i]) for i in range(3))
        <= eff.picard_bound(kernels, grid, state0, n) * (1 + 1e-12)
        for n in range(11)
    )
    lam = eff.growth_rate(kernels, grid, state0)
    M = max(eff.field_norm(grid, state0[i]) for i in range(3))
    _, states, _ = eff.integrate_cross(kernels, grid, state0, delta, 2048, [delta])
    rho = states[0]
    partial = np.zeros_like(rho)
    tails = []
    for n, gn in enumerate(g):
        partial = partial + gn * delta**n
        tails.append(max(eff.field_norm(grid, (rho - partial)[i]) for i in range(3)))
    tail_bound = lambda N: M * (lam * delta) ** (N + 1) / (1.0 - lam * delta)
    geo_ok = all(t <= tail_bound(N) + 1e-12 for N, t in enumerate(tails))
    decay_ok = all(
        t2 <= 0.5 * t1 for t1, t2 in zip(tails, tails[1:]) if t1 > 1e-12
    )
    report(
        "Picard coefficient bounds n<=10 + geometric truncation decay",
        bound_ok and geo_ok and decay_ok,
        f"tail(12) {tails[-1]:.1e}",
    )


# ---------------------------------------------------------------------------
# 10. normal-form route agrees with direct integration


def test_10_normal_form_equivalence(spec5, model, cutoff, spectrum):
    stack = DysonStack(spec5, model, cutoff, EPS)
    mu = draw_mu(spec5, spectrum, 5, 0)
    t = 0.8
    dt = IntegratorConfig.stable_dt(stack)
    a = stack.direct_integrate(mu, IntegratorConfig(dt=dt, t_final=t), [t])[0]
    b = stack.direct_integrate(
        mu, IntegratorConfig(dt=dt, t_final=t, scheme="rk4-normal-form"), [t]
    )[0]
    rel = relerr(a, b)
    report("normal-form vs direct integration", rel <= 1e-6, f"rel {rel:.2e}")


# ---------------------------------------------------------------------------
# 11. convergence trend of the Monte Carlo experiment


@pytest.fixture(scope="module")
def trend_outdir(tmp_path_factory):
    outdir = tmp_path_factory.mktemp("trend")
    cfg = ExperimentConfig()  # d=1, beta=2.5, L in {16,32,64}, 2000 samples
    t0 = time.time()
    code, trend = run_comparison(cfg, str(outdir))
    return outdir, code, trend, time.time() - t0


def test_11_convergence_trend(trend_outdir):
    outdir, code, trend, elapsed = trend_outdir
    lines = ", ".join(f"{name}@{L}={e:.3e}" for L, name, e, _ in trend if name == "rho0")
    report(
        "MC error vs effective solution nonincreasing in L (3-sigma)",
        code == 0,
        f"{lines}, {elapsed:.0f}s",
    )


def test_12_figures_are_byte_deterministic(trend_outdir, tmp_path):
    kp = pytest.importorskip("kgwave_plots")
    outdir, _, _, _ = trend_outdir
    outs = []
    for tag in ("a", "b"):
        trend_svg = tmp_path / f"trend_{tag}.svg"
        overlay_svg = tmp_path / f"overlay_{tag}.svg"
        kp.render(kp.PlotJob(str(outdir / "error_trend.csv"), "trend", str(trend_svg)))
        kp.render(
            kp.PlotJob(str(outdir / "comparison.csv"), "overlay", str(overlay_svg), name="rhox")
        )
        outs.append(trend_svg.read_bytes() + overlay_svg.read_bytes())
    report("trend/overlay figures byte-identical on repeat", outs[0] == outs[1])
