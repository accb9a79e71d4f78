"""Experiment driver: Monte Carlo versus effective dynamics, CSV reports.

Subcommands:

- simulate   ensemble correlations of the truncated dynamics at one size L
- effective  trajectory of the closed correlation system
- diagrams   size-graded resonant densities per order
- compare    end-to-end error-versus-L experiment (the main report)
- selftest   quick cross-module identity checks

Every CSV gets a JSON sidecar (same path with ``.json`` appended) carrying the
schema version, the column list, the resolved configuration and the package
version.  Exit codes: 0 success, 1 a checked property failed, 2 configuration
error, 3 numerical failure (non-finite values).
"""

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from . import effective as eff
from .dyson import DysonStack, IntegratorConfig, correlations_mc
from .ensemble import default_spectrum, draw_mu
from .kernels import CutoffSpec, kernelN, kernelP, make_model
from .lattice import LatticeSpec

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    d: int = 1
    L_list: tuple = (16, 32, 64)
    beta: float = 2.5
    m: float = 1.0
    kmax: float = 3.0
    radius: float = 2.0  # spectrum support radius; also the comparison ball
    gamma: float = 0.25
    model: str = "test-complex"
    spectrum_scale: float = 1.0
    delta: float = 0.0  # 0 = derive the well-posedness default
    nsteps: int = 512
    tpoints: int = 5
    nsamples: int = 2000
    trim: float = 0.001
    master_seed: int = 20260826
    chunk: int = 250
    workers: int = 1  # sample chunks in parallel; output independent of count
    L_ref: int = 128  # quadrature size for the reference (limit) solution

    def validate(self):
        if self.d < 1:
            raise ConfigError("d must be >= 1")
        if self.beta <= 2:
            raise ConfigError("beta must exceed 2 (kinetic scaling regime)")
        if self.radius >= self.kmax:
            raise ConfigError("radius must be below the truncation kmax")
        if not self.L_list:
            raise ConfigError("L_list must be non-empty")
        if self.nsamples < 2:
            raise ConfigError("nsamples must be >= 2")
        if not (0.0 <= self.trim < 0.5):
            raise ConfigError("trim must lie in [0, 0.5)")

    def eps(self, L) -> float:
        return float(L) ** (-1.0 / self.beta)


def load_config(args) -> ExperimentConfig:
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    bad = set(data) - known
    if bad:
        raise ConfigError(f"unknown config keys: {sorted(bad)}")
    cfg = ExperimentConfig(**data)
    for name in known:
        val = getattr(args, name, None)
        if val is not None:
            setattr(cfg, name, tuple(val) if name == "L_list" else val)
    cfg.L_list = tuple(int(L) for L in cfg.L_list)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# output helpers


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float) or isinstance(x, np.floating):
        return format(float(x), ".17g")
    return str(x)


def write_table(path, columns, rows, meta):
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")
    sidecar = {
        "schema_version": SCHEMA_VERSION,
        "columns": list(columns),
        "package_version": __version__,
        **meta,
    }
    with open(str(path) + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _meta(cfg: ExperimentConfig, **extra):
    d = dataclasses.asdict(cfg)
    d["L_list"] = list(cfg.L_list)
    return {"config": d, **extra}


def _check_finite(name, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(np.asarray(a).view(float))):
            raise FloatingPointError(f"non-finite values in {name}")


# ---------------------------------------------------------------------------
# building blocks


def _lattice(cfg, L) -> LatticeSpec:
    return LatticeSpec(d=cfg.d, L=L, m=cfg.m, kmax=cfg.kmax)


def _reference_setup(cfg):
    """Quadrature, kernels and initial state of the limiting cross system."""
    model = make_model(cfg.model)
    spectrum = default_spectrum(cfg.radius)
    ref = LatticeSpec(d=cfg.d, L=cfg.L_ref, m=cfg.m, kmax=cfg.radius)
    grid = eff.QuadratureGrid.from_lattice(ref)
    kernels = eff.build_kernels(model, ref, grid, cutoff=None)
    state0 = eff.initial_state(spectrum, grid)
    if cfg.spectrum_scale != 1.0:
        state0 = state0 * cfg.spectrum_scale
    return model, spectrum, ref, grid, kernels, state0


def resolve_delta(cfg) -> float:
    if cfg.delta > 0:
        return cfg.delta
    _, _, _, grid, kernels, state0 = _reference_setup(cfg)
    return eff.default_horizon(kernels, grid, state0)


def _run_chunk(cfg, L, t_fast, start, n):
    spec = _lattice(cfg, L)
    eps = cfg.eps(L)
    stack = DysonStack(spec, make_model(cfg.model), CutoffSpec(cfg.gamma, eps), eps)
    mu = draw_mu(spec, default_spectrum(cfg.radius), cfg.master_seed, start, n)
    if cfg.spectrum_scale != 1.0:
        mu = mu * np.sqrt(cfg.spectrum_scale)
    dt = IntegratorConfig.stable_dt(stack)
    return stack.direct_integrate(mu, IntegratorConfig(dt=dt, t_final=t_fast[-1]), t_fast)


def mc_correlations(cfg, L, delta, t_slow):
    """Ensemble correlations of the truncated dynamics at slow times t_slow.

    Returns (spec, ball_idx, raw, trimmed) where raw/trimmed are the dicts of
    correlations_mc over the whole lattice.  Chunks are seeded independently,
    so the result does not depend on chunking or worker count.
    """
    spec = _lattice(cfg, L)
    eps = cfg.eps(L)
    t_fast = [t / eps**2 for t in t_slow]
    chunks = []
    start = 0
    while start < cfg.nsamples:
        n = min(cfg.chunk, cfg.nsamples - start)
        chunks.append((start, n))
        start += n
    snaps = np.zeros((len(t_fast), cfg.nsamples, 2, spec.nmodes), dtype=complex)
    if cfg.workers > 1 and len(chunks) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futs = [(s, n, pool.submit(_run_chunk, cfg, L, t_fast, s, n)) for s, n in chunks]
            for s, n, fut in futs:
                snaps[:, s : s + n] = fut.result()
    else:
        for s, n in chunks:
            snaps[:, s : s + n] = _run_chunk(cfg, L, t_fast, s, n)
    _check_finite(f"simulation at L={L}", snaps)
    raw = correlations_mc(snaps)
    trimmed = correlations_mc(snaps, trim=cfg.trim) if cfg.trim > 0 else raw
    return spec, spec.ball(cfg.radius), raw, trimmed


def effective_trajectory(cfg, t_slow, grid=None, kernels=None, state0=None):
    if grid is None:
        _, _, _, grid, kernels, state0 = _reference_setup(cfg)
    delta = t_slow[-1]
    times, states, accums = eff.integrate_cross(
        kernels, grid, state0, delta, cfg.nsteps, t_out=t_slow
    )
    _check_finite("effective trajectory", states)
    return grid, times, states, accums


def _match_to_lattice(grid, states, spec, ball):
    """Interpolate nothing: the reference grid contains every ball mode of a
    coarser lattice whenever L divides L_ref; map indices directly."""
    key = {tuple(np.round(p, 12)): i for i, p in enumerate(grid.points)}
    idx = []
    for i in ball:
        j = key.get(tuple(np.round(spec.kvec[i], 12)))
        if j is None:
            raise ConfigError(
                f"lattice L={spec.L} has ball modes outside the reference grid; "
                "choose L_ref as a common multiple of L_list"
            )
        idx.append(j)
    return states[:, :, idx]


FAMILIES = ("rho0", "rho1", "rhox")


def field_observables(spec_or_grid_points, omega, neg, rho0, rhox):
    """Derived second moments of the original fields from the profiles:
    E|u_hat|^2 = (rho0(k) + rho0(-k)) / (4 <k>^2) and the u-v cross moment
    E u_hat conj(v_hat) = (rhox(k) + conj rhox(-k)) / (4 <k>^2)."""
    uu = (rho0.real + rho0.real[..., neg]) / (4.0 * omega**2)
    uv = (rhox + np.conj(rhox[..., neg])) / (4.0 * omega**2)
    return uu, uv


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(cfg, outdir):
    delta = resolve_delta(cfg)
    t_slow = list(np.linspace(0.0, delta, cfg.tpoints))
    L = cfg.L_list[0]
    spec, ball, raw, trimmed = mc_correlations(cfg, L, delta, t_slow)
    columns = ["t", *[f"k{a+1}" for a in range(cfg.d)], "name", "trimmed", "re", "im", "stderr"]
    rows = []
    for j, t in enumerate(t_slow):
        for i in ball:
            k = spec.kvec[i]
            for name in FAMILIES:
                for flag, table in ((0, raw), (1, trimmed)):
                    v = table[name][j, i]
                    rows.append([t, *k, name, flag, v.real, v.imag, table[name + "_stderr"][j, i]])
    path = f"{outdir}/correlations_L{L}.csv"
    write_table(path, columns, rows, _meta(cfg, L=L, eps=cfg.eps(L), delta=delta))
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def cmd_effective(cfg, outdir):
    delta = resolve_delta(cfg)
    t_slow = list(np.linspace(0.0, delta, cfg.tpoints))
    _, _, _, grid, kernels, state0 = _reference_setup(cfg)
    grid, times, states, _ = effective_trajectory(cfg, t_slow, grid, kernels, state0)
    coeffs = eff.taylor_coefficients(kernels, grid, state0, 8)
    norms = [max(eff.field_norm(grid, c[j]) for j in range(3)) for c in coeffs]
    columns = ["t", *[f"k{a+1}" for a in range(cfg.d)], "rho0", "rho1", "rhox_re", "rhox_im", "ratio"]
    rows = []
    for j, t in enumerate(times):
        ratio = eff.invariant_ratio(states[j])
        for i in range(grid.size):
            rows.append(
                [t, *grid.points[i], states[j, 0, i].real, states[j, 1, i].real,
                 states[j, 2, i].real, states[j, 2, i].imag, ratio[i]]
            )
    path = f"{outdir}/effective.csv"
    write_table(path, columns, rows, _meta(cfg, delta=delta, picard_norms=norms))
    drift = np.nanmax(
        np.abs(eff.invariant_ratio(states[-1]) - eff.invariant_ratio(states[0]))
    )
    print(f"wrote {path} ({len(rows)} rows); invariant drift {drift:.3e}")
    return 0


def cmd_diagrams(cfg, outdir, nmax=2):
    from .resonant import rhoLn_coefficients

    model = make_model(cfg.model)
    spectrum = default_spectrum(cfg.radius)
    L = cfg.L_list[0]
    spec = LatticeSpec(d=cfg.d, L=L, m=cfg.m, kmax=max(cfg.kmax, 2 * cfg.radius * 1.0))
    eps = cfg.eps(L)
    cutoff = CutoffSpec(gamma=cfg.gamma, epsilon=eps)
    tables = rhoLn_coefficients(spec, model, cutoff, spectrum, nmax)
    ball = spec.ball(cfg.radius)
    columns = ["n", *[f"k{a+1}" for a in range(cfg.d)], "name", "re", "im"]
    rows = []
    for n in range(nmax + 1):
        for i in ball:
            k = spec.kvec[i]
            for name in ("rho0", "rho1", "rhox"):
                v = tables[name][n][i]
                rows.append([n, *k, name, v.real, v.imag])
    path = f"{outdir}/diagrams_L{L}.csv"
    write_table(path, columns, rows, _meta(cfg, L=L, eps=eps, nmax=nmax))
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def run_comparison(cfg, outdir, figures=False):
    """Error versus L for the profile correlations and the derived field
    moments; returns (exit_code, trend_rows).

    The sup is taken over the mode ball of the *coarsest* lattice (present in
    every finer one), so the error statistic compares the same observables at
    every L instead of inflating the noise extreme with the mode count.
    """
    delta = resolve_delta(cfg)
    t_slow = list(np.linspace(0.0, delta, cfg.tpoints))
    _, _, _, grid, kernels, state0 = _reference_setup(cfg)
    grid, times, states, _ = effective_trajectory(cfg, t_slow, grid, kernels, state0)
    spec0 = _lattice(cfg, min(cfg.L_list))
    common = {tuple(np.round(spec0.kvec[i], 12)) for i in spec0.ball(cfg.radius)}

    trend = []  # (L, family, err, sigma)
    columns = [
        "L", "t", *[f"k{a+1}" for a in range(cfg.d)], "name",
        "mc_re", "mc_im", "mc_stderr", "eff_re", "eff_im",
    ]
    overlay = []
    for L in cfg.L_list:
        spec, ball, raw, trimmed = mc_correlations(cfg, L, delta, t_slow)
        eff_ball = _match_to_lattice(grid, states, spec, ball)
        errs = {}
        # profile-correlation family
        ball = list(ball)
        neg_local = np.array([ball.index(int(spec.neg[i])) for i in ball])
        omega = spec.omega[np.array(ball)]
        mask = np.array([tuple(np.round(spec.kvec[i], 12)) in common for i in ball])
        for name, row in (("rho0", 0), ("rho1", 1), ("rhox", 2)):
            mc = trimmed[name][:, ball]
            se = trimmed[name + "_stderr"][:, ball]
            ef = eff_ball[:, row, :]
            diff = np.abs(mc - ef) * mask
            j = np.unravel_index(np.argmax(diff), diff.shape)
            errs[name] = (float(diff[j]), float(se[j]))
            for jt, t in enumerate(t_slow):
                for jb, i in enumerate(ball):
                    overlay.append(
                        [L, t, *spec.kvec[i], name, mc[jt, jb].real, mc[jt, jb].imag,
                         se[jt, jb], ef[jt, jb].real, ef[jt, jb].imag]
                    )
        # derived field-moment family
        mc_uu, mc_uv = field_observables(None, omega, neg_local, trimmed["rho0"][:, ball], trimmed["rhox"][:, ball])
        ef_uu, ef_uv = field_observables(None, omega, neg_local, eff_ball[:, 0], eff_ball[:, 2])
        se_uu = (trimmed["rho0_stderr"][:, ball] + trimmed["rho0_stderr"][:, ball][:, neg_local]) / (4 * omega**2)
        se_uv = (trimmed["rhox_stderr"][:, ball] + trimmed["rhox_stderr"][:, ball][:, neg_local]) / (4 * omega**2)
        for name, mc, ef, se in (("uu", mc_uu, ef_uu, se_uu), ("uv", mc_uv, ef_uv, se_uv)):
            diff = np.abs(mc - ef) * mask
            j = np.unravel_index(np.argmax(diff), diff.shape)
            errs[name] = (float(diff[j]), float(se[j]))
            for jt, t in enumerate(t_slow):
                for jb, i in enumerate(ball):
                    overlay.append(
                        [L, t, *spec.kvec[i], name, np.real(mc[jt, jb]), np.imag(mc[jt, jb]),
                         se[jt, jb], np.real(ef[jt, jb]), np.imag(ef[jt, jb])]
                    )
        for name, (e, s) in errs.items():
            trend.append([L, name, e, s])
            print(f"L={L:4d} {name:5s} err={e:.4e} (stderr {s:.2e})")

    write_table(
        f"{outdir}/comparison.csv", columns, overlay,
        _meta(cfg, delta=delta, t_slow=t_slow),
    )
    write_table(
        f"{outdir}/error_trend.csv", ["L", "name", "err", "stderr"], trend,
        _meta(cfg, delta=delta),
    )

    ok = True
    by_name = {}
    for L, name, e, s in trend:
        by_name.setdefault(name, []).append((L, e, s))
    for name, seq in by_name.items():
        for (L1, e1, s1), (L2, e2, s2) in zip(seq, seq[1:]):
            if e2 > e1 + 3.0 * (s1 + s2):
                ok = False
                print(f"TREND VIOLATION {name}: err({L2})={e2:.4e} > err({L1})={e1:.4e} + 3 sigma")
    if figures:
        render_report_figures(outdir)
    print("trend:", "PASS" if ok else "FAIL")
    return (0 if ok else 1), trend


def render_report_figures(outdir):
    """Overlay and error-trend figures next to the delimited output."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    trend = np.genfromtxt(
        f"{outdir}/error_trend.csv", delimiter=",", names=True, dtype=None, encoding=None
    )
    fig, ax = plt.subplots(figsize=(5, 4))
    for name in sorted(set(trend["name"])):
        sel = trend["name"] == name
        ax.errorbar(trend["L"][sel], trend["err"][sel], yerr=3 * trend["stderr"][sel],
                    marker="o", label=name)
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel("L")
    ax.set_ylabel("sup error vs effective")
    ax.legend()
    fig.tight_layout()
    fig.savefig(f"{outdir}/error_trend.png", dpi=150)
    plt.close(fig)
    print(f"wrote {outdir}/error_trend.png")


def cmd_selftest(cfg, level="quick"):
    """Cross-module identity checks; prints one line per check."""
    from .diagrams import EvalContext, enumerate_signed_coloured, evalF
    from .resonant import enumerate_Res, reduce_to_right, right_resonant

    failures = []

    def check(name, ok, detail=""):
        print(f"{'PASS' if ok else 'FAIL'} {name} {detail}")
        if not ok:
            failures.append(name)

    spec = LatticeSpec(d=1, L=1, m=1.0, kmax=2)
    model = make_model("test-complex")
    cutoff = CutoffSpec(gamma=0.5, epsilon=0.3)
    spectrum = default_spectrum(2.0)

    # kernel identity behind conservation
    rng = np.random.default_rng(7)
    xi = rng.normal(size=(40, 1))
    ze = rng.normal(size=(40, 1))
    lhs = kernelN(model, spec, 0, xi, ze) - np.conj(kernelN(model, spec, 1, xi, ze))
    rhs = np.conj(kernelP(model, spec, -1, xi, ze)) - kernelP(model, spec, +1, xi, ze)
    check("kernel-identity", np.max(np.abs(lhs - rhs)) < 1e-12)

    # tree expansion equals the Dyson iterate at n=1
    stack = DysonStack(spec, model, cutoff, 0.3)
    mu = draw_mu(spec, spectrum, 11, 0)[0]
    stack.set_realisation(mu)
    ctx = EvalContext.build(spec, model, cutoff, 0.3, radius=2.0)
    t = 0.3
    ref = stack.X(1, t)[0]
    trees = list(enumerate_signed_coloured(1, 0, 1))
    tot = np.array(
        [sum(evalF(s, ctx, mu, t, tuple(n)) for s in trees) for n in spec.modes]
    )
    check("trees-vs-dyson-n1", np.max(np.abs(tot - ref)) < 1e-10 * max(1e-12, np.max(np.abs(ref))))

    # middle-resonant couplings vanish; reduction preserves values
    spec9 = LatticeSpec(d=1, L=1, m=1.0, kmax=4)
    ctx9 = EvalContext.build(spec9, model, cutoff, 0.3, radius=2.0)
    from .couplings import evalFC

    tot_res = sum(
        evalFC(C, ctx9, spectrum, 0.5) for C in enumerate_Res(1, iota=1, eta1=0, eta2=0)
    )
    tot_right = sum(
        evalFC(C, ctx9, spectrum, 0.5) for C in right_resonant(1, iota=1, eta1=0, eta2=0)
    )
    scale = max(np.max(np.abs(tot_res)), 1e-14)
    check("2^n-reduction-n1", np.max(np.abs(tot_res - 2.0 * tot_right)) / scale < 1e-9)

    # conservation of the effective invariant
    grid = eff.QuadratureGrid.from_lattice(spec9, radius=2.0)
    kernels = eff.build_kernels(model, spec9, grid, cutoff=cutoff)
    state0 = eff.initial_state(spectrum, grid)
    hor = eff.default_horizon(kernels, grid, state0)
    _, states, accums = eff.integrate_cross(kernels, grid, state0, hor, 256, t_out=[0, hor])
    drift = np.nanmax(np.abs(eff.invariant_ratio(states[-1]) - eff.invariant_ratio(states[0])))
    check("effective-invariant", drift < 1e-9, f"drift {drift:.2e}")
    check(
        "effective-exponential",
        eff.exponential_residual(states[0], states[-1], accums[-1]) < 1e-9,
    )

    if level == "full":
        from .couplings import second_moment, wick_bruteforce

        worst = 0.0
        for n1, n2 in ((0, 0), (1, 1)):
            lhs = second_moment(n1, n2, 0, 0, 1, -1, ctx9, spectrum, 0.4)
            rhs = wick_bruteforce(n1, n2, 0, 0, 1, -1, ctx9, spectrum, 0.4)
            scale = max(np.max(np.abs(rhs)), 1e-14)
            worst = max(worst, float(np.max(np.abs(lhs - rhs)) / scale))
        check("wick-coupling", worst < 1e-9, f"rel {worst:.2e}")

    return 0 if not failures else 1


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    p = argparse.ArgumentParser(
        prog="kgwave", description="Monte Carlo vs effective correlation dynamics"
    )
    p.add_argument("--config", help="JSON config file (keys = ExperimentConfig fields)")
    p.add_argument("--outdir", default=".", help="output directory for CSV/figures")
    sub = p.add_subparsers(dest="command", required=True)
    names = {f.name: f for f in dataclasses.fields(ExperimentConfig)}

    def add_overrides(sp):
        sp.add_argument("--L", dest="L_list", type=int, nargs="+", default=None)
        for name, f in names.items():
            if name == "L_list":
                continue
            typ = {int: int, float: float, str: str}.get(f.type if isinstance(f.type, type) else type(f.default), str)
            sp.add_argument(f"--{name.replace('_', '-')}", dest=name, type=typ, default=None)

    for name in ("simulate", "effective", "diagrams", "compare"):
        sp = sub.add_parser(name)
        add_overrides(sp)
        if name == "compare":
            sp.add_argument("--figures", action="store_true", help="render report figures")
        if name == "diagrams":
            sp.add_argument("--nmax", type=int, default=2)
    sp = sub.add_parser("selftest")
    sp.add_argument("--level", choices=("quick", "full"), default="quick")
    add_overrides(sp)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
    except (ConfigError, TypeError, ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "simulate":
            return cmd_simulate(cfg, args.outdir)
        if args.command == "effective":
            return cmd_effective(cfg, args.outdir)
        if args.command == "diagrams":
            return cmd_diagrams(cfg, args.outdir, args.nmax)
        if args.command == "compare":
            code, _ = run_comparison(cfg, args.outdir, figures=args.figures)
            return code
        if args.command == "selftest":
            return cmd_selftest(cfg, args.level)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 2


if __name__ == "__main__":
    sys.exit(main())
