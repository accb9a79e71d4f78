"""Deterministic figures from the experiment driver's CSV outputs.

This package never recomputes anything: it reads the documented CSV schema
(plus the JSON sidecar written next to each file) and renders matplotlib
figures.  Rendering is pinned so identical inputs give byte-identical SVG
output: Agg backend, fixed style parameters, no timestamps, fixed hash salt.
"""

import csv
import json
import os
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__version__ = "0.1.0"

SUPPORTED_SCHEMA = 1

_STYLE = {
    "figure.figsize": (6.0, 4.5),
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "svg.hashsalt": "kgwave-plots",
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "path.simplify": False,
}

KINDS = ("overlay", "trend", "ratio", "convergence")


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class PlotJob:
    input: str
    kind: str
    output: str
    name: str = "rho0"  # observable for overlay figures
    t: float = -1.0  # time slice for overlay; -1 = last


def load_table(path):
    """Rows + sidecar of one CSV, refusing unknown schema versions."""
    sidecar_path = path + ".json"
    if not os.path.exists(sidecar_path):
        raise SchemaError(f"missing sidecar {sidecar_path}")
    with open(sidecar_path) as fh:
        sidecar = json.load(fh)
    version = sidecar.get("schema_version")
    if version != SUPPORTED_SCHEMA:
        raise SchemaError(
            f"unsupported schema_version {version!r} (supported: {SUPPORTED_SCHEMA})"
        )
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        columns = next(reader, None)
        rows = list(reader)
    if columns is None or columns != sidecar.get("columns"):
        raise SchemaError("CSV header does not match sidecar columns")
    if not rows:
        raise SchemaError(f"{path} has no data rows")
    data = {}
    for j, name in enumerate(columns):
        col = [r[j] for r in rows]
        try:
            data[name] = np.array([float(x) for x in col])
        except ValueError:
            data[name] = np.array(col)
    return data, sidecar


def _require(data, columns, path=""):
    missing = [c for c in columns if c not in data]
    if missing:
        raise SchemaError(f"missing columns {missing} in {path}")


def _new_figure():
    fig, ax = plt.subplots()
    return fig, ax


def _save(fig, output):
    if output.endswith(".svg"):
        fig.savefig(output, format="svg", metadata={"Date": None})
    else:
        fig.savefig(output)
    plt.close(fig)


def plot_overlay(data, sidecar, job):
    """MC correlation vs effective solution over k, with 3-sigma error bars,
    one curve pair per lattice size."""
    _require(data, ["L", "t", "k1", "name", "mc_re", "mc_stderr", "eff_re"], job.input)
    sel_name = data["name"] == job.name
    if not np.any(sel_name):
        raise SchemaError(f"observable {job.name!r} not present in {job.input}")
    times = np.unique(data["t"][sel_name])
    t = times[-1] if job.t < 0 else times[np.argmin(np.abs(times - job.t))]
    fig, ax = _new_figure()
    for L in np.unique(data["L"]):
        sel = sel_name & (data["L"] == L) & (np.abs(data["t"] - t) < 1e-12)
        order = np.argsort(data["k1"][sel])
        k = data["k1"][sel][order]
        ax.errorbar(k, data["mc_re"][sel][order], yerr=3 * data["mc_stderr"][sel][order],
                    fmt="o", ms=3, capsize=2, label=f"MC L={int(L)}")
        ax.plot(k, data["eff_re"][sel][order], "-", lw=1.2, label=f"effective (L={int(L)} grid)")
    ax.set_xlabel("k")
    ax.set_ylabel(f"Re {job.name}")
    ax.set_title(f"{job.name} at t={t:g}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, job.output)


def plot_trend(data, sidecar, job):
    """Error versus L on log-log axes, one line per observable."""
    _require(data, ["L", "name", "err", "stderr"], job.input)
    fig, ax = _new_figure()
    for name in sorted(set(data["name"])):
        sel = data["name"] == name
        order = np.argsort(data["L"][sel])
        ax.errorbar(data["L"][sel][order], data["err"][sel][order],
                    yerr=3 * data["stderr"][sel][order], marker="o", capsize=2, label=name)
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel("L")
    ax.set_ylabel("sup |MC - effective|")
    ax.set_title("error vs lattice size (3-sigma bars)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, job.output)


def plot_ratio(data, sidecar, job):
    """Drift of the conserved ratio |rhox|/sqrt(rho0 rho1) over time."""
    _require(data, ["t", "k1", "ratio"], job.input)
    finite = np.isfinite(data["ratio"])
    if not np.any(finite):
        raise SchemaError("ratio column has no finite entries")
    times = np.unique(data["t"])
    fig, ax = _new_figure()
    base = None
    for t in times:
        sel = (data["t"] == t) & finite
        if base is None:
            base = (data["k1"][sel].copy(), data["ratio"][sel].copy())
        k0, r0 = base
        drift = np.abs(data["ratio"][sel] - r0)
        ax.plot(k0, np.maximum(drift, 1e-18), lw=1.0, label=f"t={t:g}")
    ax.set_yscale("log")
    ax.set_xlabel("k")
    ax.set_ylabel("|ratio(t) - ratio(0)|")
    ax.set_title("conserved-ratio drift")
    ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, job.output)


def plot_convergence(data, sidecar, job):
    """Expansion-coefficient norms from the effective sidecar (semi-log)."""
    norms = sidecar.get("picard_norms")
    if not norms:
        raise SchemaError("sidecar has no picard_norms entry")
    fig, ax = _new_figure()
    n = np.arange(len(norms))
    ax.semilogy(n, np.maximum(np.asarray(norms, dtype=float), 1e-300), "o-")
    ax.set_xlabel("order n")
    ax.set_ylabel("coefficient norm")
    ax.set_title("expansion convergence")
    fig.tight_layout()
    _save(fig, job.output)


_RENDERERS = {
    "overlay": plot_overlay,
    "trend": plot_trend,
    "ratio": plot_ratio,
    "convergence": plot_convergence,
}


def render(job: PlotJob) -> str:
    """Render one figure; returns the output path."""
    if job.kind not in _RENDERERS:
        raise SchemaError(f"unknown figure kind {job.kind!r} (choices: {KINDS})")
    with plt.rc_context(_STYLE):
        data, sidecar = load_table(job.input)
        _RENDERERS[job.kind](data, sidecar, job)
    return job.output
