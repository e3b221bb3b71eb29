"""``sffdl`` command-line front end.

Each subcommand reads a TOML config (the ``[<subcommand>]`` table plus
optional top-level ``seed``, ``scale``, ``workers`` and ``out``), fills in the
scale preset, lets command-line flags win, runs the computation and writes
CSV data with JSON sidecars, a ``manifest.json`` and a matplotlib plot script.

Exit codes: 0 success, 2 config error, 3 resource guard, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .curves import Curve, _jsonable, log_times

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

log = logging.getLogger("sffdl")

EXIT_OK, EXIT_CONFIG, EXIT_RESOURCE, EXIT_NUMERIC = 0, 2, 3, 4
SCALES = ("smoke", "desk", "paper")
# runs beyond this many Gillespie events need --scale paper
EVENT_BUDGET = 2e11
MEMORY_BUDGET = 4 * 2**30


class ConfigError(Exception):
    pass


class ResourceGuard(Exception):
    pass


PRESETS = {
    "twosite": {
        "smoke": {"N": 32, "lambdas": [0.1, 0.05], "realizations": 25, "corr_points": 41},
        "desk": {"N": 48, "lambdas": [0.1, 0.05], "realizations": 200, "corr_points": 51},
        "paper": {"N": 130, "lambdas": [0.1, 0.05], "realizations": 1000, "corr_points": 101},
    },
    "collapse": {
        "smoke": {"L": 48, "trajectories": 10**6, "t_max": 30.0, "fit_window": [10.0, 30.0]},
        "desk": {"L": 48, "trajectories": 10**7, "t_max": 40.0, "fit_window": [10.0, 40.0]},
        "paper": {"L": 128, "trajectories": 10**10, "t_max": 500.0, "fit_window": [50.0, 500.0]},
    },
    "wt": {
        "smoke": {"L": 48, "trajectories": 10**5, "t_max": 20.0, "late_window": [4.0, 20.0]},
        "desk": {"L": 48, "trajectories": 10**6, "t_max": 30.0, "late_window": [6.0, 30.0]},
        "paper": {"L": 128, "trajectories": 10**10, "t_max": 60.0, "late_window": [10.0, 60.0]},
    },
    "spinchain": {
        "smoke": {"Ls": [6, 8], "realizations": 50},
        "desk": {"Ls": [8, 10, 12], "realizations": 500},
        "paper": {"Ls": [8, 10, 12, 14], "realizations": 5000},
    },
    "dconst": {
        "smoke": {"L": 64, "trajectories": 2 * 10**4, "t_max": 20.0},
        "desk": {"L": 64, "trajectories": 10**6, "t_max": 40.0},
        "paper": {"L": 128, "trajectories": 10**8, "t_max": 100.0},
    },
    "sffmodel": {
        s: {"Ls": [8, 16, 32, 64, 128, 256, 512, 1024], "lam": 0.1, "w_source": "closed", "A": 30.3, "b": 3.69}
        for s in SCALES
    },
}

# keys each subcommand accepts beyond its preset keys
EXTRA_KEYS = {
    "twosite": {"t_min", "t_max", "points_per_decade", "corr_tau_max", "max_dim"},
    "collapse": {"boundary", "obs_step", "x_max", "model"},
    "wt": {"boundary", "early_t_max", "bulk_fraction", "alpha_t_min"},
    "spinchain": {"h_range", "J_range", "t_min", "t_max", "points_per_decade"},
    "dconst": {"boundary", "obs_step"},
    "sffmodel": {"w_path", "t_min", "t_max", "points_per_decade", "late_window"},
}


# --- config --------------------------------------------------------------------


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}")


def resolve(command: str, raw: dict, args) -> dict:
    """Merge preset <- config <- flags into one flat dict."""
    top = {k: v for k, v in raw.items() if not isinstance(v, dict)}
    unknown_top = set(top) - {"seed", "scale", "workers", "out"}
    if unknown_top:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown_top)}")
    section = raw.get(command, {})
    if not isinstance(section, dict):
        raise ConfigError(f"[{command}] must be a table")
    scale = args.scale or top.get("scale", "smoke")
    if scale not in SCALES:
        raise ConfigError(f"scale must be one of {SCALES}, got {scale!r}")
    preset = PRESETS[command][scale]
    allowed = set(preset) | EXTRA_KEYS[command]
    bad = set(section) - allowed
    if bad:
        raise ConfigError(f"unknown keys in [{command}]: {sorted(bad)}")
    cfg = {**preset, **section}
    cfg["scale"] = scale
    cfg["scale_explicit"] = args.scale == "paper" or top.get("scale") == "paper"
    cfg["seed"] = int(args.seed if args.seed is not None else top.get("seed", 0))
    cfg["workers"] = int(args.workers if args.workers is not None else top.get("workers", 1))
    if cfg["workers"] < 1:
        raise ConfigError("workers must be >= 1")
    out = os.environ.get("SFFDL_OUT") or args.out or top.get("out") or "sffdl_out"
    cfg["out"] = str(Path(out) / command)
    return cfg


def _need(cfg, key, kind, positive=True):
    try:
        val = kind(cfg[key])
    except (KeyError, TypeError, ValueError):
        raise ConfigError(f"{key} must be a {kind.__name__}")
    if positive and not val > 0:
        raise ConfigError(f"{key} must be positive")
    return val


def _guard_events(cfg, L, n, t_max):
    events = 1.214 * (L - 1) * t_max * n
    if events > EVENT_BUDGET and cfg["scale"] != "paper":
        raise ResourceGuard(
            f"~{events:.2g} Gillespie events exceeds the {EVENT_BUDGET:.0e} budget; rerun with --scale paper"
        )
    return events


# --- output helpers ------------------------------------------------------------------


class Output:
    def __init__(self, directory: str):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def curve(self, name: str, curve: Curve, value_name: str = "value"):
        csv_path, json_path = curve.write(self.dir / name, value_name)
        self.files += [csv_path.name, json_path.name]

    def table(self, name: str, columns: dict, meta: dict | None = None):
        """Plain columnar CSV with the schema header."""
        path = self.dir / f"{name}.csv"
        keys = list(columns)
        cols = [np.asarray(columns[k]).ravel() for k in keys]
        with path.open("w") as fh:
            fh.write("# schema=1\n")
            fh.write(",".join(keys) + "\n")
            for row in zip(*cols):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        self.files.append(path.name)
        if meta is not None:
            self.json(name, meta)

    def json(self, name: str, obj):
        path = self.dir / f"{name}.json"
        path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True))
        self.files.append(path.name)

    def script(self, name: str, body: str):
        path = self.dir / name
        path.write_text(_PLOT_HEADER + body)
        self.files.append(path.name)

    def manifest(self, command: str, cfg: dict, summary: dict, wall: float):
        self.json(
            "manifest",
            {
                "command": command,
                "version": __version__,
                "config": cfg,
                "summary": summary,
                "files": sorted(set(self.files)),
                "wall_time_s": round(wall, 3),
                "python": platform.python_version(),
                "numpy": np.__version__,
            },
        )


_PLOT_HEADER = '''"""Generated plot script; run it from this directory."""
import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt


def load(name):
    return np.genfromtxt(name, delimiter=",", names=True, comments="#")


'''


def _progress(label):
    last = [0.0]

    def report(done, total):
        now = time.monotonic()
        if now - last[0] > 10 or done == total:
            log.info("%s: %d/%d", label, done, total)
            last[0] = now

    return report


# --- subcommands ------------------------------------------------------------------------


def cmd_twosite(cfg: dict, out: Output) -> dict:
    from . import exact_diag as ed
    from . import twosite_analytic as ta

    N = _need(cfg, "N", int)
    n_real = _need(cfg, "realizations", int)
    lambdas = [float(x) for x in cfg["lambdas"]]
    dim = N * N
    if 6 * dim * dim * 16 > MEMORY_BUDGET:
        raise ResourceGuard(f"N={N} needs ~{6 * dim * dim * 16 / 2**30:.1f} GiB for dense ED")
    t_sff = log_times(cfg.get("t_min", 0.1), cfg.get("t_max", 10.0 * dim), cfg.get("points_per_decade", 60))
    summary = {}
    script = ["fig, ax = plt.subplots(2, 3, figsize=(13, 7))\n"]
    for j, lam in enumerate(lambdas):
        tag = f"lam{lam:g}"
        spec = ed.ChainSpec(2, N, lam, max_dim=cfg.get("max_dim", ed.DEFAULT_MAX_DIM))
        params = ta.TwoSiteParams(N, lam)
        t_corr = np.linspace(0.0, cfg.get("corr_tau_max", 5.0) / lam**2, int(cfg["corr_points"]))
        C, K = ed.run_chain_correlator(
            spec, t_corr, n_real, cfg["seed"], cfg["workers"], sff_times=t_sff, progress=_progress(f"ED {tag}")
        )
        out.curve(f"sff_ed_{tag}", K, "K")
        for kind, cv in ta.k_two_site_curve(t_sff, params).items():
            out.curve(f"sff_{kind}_{tag}", cv, "K")
        c11 = 0.5 * (C.values[:, 0, 0] + C.values[:, 1, 1])
        c12 = 0.5 * (C.values[:, 0, 1] + C.values[:, 1, 0])
        e11 = 0.5 * np.hypot(C.stderr[:, 0, 0], C.stderr[:, 1, 1])
        e12 = 0.5 * np.hypot(C.stderr[:, 0, 1], C.stderr[:, 1, 0])
        pred = ta.c11_pred(t_corr, lam)
        out.table(
            f"corr_{tag}",
            {"tau": lam**2 * t_corr, "C11": c11, "C11_stderr": e11, "C12": c12, "C12_stderr": e12,
             "C11_pred": pred, "C12_pred": 1 - pred},
            {"N": N, "lambda": lam, "n_realizations": C.n_realizations},
        )
        rows = np.asarray(C.metadata["row_sum"])
        rows_err = np.asarray(C.metadata["row_sum_stderr"])
        # ramp window: past the exchange time, well before the plateau
        ramp = (t_sff >= 2.0 / lam**2) & (t_sff <= 0.5 * dim)
        ratio = float("nan")
        if ramp.sum() >= 4:
            late = ta.k1_contribution(t_sff[ramp], params) + ta.k2_contribution(t_sff[ramp], lam)
            ratio = float(np.polyfit(t_sff[ramp], K.values[ramp], 1)[0] / np.polyfit(t_sff[ramp], late, 1)[0])
        summary[tag] = {
            "corr_max_abs_dev": float(np.max(np.abs(c11 - pred))),
            "row_sum_max_dev": float(np.max(np.abs(rows - 1))),
            "row_sum_max_z": float(np.max(np.abs(rows - 1) / np.maximum(rows_err, 1e-300))),
            "ramp_slope_ratio_ed_over_analytic": ratio,
        }
        script.append(
            f'''k = load("sff_ed_{tag}.csv")
for a in (ax[0, {j}], ax[1, {j}]):
    a.loglog(k["t"], k["K"], ".", ms=2, label="ED")
for kind, style in (("early", "--"), ("late", "-"), ("crossover", ":")):
    c = load(f"sff_{{kind}}_{tag}.csv")
    ax[0, {j}].loglog(c["t"], c["K"], style, label=kind)
    ax[1, {j}].loglog(c["t"], c["K"], style)
ax[0, {j}].set_title("lambda={lam:g}")
ax[0, {j}].legend()
c = load("corr_{tag}.csv")
ax[{j}, 2].errorbar(c["tau"], c["C11"], c["C11_stderr"], fmt=".", label="C11")
ax[{j}, 2].errorbar(c["tau"], c["C12"], c["C12_stderr"], fmt=".", label="C12")
ax[{j}, 2].plot(c["tau"], c["C11_pred"], "k-")
ax[{j}, 2].plot(c["tau"], c["C12_pred"], "k-")
ax[{j}, 2].set_xlabel("lambda^2 t")
'''
        )
    script.append('fig.tight_layout()\nfig.savefig("twosite.png", dpi=150)\n')
    out.script("plot_twosite.py", "".join(script))
    return summary


def _sim_spec(cfg, obs, boundary, **kw):
    from .master_sim import SimSpec

    return SimSpec(
        L=_need(cfg, "L", int),
        boundary=boundary,
        t_max=_need(cfg, "t_max", float),
        obs_times=tuple(obs),
        n_trajectories=_need(cfg, "trajectories", int),
        master_seed=cfg["seed"],
        **kw,
    )


def cmd_collapse(cfg: dict, out: Output) -> dict:
    from . import master_sim as ms

    t_max = _need(cfg, "t_max", float)
    step = float(cfg.get("obs_step", 1.0 if t_max <= 100 else 5.0))
    obs = np.arange(step, t_max + 0.5 * step, step)
    spec = _sim_spec(cfg, obs, cfg.get("boundary", "open"), w_bonds="none")
    _guard_events(cfg, spec.L, spec.n_trajectories, t_max)
    res = ms.run_ensemble(spec, workers=cfg["workers"], chunk=20000, progress=_progress("collapse"))
    C = ms.autocorrelator(res)
    out.curve("autocorrelator", C, "C")
    lo, hi = cfg["fit_window"]
    x_max = int(cfg.get("x_max", spec.L // 4))
    fit = ms.collapse_check(C, lo, hi, x_max=x_max, model=cfg.get("model", "lattice"))
    sel = C.window(lo, hi)
    x = sel.index_values[0]
    T, X = np.meshgrid(sel.times, x, indexing="ij")
    out.table(
        "collapse",
        {"t": T, "x": X, "x_over_sqrt_t": X / np.sqrt(T), "sqrt_t_C": np.sqrt(T) * sel.values,
         "sqrt_t_C_stderr": np.sqrt(T) * sel.stderr},
        {"D": fit.D, "D_stderr": fit.D_stderr, "model": fit.model},
    )
    out.script(
        "plot_collapse.py",
        f'''c = load("collapse.csv")
D = {fit.D!r}
fig, ax = plt.subplots(1, 2, figsize=(10, 4))
for t in np.unique(c["t"]):
    m = c["t"] == t
    ax[0].plot(c["x"][m], c["sqrt_t_C"][m] / np.sqrt(t), ".-", ms=2)
    ax[1].plot(c["x_over_sqrt_t"][m], c["sqrt_t_C"][m], ".", ms=2)
u = np.linspace(c["x_over_sqrt_t"].min(), c["x_over_sqrt_t"].max(), 400)
ax[1].plot(u, np.exp(-u**2 / (4 * D)) / np.sqrt(4 * np.pi * D), "k-", label=f"D={{D:.4f}}")
ax[0].set_xlabel("x"); ax[0].set_ylabel("C(x,t)")
ax[1].set_xlabel("x / sqrt(t)"); ax[1].set_ylabel("sqrt(t) C"); ax[1].legend()
fig.tight_layout(); fig.savefig("collapse.png", dpi=150)
''',
    )
    return {
        "D": fit.D,
        "D_stderr": fit.D_stderr,
        "max_residual": fit.max_residual,
        "model": fit.model,
        "events": res.events,
        "max_drift": res.max_drift,
    }


def cmd_wt(cfg: dict, out: Output) -> dict:
    from . import master_sim as ms

    t_max = _need(cfg, "t_max", float)
    early_max = float(cfg.get("early_t_max", 0.2))
    obs = np.unique(np.r_[np.linspace(early_max / 40, early_max, 40), np.geomspace(1.25 * early_max, t_max, 120)])
    spec = _sim_spec(cfg, obs, cfg.get("boundary", "open"), w_bonds="all")
    _guard_events(cfg, spec.L, spec.n_trajectories, t_max)
    res = ms.run_ensemble(spec, workers=cfg["workers"], chunk=20000, progress=_progress("wt"))
    frac = float(cfg.get("bulk_fraction", 0.5))
    n_b = spec.n_bonds
    lo_b = int(round(n_b * (1 - frac) / 2))
    bulk = np.arange(lo_b, n_b - lo_b)
    w_all = ms.w_curve(res)
    w_bulk = ms.w_curve(res, bonds=bulk)
    out.curve("w_all_bonds", w_all, "w")
    out.curve("w_bulk", w_bulk, "w")
    rate, rate_err = ms.early_rate(w_all, early_max)
    fit = ms.fit_w_late(w_bulk, tuple(cfg["late_window"]), min_count=100, alpha_step=0.15)
    out.curve("alpha", fit.alpha, "alpha")
    late = fit.alpha.times >= float(cfg.get("alpha_t_min", 10.0))
    summary = {
        "early_rate": rate,
        "early_rate_stderr": rate_err,
        "A": fit.A,
        "b": fit.b,
        "late_fit_points": fit.n_points,
        "alpha_late_median": float(np.median(fit.alpha.values[late])) if late.any() else float("nan"),
        "alpha_late_range": [float(fit.alpha.values[late].min()), float(fit.alpha.values[late].max())] if late.any() else [],
    }
    out.json("fits", summary)
    out.script(
        "plot_wt.py",
        f'''w = load("w_bulk.csv"); wa = load("w_all_bonds.csv"); al = load("alpha.csv")
A, b, g = {fit.A!r}, {fit.b!r}, {rate!r}
fig, ax = plt.subplots(1, 3, figsize=(13, 4))
ax[0].semilogy(w["t"], w["w"], ".", ms=3)
t = np.linspace(0, w["t"].max(), 400)
ax[0].semilogy(t, A * np.exp(-b * np.sqrt(t)), "r-", label="A exp(-b sqrt(t))")
ax[0].set_xlabel("lambda^2 t"); ax[0].set_ylabel("w"); ax[0].legend()
m = wa["t"] <= {early_max!r}
ax[1].plot(wa["t"][m], -np.log(wa["w"][m]), ".")
ax[1].plot(wa["t"][m], g * wa["t"][m], "r-")
ax[1].set_xlabel("lambda^2 t"); ax[1].set_ylabel("-ln w")
ax[2].semilogx(al["t"], al["alpha"], "-"); ax[2].axhline(0.5, ls="--", c="k")
ax[2].set_xlabel("lambda^2 t"); ax[2].set_ylabel("alpha")
fig.tight_layout(); fig.savefig("wt.png", dpi=150)
''',
    )
    return summary


def cmd_spinchain(cfg: dict, out: Output) -> dict:
    from . import exact_diag as ed

    n_real = _need(cfg, "realizations", int)
    Ls = [int(x) for x in cfg["Ls"]]
    summary = {}
    names = []
    for L in Ls:
        t = np.r_[0.0, log_times(cfg.get("t_min", 0.01), cfg.get("t_max", 10.0 * 2**L), cfg.get("points_per_decade", 50))]
        curves = {}
        for bc in ("open", "periodic"):
            spec = ed.SpinChainSpec(L, bc, tuple(cfg.get("h_range", (-2, 2))), tuple(cfg.get("J_range", (-0.8, 1.2))))
            curves[bc] = ed.run_spin_sff(spec, t, n_real, cfg["seed"], cfg["workers"])
            out.curve(f"sff_L{L}_{bc}", curves[bc], "K")
            names.append(f"sff_L{L}_{bc}.csv")
        ratio = curves["open"].values / curves["periodic"].values
        window = (t > 1.0) & (t < 2.0**L / L)
        k0 = curves["open"].values[0]
        late = t > 20 * 2**L / L
        plateau = curves["open"].values[late]
        # conservative: the per-time error bar, with no credit for averaging over times
        plateau_err = curves["open"].stderr[late].mean() if plateau.size else float("nan")
        summary[f"L{L}"] = {
            "K0_over_4L": float(k0 / 4.0**L),
            "max_ratio_obc_pbc": float(ratio[window].max()),
            "plateau_over_dim": float(plateau.mean() / 2**L) if plateau.size else float("nan"),
            "plateau_over_dim_stderr": float(plateau_err / 2**L),
        }
    out.script(
        "plot_spinchain.py",
        f'''fig, ax = plt.subplots(1, 2, figsize=(11, 4))
for L in {Ls!r}:
    o = load(f"sff_L{{L}}_open.csv"); p = load(f"sff_L{{L}}_periodic.csv")
    for a in ax:
        line, = a.loglog(o["t"][1:], o["K"][1:] / 2**L, "-", label=f"L={{L}} OBC")
        a.loglog(p["t"][1:], p["K"][1:] / 2**L, "--", c=line.get_color())
ax[0].set_xlim(0.5, 50); ax[0].set_ylim(1e-2, 1e3)
ax[1].set_xlabel("t"); ax[0].set_xlabel("t"); ax[0].set_ylabel("K / 2^L"); ax[1].legend()
fig.tight_layout(); fig.savefig("spinchain.png", dpi=150)
''',
    )
    return summary


def cmd_dconst(cfg: dict, out: Output) -> dict:
    from . import diffusion_theory as dt
    from . import master_sim as ms

    t_max = _need(cfg, "t_max", float)
    step = float(cfg.get("obs_step", 0.5 if t_max <= 50 else 1.0))
    obs = np.arange(step, t_max + 0.5 * step, step)
    boundary = cfg.get("boundary", "periodic")
    L = _need(cfg, "L", int)
    # translation average over every origin on the ring
    origins = tuple(range(L)) if boundary == "periodic" else None
    spec = _sim_spec(cfg, obs, boundary, w_bonds="none", origins=origins)
    _guard_events(cfg, L, spec.n_trajectories, t_max)
    res = ms.run_ensemble(spec, workers=cfg["workers"], chunk=5000, progress=_progress("dconst"))
    D = ms.d_of_t(res)
    out.curve("d_of_t", D, "D")
    d_gr = dt.d_golden_rule().D_over_lambda2
    d_mm = dt.d_moment_matrix().D_over_lambda2
    refs = {"golden_rule": d_gr, "moment_matrix": d_mm}
    out.json("references", refs)
    late = D.times >= 0.5 * t_max
    w = 1 / D.stderr[late] ** 2
    plateau = float(np.sum(w * D.values[late]) / np.sum(w))
    plateau_err = float(1 / np.sqrt(np.sum(w)))
    out.script(
        "plot_dconst.py",
        f'''d = load("d_of_t.csv")
fig, ax = plt.subplots(figsize=(6, 4))
ax.errorbar(d["t"], d["D"], d["D_stderr"], fmt=".", ms=3)
ax.axhline({d_gr!r}, c="r", label="golden rule")
ax.axhline({d_mm!r}, c="g", label="four-moment")
ax.set_xlabel("lambda^2 t"); ax.set_ylabel("D(t)"); ax.set_ylim(0.6, 0.8); ax.legend()
fig.tight_layout(); fig.savefig("dconst.png", dpi=150)
''',
    )
    return {**refs, "late_plateau": plateau, "late_plateau_stderr": plateau_err}


def cmd_sffmodel(cfg: dict, out: Output) -> dict:
    from . import diffusion_theory as dt

    lam = _need(cfg, "lam", float)
    Ls = [int(x) for x in cfg["Ls"]]
    source = cfg.get("w_source", "closed")
    if source == "closed":
        A, b = _need(cfg, "A", float), _need(cfg, "b", float)
    elif source == "measured":
        from .master_sim import fit_w_late

        if "w_path" not in cfg:
            raise ConfigError("w_source = 'measured' needs w_path (a w CSV written by 'sffdl wt')")
        w = Curve.from_csv(cfg["w_path"])
        sidecar = Path(str(cfg["w_path"])[: -len(".csv")] + ".json") if str(cfg["w_path"]).endswith(".csv") else None
        if sidecar is not None and sidecar.exists():
            w.metadata = json.loads(sidecar.read_text())
            w.n_realizations = int(w.metadata.get("n_realizations", 1))
        fit = fit_w_late(w, tuple(cfg.get("late_window", (8.0, np.inf))))
        A, b = fit.A, fit.b
    else:
        raise ConfigError("w_source must be 'closed' or 'measured'")
    t = log_times(cfg.get("t_min", 1e-2), cfg.get("t_max", 1e6), cfg.get("points_per_decade", 50))
    slopes = {}
    for L in Ls:
        lnK = dt.sff_model_kw(t, L, lambda tau: dt.w_stretched(tau, A, b), lam, "match_late_ramp", log_values=True)
        out.curve(f"kw_L{L}", lnK, "lnK")
        lk, lt = lnK.values, np.log(t)
        early = t < 0.01 / (A * lam**2)
        slopes[L] = {
            "early": float(np.polyfit(lt[early], lk[early], 1)[0]) if early.sum() > 2 else float("nan"),
            "late": float(np.polyfit(lt[-20:], lk[-20:], 1)[0]),
        }
    fit = dt.fit_crossover_scaling(A, b, lam, Ls)
    out.table("crossover", {"L": fit.Ls, "t_star": fit.t_star, "fit": fit.a + fit.c * np.log(fit.Ls) ** 2},
              {"a": fit.a, "c": fit.c, "rms_rel_residual": fit.rms_rel_residual,
               "max_rel_residual": fit.max_rel_residual, "A": A, "b": b, "lambda": lam})
    out.script(
        "plot_sffmodel.py",
        f'''fig, ax = plt.subplots(1, 2, figsize=(11, 4))
for L in {Ls!r}:
    k = load(f"kw_L{{L}}.csv")
    ax[0].plot(np.log(k["t"]), k["lnK"], label=f"L={{L}}")
ax[0].set_xlabel("ln t"); ax[0].set_ylabel("ln K"); ax[0].legend(fontsize=7)
c = load("crossover.csv")
ax[1].plot(np.log(c["L"]) ** 2, c["t_star"], "o"); ax[1].plot(np.log(c["L"]) ** 2, c["fit"], "-")
ax[1].set_xlabel("(ln L)^2"); ax[1].set_ylabel("t*")
fig.tight_layout(); fig.savefig("sffmodel.png", dpi=150)
''',
    )
    return {"A": A, "b": b, "slopes": slopes, "a": fit.a, "c": fit.c,
            "rms_rel_residual": fit.rms_rel_residual, "max_rel_residual": fit.max_rel_residual}


COMMANDS = {
    "twosite": cmd_twosite,
    "collapse": cmd_collapse,
    "wt": cmd_wt,
    "spinchain": cmd_spinchain,
    "dconst": cmd_dconst,
    "sffmodel": cmd_sffmodel,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sffdl", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"sffdl {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="TOML config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--scale", choices=SCALES)
        sp.add_argument("--out", help="output root (SFFDL_OUT overrides)")
        sp.add_argument("--workers", type=int)
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    from .exact_diag import DimensionError

    try:
        cfg = resolve(args.command, load_config(args.config), args)
        out = Output(cfg["out"])
        start = time.time()
        summary = COMMANDS[args.command](cfg, out)
        out.manifest(args.command, cfg, summary, time.time() - start)
    except ConfigError as exc:
        print(f"sffdl: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ResourceGuard, DimensionError, MemoryError) as exc:
        print(f"sffdl: resource guard: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (FloatingPointError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"sffdl: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (KeyError, TypeError, ValueError) as exc:
        print(f"sffdl: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(_jsonable(summary), indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
