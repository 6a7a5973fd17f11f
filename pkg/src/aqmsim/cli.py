"""Batch front-end: JSON scenarios, named experiments, CSV output.

A scenario file looks like::

    {"experiment": "fig1c",
     "seed": 0,
     "params": {"i2": 1.0, "chain": {"spacing": 6e-6}},
     "sweep": [{"path": "i_x", "logspace": [1e-6, 1e-2, 41]}]}

``params`` overrides the experiment defaults (see ``aqmsim list``); every
sweep axis names a dotted parameter path and a grid (``values``,
``linspace`` or ``logspace``).  Several axes form a Cartesian product with
the last axis varying fastest.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import itertools
import json
import math
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import analysis

PI = math.pi


class ScenarioError(ValueError):
    def __init__(self, diagnostics):
        self.diagnostics = diagnostics
        super().__init__("; ".join(f"{d['path']}: {d['message']}" for d in diagnostics))


# -- experiments -----------------------------------------------------------------


def _fig1c(p, rng):
    from .crosstalk import (ChainGeometry, _reset_tau_op, aqm_estimate, p_aqm_star_band,
                            reset_probe)
    from .lindblad import ProbeBeam
    chain = ChainGeometry(p["chain"]["spacing"], p["chain"]["b_field_angle"])
    det_probe = ProbeBeam(1.0, pi_fraction=p["detection"]["pi_fraction"])
    rp = p["reset"]
    det = aqm_estimate(p["i_x"], "detection", chain, p["i2"], p["detection"]["tau"], det_probe)
    tau_r = _reset_tau_op(p["i2"], rp["pi_fraction"], rp["d1_11_fraction"])
    res = aqm_estimate(p["i_x"], "reset", chain, p["i2"], tau_r,
                       reset_probe(1.0, rp["pi_fraction"], rp["d1_11_fraction"]))
    lo, hi = p_aqm_star_band(chain.spacing, p["detection"]["tau"], tau_r)
    return [{"I_X": p["i_x"], "P_AQM_reset": res.p_aqm, "P_AQM_detect_11us": det.p_aqm,
             "P_star_band_lo": lo, "P_star_band_hi": hi}]


def _fig2b(p, rng):
    from .crosstalk import detection_probe
    from .protocols import RamseyConfig, simulate_ramsey
    probe = detection_probe(p["i2"] * p["i_x"], p["pi_fraction"])
    seed = int(rng.integers(2**63)) if p["shot_noise"] else None
    r = simulate_ramsey(RamseyConfig(probe=probe, shot_noise=p["shot_noise"], seed=seed,
                                     repetitions=p["repetitions"]))
    c0 = r.contrast[0]
    return [{"I_X": p["i_x"], "wait_s": T, "p_up": pu, "contrast_norm": c / c0, "T2_s": r.T2}
            for T, pu, c in zip(r.waits, r.p_up, r.contrast)]


def _fig3b(p, rng):
    from .crosstalk import reset_asset_fidelity
    F, tau = reset_asset_fidelity(p["pi_fraction"], p["d1_11_fraction"], p["i2"], p["i_x"])
    return [{"pi_fraction": p["pi_fraction"], "d1_11_fraction": p["d1_11_fraction"],
             "tau_op_s": tau, "F_12": F}]


def _distance_rows(p, probe, tau):
    from .crosstalk import BeamGeometry, aqm_rate, gaussian_crosstalk, p_aqm_from_gamma, \
        psf_crosstalk
    w = p["waist"]
    d = p["d_over_w"] * w
    ix_g = float(gaussian_crosstalk(d, w))
    ix_p = psf_crosstalk(BeamGeometry(w, d, p["na"])) if d > 0 else 1.0

    def F(ix):
        return 1 - p_aqm_from_gamma(aqm_rate(probe.scaled(ix * p["i2"] / probe.intensity_sat)), tau)
    return [{"d_over_w": p["d_over_w"], "I_X_gaussian": ix_g, "I_X_psf": ix_p,
             "F_12_gaussian": F(ix_g), "F_12_psf": F(ix_p)}]


def _fig3c(p, rng):
    from .crosstalk import _reset_tau_op, reset_probe
    probe = reset_probe(1.0, p["pi_fraction"], p["d1_11_fraction"])
    return _distance_rows(p, probe, _reset_tau_op(p["i2"], p["pi_fraction"], p["d1_11_fraction"]))


def _fig4a(p, rng):
    from .crosstalk import aqm_rate, detection_probe, p_aqm_from_gamma
    g = aqm_rate(detection_probe(p["i2"] * p["i_x"], p["pi_fraction"]))
    return [{"pi_fraction": p["pi_fraction"], "gamma_per_s": g,
             "F_12": 1 - p_aqm_from_gamma(g, p["tau"])}]


def _fig4b(p, rng):
    from .crosstalk import detection_probe
    return _distance_rows(p, detection_probe(1.0, p["pi_fraction"]), p["tau"])


def _detection_model(p):
    from .detection import DetectionModel
    return DetectionModel.from_simulation(p["i2"], p["pi_fraction"], efficiency=p["efficiency"])


def _fig4d(p, rng):
    from .crosstalk import aqm_rate, detection_probe, fidelity_from_T2
    from .detection import avg_detection_fidelity, first_photon_halving
    m = _detection_model(p)
    g = aqm_rate(detection_probe(p["i2"] * p["i_x"], p["pi_fraction"]))
    t = p["tau_d"]
    fd = avg_detection_fidelity(m, t)
    fa = fidelity_from_T2(first_photon_halving(t, p["halving"]), 2 / g) if g > 0 else 1.0
    return [{"tau_d": t, "detection_fidelity": fd, "F_12": fa, "product": fd * fa}]


def _fig4e(p, rng):
    from .crosstalk import detection_probe
    from .detection import optimal_detection_time
    m = _detection_model(p)
    opt = optimal_detection_time(m, p["i_x"], detection_probe(1.0, p["pi_fraction"]), p["i2"],
                                 p["halving"])
    return [{"efficiency": p["efficiency"], "optimal_tau_d": opt.tau}]


def _figS4(p, rng):
    from .crosstalk import _reset_tau_op, bloch_angle_scan, detection_probe, reset_probe
    th = p["theta"]
    det = bloch_angle_scan([th], detection_probe(p["i_x"], 1 / 3), p["tau_detection"],
                           p["model"])[0]
    tau_r = _reset_tau_op(1.25, 0.86, 1.0)
    res = bloch_angle_scan([th], reset_probe(p["i_x"]), tau_r, p["model"])[0]
    return [{"theta": th, "infidelity_detection": 1 - det, "infidelity_reset": 1 - res}]


def _hologram(p, rng):
    from . import holography as H
    pupil = H.PupilField.gaussian(p["n"], p["illumination_radius"], na=p["na"])
    w = p["waist"]
    c = (p["center"], 0.0)
    T = H.TargetField.gaussian(pupil, w, c)
    r = H.ifta_generate(T, pupil, p["iterations"], return_details=True)
    img = H.first_order(r.hologram, pupil)
    d = p["neighbor_over_w"] * w
    xt = max(H.crosstalk_at(img, pupil, c, (s * d, 0.0)) for s in (-1, 1))
    plain = H.binarize(r.modulation, r.hologram.carrier, 1.0)
    gain = H.first_order_power(r.hologram, pupil) / H.first_order_power(plain, pupil)
    return [{"iterations": p["iterations"], "window_error": r.errors[-1],
             "crosstalk_neighbor": xt, "gain_4_over_pi": gain}]


def _phase_sense(p, rng):
    from . import holography as H
    pupil = H.PupilField.gaussian(p["n"])
    a = H.patch_mask(pupil, (-p["patch_separation"] / 2, 0.0), p["patch_radius"])
    b = H.patch_mask(pupil, (p["patch_separation"] / 2, 0.0), p["patch_radius"])
    phase = np.where(b, p["injected"], 0.0)
    got = H.simulate_phase_sensing(pupil.with_phase(phase), a, b,
                                   exposure=p["exposure"])
    err = (got - p["injected"] + PI) % (2 * PI) - PI
    return [{"injected": p["injected"], "recovered": got, "error": err}]


def _detection_mc(p, rng):
    from .detection import DetectionModel, monte_carlo_no_photon, p_no_photon_bright, \
        p_no_photon_dark
    # random rates in the regime where the single-jump closed forms hold
    eps_ro = rng.uniform(2e5, 2e6)
    m = DetectionModel(R_o=eps_ro / p["efficiency"], R_b=rng.uniform(0, 300),
                       R_d=rng.uniform(0, 300), R_bg=rng.uniform(0, 2e3),
                       efficiency=p["efficiency"])
    t = rng.uniform(1e-6, 30e-6)
    seeds = rng.integers(2**62, size=2)
    pb, sb = monte_carlo_no_photon(m, t, True, p["n_trials"], int(seeds[0]))
    pd, sd = monte_carlo_no_photon(m, t, False, p["n_trials"], int(seeds[1]))
    return [{"trial": p["trial"], "eps_R_o": eps_ro, "R_b": m.R_b, "R_d": m.R_d, "R_bg": m.R_bg,
             "t": t, "p_bright": p_no_photon_bright(m, t), "p_bright_mc": pb, "sigma_bright": sb,
             "p_dark": p_no_photon_dark(m, t), "p_dark_mc": pd, "sigma_dark": sd}]


@dataclass
class Experiment:
    name: str
    description: str
    run: object
    defaults: dict
    sweep: list
    columns: list = field(default_factory=list)


_DET = {"i2": 1.0, "pi_fraction": 1 / 3, "efficiency": 0.04, "i_x": 5e-5, "halving": True}

EXPERIMENTS = {e.name: e for e in [
    Experiment("fig1c", "AQM probability vs intensity crosstalk for reset and 11 us detection, "
               "with the inter-ion scattering floor band over B-field angles", _fig1c,
               {"i_x": 8e-5, "i2": 1.0, "chain": {"spacing": 6e-6, "b_field_angle": PI / 2},
                "detection": {"tau": 11e-6, "pi_fraction": 1 / 3},
                "reset": {"pi_fraction": 0.86, "d1_11_fraction": 1.0}},
               [{"path": "i_x", "logspace": [1e-6, 1e-2, 41]}],
               ["I_X", "P_AQM_reset", "P_AQM_detect_11us", "P_star_band_lo", "P_star_band_hi"]),
    Experiment("fig2b", "Simulated Ramsey traces of the asset qubit under leaked detection "
               "light", _fig2b,
               {"i_x": 5e-5, "i2": 1.25, "pi_fraction": 1 / 3, "shot_noise": False,
                "repetitions": 200},
               [{"path": "i_x", "values": [2e-5, 5e-5, 1e-4]}],
               ["I_X", "wait_s", "p_up", "contrast_norm", "T2_s"]),
    Experiment("fig3b", "Asset fidelity and reset time vs reset-light polarization and D1(11) "
               "fraction", _fig3b,
               {"pi_fraction": 0.86, "d1_11_fraction": 1.0, "i2": 1.25, "i_x": 5e-5},
               [{"path": "d1_11_fraction", "values": [0.5, 1.0]},
                {"path": "pi_fraction", "linspace": [0.0, 0.9, 10]}],
               ["pi_fraction", "d1_11_fraction", "tau_op_s", "F_12"]),
    Experiment("fig3c", "Asset fidelity under reset light vs ion distance in beam waists, "
               "Gaussian and NA-limited focus", _fig3c,
               {"d_over_w": 4.0, "waist": 1.5e-6, "na": 0.16, "i2": 1.25, "pi_fraction": 0.86,
                "d1_11_fraction": 1.0},
               [{"path": "d_over_w", "linspace": [0.0, 6.0, 25]}],
               ["d_over_w", "I_X_gaussian", "I_X_psf", "F_12_gaussian", "F_12_psf"]),
    Experiment("fig4a", "Asset fidelity vs detection-light pi fraction at 11 us",
               _fig4a, {"pi_fraction": 1 / 3, "i2": 1.25, "i_x": 5e-5, "tau": 11e-6},
               [{"path": "pi_fraction", "linspace": [0.0, 1.0, 11]}],
               ["pi_fraction", "gamma_per_s", "F_12"]),
    Experiment("fig4b", "Asset fidelity under detection light vs ion distance in beam waists", _fig4b,
               {"d_over_w": 4.0, "waist": 1.5e-6, "na": 0.16, "i2": 1.25, "pi_fraction": 1 / 3,
                "tau": 11e-6},
               [{"path": "d_over_w", "linspace": [0.0, 6.0, 25]}],
               ["d_over_w", "I_X_gaussian", "I_X_psf", "F_12_gaussian", "F_12_psf"]),
    Experiment("fig4d", "Process detection fidelity, asset fidelity and their product vs "
               "detection time", _fig4d, dict(_DET, tau_d=8.5e-6),
               [{"path": "tau_d", "linspace": [0.5e-6, 40e-6, 80]}],
               ["tau_d", "detection_fidelity", "F_12", "product"]),
    Experiment("fig4e", "Optimal detection time vs net detection efficiency", _fig4e,
               dict(_DET), [{"path": "efficiency", "linspace": [0.01, 0.1, 10]}],
               ["efficiency", "optimal_tau_d"]),
    Experiment("figS4", "Asset infidelity vs Bloch angle for detection and reset light", _figS4,
               {"theta": 0.0, "i_x": 5e-5, "tau_detection": 11e-6, "model": "full"},
               [{"path": "theta", "linspace": [0.0, PI, 13]}],
               ["theta", "infidelity_detection", "infidelity_reset"]),
    Experiment("hologram", "IFTA binary hologram: window error, neighbour crosstalk and 4/pi "
               "power gain vs iteration count", _hologram,
               {"iterations": 50, "n": 1024, "illumination_radius": 0.25, "na": 0.16,
                "waist": 1.5e-6, "center": 0.0, "neighbor_over_w": 4.0},
               [{"path": "iterations", "values": [10, 50]}],
               ["iterations", "window_error", "crosstalk_neighbor", "gain_4_over_pi"]),
    Experiment("phase-sense", "Closed-loop recovery of injected pupil phase differences with "
               "an ion as the sensor", _phase_sense,
               {"injected": 0.0, "n": 256, "patch_radius": 0.01, "patch_separation": 0.1,
                "exposure": 1e-6},
               [{"path": "injected", "linspace": [-PI, PI, 9, False]}],
               ["injected", "recovered", "error"]),
    Experiment("detection-mc", "Closed-form no-photon probabilities vs a telegraph-process "
               "Monte Carlo over random rate sets", _detection_mc,
               {"trial": 0, "efficiency": 0.04, "n_trials": 1_000_000},
               [{"path": "trial", "values": list(range(20))}],
               ["trial", "eps_R_o", "R_b", "R_d", "R_bg", "t", "p_bright", "p_bright_mc",
                "sigma_bright", "p_dark", "p_dark_mc", "sigma_dark"]),
]}


def list_experiments():
    return [(e.name, e.description) for e in EXPERIMENTS.values()]


# -- scenario handling -------------------------------------------------------------


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        path = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, path + "."))
        else:
            out[path] = v
    return out


def _set_path(d, path, value):
    keys = path.split(".")
    for k in keys[:-1]:
        d = d[k]
    d[keys[-1]] = value


def _grid(axis):
    if "values" in axis:
        return list(axis["values"])
    if "linspace" in axis:
        return np.linspace(*axis["linspace"]).tolist()
    if "logspace" in axis:
        lo, hi, n = axis["logspace"]
        return np.logspace(math.log10(lo), math.log10(hi), int(n)).tolist()
    raise KeyError("grid")


_POSITIVE = {"waist", "spacing", "tau", "tau_d", "tau_detection", "i2", "efficiency", "exposure",
             "n", "iterations", "n_trials", "repetitions", "na", "patch_radius",
             "illumination_radius"}
_NONNEG = {"i_x", "d_over_w", "neighbor_over_w", "trial"}


def _physics_checks(params):
    diags = []
    flat = _flatten(params)
    for path, v in flat.items():
        key = path.rsplit(".", 1)[-1]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            continue
        if not math.isfinite(v):
            diags.append({"path": path, "message": "must be finite"})
        elif key in _POSITIVE and v <= 0:
            diags.append({"path": path, "message": f"must be positive, got {v!r}"})
        elif key in _NONNEG and v < 0:
            diags.append({"path": path, "message": f"must be non-negative, got {v!r}"})
        elif (key.endswith("fraction") or key == "efficiency") and not 0 <= v <= 1:
            diags.append({"path": path, "message": f"must lie in [0, 1], got {v!r}"})
        elif key == "na" and v >= 1:
            diags.append({"path": path, "message": "NA must be below 1"})
    # polarization fractions given explicitly must sum to 1
    groups = {}
    for path, v in flat.items():
        head, _, key = path.rpartition(".")
        if key in ("pi_fraction", "sigma_plus", "sigma_minus"):
            groups.setdefault(head, {})[key] = v
    for head, g in groups.items():
        if len(g) > 1 and all(isinstance(x, (int, float)) for x in g.values()):
            total = sum(g.values())
            if len(g) == 3 and abs(total - 1) > 1e-9 or len(g) < 3 and total > 1 + 1e-9:
                name = "+".join(f"{head}.{k}" if head else k for k in sorted(g))
                diags.append({"path": name,
                              "message": f"polarization fractions sum to {total:g}, not 1"})
    return diags


def validate(scenario) -> list:
    """Schema and physics-range diagnostics; an empty list means valid."""
    diags = []
    if not isinstance(scenario, dict):
        return [{"path": "", "message": "scenario must be a JSON object"}]
    unknown = set(scenario) - {"experiment", "seed", "params", "sweep", "output"}
    for k in sorted(unknown):
        diags.append({"path": k, "message": "unknown top-level field"})
    name = scenario.get("experiment")
    if name not in EXPERIMENTS:
        return diags + [{"path": "experiment", "message": f"unknown experiment {name!r}"}]
    exp = EXPERIMENTS[name]
    seed = scenario.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        diags.append({"path": "seed", "message": "seed must be an unsigned 64-bit integer"})
    known = _flatten(exp.defaults)
    params = scenario.get("params", {})
    if not isinstance(params, dict):
        return diags + [{"path": "params", "message": "params must be an object"}]
    merged = copy.deepcopy(exp.defaults)
    for path, v in _flatten(params).items():
        if path not in known:
            diags.append({"path": f"params.{path}", "message": "unknown parameter"})
        else:
            _set_path(merged, path, v)
    sweep = scenario.get("sweep", exp.sweep)
    if not isinstance(sweep, list):
        return diags + [{"path": "sweep", "message": "sweep must be a list of axes"}]
    for i, axis in enumerate(sweep):
        where = f"sweep[{i}]"
        if not isinstance(axis, dict) or "path" not in axis:
            diags.append({"path": where, "message": "axis needs a 'path'"})
            continue
        if axis["path"] not in known:
            diags.append({"path": f"{where}.path", "message": f"unknown parameter {axis['path']!r}"})
            continue
        try:
            grid = _grid(axis)
        except (KeyError, TypeError, ValueError):
            diags.append({"path": where, "message": "axis needs values, linspace or logspace"})
            continue
        if not grid:
            diags.append({"path": where, "message": "grid is empty"})
            continue
        for j, v in enumerate(grid):
            probe = copy.deepcopy(merged)
            _set_path(probe, axis["path"], v)
            for d in _physics_checks(probe):
                if d["path"].split("+")[0].endswith(axis["path"]) or axis["path"] in d["path"]:
                    diags.append({"path": f"{where}.grid[{j}]", "message": d["message"]})
    for d in _physics_checks(merged):
        diags.append({"path": f"params.{d['path']}", "message": d["message"]})
    return diags


def _resolve(scenario, seed=None):
    diags = validate(scenario)
    if diags:
        raise ScenarioError(diags)
    exp = EXPERIMENTS[scenario["experiment"]]
    base = copy.deepcopy(exp.defaults)
    for path, v in _flatten(scenario.get("params", {})).items():
        _set_path(base, path, v)
    sweep = scenario.get("sweep", exp.sweep)
    seed = scenario.get("seed", 0) if seed is None else seed
    return exp, base, sweep, int(seed)


def _points(base, sweep):
    grids = [_grid(a) for a in sweep]
    out = []
    for combo in itertools.product(*grids):
        p = copy.deepcopy(base)
        for axis, v in zip(sweep, combo):
            _set_path(p, axis["path"], v)
        out.append(p)
    return out


def _run_point(args):
    name, params, seed_seq = args
    rng = np.random.default_rng(seed_seq)
    try:
        return EXPERIMENTS[name].run(params, rng), None
    except Exception as exc:  # recorded per row, the sweep continues
        return None, f"{type(exc).__name__}: {exc}"


def config_hash(scenario, seed) -> str:
    canon = json.dumps({"scenario": scenario, "seed": seed}, sort_keys=True,
                       separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def run(scenario, out_dir=".", seed=None, workers=1):
    """Execute a scenario; returns (csv_path, metadata)."""
    exp, base, sweep, seed = _resolve(scenario, seed)
    points = _points(base, sweep)
    seqs = np.random.SeedSequence(seed).spawn(len(points))
    jobs = [(exp.name, p, s) for p, s in zip(points, seqs)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_point, jobs))
    else:
        results = [_run_point(j) for j in jobs]
    rows, failures = [], []
    for i, ((res, err), p) in enumerate(zip(results, points)):
        if err is not None:
            nan_row = {c: math.nan for c in exp.columns}
            for axis in sweep:  # keep the sweep coordinates of the failed point
                key = axis["path"].rsplit(".", 1)[-1]
                if key in nan_row:
                    nan_row[key] = _get(p, axis["path"])
            rows.append(nan_row)
            failures.append({"point": i, "params": {a["path"]: _get(p, a["path"]) for a in sweep},
                             "error": err})
        else:
            rows.extend(res)
    os.makedirs(out_dir, exist_ok=True)
    stem = scenario.get("output", exp.name)
    csv_path = os.path.join(out_dir, stem if stem.endswith(".csv") else stem + ".csv")
    analysis.write_csv(csv_path, exp.columns, rows)
    meta = {"experiment": exp.name, "seed": seed, "config_hash": config_hash(scenario, seed),
            "columns": exp.columns, "rows": len(rows), "failures": failures,
            "versions": _versions()}
    with open(csv_path + ".json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    return csv_path, meta


def _get(d, path):
    for k in path.split("."):
        d = d[k]
    return d


def _versions():
    import scipy

    from . import kernels
    try:
        from importlib.metadata import version
        pkg = version("artifact")
    except Exception:
        pkg = "unknown"
    return {"aqmsim": pkg, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "kernel_backend": kernels.BACKEND}


# -- command line --------------------------------------------------------------------


def _fail(message, diagnostics=None, code=2):
    err = {"error": message}
    if diagnostics:
        err["diagnostics"] = diagnostics
    print(json.dumps(err), file=sys.stderr)
    return code


def _load(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="aqmsim", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="verb", required=True)
    r = sub.add_parser("run", help="run a scenario file")
    r.add_argument("scenario")
    r.add_argument("--out", default=".")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--workers", type=int, default=1)
    v = sub.add_parser("validate", help="check a scenario file without running it")
    v.add_argument("scenario")
    sub.add_parser("list", help="list experiments")
    args = ap.parse_args(argv)

    if args.verb == "list":
        for name, desc in list_experiments():
            print(f"{name}\t{desc}")
        return 0
    try:
        scenario = _load(args.scenario)
    except (OSError, json.JSONDecodeError) as exc:
        return _fail(f"cannot read scenario: {exc}")
    if args.verb == "validate":
        diags = validate(scenario)
        print(json.dumps(diags, indent=2))
        return 0 if not diags else 1
    if args.seed is not None and not 0 <= args.seed < 2**64:
        return _fail("--seed must be an unsigned 64-bit integer")
    if args.workers < 1:
        return _fail("--workers must be >= 1")
    try:
        path, meta = run(scenario, args.out, args.seed, args.workers)
    except ScenarioError as exc:
        return _fail("invalid scenario", exc.diagnostics)
    except Exception as exc:
        return _fail(f"{type(exc).__name__}: {exc}", code=3)
    print(path)
    return 0 if not meta["failures"] else 1


if __name__ == "__main__":
    sys.exit(main())
