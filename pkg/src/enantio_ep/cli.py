"""Batch front end: ``enantio-ep <kind> --spec <file> --out <dir> [--workers N]``.

A spec is a TOML file with a ``[parameters]`` table and an optional
``[sweep.axes]`` table. Dimensional keys carry their unit as a suffix
(``_au``, ``_per_m``, ``_m``, ``_fs``, ``_rad``). Exit codes: 0 ok,
1 validation error, 2 runtime error; errors are reported as JSON on stderr.
"""

from __future__ import annotations

import argparse
import itertools
import json
import math
import os
import platform
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable

import numpy as np
import scipy

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from . import encircle as enc
from . import fiber as fb
from . import shape_resonance as sr
from . import three_level as tl
from .core import IntegrationFailure, InvalidArgument, StepControl
from .io import write_csv, write_json, write_rows

REQUIRED = object()


class SpecError(Exception):
    def __init__(self, messages: list[str]):
        super().__init__("; ".join(messages))
        self.messages = messages


# ------------------------------------------------------------------ schemas

_THREE_LEVEL = {
    "F1_au": (float, REQUIRED),
    "F2_au": (float, None),
    "eta": (float, None),
    "phase_light_rad": (float, 0.0),
    "phase_mol_rad": (float, 0.0),
    "rabi_convention": (str, "full-amplitude"),
    "conjugate_polarization": (bool, True),
}
_LOOP = {
    "T_loop_au": (float, enc.T_REFERENCE),
    "n_out": (int, 1024),
    "rtol": (float, 1e-10),
    "atol": (float, 1e-14),
}
_FIBER = {
    "n_core": (float, 1.4905),
    "n_solution": (float, 1.459),
    "r_core_m": (float, 0.5e-6),
    "wavelength_m": (float, 589e-9),
    "DeltaGamma_per_m": (float, REQUIRED),
    "DeltaBeta_per_m": (float, 0.0),
    "phi_t_per_m": (float, REQUIRED),
    "length_m": (float, REQUIRED),
    "photoelastic": (float, 0.0),
    "alpha_per_m": (float, fb.ALPHA_REFERENCE),
    "rotation_convention": (str, "figure"),
    "input": (str, "RCP"),
}

SCHEMAS: dict[str, dict[str, tuple]] = {
    "ep-map": {**_THREE_LEVEL, "system": (str, "three-level"), "grid_n": (int, 64),
               "DeltaGamma_per_m": (float, 1.5 * fb.ALPHA_REFERENCE),
               "alpha_per_m": (float, fb.ALPHA_REFERENCE), "rotation_convention": (str, "figure")},
    "encircle": {**_THREE_LEVEL, **_LOOP, "scale": (float, 1.0), "shift": (float, 1.0)},
    "stability": {**_THREE_LEVEL, **_LOOP, "mode": (str, REQUIRED), "values": (list, REQUIRED)},
    "stabilize-cd": {"Omega_d_au": (float, REQUIRED), "epsilon": (float, REQUIRED),
                     "Gamma_over_Omega_d": (float, REQUIRED), "T_end_fs": (float, REQUIRED),
                     "Delta_au": (float, 0.0), "n_out": (int, 2000)},
    "fiber-run": {**_FIBER, "ee": (float, REQUIRED), "n_out": (int, 1000)},
    "fiber-sensitivity": {**_FIBER, "ee_min": (float, REQUIRED), "ee_max": (float, REQUIRED),
                          "ee_num": (int, REQUIRED), "observable": (str, "power")},
    "mode-solve": {k: _FIBER[k] for k in ("n_core", "n_solution", "r_core_m", "wavelength_m")}
    | {"specific_rotation": (float, 57.24), "density_g_per_mL": (float, 0.948)},
}
KINDS = tuple(SCHEMAS)


def _coerce(key, typ, value, errors):
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            errors.append(f"{key}: expected a number")
            return None
        if not math.isfinite(float(value)):
            errors.append(f"{key}: must be finite")
        return float(value)
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            errors.append(f"{key}: expected an integer")
        return value
    if not isinstance(value, typ):
        errors.append(f"{key}: expected {typ.__name__}")
    return value


def validate(kind: str, params: dict) -> dict:
    """Fill defaults and check types; raises SpecError listing every problem."""
    if kind not in SCHEMAS:
        raise SpecError([f"unknown kind {kind!r}; expected one of {list(KINDS)}"])
    schema = SCHEMAS[kind]
    errors = [f"unknown key {k!r}" for k in params if k not in schema]
    out = {}
    for key, (typ, default) in schema.items():
        if key in params:
            out[key] = _coerce(key, typ, params[key], errors)
        elif default is REQUIRED:
            errors.append(f"missing required key {key!r}")
        else:
            out[key] = default
    if "F1_au" in schema and not errors:
        if (out["F2_au"] is None) == (out["eta"] is None):
            errors.append("give exactly one of 'F2_au' or 'eta'")
        if out.get("rabi_convention") not in tl.CONVENTIONS:
            errors.append(f"rabi_convention must be one of {list(tl.CONVENTIONS)}")
    if kind == "stability" and not errors:
        if out["mode"] not in ("radius", "center"):
            errors.append("mode must be 'radius' or 'center'")
        if not all(isinstance(v, (int, float)) for v in out["values"]):
            errors.append("values must be numbers")
    if kind == "ep-map" and not errors and out["system"] not in ("three-level", "fiber"):
        errors.append("system must be 'three-level' or 'fiber'")
    if "input" in out and out.get("input") not in ("RCP", "LCP"):
        errors.append("input must be 'RCP' or 'LCP'")
    if "rotation_convention" in out and out["rotation_convention"] not in fb.ROTATION_CONVENTIONS:
        errors.append(f"rotation_convention must be one of {list(fb.ROTATION_CONVENTIONS)}")
    if errors:
        raise SpecError(errors)
    return out


def load_spec(path: Path, kind: str) -> tuple[dict, dict]:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise SpecError([f"cannot read spec: {exc}"]) from exc
    unknown = set(doc) - {"kind", "parameters", "sweep"}
    errors = [f"unknown top-level key {k!r}" for k in sorted(unknown)]
    if "kind" in doc and doc["kind"] != kind:
        errors.append(f"spec kind {doc['kind']!r} does not match command {kind!r}")
    sweep = doc.get("sweep", {})
    if set(sweep) - {"axes"}:
        errors.append("sweep table only accepts 'axes'")
    if errors:
        raise SpecError(errors)
    return doc.get("parameters", {}), sweep.get("axes", {})


def axis_values(name: str, spec) -> list:
    if isinstance(spec, list):
        return spec
    if isinstance(spec, dict) and set(spec) == {"start", "stop", "num"}:
        return [float(v) for v in np.linspace(spec["start"], spec["stop"], int(spec["num"]))]
    raise SpecError([f"axis {name!r}: expected a list or {{start, stop, num}}"])


# ------------------------------------------------------------ experiments

def _molecule(p, handedness="R") -> tl.MolecularFieldConfig:
    cfg = tl.reference_config(handedness, p["rabi_convention"], p["conjugate_polarization"])
    F2 = p["F2_au"] if p["F2_au"] is not None else p["eta"] * p["F1_au"]
    return cfg.replace(F1=p["F1_au"], F2=F2, phase_light=p["phase_light_rad"], phase_mol=p["phase_mol_rad"])


def _ep_dict(eps):
    return [{"Delta_au": e.params["Delta"], "F3_au": e.params["F3"], "gap": e.gap,
             "phase_rigidity": e.phase_rigidity} for e in eps]


def run_ep_map(p, out: Path) -> dict:
    if p["system"] == "fiber":
        fib = fb.FiberConfig(DeltaGamma=p["DeltaGamma_per_m"], phi_t=0.0)
        phis = np.linspace(-3.0, 3.0, p["grid_n"])
        dbs = np.linspace(-1.5, 1.5, p["grid_n"])
        summary = {}
        for ee in (-1.0, 0.0, 1.0):
            sol = fb.SolutionConfig(ee=ee, alpha_eff=p["alpha_per_m"], convention=p["rotation_convention"])
            write_json(out / f"gap_map_ee{ee:+.0f}.json", fb.gap_map(fib, sol, phis, dbs))
            for k, (x, y) in enumerate(fb.fiber_ep_positions(sol, fib.DeltaGamma)):
                summary[f"ee{ee:+.0f}_ep{k}_phi_t_per_m"] = x
                summary[f"ee{ee:+.0f}_ep{k}_DeltaBeta_per_m"] = y
        return summary
    cfg = _molecule(p)
    summary = {}
    rows = []
    for hand, c in (("R", cfg), ("L", cfg.mirrored())):
        closed = tl.ep_closed_form(c)
        numeric = tl.locate_eps(c, grid=p["grid_n"])
        for k, e in enumerate(closed):
            summary[f"{hand}_branch{k}_Delta_au"] = e.params["Delta"]
            summary[f"{hand}_branch{k}_F3_au"] = e.params["F3"]
        summary[f"{hand}_numeric"] = _ep_dict(numeric)
        region = tl.default_region(c)
        for d in np.linspace(*region["Delta"], p["grid_n"]):
            for f in np.linspace(*region["F3"], p["grid_n"]):
                ev = np.linalg.eigvals(tl.build_hamiltonian(c, d, f))
                rows.append({"handedness": hand, "Delta_au": d, "F3_au": f, "gap_au": abs(ev[0] - ev[1])})
    r = tl.rates(cfg)
    summary.update({"Gamma1_au": r.Gamma1, "Gamma2_au": r.Gamma2})
    write_rows(out / "gap_map.csv", rows)
    return summary


def _ctl(p, T):
    return StepControl(rtol=p["rtol"], atol=p["atol"], max_step=T / 200)


def run_encircle(p, out: Path) -> dict:
    cfg = _molecule(p)
    ep = enc.reference_ep(cfg)
    path = enc.make_loop(ep, p["scale"], p["shift"], T_loop=p["T_loop_au"])
    summary = {"EP_R_Delta_au": ep.params["Delta"], "EP_R_F3_au": ep.params["F3"]}
    for hand, c in (("R", cfg), ("L", cfg.mirrored())):
        runs = enc.run_four(c, path, _ctl(p, p["T_loop_au"]), p["n_out"])
        for (direction, br), res in runs.items():
            write_csv(out / f"loop_{hand}_{direction}_{br}.csv", res.table())
            tag = f"{hand}_{'ccw' if direction == 'counterclockwise' else 'cw'}_{br}"
            summary[f"{tag}_S"] = res.S
            summary[f"{tag}_residual"] = res.residual
            summary[f"{tag}_A_final"] = float(res.A_of_t[-1])
            summary[f"{tag}_swap_flag"] = res.swap_flag
        summary[f"alpha_{hand}"] = enc.switch_alpha(runs)
        summary[f"residual_mean_{hand}"] = float(np.mean([r.residual for r in runs.values()]))
    return summary


def run_stability(p, out: Path) -> dict:
    cfg = _molecule(p)
    rows = enc.stability_sweep(cfg, cfg.mirrored(), p["mode"], p["values"], p["T_loop_au"],
                               _ctl(p, p["T_loop_au"]), p["n_out"])
    write_rows(out / "stability.csv", rows)
    return {"mode": p["mode"], "n_points": len(rows)}


def run_stabilize_cd(p, out: Path) -> dict:
    R, L = sr.enantiomer_pair(p["Omega_d_au"], p["epsilon"], p["Delta_au"],
                              p["Gamma_over_Omega_d"] * p["Omega_d_au"])
    tr = sr.evolve_cd(R, L, p["T_end_fs"] / sr.AU_TIME_FS, n_out=p["n_out"])
    write_csv(out / "cd.csv", tr.table())
    return {"Gamma_over_Omega_d": p["Gamma_over_Omega_d"], "Gamma_EP_R_au": tr.Gamma_EP_R,
            "Gamma_EP_L_au": tr.Gamma_EP_L, "tau_R_au": tr.lifetimes["R"], "tau_L_au": tr.lifetimes["L"],
            "period_R_au": tr.periods["R"], "period_L_au": tr.periods["L"],
            "CD_at_T": float(tr.CD[-1]), "P_R_at_T": tr.residual_R, "P_L_at_T": tr.residual_L}


def _fiber(p):
    fib = fb.FiberConfig(p["n_core"], p["n_solution"], p["r_core_m"], p["wavelength_m"], p["DeltaGamma_per_m"],
                         p["DeltaBeta_per_m"], p["phi_t_per_m"], p["length_m"], p["photoelastic"])
    sol = fb.SolutionConfig(ee=p.get("ee", 0.0), alpha_eff=p["alpha_per_m"], convention=p["rotation_convention"])
    return fib, sol


def run_fiber(p, out: Path) -> dict:
    fib, sol = _fiber(p)
    tr = fb.propagate_fiber(fib, sol, p["input"], n_out=p["n_out"])
    table = tr.table()
    table["P_over_P_end"] = tr.P / tr.P[-1]
    write_csv(out / "trace.csv", table)
    return {"P_end": float(tr.P[-1]), "xi_end": float(tr.xi[-1]), "phase_class": tr.phase_class,
            "ep_phi_t_per_m": [x for x, _ in fb.fiber_ep_positions(sol, fib.DeltaGamma)]}


def run_fiber_sensitivity(p, out: Path) -> dict:
    fib, sol = _fiber(p)
    grid = np.linspace(p["ee_min"], p["ee_max"], p["ee_num"])
    rows = fb.sensitivity(fib, sol, grid, p["observable"], p["input"])
    write_rows(out / "sensitivity.csv", rows)
    summary = {}
    for sign, tag in ((1, "positive"), (-1, "negative")):
        try:
            summary[f"peak_ee_{tag}"] = fb.peak_sensitivity(rows, sign)
        except ValueError:
            summary[f"peak_ee_{tag}"] = None
    return summary


def run_mode_solve(p, out: Path) -> dict:
    fib = fb.FiberConfig(p["n_core"], p["n_solution"], p["r_core_m"], p["wavelength_m"])
    m = fb.solve_lp01(fib)
    sol = fb.SolutionConfig(specific_rotation=p["specific_rotation"], density=p["density_g_per_mL"],
                            alpha_eff=None)
    return {"beta_per_m": m.beta, "beta_over_k_ncore": m.beta_ratio, "X": m.X, "Y": m.Y, "V": m.V,
            "Gamma_core": m.Gamma_core, "Gamma_evan": m.Gamma_evan, "single_mode": m.single_mode,
            "alpha_derived_per_m": fb.alpha_from_solution(sol, m.Gamma_evan),
            "alpha_reference_per_m": fb.ALPHA_REFERENCE}


RUNNERS: dict[str, Callable[[dict, Path], dict]] = {
    "ep-map": run_ep_map, "encircle": run_encircle, "stability": run_stability,
    "stabilize-cd": run_stabilize_cd, "fiber-run": run_fiber,
    "fiber-sensitivity": run_fiber_sensitivity, "mode-solve": run_mode_solve,
}


# ----------------------------------------------------------------- drivers

def _flatten(d: dict, prefix: str = "") -> dict:
    flat = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            flat.update(_flatten(v, key + "."))
        elif isinstance(v, (list, tuple)):
            continue
        else:
            flat[key] = v
    return flat


def run(kind: str, params: dict, out: Path) -> dict:
    """Validate, execute one experiment, write summary.json; returns the summary."""
    p = validate(kind, params)
    out.mkdir(parents=True, exist_ok=True)
    summary = RUNNERS[kind](p, out)
    write_json(out / "summary.json", summary)
    return summary


def _point(args):
    kind, params, out = args
    try:
        return "ok", run(kind, params, Path(out)), None
    except Exception as exc:  # recorded per point, sweep continues
        return "error", None, f"{type(exc).__name__}: {exc}"


def sweep(kind: str, params: dict, axes: dict, out: Path, max_workers: int = 1) -> dict:
    """Cartesian sweep over ``axes``; merged tidy CSV ``sweep.csv`` with axis columns first."""
    if not axes:
        raise SpecError(["sweep needs at least one axis"])
    names = list(axes)
    bad = [n for n in names if n not in SCHEMAS[kind]]
    if bad:
        raise SpecError([f"unknown sweep axis {n!r}" for n in bad])
    values = [axis_values(n, axes[n]) for n in names]
    points = list(itertools.product(*values))
    validate(kind, {**params, **dict(zip(names, points[0]))})
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(kind, {**params, **dict(zip(names, pt))}, str(out / "points" / f"{i:05d}"))
            for i, pt in enumerate(points)]
    if max_workers > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as ex:
            results = list(ex.map(_point, jobs))
    else:
        results = [_point(j) for j in jobs]

    columns: list[str] = []
    for status, summ, _ in results:
        if status == "ok":
            for k in _flatten(summ):
                if k not in columns:
                    columns.append(k)
    rows, failures = [], []
    for i, (pt, (status, summ, err)) in enumerate(zip(points, results)):
        flat = _flatten(summ) if summ else {}
        row = dict(zip(names, pt))
        row["status"] = status
        row.update({c: flat.get(c, math.nan) for c in columns})
        rows.append({k: ("" if v is None else v) for k, v in row.items()})
        if err:
            failures.append({"index": i, "point": dict(zip(names, pt)), "error": err})
    write_rows(out / "sweep.csv", rows)
    summary = {"n_points": len(points), "n_failed": len(failures), "axes": names}
    write_json(out / "summary.json", summary)
    return {"summary": summary, "failures": failures}


def _manifest(out: Path, kind, spec_path, params, axes, wall, extra=None):
    write_json(out / "manifest.json", {
        "kind": kind, "spec_file": str(spec_path), "parameters": params, "sweep_axes": axes,
        "version": __version__, "python": platform.python_version(), "numpy": np.__version__,
        "scipy": scipy.__version__, "wall_time_s": wall, **(extra or {}),
    })


def _fail(code: int, category: str, messages: list[str]) -> int:
    sys.stderr.write(json.dumps({"error": category, "messages": messages}) + "\n")
    return code


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="enantio-ep", description=__doc__.splitlines()[0])
    ap.add_argument("kind", choices=KINDS)
    ap.add_argument("--spec", required=True, type=Path)
    ap.add_argument("--out", required=True, type=Path)
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args(argv)
    workers = args.workers
    if workers is None:
        env = os.environ.get("ENANTIO_EP_WORKERS", "1")
        try:
            workers = int(env)
        except ValueError:
            return _fail(1, "validation", [f"ENANTIO_EP_WORKERS={env!r} is not an integer"])
    if workers < 1:
        return _fail(1, "validation", ["--workers must be >= 1"])
    t0 = time.perf_counter()
    try:
        params, axes = load_spec(args.spec, args.kind)
        if axes:
            res = sweep(args.kind, params, axes, args.out, workers)
            _manifest(args.out, args.kind, args.spec, params, axes, time.perf_counter() - t0,
                      {"failures": res["failures"], "workers": workers})
        else:
            run(args.kind, params, args.out)
            _manifest(args.out, args.kind, args.spec, params, {}, time.perf_counter() - t0)
    except SpecError as exc:
        return _fail(1, "validation", exc.messages)
    except InvalidArgument as exc:
        return _fail(1, "validation", [str(exc)])
    except IntegrationFailure as exc:
        return _fail(2, "runtime", [f"integration failure at t={exc.t_last}: {exc}"])
    except Exception as exc:
        return _fail(2, "runtime", [f"{type(exc).__name__}: {exc}", traceback.format_exc(limit=3)])
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
