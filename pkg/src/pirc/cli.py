"""Command-line front end.

Every subcommand reads a JSON config, validates all specs before computing,
and writes ``report.json`` (plus ``trajectory_<runid>.csv`` for simulations)
into ``--out``.  Exit codes: 0 completed, 2 invalid config, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .instances import random_filter, random_of_plant, random_sf_instance
from .ltisys import PoleEvaluationError, RealizationError, char_poly
from .mrcdesign import (
    FilterSpec,
    MatchingError,
    OfPlantSpec,
    SfPlantSpec,
    SpecError,
    filter_realization,
    matching_residual,
    monopoli_theta,
    sf_mrc_gain,
)
from .pirctool import (
    TransformError,
    assemble_sf_closed_loop,
    check_filter_conditions,
    heu_transfer,
    of_unfiltered_verdict,
    ofb_pirc_controller,
    pirc_transform_sf,
    sf_unfiltered_verdict,
)
from .polycore import Poly, PolynomialError, hurwitz_test, roots
from .simlab import (
    AdaptiveConfig,
    Reference,
    SimulationRefused,
    simulate_ofb,
    simulate_sf_adaptive,
    simulate_sf_ideal,
    simulate_sf_pirc,
)
from .tolerances import DEFAULT_DIVERGENCE_BOUND, DEFAULT_HORIZON, DEFAULT_STEP

log = logging.getLogger("pirc")

MODES = ("sf-analyze", "of-analyze", "check-filter", "simulate", "batch")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

NUMERIC_ERRORS = (
    MatchingError,
    TransformError,
    RealizationError,
    PoleEvaluationError,
    PolynomialError,
    np.linalg.LinAlgError,
    ArithmeticError,
)


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` holds per-field diagnostics."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


# ---------------------------------------------------------------- JSON helpers

def _clean(obj):
    """Plain-JSON copy: numpy scalars/arrays unwrapped, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, complex):
        return [_clean(obj.real), _clean(obj.imag)]
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _roots_json(p: Poly) -> list:
    r = roots(p)
    order = np.lexsort((r.imag, r.real))
    return [[float(z.real), float(z.imag)] for z in r[order]]


# ---------------------------------------------------------------- config parsing

def _section(cfg: dict, key: str, problems: list, required=True):
    val = cfg.get(key)
    if val is None:
        if required:
            problems.append(f"{key}: missing")
        return None
    if not isinstance(val, dict):
        problems.append(f"{key}: expected an object")
        return None
    return val


def _load(kind, data, where: str, problems: list):
    if data is None:
        return None
    try:
        return kind.from_json(data)
    except SpecError as exc:
        problems.extend(f"{where}: {v}" for v in exc.violations)
    except (TypeError, ValueError) as exc:
        problems.append(f"{where}: {exc}")
    return None


def _float(block: dict, key: str, default, problems: list, positive=True):
    val = block.get(key, default)
    try:
        val = float(val)
    except (TypeError, ValueError):
        problems.append(f"simulation.{key}: not a number ({val!r})")
        return default
    if not math.isfinite(val) or (positive and val <= 0):
        problems.append(f"simulation.{key}: must be a positive finite number")
    return val


def _vector(block: dict, key: str, size: int, problems: list, where="simulation"):
    val = block.get(key)
    if val is None:
        return None
    arr = np.asarray(val, dtype=float).ravel() if isinstance(val, list) else None
    if arr is None or arr.shape != (size,) or not np.all(np.isfinite(arr)):
        problems.append(f"{where}.{key}: expected {size} finite numbers")
        return None
    return arr


def resolve_config(mode: str, cfg: dict, seed: int | None) -> dict:
    """Validate ``cfg`` for ``mode`` and return the resolved objects.

    Raises ConfigError listing every problem found.
    """
    problems: list[str] = []
    if not isinstance(cfg, dict):
        raise ConfigError(["config: top level must be a JSON object"])
    if cfg.get("mode", mode) != mode:
        problems.append(f"mode: config says {cfg.get('mode')!r} but subcommand is {mode!r}")
    out: dict = {"mode": mode}

    if mode in ("sf-analyze", "of-analyze"):
        kind = SfPlantSpec if mode == "sf-analyze" else OfPlantSpec
        out["plant"] = _load(kind, _section(cfg, "plant", problems), "plant", problems)
        out["filter"] = _load(FilterSpec, _section(cfg, "filter", problems, required=False),
                              "filter", problems)

    elif mode == "check-filter":
        out["filter"] = _load(FilterSpec, _section(cfg, "filter", problems), "filter", problems)
        D_m = None
        if "D_m" not in cfg:
            problems.append("D_m: missing")
        else:
            try:
                D_m = Poly(cfg["D_m"])
                if D_m.degree < 1 or not hurwitz_test(D_m):
                    problems.append("D_m: [Hurwitz] must be a Hurwitz polynomial of degree >= 1")
            except (TypeError, ValueError) as exc:
                problems.append(f"D_m: {exc}")
        d = cfg.get("d")
        if d is not None and (not isinstance(d, int) or d < 1):
            problems.append("d: must be a positive integer")
        if D_m is not None and d is not None and isinstance(d, int) and D_m.degree != d:
            problems.append(f"d: deg D_m = {D_m.degree} differs from d = {d}")
        out["D_m"], out["d"] = D_m, d

    elif mode == "simulate":
        sim = _section(cfg, "simulation", problems) or {}
        loop = sim.get("loop", "sf")
        if loop not in ("sf", "of"):
            problems.append("simulation.loop: must be 'sf' or 'of'")
        kind = SfPlantSpec if loop == "sf" else OfPlantSpec
        plant = _load(kind, _section(cfg, "plant", problems), "plant", problems)
        filt = _load(FilterSpec, _section(cfg, "filter", problems, required=False), "filter", problems)
        allowed = ("ideal", "pirc", "adaptive") if loop == "sf" else ("ideal", "pirc")
        controllers = sim.get("controllers", ["ideal", "pirc"])
        if not isinstance(controllers, list) or not controllers or any(c not in allowed for c in controllers):
            problems.append(f"simulation.controllers: non-empty list drawn from {list(allowed)}")
            controllers = []
        if loop == "sf" and filt is None and "filter" not in cfg:
            problems.append("filter: the state-feedback simulation needs an input filter")
        h = _float(sim, "h", DEFAULT_STEP, problems)
        T = _float(sim, "T", DEFAULT_HORIZON, problems)
        if h > 0 and T > 0 and T < h:
            problems.append("simulation.T: horizon shorter than one step")
        B_div = _float(sim, "B_div", DEFAULT_DIVERGENCE_BOUND, problems)
        try:
            ref = Reference.from_json(sim.get("reference"))
        except (TypeError, ValueError, KeyError) as exc:
            problems.append(f"simulation.reference: {exc}")
            ref = Reference()
        x0 = xi0 = None
        adaptive = None
        threshold = None
        if plant is not None:
            x0 = _vector(sim, "x0", plant.n, problems)
            if loop == "sf" and filt is not None:
                xi0 = _vector(sim, "xi0", filt.order, problems)
            if "adaptive" in controllers:
                ad = sim.get("adaptive") or {}
                try:
                    Q = ad.get("Q")
                    if Q is not None:
                        Q = np.asarray(Q, dtype=float)
                        if Q.shape != (plant.n, plant.n):
                            raise ValueError(f"Q must be {plant.n}x{plant.n}")
                    th0 = _vector(ad, "theta_hat0", plant.n, problems, "simulation.adaptive")
                    adaptive = AdaptiveConfig(gamma=float(ad.get("gamma", 10.0)), Q=Q,
                                              theta_hat0=th0, B_div=B_div, h=h, T_final=T)
                except (TypeError, ValueError) as exc:
                    problems.append(f"simulation.adaptive: {exc}")
                threshold = ad.get("convergence_threshold")
                if threshold is not None and not (isinstance(threshold, (int, float)) and threshold > 0):
                    problems.append("simulation.adaptive.convergence_threshold: must be positive")
        if loop == "of" and filt is None and "pirc" in controllers:
            problems.append("simulation.controllers: 'pirc' needs a filter for the output-feedback loop")
        out.update(loop=loop, plant=plant, filter=filt, controllers=controllers, h=h, T=T,
                   B_div=B_div, reference=ref, x0=x0, xi0=xi0, adaptive=adaptive,
                   convergence_threshold=threshold)

    elif mode == "batch":
        b = _section(cfg, "batch", problems) or {}
        kind = b.get("kind", "sf")
        if kind not in ("sf", "of", "filter"):
            problems.append("batch.kind: must be 'sf', 'of' or 'filter'")
        count = b.get("count", 100)
        if not isinstance(count, int) or count < 1:
            problems.append("batch.count: must be a positive integer")
        if seed is None:
            seed = cfg.get("seed", 0)
        if not isinstance(seed, int) or seed < 0:
            problems.append("seed: must be a non-negative integer")
        out.update(kind=kind, count=count, seed=seed)
    else:
        problems.append(f"mode: unknown {mode!r}")

    if problems:
        raise ConfigError(problems)
    return out


def resolved_json(res: dict) -> dict:
    """The resolved config echoed into every report."""
    out = {}
    for k, v in res.items():
        if hasattr(v, "to_json"):
            out[k] = v.to_json()
        elif isinstance(v, Poly):
            out[k] = v.to_json()
        else:
            out[k] = v
    return out


# ---------------------------------------------------------------- analyses

def run_sf_analyze(res: dict) -> dict:
    spec: SfPlantSpec = res["plant"]
    theta = sf_mrc_gain(spec)
    report = {"theta": theta, "unfiltered": sf_unfiltered_verdict()}
    f = res.get("filter")
    if f is None:
        report["verdict"] = {"is_pirc": False, "reason": report["unfiltered"]["reason"]}
        return report
    filt = filter_realization(f)
    cl = assemble_sf_closed_loop(spec, filt, theta)
    pr = pirc_transform_sf(cl)
    cp = char_poly(cl.A_cl)
    report.update(
        closed_loop=cl.to_json(),
        closed_loop_poly=cp.to_json(),
        closed_loop_hurwitz=hurwitz_test(cp),
        closed_loop_roots=_roots_json(cp),
        pirc=pr.to_json(),
        verdict={"is_pirc": pr.is_pirc, "(i)": pr.condition_i, "(ii)": pr.condition_ii},
    )
    return report


def run_of_analyze(res: dict) -> dict:
    spec: OfPlantSpec = res["plant"]
    theta = monopoli_theta(spec)
    report = {
        "theta": theta,
        "matching_residual": matching_residual(spec, theta),
        "relative_degree": spec.d,
        "unfiltered": of_unfiltered_verdict(),
    }
    f = res.get("filter")
    if f is None:
        report["verdict"] = {"is_pirc": False, "reason": report["unfiltered"]["reason"]}
        return report
    cond = check_filter_conditions(f, spec.D_m)
    report["filter_conditions"] = cond.to_json()
    verdict = {"is_pirc": cond.is_pirc, "H_eu": str(cond.heu)}
    if cond.is_pirc:
        report["controller"] = ofb_pirc_controller(cond.heu, spec.D_m).to_json()
    else:
        verdict["reason"] = ", ".join(c for c, ok in (("C1", cond.proper), ("C2", cond.stable)) if not ok)
    report["verdict"] = verdict
    return report


def run_check_filter(res: dict) -> dict:
    cond = check_filter_conditions(res["filter"], res["D_m"], res.get("d"))
    return {"filter_conditions": cond.to_json(), "verdict": {"is_pirc": cond.is_pirc}}


def _traj_gap(a, b) -> float:
    k = min(len(a.t), len(b.t))
    return float(np.max(np.abs(a.x[:k] - b.x[:k]), initial=0.0))


def run_simulate(res: dict, out_dir: Path) -> dict:
    spec, f = res["plant"], res["filter"]
    kw = dict(h=res["h"], T=res["T"], B_div=res["B_div"])
    ref = res["reference"]
    runs, trajs = {}, {}
    report: dict = {}
    if res["loop"] == "sf":
        filt = filter_realization(f)
        cp = char_poly(assemble_sf_closed_loop(spec, filt, sf_mrc_gain(spec)).A_cl)
        report.update(closed_loop_poly=cp.to_json(), closed_loop_hurwitz=hurwitz_test(cp),
                      closed_loop_roots=_roots_json(cp))
        for name in res["controllers"]:
            if name == "ideal":
                tr = simulate_sf_ideal(spec, filt, ref, x0=res["x0"], xi0=res["xi0"], **kw)
            elif name == "pirc":
                tr = simulate_sf_pirc(spec, filt, ref, x0=res["x0"], xi0=res["xi0"], **kw)
            else:
                tr = simulate_sf_adaptive(spec, filt, res["adaptive"], ref, x0=res["x0"], xi0=res["xi0"])
            trajs[name] = tr
    else:
        for name in res["controllers"]:
            try:
                trajs[name] = simulate_ofb(spec, name, f, ref, x0=res["x0"], **kw)
            except SimulationRefused as exc:
                runs[f"of-{name}"] = {"refused": str(exc)}

    for name, tr in trajs.items():
        run_id = f"{res['loop']}-{name}"
        path = out_dir / f"trajectory_{run_id}.csv"
        tr.write_csv(path)
        entry = tr.summary()
        entry["csv"] = path.name
        entry["max_abs_e"] = float(np.max(np.abs(tr.e), initial=0.0))
        if "theta_tilde_x" in tr.signals:
            tx = np.abs(tr.signals["theta_tilde_x"])
            tail = tx[int(0.9 * len(tx)):]
            entry["terminal_theta_tilde_x"] = float(tx[-1])
            entry["tail_max_theta_tilde_x"] = float(np.max(tail, initial=0.0))
            if res.get("convergence_threshold") is not None:
                entry["converged"] = bool(entry["tail_max_theta_tilde_x"] < res["convergence_threshold"])
        runs[run_id] = entry
    if "ideal" in trajs and "pirc" in trajs:
        report["ideal_vs_pirc_gap"] = _traj_gap(trajs["ideal"], trajs["pirc"])
    report["runs"] = dict(sorted(runs.items()))
    return report


def _batch_one(kind: str, seed_seq) -> dict:
    rng = np.random.default_rng(seed_seq)
    if kind == "sf":
        spec, f = random_sf_instance(rng)
        res = run_sf_analyze({"plant": spec, "filter": f})
        return {
            "plant": spec.to_json(),
            "filter": f.to_json(),
            "filtered_is_pirc": res["verdict"]["is_pirc"],
            "unfiltered_is_pirc": res["unfiltered"]["is_pirc"],
            "theta_residual": res["pirc"]["theta_residual"],
            "invariance_error": res["pirc"]["invariance_error"],
        }
    if kind == "of":
        spec = random_of_plant(rng)
        theta = monopoli_theta(spec)
        return {
            "plant": spec.to_json(),
            "theta": theta,
            "matching_residual": matching_residual(spec, theta),
            "unfiltered_is_pirc": of_unfiltered_verdict()["is_pirc"],
        }
    f = random_filter(rng)
    d = int(rng.integers(1, 4))
    D_m = Poly.from_roots(-np.arange(1.0, d + 1.0))
    cond = check_filter_conditions(f, D_m)
    return {"filter": f.to_json(), "d": d, "is_pirc": cond.is_pirc,
            "C1": cond.proper, "C2": cond.stable, "H_eu": str(heu_transfer(f, D_m))}


def run_batch(res: dict, jobs: int = 1) -> dict:
    children = np.random.SeedSequence(res["seed"]).spawn(res["count"])
    kind = res["kind"]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_batch_one, [kind] * len(children), children))
    else:
        results = [_batch_one(kind, c) for c in children]
    runs = {f"{kind}-{i:05d}": r for i, r in enumerate(results)}
    summary: dict = {"count": len(results)}
    if kind == "sf":
        summary["filtered_pirc"] = sum(r["filtered_is_pirc"] for r in results)
        summary["unfiltered_pirc"] = sum(r["unfiltered_is_pirc"] for r in results)
        summary["max_theta_residual"] = max(r["theta_residual"] for r in results)
        summary["max_invariance_error"] = max(r["invariance_error"] for r in results)
    elif kind == "of":
        summary["max_matching_residual"] = max(r["matching_residual"] for r in results)
        summary["unfiltered_pirc"] = sum(r["unfiltered_is_pirc"] for r in results)
    else:
        summary["pirc"] = sum(r["is_pirc"] for r in results)
    return {"summary": summary, "runs": dict(sorted(runs.items()))}


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pirc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"pirc {__version__}")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="seed for batch instances")
        p.add_argument("--verbose", action="store_true")
        if mode == "batch":
            p.add_argument("--jobs", type=int, default=1, help="worker processes")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    out_dir = Path(args.out)
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
        if args.seed is not None and args.seed < 0:
            raise ConfigError(["--seed: must be non-negative"])
        res = resolve_config(args.mode, cfg, args.seed)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        for p in exc.problems:
            print(f"invalid config: {p}", file=sys.stderr)
        return EXIT_CONFIG
    log.info("resolved %s config", args.mode)

    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        if args.mode == "sf-analyze":
            result = run_sf_analyze(res)
        elif args.mode == "of-analyze":
            result = run_of_analyze(res)
        elif args.mode == "check-filter":
            result = run_check_filter(res)
        elif args.mode == "simulate":
            result = run_simulate(res, out_dir)
        else:
            result = run_batch(res, jobs=max(1, args.jobs))
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    report = {
        "tool": {"name": "pirc", "version": __version__},
        "mode": args.mode,
        "config": resolved_json(res),
        "result": result,
    }
    (out_dir / "report.json").write_text(dumps(report))
    log.info("wrote %s", out_dir / "report.json")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
