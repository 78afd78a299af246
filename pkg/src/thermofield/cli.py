"""Command line driver: ``thermofield EXPERIMENT CONFIG [--set key=value ...]``.

Every run writes ``<output>.json`` (report), ``<output>.csv`` for tabular
experiments and ``<output>.manifest.json`` (config echo, versions, timings,
glue phase). Exit codes: 0 ok, 2 config error, 3 budget error, 4 numerical
failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__, cache, config, dyson, kms, model, spectral
from .dynamics import rte_diagnostic
from .fock import BudgetError
from .krylov import KrylovError
from .liouvillian import atom_operator

log = logging.getLogger("thermofield")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_NUMERIC = 0, 2, 3, 4

EXAMPLE_CONFIG = """\
# spin-boson reference model, p = 1/2
experiment = "validate"
seed = 0
output = "spin_boson"

[model]
beta = 1.0
lambda = 0.05
energies = [0.0, 1.0]

[[model.coupling]]
G = "sigma_x"
p = 0.5
cutoff = 1.0

[grid]
kind = "midpoint"
u_max = 4.0
M = 8

[truncation]
n_total_max = 2
"""


class Result:
    """Collected outputs of one experiment."""

    def __init__(self):
        self.report: dict = {}
        self.header: tuple | None = None
        self.rows: list = []


def _jsonable(x):
    if dataclasses.is_dataclass(x) and not isinstance(x, type):
        return {f.name: _jsonable(getattr(x, f.name)) for f in dataclasses.fields(x)}
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        if np.iscomplexobj(x):
            return {"re": x.real.tolist(), "im": x.imag.tolist()}
        return x.tolist()
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    return x


def _bundle(cfg: config.RunConfig, use_cache: bool, spec=None):
    spec = cfg.model if spec is None else spec
    if use_cache:
        b, hit = cache.cached_assemble(spec, cfg.grid, cfg.n_total_max)
        log.info("operator cache %s", "hit" if hit else "miss")
        return b
    from .liouvillian import build
    return build(spec, cfg.grid, cfg.n_total_max)


# ---------------------------------------------------------------------------
# experiments


def _validate(cfg, res, use_cache):
    rep = model.validate_a1(cfg.model)
    res.report = {"status": "PASS" if rep.passed else "FAIL", "checks": rep.as_dict(),
                  "fgr_value": model.fgr_value(cfg.model)}


def _spectrum(cfg, res, use_cache):
    b = _bundle(cfg, use_cache)
    eig = spectral.low_spectrum(b.L_lambda, int(cfg.params["count"]))
    res.report = {"dim": b.dim, "eigenvalues": eig.eigenvalues, "residuals": eig.residuals}


def _kms(cfg, res, use_cache):
    b = _bundle(cfg, use_cache)
    psi, info = kms.interacting_kms_vector(b, tol=float(cfg.params["tol"]), return_info=True)
    rec = kms.measure(b, tol=float(cfg.params["tol"]))
    res.report = {"dim": b.dim, "record": dict(zip(kms.SweepRecord.CSV_HEADER, rec.row())),
                  "krylov": info}


def _sweep_point(args):
    template, beta, lambdas, grid_table, n = args
    grid = config.grid_from_table(grid_table, template)
    return kms.overlap_sweep(template, [beta], lambdas, grid, n)


def _overlap_sweep(cfg, res, use_cache):
    betas = [float(b) for b in cfg.params["betas"]]
    lambdas = [float(x) for x in cfg.params["lambdas"]]
    jobs = [(cfg.model, b, lambdas, cfg.grid_table, cfg.n_total_max) for b in betas]
    workers = max(1, int(cfg.params["workers"]))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
            parts = list(ex.map(_sweep_point, jobs))  # map keeps input order
    else:
        parts = [_sweep_point(j) for j in jobs]
    records = [r for part in parts for r in part]
    res.header = kms.SweepRecord.CSV_HEADER
    res.rows = [r.row() for r in records]
    errors = [(r.beta, r.lam, r.extras["error"]) for r in records if "error" in r.extras]
    res.report = {"points": len(records), "errors": errors}
    if errors and len(errors) == len(records):
        raise ArithmeticError(f"every sweep point failed, first: {errors[0][2]}")


def _fgr(cfg, res, use_cache):
    g0 = spectral.gamma0_matrix(cfg.model)
    res.report = {"fgr_value": model.fgr_value(cfg.model), "gap": g0.gap,
                  "explicit_lower_bound": spectral.explicit_lower_bound(cfg.model),
                  "matrix": g0.matrix}


def _lso(cfg, res, use_cache):
    b = _bundle(cfg, use_cache)
    eps = [float(e) for e in cfg.params["epsilons"]]
    mats = [spectral.regularized_lso(b, e) for e in eps]
    exact = spectral.gamma0_matrix(cfg.model).matrix
    res.header = ("epsilon", "max_entry_error")
    res.rows = [(e, float(np.max(np.abs(K - exact)))) for e, K in zip(eps, mats)]
    res.report = {"epsilons": eps, "gamma0": exact}
    if len(mats) == 3:
        ext = spectral.richardson(mats)
        res.report["extrapolated"] = ext
        res.report["extrapolation_error"] = float(np.max(np.abs(ext - exact)) / np.max(np.abs(exact)))


def _pc_params(cfg, gamma0):
    p = cfg.params
    return spectral.choose_pc_parameters(cfg.model.lam, float(p["nu"]), float(p["e"]),
                                         float(p["t"]), gamma0)


def _virial(cfg, res, use_cache):
    b = _bundle(cfg, use_cache)
    g0 = spectral.gamma0_matrix(cfg.model).gap
    psi, vals = spectral.kernel_vector(b)
    out = spectral.virial_check(b, _pc_params(cfg, g0), psi)
    res.report = {"virial": out, "kernel_eigenvalues": vals}


def _evolve(cfg, res, use_cache):
    b = _bundle(cfg, use_cache)
    spec = cfg.model
    d = spec.atom.dim
    obs = cfg.params["observable"]
    if obs != "excited":
        raise config.ConfigError("only the 'excited' population observable is available",
                                 "params.observable")
    P1 = np.zeros((d, d))
    P1[1, 1] = 1.0
    A = atom_operator(spec, b.basis, P1)
    init = np.zeros(b.dim, dtype=complex)
    init[(1 * d + 1) * b.basis.dim] = 1.0
    r = rte_diagnostic(b, init, A, float(cfg.params["T"]), int(cfg.params["samples"]))
    tr = r.trajectory
    res.header = ("time", "value", "cesaro")
    res.rows = list(zip(tr.times.tolist(), tr.values.tolist(), tr.cesaro.tolist()))
    res.report = {"deviation": r.deviation, "initial_deviation": r.initial_deviation,
                  "ratio": r.deviation / r.initial_deviation if r.initial_deviation else None,
                  "trend": r.trend, "equilibrium_value": r.equilibrium_value,
                  "recurrence_time": r.recurrence_time}


def _dyson_bound(cfg, res, use_cache):
    fv = dyson.finite_volume_model(cfg.model, float(cfg.params["L"]))
    rows = dyson.bound_table(fv, cfg.params["betas"], cfg.params["lambdas"], cfg.params["two_ms"],
                             cfg.n_total_max)
    res.header = dyson.BOUND_CSV_HEADER
    res.rows = rows
    res.report = {"n_cut": fv.n_cut, "shells": int(fv.modes.energies.size),
                  "all_hold": all(r[6] >= 0 for r in rows)}


def _dyson_oracle(cfg, res, use_cache):
    fv = dyson.finite_volume_model(cfg.model, float(cfg.params["L"]))
    part = dyson.SegmentPartition(2, cfg.model.beta)
    rep = dyson.trace_inequality_checks(200, seed=cfg.seed, fv=fv, n_total_max=cfg.n_total_max)
    res.report = {"omega_q_exact": dyson.omega_q_exact(fv, cfg.n_total_max),
                  "omega_q_bound_2M2": dyson.omega_q_bound(fv, part),
                  "atomic_tail": dyson.atomic_tail(cfg.model.atom, cfg.model.beta, 2),
                  "trace_checks_ok": rep.ok, "violations": rep.violations,
                  "partition_ratios": rep.partition_ratios}


def _wick_test(cfg, res, use_cache):
    p = cfg.params
    rng = np.random.default_rng(cfg.seed)
    beta = cfg.model.beta
    ms = dyson.single_mode(float(p["E"]), 1.0, beta)
    res.header = ("trial", "points", "wick", "brute_force", "rel_error")
    for k in range(int(p["trials"])):
        times = np.sort(rng.uniform(0, beta, int(p["points"])))
        alphas = [0] * times.size
        w = dyson.wick_expectation(ms, alphas, times)
        bf = dyson.brute_force_expectation(ms, alphas, times, int(p["n_max"]))
        res.rows.append((k, times.size, w, bf, abs(w - bf) / abs(bf)))
    res.report = {"max_rel_error": max(r[4] for r in res.rows)}


def _pc_probe(cfg, res, use_cache):
    b = _bundle(cfg, use_cache)
    g0 = spectral.gamma0_matrix(cfg.model).gap
    params = _pc_params(cfg, g0)
    out = spectral.pc_positivity_probe(b, params, tuple(cfg.params["window"]), gamma0=g0)
    res.report = {"probe": out, "parameters": params}


EXPERIMENTS = {
    "validate": _validate, "spectrum": _spectrum, "kms": _kms, "overlap-sweep": _overlap_sweep,
    "fgr": _fgr, "lso": _lso, "virial": _virial, "evolve": _evolve,
    "dyson-bound": _dyson_bound, "dyson-oracle": _dyson_oracle, "wick-test": _wick_test,
    "pc-probe": _pc_probe,
}


# ---------------------------------------------------------------------------
# driver


def _versions() -> dict:
    out = {"thermofield": __version__, "python": platform.python_version(),
           "numpy": np.__version__, "scipy": scipy.__version__}
    try:
        import numba
        out["numba"] = numba.__version__
    except ImportError:
        out["numba"] = None
    return out


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def run(cfg: config.RunConfig, use_cache: bool = True, output: str | None = None) -> dict:
    """Execute one experiment and write its files; returns the manifest."""
    np.random.seed(cfg.seed)
    prefix = Path(output or cfg.output)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    res = Result()
    t0 = time.perf_counter()
    EXPERIMENTS[cfg.experiment](cfg, res, use_cache)
    elapsed = time.perf_counter() - t0
    files = []
    report = {"schema_version": SCHEMA_VERSION, "experiment": cfg.experiment, **res.report}
    jpath = prefix.with_name(prefix.name + ".json")
    jpath.write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
    files.append(str(jpath))
    if res.header is not None:
        cpath = prefix.with_name(prefix.name + ".csv")
        _write_csv(cpath, res.header, res.rows)
        files.append(str(cpath))
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "experiment": cfg.experiment,
        "config": cfg.raw,
        "glue_phase": cfg.model.glue_phase,
        "seed": cfg.seed,
        "versions": _versions(),
        "timings": {"experiment_seconds": elapsed},
        "outputs": files,
    }
    mpath = prefix.with_name(prefix.name + ".manifest.json")
    mpath.write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    return manifest


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="thermofield", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run",) + tuple(EXPERIMENTS):
        sp_ = sub.add_parser(name, help="run the experiment named in the config" if name == "run"
                             else f"run the {name} experiment")
        sp_.add_argument("config", help="TOML configuration file")
        sp_.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                         help="override a config entry, e.g. model.beta=2.0")
        sp_.add_argument("-o", "--output", help="output path prefix")
        sp_.add_argument("--no-cache", action="store_true", help="always assemble operators")
    sub.add_parser("example-config", help="print a spin-boson example configuration")
    vc = sub.add_parser("cache-verify", help="check a cache file's header and checksum")
    vc.add_argument("path")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "example-config":
        sys.stdout.write(EXAMPLE_CONFIG)
        return EXIT_OK
    if args.command == "cache-verify":
        ok, msg = cache.verify_file(args.path)
        print(msg)
        return EXIT_OK if ok else EXIT_NUMERIC
    try:
        text = Path(args.config).read_text()
        raw = config.tomllib.loads(text)
        if args.command != "run":
            raw["experiment"] = args.command
        raw = config.apply_overrides(raw, args.set)
        cfg = config.from_dict(raw, text)
    except (OSError, config.tomllib.TOMLDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except config.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        manifest = run(cfg, use_cache=not args.no_cache, output=args.output)
    except config.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetError as exc:
        print(f"budget error: {exc} (dimension {exc.dim})", file=sys.stderr)
        return EXIT_BUDGET
    except (ArithmeticError, KrylovError, spectral.EigenError, np.linalg.LinAlgError,
            model.QuadratureError, cache.CacheError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for f in manifest["outputs"]:
        print(f)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
