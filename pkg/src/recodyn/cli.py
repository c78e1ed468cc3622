"""
Command-line front end.

    recodyn solve --config model.json --out results/

Subcommands: solve, integrate, compare, ld, equilibrium, discrete.
Exit codes: 0 success, 1 failed comparison, 2 bad configuration.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .dynamics import (
    CombinedFlow,
    IntegrationError,
    ModelSpec,
    equilibrium,
    full_rhs,
    integrate_rk4,
    iterate_interference,
    site_equilibria,
)
from .measure import Measure, random_measure
from .mutation import GeneratorError, MutationModel
from .recombination import RecombinationRates, span_links, t_operators
from .selection import FitnessModel
from .type_space import TypeSpace, links_of

SCHEMA_VERSION = "1"
DEFAULTS = {"dt": 1e-3, "threshold": 1e-6, "seed": 0, "generations": 10}
KNOWN_KEYS = {"sites", "rho", "mutation", "fitness", "initial", "times", "dt", "threshold",
              "seed", "crossover_probs", "generations"}

logger = logging.getLogger("recodyn")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    model: ModelSpec
    times: np.ndarray
    dt: float
    threshold: float
    seed: int
    generations: int
    document: dict

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.document == other.document

    @property
    def model_hash(self) -> str:
        return hashlib.sha256(emit_config(self).encode()).hexdigest()[:16]


# -- parsing -----------------------------------------------------------------

def _require(doc: dict, key: str):
    if key not in doc:
        raise ConfigError(f"/{key}: required field missing")
    return doc[key]


def _floats(value, path: str) -> list[float]:
    if not isinstance(value, list):
        raise ConfigError(f"{path}: expected a list of numbers")
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _parse_times(spec, path="/times") -> tuple[np.ndarray, Any]:
    if isinstance(spec, list):
        grid = np.asarray(_floats(spec, path))
        canon: Any = grid.tolist()
    elif isinstance(spec, dict) and "linear" in spec:
        lin = spec["linear"]
        stop, num = float(_require_in(lin, "stop", path + "/linear")), int(_require_in(lin, "num", path + "/linear"))
        grid = np.linspace(0.0, stop, num)
        canon = {"linear": {"stop": stop, "num": num}}
    elif isinstance(spec, dict) and "log" in spec:
        lg = spec["log"]
        first = float(_require_in(lg, "min", path + "/log"))
        stop = float(_require_in(lg, "stop", path + "/log"))
        num = int(_require_in(lg, "num", path + "/log"))
        if num < 2 or not 0 < first < stop:
            raise ConfigError(f"{path}/log: need num >= 2 and 0 < min < stop")
        grid = np.concatenate([[0.0], np.geomspace(first, stop, num - 1)])
        canon = {"log": {"min": first, "stop": stop, "num": num}}
    else:
        raise ConfigError(f"{path}: expected a list, {{'linear': ...}} or {{'log': ...}}")
    if grid.size == 0 or grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
        raise ConfigError(f"{path}: time grid must start at 0 and be strictly increasing")
    return grid, canon


def _require_in(d, key, path):
    if not isinstance(d, dict) or key not in d:
        raise ConfigError(f"{path}/{key}: required field missing")
    return d[key]


def _parse_initial(spec, space: TypeSpace, seed: int) -> tuple[Measure, Any]:
    path = "/initial"
    try:
        if spec == "uniform":
            return Measure(space, np.full(space.shape, 1.0 / space.total_size)), "uniform"
        if isinstance(spec, dict) and "weights" in spec:
            w = _floats(spec["weights"], path + "/weights")
            return Measure(space, w), {"weights": w}
        if isinstance(spec, dict) and "product" in spec:
            factors = spec["product"]
            if not isinstance(factors, list) or len(factors) != space.n_sites:
                raise ConfigError(f"{path}/product: need one vector per site")
            vecs = [_floats(f, f"{path}/product/{i}") for i, f in enumerate(factors)]
            w = np.asarray(vecs[0])
            for v in vecs[1:]:
                w = np.multiply.outer(w, np.asarray(v))
            return Measure(space, w), {"product": vecs}
        if spec == "random" or (isinstance(spec, dict) and "random" in spec):
            rng = np.random.default_rng(seed)
            return random_measure(space, rng), "random"
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    raise ConfigError(f"{path}: expected 'uniform', 'random', {{'weights': ...}} or {{'product': ...}}")


def parse_config(text: str, seed: int | None = None, dt: float | None = None,
                 threshold: float | None = None) -> RunConfig:
    """Parse and validate a JSON run configuration; keyword overrides win."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"/: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError("/: expected a JSON object")
    unknown = sorted(set(doc) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"/{unknown[0]}: unknown field")
    doc = {**DEFAULTS, **doc}
    if seed is not None:
        doc["seed"] = seed
    if dt is not None:
        doc["dt"] = dt
    if threshold is not None:
        doc["threshold"] = threshold

    sites = _require(doc, "sites")
    if not isinstance(sites, list) or not all(isinstance(m, int) for m in sites):
        raise ConfigError("/sites: expected a list of integers")
    try:
        space = TypeSpace(tuple(sites))
    except ValueError as exc:
        raise ConfigError(f"/sites: {exc}") from None

    rho = _floats(_require(doc, "rho"), "/rho")
    if len(rho) != space.n_links:
        raise ConfigError(f"/rho: expected {space.n_links} rates, got {len(rho)}")
    try:
        rates = RecombinationRates(tuple(rho))
    except ValueError as exc:
        raise ConfigError(f"/rho: {exc}") from None

    mutation = None
    mut_doc = doc.get("mutation")
    if mut_doc is not None:
        matrices = _require_in(mut_doc, "matrices", "/mutation")
        scales = mut_doc.get("mu", [1.0] * space.n_sites)
        if not isinstance(matrices, list) or len(matrices) != space.n_sites:
            raise ConfigError(f"/mutation/matrices: need one matrix per site ({space.n_sites})")
        scales = _floats(scales, "/mutation/mu")
        try:
            mutation = MutationModel.from_matrices(matrices, scales)
            mutation.check_space(space)
        except (GeneratorError, ValueError) as exc:
            raise ConfigError(f"/mutation: {exc}") from None
        mut_doc = {"matrices": [np.asarray(g.matrix).tolist() for g in mutation.generators],
                   "mu": [g.scale for g in mutation.generators]}

    fitness = None
    fit_doc = doc.get("fitness")
    if fit_doc is not None:
        if not isinstance(fit_doc, list) or len(fit_doc) != space.n_sites:
            raise ConfigError(f"/fitness: need one vector per site ({space.n_sites})")
        vecs = [_floats(v, f"/fitness/{i}") for i, v in enumerate(fit_doc)]
        try:
            fitness = FitnessModel(tuple(np.asarray(v) for v in vecs))
            fitness.check_space(space)
        except ValueError as exc:
            raise ConfigError(f"/fitness: {exc}") from None
        fit_doc = vecs

    try:
        seed_value = int(doc["seed"])
        dt_value = float(doc["dt"])
        threshold_value = float(doc["threshold"])
        generations = int(doc["generations"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"/: bad scalar field ({exc})") from None
    if not dt_value > 0:
        raise ConfigError("/dt: must be positive")

    initial, init_doc = _parse_initial(_require(doc, "initial"), space, seed_value)
    times, times_doc = _parse_times(_require(doc, "times"))

    probs = doc.get("crossover_probs")
    if probs is not None:
        probs = _floats(probs, "/crossover_probs")
        if len(probs) != space.n_links or any(p < 0 for p in probs) or sum(probs) > 1:
            raise ConfigError("/crossover_probs: need one nonnegative probability per link, summing to <= 1")

    try:
        model = ModelSpec(space, rates, initial, mutation, fitness, tuple(probs) if probs is not None else None)
    except ValueError as exc:
        raise ConfigError(f"/: {exc}") from None

    canonical = {
        "sites": list(space.cardinalities),
        "rho": list(rates.rho),
        "mutation": mut_doc,
        "fitness": fit_doc,
        "initial": init_doc,
        "times": times_doc,
        "dt": dt_value,
        "threshold": threshold_value,
        "seed": seed_value,
        "generations": generations,
        "crossover_probs": probs,
    }
    return RunConfig(model, times, dt_value, threshold_value, seed_value, generations, canonical)


def emit_config(config: RunConfig) -> str:
    """Canonical JSON text; parse_config(emit_config(c)) == c."""
    return json.dumps(config.document, sort_keys=True, indent=2)


# -- output ------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _header(config: RunConfig, argv: list[str]) -> list[str]:
    return [
        f"# schema_version: {SCHEMA_VERSION}",
        f"# seed: {config.seed}",
        f"# model_hash: {config.model_hash}",
        f"# command: {' '.join(argv)}",
    ]


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path, header: list[str], columns: list[str], rows) -> None:
    buf = io.StringIO()
    for line in header:
        buf.write(line + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(x) for x in row])
    write_atomic(path, buf.getvalue())


def write_json(path: Path, header: list[str], payload: dict) -> None:
    meta = dict(line[2:].split(": ", 1) for line in header)
    write_atomic(path, json.dumps({"meta": meta, **payload}, indent=2) + "\n")


def read_csv(path: Path) -> tuple[list[str], np.ndarray, dict[str, str]]:
    """Read a file written by write_csv: (columns, data, header fields)."""
    meta = {}
    lines = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                key, value = line[2:].rstrip("\n").split(": ", 1)
                meta[key] = value
            else:
                lines.append(line)
    reader = csv.reader(lines)
    columns = next(reader)
    data = np.array([[float(x) for x in row] for row in reader])
    return columns, data, meta


def _mask_label(mask: int) -> str:
    return "{" + ",".join(str(i) for i in links_of(mask)) + "}"


def state_columns(space: TypeSpace) -> list[str]:
    return [space.label(i) for i in range(space.total_size)]


# -- commands ----------------------------------------------------------------

def run_solve(config: RunConfig, out: Path, argv: list[str]) -> int:
    model = config.model
    flow = CombinedFlow(model)
    traj = flow.trajectory(config.times)
    header = _header(config, argv) + ["# solver: closed form", f"# closed_form_exact: {str(flow.exact).lower()}"]
    write_csv(out / "trajectory.csv", header, ["t"] + state_columns(model.space),
              (np.concatenate([[t], w]) for t, w in zip(traj.times, traj.weights)))
    n = 1 << model.space.n_links
    cols = ["t"] + [f"a{_mask_label(g)}" for g in range(n)] + [f"b{_mask_label(g)}" for g in range(n)]
    rows = [np.concatenate([[tab.t], tab.a, tab.b]) for tab in traj.coefficients]
    if traj.mean_fitness is not None:
        cols.append("mean_fitness")
        rows = [np.append(r, v) for r, v in zip(rows, traj.mean_fitness.values)]
    write_csv(out / "coefficients.csv", header, cols, rows)
    return 0


def run_integrate(config: RunConfig, out: Path, argv: list[str]) -> int:
    traj = integrate_rk4(config.model, float(config.times[-1]), config.dt, config.times)
    header = _header(config, argv) + [f"# solver: rk4 dt={_fmt(config.dt)}"]
    write_csv(out / "rk4.csv", header, ["t"] + state_columns(config.model.space),
              (np.concatenate([[t], w]) for t, w in zip(traj.times, traj.weights)))
    return 0


def compare_report(config: RunConfig) -> dict:
    flow = CombinedFlow(config.model)
    closed = flow.trajectory(config.times)
    try:
        numeric = integrate_rk4(config.model, float(config.times[-1]), config.dt, config.times)
    except IntegrationError as exc:
        return {"passed": False, "error": str(exc), "failed_at": exc.time,
                "threshold": config.threshold, "dt": config.dt}
    dev = np.abs(closed.weights - numeric.weights).max(axis=1)
    overall = float(dev.max())
    return {
        "dt": config.dt,
        "threshold": config.threshold,
        "times": closed.times.tolist(),
        "max_deviation": dev.tolist(),
        "overall_max_deviation": overall,
        "closed_form_exact": flow.exact,
        "passed": bool(overall < config.threshold),
    }


def run_compare(config: RunConfig, out: Path, argv: list[str]) -> int:
    report = compare_report(config)
    write_json(out / "compare.json", _header(config, argv), report)
    if not report.get("closed_form_exact", True):
        logger.warning("closed form is not exact for selection with a linked initial measure")
    if report["passed"]:
        logger.info("compare passed: max deviation %.3g < %.3g", report["overall_max_deviation"], config.threshold)
        return 0
    logger.error("compare failed: %s", report.get("error") or f"max deviation {report['overall_max_deviation']:.3g}")
    return 1


def ld_columns(space: TypeSpace) -> list[tuple[tuple[int, ...], tuple[int, ...], int]]:
    """(sites, values, G) for every gap-free span and every retained value tuple."""
    out = []
    for first in range(space.n_sites):
        for last in range(first, space.n_sites):
            sites = tuple(range(first, last + 1))
            cuts = span_links(space, first, last)
            for vals in np.ndindex(*[space.cardinalities[s] - 1 for s in sites]):
                out.append((sites, tuple(v + 1 for v in vals), cuts))
    return out


def ld_table(model: ModelSpec, times) -> tuple[list[str], np.ndarray]:
    space = model.space
    traj = CombinedFlow(model).trajectory(times)
    specs = ld_columns(space)
    recombination_only = model.mutation is None and model.fitness is None
    cols = ["t"] + [f"LD[{s[0]}-{s[-1]}]({','.join(map(str, v))})" for s, v, _ in specs]
    cut_list = sorted({g for _, _, g in specs})
    if recombination_only:
        cols += [f"b{_mask_label(g)}" for g in cut_list]
    rows = []
    for t, w, tab in zip(traj.times, traj.weights, traj.coefficients):
        tstack = t_operators(Measure(space, w))
        row = [t]
        for sites, vals, cuts in specs:
            tw = tstack[cuts].reshape(space.shape)
            idx = tuple(vals[sites.index(i)] if i in sites else slice(None) for i in range(space.n_sites))
            row.append(float(tw[idx].sum()))
        if recombination_only:
            row += [tab.b[g] for g in cut_list]
        rows.append(row)
    return cols, np.array(rows)


def run_ld(config: RunConfig, out: Path, argv: list[str]) -> int:
    cols, rows = ld_table(config.model, config.times)
    header = _header(config, argv) + ["# omitted_value: 0 at every site (the dependent choice)"]
    write_csv(out / "ld.csv", header, cols, rows)
    return 0


def run_equilibrium(config: RunConfig, out: Path, argv: list[str]) -> int:
    model = config.model
    eq = equilibrium(model)
    residual = full_rhs(model, eq).variation_norm()
    header = _header(config, argv)
    write_csv(out / "equilibrium.csv", header, state_columns(model.space), [eq.flat])
    write_json(out / "equilibrium.json", header, {
        "site_vectors": [v.tolist() for v in site_equilibria(model)],
        "rhs_variation_norm": residual,
    })
    return 0


def run_discrete(config: RunConfig, out: Path, argv: list[str]) -> int:
    model = config.model
    if model.crossover_probs is None:
        raise ConfigError("/crossover_probs: required for the discrete command")
    states = iterate_interference(model, config.generations)
    rows = (np.concatenate([[g], w]) for g, w in enumerate(states))
    write_csv(out / "discrete.csv", _header(config, argv), ["generation"] + state_columns(model.space), rows)
    return 0


COMMANDS = {
    "solve": run_solve,
    "integrate": run_integrate,
    "compare": run_compare,
    "ld": run_ld,
    "equilibrium": run_equilibrium,
    "discrete": run_discrete,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="recodyn", description=__doc__.strip().splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, type=Path, help="JSON model configuration")
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory")
    parser.add_argument("--dt", type=float, default=None, help="RK4 step (overrides config)")
    parser.add_argument("--threshold", type=float, default=None, help="compare pass threshold")
    parser.add_argument("--seed", type=int, default=None, help="seed for random initial measures")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {args.config}: {exc.strerror}") from None
        config = parse_config(text, seed=args.seed, dt=args.dt, threshold=args.threshold)
        return COMMANDS[args.command](config, args.out, ["recodyn"] + argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
