"""Experiment specifications, algorithm dispatch, presets and report files.

An experiment spec is a JSON object::

    {
      "schema": 1,
      "system": {"num_aps": 8, "antennas_per_ap": 8, "num_devices": 100,
                 "sig_len": 9, "max_delay": 1},
      "algorithms": [{"name": "alg1"},
                     {"name": "alg3", "label": "alg3-q4", "options": {"max_iters": 1},
                      "fronthaul": {"bits": 4}}],
      "sweep": {"axis": "T", "values": [0, 1, 2], "fixed_seq_len": 10},
      "trials": 200,
      "seed": 0
    }

Sweep axes: ``none``, ``T`` (optionally keeping L+T fixed), ``M``
(keeping ``total_antennas`` fixed), ``total_antennas`` (M fixed),
``bits`` (fronthaul bits of every algorithm that has a fronthaul) and
``iterations`` (iteration budget of the distributed solvers).
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines import BaselineOptions, bcd_solve, cde_solve
from .centralized import SolveOptions, alg1_solve
from .distributed import DistributedOptions, alg2_solve, alg3_solve
from .evaluation import DetectionReport, run_monte_carlo
from .fronthaul import QuantizerSpec, quantize_observations
from .model import SystemConfig

SCHEMA_VERSION = 1
ALGORITHMS = ("alg1", "alg2", "alg3", "cde", "bcd")
SWEEP_AXES = ("none", "T", "M", "total_antennas", "bits", "iterations")
_OPTION_TYPES = {"alg1": SolveOptions, "alg2": DistributedOptions, "alg3": DistributedOptions,
                 "cde": BaselineOptions, "bcd": BaselineOptions}


class SpecError(ValueError):
    """Invalid experiment specification; the message names the field."""


@dataclass(frozen=True)
class AlgorithmSpec:
    name: str
    label: str = ""
    options: dict = field(default_factory=dict)
    fronthaul_bits: int | None = None

    def __post_init__(self):
        if self.name not in ALGORITHMS:
            raise SpecError(f"algorithms[].name: unknown algorithm {self.name!r} (expected one of {', '.join(ALGORITHMS)})")
        if not self.label:
            object.__setattr__(self, "label", self.name)
        if self.fronthaul_bits is not None and self.name not in ("alg1", "alg3"):
            raise SpecError(f"algorithms[{self.label}].fronthaul: only alg1 and alg3 use the fronthaul model")
        try:
            self.solver_options()
        except (TypeError, ValueError) as exc:
            raise SpecError(f"algorithms[{self.label}].options: {exc}") from exc

    def solver_options(self):
        return _OPTION_TYPES[self.name](**self.options)

    def with_bits(self, bits: int) -> "AlgorithmSpec":
        return replace(self, fronthaul_bits=int(bits)) if self.fronthaul_bits is not None else self

    def with_iterations(self, iters: int) -> "AlgorithmSpec":
        if self.name in ("alg2", "alg3"):
            return replace(self, options={**self.options, "max_iters": int(iters)})
        return self


@dataclass
class RunResult:
    b: np.ndarray
    iterations: int
    raw_bits: int = 0
    huffman_bits: int = 0
    trace: list = field(default_factory=list)


def run_algorithm(alg: AlgorithmSpec, data) -> RunResult:
    """Run one configured detector on one data set."""
    opts = alg.solver_options()
    if alg.name == "alg1":
        raw = huff = 0
        if alg.fronthaul_bits is not None:
            data, ledger = quantize_observations(data, alg.fronthaul_bits)
            raw, huff = ledger.raw_total, ledger.huffman_total
        r = alg1_solve(data, opts)
        trace = [{"iter": t["iter"], "objective": t["objective"], "residual": t["change"]} for t in r.trace]
        return RunResult(r.b, r.iterations, raw, huff, trace)
    if alg.name in ("alg2", "alg3"):
        if alg.name == "alg2":
            r = alg2_solve(data, opts)
            raw = huff = 0
        else:
            q = None if alg.fronthaul_bits is None else QuantizerSpec(alg.fronthaul_bits, 0.0, 1.0)
            r = alg3_solve(data, opts, uplink=q, downlink=q)
            raw, huff = r.ledger.raw_total, r.ledger.huffman_total
        trace = [{"iter": t["iter"], "objective": t["objective"], "residual": t["residual"]} for t in r.trace]
        return RunResult(r.b, r.iterations, raw, huff, trace)
    solver = cde_solve if alg.name == "cde" else bcd_solve
    r = solver(data, opts)
    return RunResult(r.b, r.sweeps, 0, 0, [])


@dataclass
class ExperimentSpec:
    system: SystemConfig
    algorithms: list
    sweep_axis: str = "none"
    sweep_values: list = field(default_factory=list)
    fixed_seq_len: int | None = None
    total_antennas: int | None = None
    trials: int = 100
    seed: int = 0
    out: str = "results"
    workers: int | None = None

    def points(self):
        """Yield (value, SystemConfig, algorithms) for every sweep point."""
        if self.sweep_axis == "none":
            yield None, self.system, self.algorithms
            return
        for v in self.sweep_values:
            cfg, algs = self.system, self.algorithms
            if self.sweep_axis == "T":
                L = self.fixed_seq_len - v if self.fixed_seq_len is not None else cfg.sig_len
                cfg = cfg.replace(max_delay=int(v), sig_len=int(L))
            elif self.sweep_axis == "M":
                cfg = cfg.replace(num_aps=int(v), antennas_per_ap=int(self.total_antennas // v))
            elif self.sweep_axis == "total_antennas":
                cfg = cfg.replace(antennas_per_ap=int(v // cfg.num_aps))
            elif self.sweep_axis == "bits":
                algs = [a.with_bits(v) for a in algs]
            elif self.sweep_axis == "iterations":
                algs = [a.with_iterations(v) for a in algs]
            yield v, cfg, algs

    def scaled(self, scale: float) -> "ExperimentSpec":
        """Shrink the device count and the number of trials by ``scale``."""
        if not scale > 0:
            raise SpecError(f"scale must be positive, got {scale!r}")
        K = max(2, int(round(self.system.num_devices * scale)))
        return replace(self, system=self.system.replace(num_devices=K),
                       trials=max(1, int(round(self.trials * scale))))


def _require(obj: dict, key: str, kind, where: str):
    if key not in obj:
        raise SpecError(f"{where}{key}: missing required field")
    value = obj[key]
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise SpecError(f"{where}{key}: expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}")
    return value


def spec_from_dict(d: dict) -> ExperimentSpec:
    if not isinstance(d, dict):
        raise SpecError("spec: top level must be a JSON object")
    known = {"schema", "system", "algorithms", "sweep", "trials", "seed", "out", "workers"}
    extra = set(d) - known
    if extra:
        raise SpecError(f"{sorted(extra)[0]}: unknown top-level field")
    schema = d.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise SpecError(f"schema: unsupported version {schema!r} (expected {SCHEMA_VERSION})")
    system = _require(d, "system", dict, "")
    try:
        cfg = SystemConfig.from_dict(system)
    except (TypeError, ValueError) as exc:
        raise SpecError(f"system: {exc}") from exc
    algs_raw = _require(d, "algorithms", list, "")
    if not algs_raw:
        raise SpecError("algorithms: at least one algorithm is required")
    algs = []
    for i, a in enumerate(algs_raw):
        if not isinstance(a, dict):
            raise SpecError(f"algorithms[{i}]: expected an object")
        bad = set(a) - {"name", "label", "options", "fronthaul"}
        if bad:
            raise SpecError(f"algorithms[{i}].{sorted(bad)[0]}: unknown field")
        name = _require(a, "name", str, f"algorithms[{i}].")
        bits = None
        if a.get("fronthaul") is not None:
            fh = a["fronthaul"]
            if not isinstance(fh, dict) or not isinstance(fh.get("bits"), int) or fh["bits"] < 1:
                raise SpecError(f"algorithms[{i}].fronthaul.bits: expected a positive integer")
            bits = fh["bits"]
        options = a.get("options", {})
        if not isinstance(options, dict):
            raise SpecError(f"algorithms[{i}].options: expected an object")
        try:
            algs.append(AlgorithmSpec(name=name, label=a.get("label", ""), options=options, fronthaul_bits=bits))
        except SpecError as exc:
            raise SpecError(str(exc).replace("algorithms[]", f"algorithms[{i}]", 1)) from exc
    labels = [a.label for a in algs]
    if len(set(labels)) != len(labels):
        raise SpecError("algorithms[].label: labels must be unique")

    sweep = d.get("sweep", {"axis": "none"})
    axis = sweep.get("axis", "none")
    if axis not in SWEEP_AXES:
        raise SpecError(f"sweep.axis: unknown axis {axis!r} (expected one of {', '.join(SWEEP_AXES)})")
    values = sweep.get("values", [])
    if axis != "none" and (not isinstance(values, list) or not values
                           or not all(isinstance(v, int) and v >= 0 for v in values)):
        raise SpecError("sweep.values: expected a non-empty list of non-negative integers")
    fixed_seq_len = sweep.get("fixed_seq_len")
    total = sweep.get("total_antennas")
    if axis == "T" and fixed_seq_len is not None:
        if any(v >= fixed_seq_len for v in values):
            raise SpecError("sweep.values: every T must be smaller than fixed_seq_len")
    if axis == "M":
        if not isinstance(total, int):
            raise SpecError("sweep.total_antennas: required for the M axis")
        if any(v < 1 or total % v for v in values):
            raise SpecError("sweep.values: total_antennas must be divisible by every M")
    if axis == "total_antennas" and any(v % cfg.num_aps or v < cfg.num_aps for v in values):
        raise SpecError("sweep.values: every total must be a positive multiple of num_aps")
    if axis == "bits" and not any(a.fronthaul_bits is not None for a in algs):
        raise SpecError("sweep.axis: the bits axis needs at least one algorithm with a fronthaul")

    trials = d.get("trials", 100)
    if not isinstance(trials, int) or trials < 1:
        raise SpecError("trials: expected a positive integer")
    seed = d.get("seed", 0)
    if not isinstance(seed, int):
        raise SpecError("seed: expected an integer")
    workers = d.get("workers")
    if workers is not None and (not isinstance(workers, int) or workers < 1):
        raise SpecError("workers: expected a positive integer")
    return ExperimentSpec(system=cfg, algorithms=algs, sweep_axis=axis, sweep_values=list(values),
                          fixed_seq_len=fixed_seq_len, total_antennas=total, trials=trials, seed=seed,
                          out=d.get("out", "results"), workers=workers)


def spec_from_json(text: str) -> ExperimentSpec:
    """Parse a spec; JSON syntax errors propagate as json.JSONDecodeError."""
    return spec_from_dict(json.loads(text))


# -- presets ------------------------------------------------------------------

_FULL_SYSTEM = {"num_aps": 8, "antennas_per_ap": 8, "num_devices": 100, "sig_len": 9, "max_delay": 1}
_CENTRAL = [{"name": "alg1"}, {"name": "cde"}, {"name": "bcd"}]

PRESETS = {
    "fig1": {"system": _FULL_SYSTEM, "algorithms": _CENTRAL, "trials": 1000},
    "fig2a": {"system": _FULL_SYSTEM, "algorithms": _CENTRAL, "trials": 1000,
              "sweep": {"axis": "T", "values": list(range(9)), "fixed_seq_len": 10}},
    "fig2b": {"system": _FULL_SYSTEM, "algorithms": _CENTRAL, "trials": 1000,
              "sweep": {"axis": "M", "values": [1, 2, 4, 8, 16], "total_antennas": 64}},
    "fig3": {"system": _FULL_SYSTEM, "trials": 1000,
             "algorithms": [{"name": "alg1"}, {"name": "alg2"}, {"name": "alg3"}],
             "sweep": {"axis": "iterations", "values": [1, 2, 3, 4, 5, 6, 8, 10]}},
    "fig4": {"system": _FULL_SYSTEM, "trials": 1000,
             "algorithms": [{"name": "alg1"},
                            {"name": "alg1", "label": "alg1-q14", "fronthaul": {"bits": 14}},
                            {"name": "alg1", "label": "alg1-q16", "fronthaul": {"bits": 16}},
                            {"name": "alg3", "label": "alg3-q4-i1", "options": {"max_iters": 1},
                             "fronthaul": {"bits": 4}}],
             "sweep": {"axis": "T", "values": list(range(9)), "fixed_seq_len": 10}},
    "fig5": {"system": _FULL_SYSTEM, "trials": 1000,
             "algorithms": [{"name": "alg1", "label": "alg1-q11", "fronthaul": {"bits": 11}},
                            {"name": "alg1", "label": "alg1-q14", "fronthaul": {"bits": 14}},
                            {"name": "alg1", "label": "alg1-q16", "fronthaul": {"bits": 16}},
                            {"name": "alg3", "label": "alg3-q4", "fronthaul": {"bits": 4}}],
             "sweep": {"axis": "iterations", "values": [1, 2, 3, 4, 5]}},
    "bits": {"system": _FULL_SYSTEM, "trials": 1,
             "algorithms": [{"name": "alg1", "label": "alg1-q14", "fronthaul": {"bits": 14}},
                            {"name": "alg3", "label": "alg3-q4-i1", "options": {"max_iters": 1},
                             "fronthaul": {"bits": 4}}]},
}


def preset_spec(name: str) -> ExperimentSpec:
    if name not in PRESETS:
        raise SpecError(f"preset: unknown preset {name!r} (expected one of {', '.join(PRESETS)})")
    return spec_from_dict({**PRESETS[name], "out": f"results/{name}"})


# -- outputs ------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(float(x))
    return str(x)


def _report_summary(rep: DetectionReport) -> dict:
    ee = rep.equal_error
    return {"equal_error_gamma": ee.gamma, "p_err": ee.p_err, "pm": ee.pm, "pf": ee.pf,
            "degenerate": ee.degenerate, "failures": rep.failures, "mean_iters": rep.mean_iters,
            "raw_bits": rep.raw_bits, "huffman_bits": rep.huffman_bits}


def write_reports(out_dir: Path, reports: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "roc.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "gamma", "pm", "pf"])
        for label, rep in reports.items():
            for g, pm, pf in zip(rep.gamma_grid, rep.pm, rep.pf):
                w.writerow([label, _fmt(float(g)), _fmt(float(pm)), _fmt(float(pf))])
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "equal_error_gamma", "p_err", "mean_iters", "raw_bits", "huffman_bits", "wall_ms"])
        for label, rep in reports.items():
            w.writerow([label, _fmt(rep.equal_error.gamma), _fmt(rep.p_err), _fmt(rep.mean_iters),
                        _fmt(rep.raw_bits), _fmt(rep.huffman_bits), f"{rep.wall_ms:.3f}"])
    with open(out_dir / "trace.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "trial", "iter", "objective", "residual"])
        for label, rep in reports.items():
            for o in rep.trials:
                for row in o.trace:
                    w.writerow([label, o.trial, row["iter"], _fmt(float(row["objective"])),
                                _fmt(float(row["residual"]))])


def run_experiment(spec: ExperimentSpec, out: str | Path | None = None, workers: int | None = None,
                   echo=print) -> int:
    """Run every sweep point, write CSV/JSON reports and return an exit status
    (0 on success, 1 if any trial of any algorithm failed)."""
    out_dir = Path(out if out is not None else spec.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    workers = workers if workers is not None else spec.workers
    points = []
    failed = False
    started = time.time()
    for value, cfg, algs in spec.points():
        reports = run_monte_carlo(cfg, algs, spec.trials, spec.seed, workers)
        sub = out_dir if value is None else out_dir / f"{spec.sweep_axis}={value}"
        write_reports(sub, reports)
        failed |= any(r.failures for r in reports.values())
        digest = "  ".join(f"{lbl}: p_err={r.p_err:.4f}" for lbl, r in reports.items())
        echo(f"[{spec.sweep_axis}={value}] {digest}" if value is not None else digest)
        points.append({"axis": spec.sweep_axis, "value": value, "system": asdict(cfg),
                       "algorithms": {lbl: _report_summary(r) for lbl, r in reports.items()}})
    summary = {
        "schema": SCHEMA_VERSION,
        "trials": spec.trials,
        "seed": spec.seed,
        "points": points,
        "metadata": {"started_unix": round(started, 3)},
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=_json_default))
    return 1 if failed else 0


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
