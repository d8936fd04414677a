"""Run orchestration: validated configs, solver dispatch, CSV/JSON artifacts.

A run evolves one local operator with any subset of the three solvers (tebd,
ed, gaussian), writes one CSV per solver plus a JSON manifest, and — when two
or more solvers ran — a comparison report with per-observable maximum errors
checked against the configured tolerances.  Presets are named bundles of runs
shipped with the package, each with a list of curve-level checks (saturation,
logarithmic growth, Trotter-order scaling, ...) evaluated on the solver
outputs.

Determinism contract: the CSV bytes produced by a run depend only on the
config, never on the thread count or on wall-clock state.  BLAS pools are
pinned to one thread while solvers execute, and the TEBD engine is bitwise
thread-invariant by construction.
"""

from __future__ import annotations

import csv
import dataclasses
import importlib.resources
import json
import logging
import math
import os
import platform
import time
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import scipy
from pydantic import (BaseModel, ConfigDict, Field, ValidationError,
                      field_validator, model_validator)
from threadpoolctl import threadpool_limits

from . import __version__
from .ed_oracle import (MAX_SITES, Propagator, check_size_guard,
                        dense_from_sites, schmidt_exact, xxz_hamiltonian_dense)
from .free_fermion import (ANTAL_SLOPE, GAUSSIAN_CSV_COLUMNS,
                           build_xx_hamiltonian, chain_modes, check_sandwich,
                           evolve_gaussian, fit_antal_growth, map_operator,
                           partition_fluctuation, partition_renyi2,
                           sandwich_bounds, to_state)
from .operator_mps import TruncationPolicy, VectorizedMPO, renyi_entropy
from .spin_algebra import SpinKind, local_operator, make_bond_hamiltonian
from .tebd_engine import (TEBD_CSV_COLUMNS, advisory_time, build_schedule,
                          check_entropy_bound, entropy_bound_rhs, evolve)

logger = logging.getLogger(__name__)

MANIFEST_SCHEMA_VERSION = 1

## environment override for the worker-thread count of the TEBD engine
THREADS_ENV_VAR = "OPCHAIN_THREADS"

SOLVER_NAMES = ("tebd", "ed", "gaussian")

## tolerance key -> (solver pair, compared observable)
TOLERANCE_KEYS = {
    "itac_vs_ed": ("tebd", "ed", "itac"),
    "s2_vs_ed": ("tebd", "ed", "S2"),
    "s1_vs_ed": ("tebd", "ed", "S1"),
    "s2_vs_gaussian": ("tebd", "gaussian", "S2"),
}

## operators the free-fermion solver can represent as a single mode occupation
GAUSSIAN_OPERATORS = ("sz", "sx", "string_z")


class ConfigError(ValueError):
    """Invalid run configuration, with an itemized problem list."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" +
                         "\n".join(f"  - {p}" for p in self.problems))


## ---------------------------------------------------------------------------
## configuration models

class OperatorSpec(BaseModel):
    """A named local operator at a 1-based site (string_z: sz over 1..site-1)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: Literal["sz", "sx", "sy", "s_plus", "string_z"]
    site: int = Field(ge=1)


class RunConfig(BaseModel):
    """One evolution run: chain, operator, schedule, solvers, tolerances.

    Unset time parameters get defaults: measure_every = 10 * dt and t_final =
    the light-cone advisory time snapped down to the measurement grid, so a
    minimal config (kind, L, delta, operator) is complete.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    label: str = "run"
    kind: Literal["half", "one"] = "half"
    L: int = Field(ge=2)
    delta: float
    operator: OperatorSpec
    chi_max: int = Field(default=256, ge=1)
    cutoff: float = Field(default=1e-14, gt=0)
    dt: float = Field(default=0.05, gt=0)
    trotter_order: Literal[2, 4] = 4
    t_final: float = Field(default=None, ge=0)  # type: ignore[assignment]
    measure_every: float = Field(default=None, gt=0)  # type: ignore[assignment]
    alpha_list: tuple[float, ...] = (1.0, 2.0)
    solvers: tuple[Literal["tebd", "ed", "gaussian"], ...] = ("tebd",)
    seed: int = 0
    threads: int = Field(default=1, ge=1)
    discard_abort: float = Field(default=0.25, gt=0)
    tolerances: dict[str, float] = {}
    save_mpo: bool = False
    output_dir: Optional[str] = None

    @property
    def spin_kind(self) -> SpinKind:
        return SpinKind.from_string(self.kind)

    @model_validator(mode="before")
    @classmethod
    def _fill_time_defaults(cls, data):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        try:
            dt = float(data.get("dt", 0.05))
            if data.get("measure_every") is None:
                data["measure_every"] = 10.0 * dt
            if data.get("t_final") is None:
                ## advisory horizon snapped down to the measurement grid
                adv = advisory_time(int(data.get("L", 0)))
                step = float(data["measure_every"])
                data["t_final"] = max(1, int(adv / step + 1e-9)) * step
        except (TypeError, ValueError):
            pass  ## leave it to the field validators to produce diagnostics
        return data

    @field_validator("alpha_list", mode="after")
    @classmethod
    def _normalize_alphas(cls, v):
        alphas = {float(a) for a in v}
        if any(a <= 0 for a in alphas):
            raise ValueError("Renyi indices must be positive")
        return tuple(sorted(alphas | {1.0, 2.0}))

    @model_validator(mode="after")
    def _check_consistency(self):
        problems = []
        if len(set(self.solvers)) != len(self.solvers):
            problems.append("solvers contains duplicates")
        if not self.solvers:
            problems.append("at least one solver is required")
        if self.operator.site > self.L:
            problems.append(f"operator site {self.operator.site} exceeds L={self.L}")
        if self.operator.name == "string_z" and self.operator.site < 2:
            problems.append("string_z needs site >= 2 (the product over sites "
                            "1..site-1 must be non-empty)")
        ## the measurement grid must be commensurate: dt | measure_every | t_final
        stride = self.measure_every / self.dt
        if abs(stride - round(stride)) > 1e-9 or round(stride) < 1:
            problems.append(f"measure_every={self.measure_every} is not a "
                            f"positive multiple of dt={self.dt}")
        n_seg = self.t_final / self.measure_every
        if abs(n_seg - round(n_seg)) > 1e-9:
            problems.append(f"t_final={self.t_final} is not a multiple of "
                            f"measure_every={self.measure_every}")
        if "gaussian" in self.solvers:
            if self.kind != "half" or self.delta != 0.0:
                problems.append("gaussian solver requires kind=half and delta=0 "
                                "(the free-fermion mapping holds only at the XX point)")
            if self.operator.name not in GAUSSIAN_OPERATORS:
                problems.append(f"gaussian solver supports operators "
                                f"{GAUSSIAN_OPERATORS}, not {self.operator.name!r}")
        if "ed" in self.solvers:
            limit = MAX_SITES[self.spin_kind]
            if self.L > limit:
                problems.append(f"ed solver size guard: L={self.L} exceeds the "
                                f"dense limit {limit} for kind={self.kind}")
        for key, tol in self.tolerances.items():
            if key not in TOLERANCE_KEYS:
                problems.append(f"unknown tolerance key {key!r}; known: "
                                f"{sorted(TOLERANCE_KEYS)}")
                continue
            a, b, _ = TOLERANCE_KEYS[key]
            if a not in self.solvers or b not in self.solvers:
                problems.append(f"tolerance {key!r} needs solvers {a!r} and {b!r}")
            if not tol > 0:
                problems.append(f"tolerance {key!r} must be positive, got {tol}")
        if problems:
            raise ValueError("; ".join(problems))
        return self


def parse_config(text: str) -> RunConfig:
    """Parse a JSON run configuration with itemized diagnostics on failure."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"not valid JSON: {exc}"]) from exc
    if not isinstance(data, dict):
        raise ConfigError(["top level must be a JSON object"])
    return _validate_config(data)


def _validate_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        problems = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"]) or "(top level)"
            problems.append(f"{loc}: {err['msg']}")
        raise ConfigError(problems) from exc


def measurement_times(config: RunConfig) -> list[float]:
    """The exact measurement grid of the TEBD engine, shared by all solvers.

    Replicates the engine's arithmetic — t_k = (whole number of dt steps) * dt
    — so cross-solver time columns match bit for bit.
    """
    dt = config.dt
    n_steps = int(round(config.t_final / dt))
    stride = max(1, int(round(config.measure_every / dt)))
    times = [0.0]
    for seg_start in range(0, n_steps, stride):
        seg_steps = min(stride, n_steps - seg_start)
        times.append((seg_start + seg_steps) * dt)
    return times


## ---------------------------------------------------------------------------
## solvers

@dataclasses.dataclass
class SolverOutput:
    """One solver's time series plus bookkeeping."""

    solver: str
    columns: tuple
    rows: list                    ## list of {column: value} dicts
    wall_time: float
    completed: bool
    abort_reason: Optional[str]
    extras: dict


def _site_factors(config: RunConfig):
    kind = config.spin_kind
    name, site = config.operator.name, config.operator.site
    if name == "string_z":
        return local_operator(name, kind, site)
    return [(site, local_operator(name, kind))]


def _run_tebd(config: RunConfig, threads: int) -> SolverOutput:
    kind = config.spin_kind
    mpo = VectorizedMPO.from_product_operator(_site_factors(config), config.L, kind)
    schedule = build_schedule(config.trotter_order, config.dt)
    policy = TruncationPolicy(chi_max=config.chi_max, cutoff=config.cutoff)
    result = evolve(mpo, make_bond_hamiltonian(kind, config.delta), schedule,
                    policy, config.t_final, config.measure_every,
                    alpha_list=config.alpha_list, threads=threads,
                    seed=config.seed, discard_abort=config.discard_abort)

    center = config.L // 2
    rows = []
    bound_checks = []
    for rec in result.records:
        s2 = rec.entropies[2.0]
        rows.append({
            "t": rec.t,
            "S2_bond_center": float(s2[center - 1]),
            "S1_bond_center": float(rec.entropies[1.0][center - 1]),
            "Smax_over_bonds": float(np.max(s2)),
            "itac_re": float(rec.itac.real),
            "itac_im": float(rec.itac.imag),
            "abs_itac": float(abs(rec.itac)),
            "bound_rhs_alpha2": float(rec.bound_rhs[2.0]),
            "discarded_weight": float(rec.discarded_weight),
            "chi_used": int(rec.chi_used),
        })
        bound_checks.append(check_entropy_bound(rec, 2.0))

    slacks = [c["slack"] for c in bound_checks if not c["vacuous"]]
    extras = {
        "records": result.records,
        "gap_warnings": int(mpo.gap_warning_count),
        "max_chi": int(mpo.max_chi()),
        "final_discarded_weight": float(mpo.discarded_weight),
        "entropy_bound_alpha2": {
            "holds_all": bool(all(c["holds"] for c in bound_checks)),
            "worst_slack": float(min(slacks)) if slacks else None,
            "n_vacuous": int(sum(c["vacuous"] for c in bound_checks)),
        },
        "final_mpo": mpo if config.save_mpo else None,
    }
    return SolverOutput("tebd", TEBD_CSV_COLUMNS, rows, result.wall_time,
                        result.completed, result.abort_reason, extras)


def _run_ed(config: RunConfig, threads: int) -> SolverOutput:
    kind = config.spin_kind
    check_size_guard(kind, config.L)
    t_start = time.perf_counter()

    prop = Propagator(xxz_hamiltonian_dense(config.L, kind, config.delta))
    op0 = dense_from_sites(_site_factors(config), config.L, kind).normalized()
    dim = kind.d ** config.L
    center = config.L // 2

    rows = []
    for t in measurement_times(config):
        op_t = prop.evolve(op0, t)
        val = complex(np.vdot(op_t.matrix, op0.matrix)) / dim
        spectra = [schmidt_exact(op_t, cut) for cut in range(1, config.L)]
        s2 = np.array([renyi_entropy(sp, 2.0) for sp in spectra])
        rhs2 = entropy_bound_rhs(val, 2.0)
        rows.append({
            "t": t,
            "S2_bond_center": float(s2[center - 1]),
            "S1_bond_center": float(renyi_entropy(spectra[center - 1], 1.0)),
            "Smax_over_bonds": float(np.max(s2)),
            "itac_re": float(val.real),
            "itac_im": float(val.imag),
            "abs_itac": float(abs(val)),
            "bound_rhs_alpha2": float(rhs2),
            "discarded_weight": 0.0,
            "chi_used": int(len(spectra[center - 1].values)),
        })
    return SolverOutput("ed", TEBD_CSV_COLUMNS, rows,
                        time.perf_counter() - t_start, True, None, {})


def _run_gaussian(config: RunConfig, threads: int) -> SolverOutput:
    t_start = time.perf_counter()
    L = config.L
    h = build_xx_hamiltonian(L)
    state0 = to_state(map_operator(config.operator.name, config.operator.site, L))
    cut = L // 2
    chain_a, chain_b = chain_modes(L)

    rows = []
    chain_series = {"a": [], "b": []}
    violations = 0
    for t in measurement_times(config):
        state = evolve_gaussian(state0, h, t)
        dn2 = partition_fluctuation(state, cut)
        lo, hi = sandwich_bounds(dn2)
        rows.append({
            "t": t,
            "delta_N2": float(dn2),
            "S2_gaussian": float(partition_renyi2(state, cut)),
            "lower_bound": float(lo),
            "upper_bound": float(hi),
        })
        chain_series["a"].append((t, partition_fluctuation(state, cut, modes=chain_a)))
        chain_series["b"].append((t, partition_fluctuation(state, cut, modes=chain_b)))
        violations += int(not check_sandwich(state, cut)["holds"])

    extras = {
        "chain_delta_n2": chain_series,
        "sandwich_violations": violations,
    }
    return SolverOutput("gaussian", GAUSSIAN_CSV_COLUMNS, rows,
                        time.perf_counter() - t_start, True, None, extras)


SOLVERS = {"tebd": _run_tebd, "ed": _run_ed, "gaussian": _run_gaussian}


## ---------------------------------------------------------------------------
## CSV round trip

def format_csv(columns, rows) -> str:
    """Render rows to CSV text with shortest-roundtrip floats.

    Integers are written bare; every float goes through repr(), which numpy
    and Python guarantee to round-trip exactly — byte-identical output is the
    determinism contract of the whole artifact layer.
    """
    lines = [",".join(columns)]
    for row in rows:
        cells = []
        for col in columns:
            v = row[col]
            if isinstance(v, (int, np.integer)):
                cells.append(str(int(v)))
            else:
                ## + 0.0 collapses negative zero (log2 of a pure spectrum)
                cells.append(repr(float(v) + 0.0))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_csv(path, columns, rows):
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_csv(columns, rows))


def read_csv(path):
    """Read a solver CSV back into (columns, rows-of-dicts)."""
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = []
        for cells in reader:
            if not cells:
                continue
            row = {}
            for col, cell in zip(header, cells):
                try:
                    row[col] = int(cell)
                except ValueError:
                    row[col] = float(cell)
            rows.append(row)
    return tuple(header), rows


## ---------------------------------------------------------------------------
## comparisons

def _pair_deltas(out_a: SolverOutput, out_b: SolverOutput):
    """Per-time absolute deviations between two solver outputs.

    Covers exactly the overlapping time grid: the longest common prefix on
    which the time columns agree bit for bit (all solvers share the grid
    arithmetic, so a shorter prefix only appears after an abort).
    """
    n = min(len(out_a.rows), len(out_b.rows))
    k = 0
    while k < n and out_a.rows[k]["t"] == out_b.rows[k]["t"]:
        k += 1
    times = [out_a.rows[i]["t"] for i in range(k)]

    deltas = {}
    pair = {out_a.solver, out_b.solver}
    if pair == {"tebd", "ed"}:
        deltas["itac"] = [math.hypot(a["itac_re"] - b["itac_re"],
                                     a["itac_im"] - b["itac_im"])
                          for a, b in zip(out_a.rows[:k], out_b.rows[:k])]
        deltas["S2"] = [max(abs(a["S2_bond_center"] - b["S2_bond_center"]),
                            abs(a["Smax_over_bonds"] - b["Smax_over_bonds"]))
                        for a, b in zip(out_a.rows[:k], out_b.rows[:k])]
        deltas["S1"] = [abs(a["S1_bond_center"] - b["S1_bond_center"])
                        for a, b in zip(out_a.rows[:k], out_b.rows[:k])]
    elif pair == {"tebd", "gaussian"}:
        tebd = out_a if out_a.solver == "tebd" else out_b
        gauss = out_b if out_a.solver == "tebd" else out_a
        deltas["S2"] = [abs(a["S2_bond_center"] - b["S2_gaussian"])
                        for a, b in zip(tebd.rows[:k], gauss.rows[:k])]
    else:
        return None
    return {"t": times, "deltas": deltas}


def compare_outputs(outputs: dict, tolerances: dict) -> dict:
    """Compare every solver pair with a defined observable mapping.

    Returns a report with per-pair deltas, per-observable maxima, and a
    verdict per configured tolerance key; all_passed ignores pairs without
    configured tolerances.
    """
    pairs = []
    names = list(outputs)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            d = _pair_deltas(outputs[a], outputs[b])
            if d is None:
                continue
            pairs.append({
                "solver_a": a,
                "solver_b": b,
                "n_points": len(d["t"]),
                "t": d["t"],
                "deltas": d["deltas"],
                "max_abs_error": {obs: (max(v) if v else math.inf)
                                  for obs, v in d["deltas"].items()},
            })

    checked = {}
    for key, tol in tolerances.items():
        sa, sb, obs = TOLERANCE_KEYS[key]
        report = next((p for p in pairs if {p["solver_a"], p["solver_b"]} == {sa, sb}), None)
        err = report["max_abs_error"][obs] if report else math.inf
        checked[key] = {"tolerance": tol, "max_abs_error": err,
                        "passed": bool(err <= tol)}
    return {
        "pairs": pairs,
        "checked": checked,
        "all_passed": bool(all(c["passed"] for c in checked.values())),
    }


def compare_csv(path_a, path_b, tol: float) -> dict:
    """Column-wise comparison of two CSV artifacts with a single tolerance.

    The files must share the header; rows are compared pairwise and the
    maximum absolute deviation per column is checked against `tol`.  Equal
    values (inf included) count as zero deviation.
    """
    cols_a, rows_a = read_csv(path_a)
    cols_b, rows_b = read_csv(path_b)
    problems = []
    if cols_a != cols_b:
        problems.append(f"column mismatch: {cols_a} vs {cols_b}")
    if len(rows_a) != len(rows_b):
        problems.append(f"row count mismatch: {len(rows_a)} vs {len(rows_b)}")
    max_err = {}
    if not problems:
        for col in cols_a:
            worst = 0.0
            for ra, rb in zip(rows_a, rows_b):
                va, vb = ra[col], rb[col]
                worst = max(worst, 0.0 if va == vb else abs(va - vb))
            max_err[col] = worst
        failing = sorted(c for c, e in max_err.items() if not e <= tol)
        if failing:
            problems.append(f"columns over tolerance {tol}: {failing}")
    return {
        "path_a": str(path_a),
        "path_b": str(path_b),
        "tolerance": tol,
        "n_rows": min(len(rows_a), len(rows_b)),
        "max_abs_error": max_err,
        "problems": problems,
        "passed": not problems,
    }


## ---------------------------------------------------------------------------
## running one config

@dataclasses.dataclass
class RunResult:
    config: RunConfig
    outputs: dict                 ## solver name -> SolverOutput
    comparison: Optional[dict]
    manifest: dict
    output_dir: Path
    passed: bool


def _resolve_threads(config: RunConfig, threads: Optional[int]) -> int:
    if threads is None:
        raw = os.environ.get(THREADS_ENV_VAR, "").strip()
        if raw:
            try:
                threads = int(raw)
            except ValueError:
                raise ConfigError([f"{THREADS_ENV_VAR} must be an integer, "
                                   f"got {raw!r}"]) from None
    if threads is None:
        threads = config.threads
    return max(1, int(threads))


def run(config: RunConfig, output_dir=None, threads: Optional[int] = None) -> RunResult:
    """Execute all requested solvers and write the run's artifacts.

    Artifacts land in `output_dir` (or config.output_dir, or runs/<label>):
    one <label>_<solver>.csv per solver, <label>_manifest.json, and
    <label>_comparison.json when at least two solvers ran.  The result's
    `passed` flag is true iff every solver completed and every configured
    tolerance holds.
    """
    threads_eff = _resolve_threads(config, threads)
    out_dir = Path(output_dir if output_dir is not None
                   else (config.output_dir or f"runs/{config.label}"))
    out_dir.mkdir(parents=True, exist_ok=True)

    outputs = {}
    ## single-threaded BLAS while solvers run: reductions stay deterministic
    ## and the TEBD thread pool is the only intentional parallelism
    with threadpool_limits(limits=1):
        for solver in config.solvers:
            logger.info("run %s: solver %s starting", config.label, solver)
            outputs[solver] = SOLVERS[solver](config, threads_eff)
            logger.info("run %s: solver %s done in %.1fs", config.label,
                        solver, outputs[solver].wall_time)

    csv_names = {}
    for solver, out in outputs.items():
        name = f"{config.label}_{solver}.csv"
        write_csv(out_dir / name, out.columns, out.rows)
        csv_names[solver] = name

    comparison = compare_outputs(outputs, config.tolerances) if len(outputs) > 1 else None
    comparison_name = None
    if comparison is not None:
        comparison_name = f"{config.label}_comparison.json"
        (out_dir / comparison_name).write_text(
            json.dumps(comparison, indent=2) + "\n", encoding="utf-8")

    mpo_name = None
    mpo = outputs.get("tebd") and outputs["tebd"].extras.get("final_mpo")
    if mpo is not None:
        mpo_name = f"{config.label}_tebd_final.npz"
        mpo.save(out_dir / mpo_name)

    completed = all(out.completed for out in outputs.values())
    passed = completed and (comparison is None or comparison["all_passed"])

    solver_meta = {}
    for solver, out in outputs.items():
        meta = {
            "csv": csv_names[solver],
            "wall_time": out.wall_time,
            "completed": out.completed,
            "abort_reason": out.abort_reason,
            "n_rows": len(out.rows),
        }
        for key in ("gap_warnings", "max_chi", "final_discarded_weight",
                    "entropy_bound_alpha2", "sandwich_violations",
                    "chain_delta_n2"):
            if key in out.extras:
                meta[key] = out.extras[key]
        solver_meta[solver] = meta

    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "label": config.label,
        "config": json.loads(config.model_dump_json()),
        "versions": {
            "package": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "threads": threads_eff,
        "advisory_time": advisory_time(config.L),
        "advisory_exceeded": bool(config.t_final > advisory_time(config.L) + 1e-9),
        "solvers": solver_meta,
        "comparison": comparison_name,
        "comparison_checked": None if comparison is None else comparison["checked"],
        "passed": passed,
    }
    (out_dir / f"{config.label}_manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8")

    return RunResult(config=config, outputs=outputs, comparison=comparison,
                     manifest=manifest, output_dir=out_dir, passed=passed)


## ---------------------------------------------------------------------------
## preset bundles and curve-level checks

def _tebd_series(result: RunResult, column: str):
    rows = result.outputs["tebd"].rows
    return [(row["t"], row[column]) for row in rows]


def _window(series, lo, hi):
    return [(t, y) for t, y in series if lo - 1e-12 <= t <= hi + 1e-12]


def _rms(values) -> float:
    arr = np.asarray(values, dtype=float)
    return float(np.sqrt(np.mean(arr ** 2))) if arr.size else math.inf


def _check_comparisons_pass(spec, results):
    labels = spec.get("labels") or sorted(results)
    detail = {lab: results[lab].passed for lab in labels}
    return {"passed": all(detail.values()), "runs": detail}


def _check_saturation(spec, results):
    """Entropy curve flatness over the trailing fraction of the run."""
    series = _tebd_series(results[spec["label"]],
                          spec.get("column", "S2_bond_center"))
    t_max = series[-1][0]
    t_lo = t_max - (t_max - series[0][0]) * spec.get("fraction", 1.0 / 3.0)
    tail = [y for t, y in series if t >= t_lo - 1e-12]
    variation = max(tail) - min(tail)
    limit = spec.get("max_variation", 0.05)
    return {"passed": bool(variation < limit), "variation": variation,
            "limit": limit, "window_start": t_lo, "n_points": len(tail)}


def _check_log2_fit(spec, results):
    """Least-squares fit y = a log2(t) + b over a time window.

    ``column`` picks the fitted series (default S2_bond_center).  For
    operators whose entanglement peak drifts around a fixed bond -- e.g. the
    breathing melting front of a z-string at delta=0 -- fit Smax_over_bonds:
    the peak tracks the growth envelope that the fixed-bond curve oscillates
    around.
    """
    lo, hi = spec.get("window", (4.0, 12.0))
    pts = _window(_tebd_series(results[spec["label"]],
                               spec.get("column", "S2_bond_center")), lo, hi)
    pts = [(t, y) for t, y in pts if t > 0]
    if len(pts) < 3:
        return {"passed": False, "reason": f"only {len(pts)} points in window"}
    x = np.log2([t for t, _ in pts])
    y = np.array([v for _, v in pts])
    slope, intercept = np.polyfit(x, y, 1)
    residual = _rms(y - (slope * x + intercept))
    max_residual = spec.get("max_residual", 0.05)
    min_slope = spec.get("min_slope", 0.0)
    passed = residual < max_residual and slope > min_slope
    return {"passed": bool(passed), "slope": float(slope),
            "intercept": float(intercept), "residual": residual,
            "max_residual": max_residual, "min_slope": min_slope,
            "window": [lo, hi], "n_points": len(pts)}


def _check_trotter_order_scaling(spec, results):
    """Error-vs-ED ratios under dt halving, grouped by delta."""
    band = spec.get("ratio_band", (8.0, 32.0))
    observable = spec.get("observable", "itac")
    labels = spec.get("labels") or sorted(results)
    groups = {}
    for lab in labels:
        res = results[lab]
        comp = res.comparison
        pair = next((p for p in comp["pairs"]
                     if {p["solver_a"], p["solver_b"]} == {"tebd", "ed"}), None)
        err = pair["max_abs_error"][observable]
        groups.setdefault(res.config.delta, []).append((res.config.dt, err, lab))

    ratios = []
    for delta, entries in sorted(groups.items()):
        entries.sort(reverse=True)  ## coarsest dt first
        for (dt_a, err_a, _), (dt_b, err_b, _) in zip(entries, entries[1:]):
            if abs(dt_a / dt_b - 2.0) > 1e-9:
                return {"passed": False,
                        "reason": f"dt values {dt_a}, {dt_b} are not a halving"}
            ratios.append({"delta": delta, "dt_coarse": dt_a, "dt_fine": dt_b,
                           "ratio": err_a / err_b, "err_coarse": err_a,
                           "err_fine": err_b})
    passed = bool(ratios) and all(band[0] <= r["ratio"] <= band[1] for r in ratios)
    return {"passed": passed, "band": list(band), "ratios": ratios}


def _check_antal_slope(spec, results):
    """Per-chain logarithmic growth of the number fluctuation.

    Each uncoupled hopping chain carries its own domain wall, so each chain's
    fitted slope is compared to 1/(2 pi^2); the combined fluctuation should
    carry the per-chain slope times the number of chains.
    """
    result = results[spec["label"]]
    lo, hi = spec.get("window", (10.0, 80.0))
    rel_tol = spec.get("rel_tol", 0.15)
    chains = result.outputs["gaussian"].extras["chain_delta_n2"]
    detail = {}
    ok = True
    for name, series in chains.items():
        fit = fit_antal_growth(_window(series, lo, hi))
        rel_err = abs(fit["slope"] - ANTAL_SLOPE) / ANTAL_SLOPE
        detail[name] = {"slope": fit["slope"], "rel_err": rel_err,
                        "low_confidence": fit["low_confidence"],
                        "n_points": fit["n_points"]}
        ok = ok and rel_err <= rel_tol and not fit["low_confidence"]
    total_series = [(row["t"], row["delta_N2"])
                    for row in result.outputs["gaussian"].rows]
    total_fit = fit_antal_growth(_window(total_series, lo, hi))
    n_chains = len(chains)
    return {"passed": bool(ok), "target": ANTAL_SLOPE, "rel_tol": rel_tol,
            "chains": detail, "window": [lo, hi],
            "total_slope": total_fit["slope"],
            "total_over_per_chain_target": total_fit["slope"] / (n_chains * ANTAL_SLOPE)}


def _check_growth_contrast(spec, results):
    """The 'fast' run's entropy exceeds the 'slow' run's at the final common time."""
    column = spec.get("column", "S2_bond_center")
    fast = _tebd_series(results[spec["label_fast"]], column)
    slow = _tebd_series(results[spec["label_slow"]], column)
    common = {t for t, _ in fast} & {t for t, _ in slow}
    if not common:
        return {"passed": False, "reason": "no common time points"}
    t_star = max(common)
    v_fast = dict(fast)[t_star]
    v_slow = dict(slow)[t_star]
    min_gap = spec.get("min_gap", 0.0)
    return {"passed": bool(v_fast - v_slow > min_gap), "t": t_star,
            "fast": v_fast, "slow": v_slow, "gap": v_fast - v_slow}


def _check_decay_slower_than_exponential(spec, results):
    """|ITAC| decay straightens better on log-log than on semi-log axes."""
    t_min = spec.get("t_min", 1.0)
    series = [(t, y) for t, y in _tebd_series(results[spec["label"]], "abs_itac")
              if t >= t_min - 1e-12 and y > 1e-300]
    if len(series) < 3:
        return {"passed": False, "reason": f"only {len(series)} usable points"}
    t = np.array([p[0] for p in series])
    log_y = np.log([p[1] for p in series])

    def resid(x):
        slope, intercept = np.polyfit(x, log_y, 1)
        return _rms(log_y - (slope * x + intercept))

    r_power = resid(np.log(t))
    r_exp = resid(t)
    return {"passed": bool(r_power < r_exp), "residual_loglog": r_power,
            "residual_semilog": r_exp, "n_points": len(series)}


def _check_entropy_bound(spec, results):
    """The autocorrelation bound on S_2 held at every record of every TEBD run."""
    labels = spec.get("labels") or sorted(results)
    detail = {}
    for lab in labels:
        extras = results[lab].outputs.get("tebd")
        if extras is None:
            continue
        detail[lab] = extras.extras["entropy_bound_alpha2"]
    passed = all(d["holds_all"] for d in detail.values()) and bool(detail)
    return {"passed": bool(passed), "runs": detail}


CHECKS = {
    "comparisons_pass": _check_comparisons_pass,
    "saturation": _check_saturation,
    "log2_fit": _check_log2_fit,
    "trotter_order_scaling": _check_trotter_order_scaling,
    "antal_slope": _check_antal_slope,
    "growth_contrast": _check_growth_contrast,
    "decay_slower_than_exponential": _check_decay_slower_than_exponential,
    "entropy_bound": _check_entropy_bound,
}


class PresetSpec(BaseModel):
    """A named bundle of runs plus curve-level checks on their outputs."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str
    description: str = ""
    runs: tuple[RunConfig, ...] = Field(min_length=1)
    checks: tuple[dict, ...] = ()

    @model_validator(mode="after")
    def _check_labels(self):
        problems = []
        labels = [cfg.label for cfg in self.runs]
        if len(set(labels)) != len(labels):
            problems.append(f"duplicate run labels: {labels}")
        for chk in self.checks:
            kind = chk.get("type")
            if kind not in CHECKS:
                problems.append(f"unknown check type {kind!r}; known: "
                                f"{sorted(CHECKS)}")
                continue
            referenced = [chk[k] for k in ("label", "label_fast", "label_slow")
                          if k in chk]
            referenced += list(chk.get("labels") or ())
            for lab in referenced:
                if lab not in labels:
                    problems.append(f"check {kind!r} references unknown run "
                                    f"label {lab!r}")
        if problems:
            raise ValueError("; ".join(problems))
        return self


def parse_preset(text: str) -> PresetSpec:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"not valid JSON: {exc}"]) from exc
    try:
        return PresetSpec.model_validate(data)
    except ValidationError as exc:
        problems = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"]) or "(top level)"
            problems.append(f"{loc}: {err['msg']}")
        raise ConfigError(problems) from exc


def _preset_root():
    return importlib.resources.files("opchain") / "presets"


def list_presets() -> list[str]:
    return sorted(p.name[:-len(".json")] for p in _preset_root().iterdir()
                  if p.name.endswith(".json"))


def load_preset(name: str) -> PresetSpec:
    path = _preset_root() / f"{name}.json"
    if not path.is_file():
        raise ConfigError([f"unknown preset {name!r}; available: "
                           f"{list_presets()}"])
    spec = parse_preset(path.read_text(encoding="utf-8"))
    if spec.name != name:
        raise ConfigError([f"preset file {name}.json declares name "
                           f"{spec.name!r}"])
    return spec


@dataclasses.dataclass
class PresetResult:
    spec: PresetSpec
    results: dict                 ## label -> RunResult
    checks: list                  ## evaluated check dicts, in spec order
    passed: bool
    output_dir: Path


def run_preset(preset, output_dir=None, threads: Optional[int] = None) -> PresetResult:
    """Run every config of a preset into one directory and evaluate its checks."""
    spec = load_preset(preset) if isinstance(preset, str) else preset
    out_dir = Path(output_dir if output_dir is not None else f"runs/{spec.name}")

    results = {}
    for cfg in spec.runs:
        results[cfg.label] = run(cfg, output_dir=out_dir, threads=threads)

    checks = []
    for chk in spec.checks:
        outcome = CHECKS[chk["type"]](chk, results)
        checks.append({"type": chk["type"], "spec": chk, **outcome})

    passed = (all(r.passed for r in results.values())
              and all(c["passed"] for c in checks))
    summary = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "preset": spec.name,
        "description": spec.description,
        "runs": {lab: {"passed": res.passed,
                       "manifest": f"{lab}_manifest.json"}
                 for lab, res in results.items()},
        "checks": checks,
        "passed": passed,
    }
    (out_dir / f"{spec.name}_summary.json").write_text(
        json.dumps(summary, indent=2, default=float) + "\n", encoding="utf-8")
    return PresetResult(spec=spec, results=results, checks=checks,
                        passed=passed, output_dir=out_dir)
