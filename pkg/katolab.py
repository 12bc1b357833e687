# katolab.py
"""
Command-line front end of the commutator lab.

    python katolab.py run --config experiment.json --out results/
    python katolab.py rank-one [--L 10 --n 51 --relax 100]
    python katolab.py rank-three --beta 0.1
    python katolab.py scan --config sweep.json --threads 4

Exit codes: 0 success, 1 a checked identity failed, 2 invalid input or I/O failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import math
import os
import pathlib
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, is_dataclass, asdict
from typing import Any, Callable, Dict, FrozenSet, List, Sequence, Tuple

import numpy as np
from dotenv import find_dotenv, load_dotenv

from errors import ConfigError, KatoLabError, ParameterError, error_payload
from funclib import (
    FunctionSpec,
    TanhAtom,
    analytic_strip,
    bracket,
    grid_for,
    sech,
)
from grid import DEFAULT_HALF_WIDTH, DEFAULT_NODES, Grid, build_grid, integrate
from katoclass import (
    exp_moment,
    herglotz_grid_check,
    plancherel_strip_check,
    strip_continuation_identity,
    strip_product_report,
)
from kernel import KernelMatrix, Side, assemble_kernel
from measurefit import fit_measure
from spectral import (
    DEFAULT_REL_TOL,
    DUALITY_TOP,
    SpectralResult,
    diagonal_identity_residual,
    duality_check,
    eigendecompose,
    mode_overlap,
    reconstruction_residual,
    signed_modes,
)


# KATOLAB_* defaults from a .env in the working directory or above, else next to this file.
def _init_env() -> None:
    try:
        dotenv_path = find_dotenv(usecwd=True)
    except Exception:
        dotenv_path = ""
    loaded = False
    if dotenv_path:
        loaded = load_dotenv(dotenv_path)
    if not loaded:
        script_env = pathlib.Path(__file__).resolve().parent / ".env"
        if script_env.exists():
            load_dotenv(script_env)

_init_env()


log = logging.getLogger("katolab")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID = 2

MAX_SWEEP_POINTS = 10_000
LOG_FORMAT = "[%(asctime)s] %(levelname)s %(message)s"
SCAN_COLUMNS = (
    "index", "g_scale", "f_scale", "f2_scale", "beta",
    "min_eigenvalue", "rank", "r_estimate", "r_prime_estimate", "product",
)
HALF_PI = 0.5 * math.pi


# ---------------------------------------------------------------------
# Logging to STDERR (+ optional file)
# ---------------------------------------------------------------------
def configure_logging(level: str | None = None, log_file: str | None = None) -> None:
    level = (level or os.getenv("KATOLAB_LOG_LEVEL") or "INFO").upper()
    if not isinstance(logging.getLevelName(level), int):
        raise ConfigError(f"unknown log level {level!r}")
    for handler in list(log.handlers):
        log.removeHandler(handler)
        handler.close()
    fmt = logging.Formatter(LOG_FORMAT, "%Y-%m-%d %H:%M:%S")
    eh = logging.StreamHandler(sys.stderr)
    eh.setFormatter(fmt)
    log.addHandler(eh)
    if log_file:
        fh = logging.FileHandler(log_file, encoding="utf-8")
        fh.setFormatter(fmt)
        log.addHandler(fh)
    log.setLevel(level)


def to_jsonable(obj: Any) -> Any:
    if hasattr(obj, "to_json"):
        return to_jsonable(obj.to_json())
    if is_dataclass(obj) and not isinstance(obj, type):
        return to_jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else str(value)
    if obj is None or isinstance(obj, str):
        return obj
    return {"_type": type(obj).__name__}


def safe_json(obj: Any) -> str:
    try:
        return json.dumps(to_jsonable(obj), ensure_ascii=False, sort_keys=True)
    except Exception:
        return f"<non-serializable:{type(obj).__name__}>"


# ---------------------------------------------------------------------
# Output files: staged in memory, committed with rename-on-success
# ---------------------------------------------------------------------
def _fmt(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


@dataclass
class OutputSet:
    files: Dict[str, str] = field(default_factory=dict)

    def add_json(self, name: str, payload: Any) -> None:
        self.files[name] = json.dumps(to_jsonable(payload), indent=2, sort_keys=True) + "\n"

    def add_csv(self, name: str, header: Sequence[str], rows) -> None:
        self.files[name] = _csv_text(header, rows)

    def commit(self, out_dir: str | os.PathLike) -> List[pathlib.Path]:
        out = pathlib.Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name in sorted(self.files):
            target = out / name
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=out)
            try:
                with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                    fh.write(self.files[name])
                os.replace(tmp, target)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise
            written.append(target)
        log.info("wrote %s", ", ".join(p.name for p in written))
        return written


def _spectrum_files(out: OutputSet, result: SpectralResult, grid: Grid, rel_tol: float) -> None:
    out.add_csv("eigenvalues.csv", ("index", "eigenvalue"), enumerate(result.eigenvalues))
    modes, _ = signed_modes(result, grid, rel_tol)
    rows = (
        (float(x), j, float(mode[i].real), float(mode[i].imag))
        for j, mode in enumerate(modes)
        for i, x in enumerate(grid.nodes)
    )
    out.add_csv("modes.csv", ("node", "mode_index", "re", "im"), rows)


def _kernel_file(out: OutputSet, A: KernelMatrix) -> None:
    """Row-major dump, each entry as a re,im pair."""
    header = [f"{part}{j}" for j in range(A.n) for part in ("re", "im")]
    rows = (
        [v for z in row for v in (float(np.real(z)), float(np.imag(z)))]
        for row in A.entries
    )
    out.add_csv(f"kernel_{A.side}.csv", header, rows)


# ---------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------
def check(name: str, value: Any, passed: bool | None, **extra: Any) -> Dict[str, Any]:
    verdict = None if passed is None else bool(passed)
    return {"name": name, "value": value, "passed": verdict, **extra}


def close_to(name: str, value: float, target: float, tolerance: float) -> Dict[str, Any]:
    return check(name, value, abs(value - target) <= tolerance,
                  target=target, tolerance=tolerance)


def at_most(name: str, value: float, limit: float) -> Dict[str, Any]:
    return check(name, value, value <= limit, limit=limit)


def _verdict(checks: Sequence[Dict[str, Any]]) -> bool:
    return all(c["passed"] is not False for c in checks)


def _guarded(name: str, fn: Callable[[], Dict[str, Any]]) -> Dict[str, Any]:
    try:
        return fn()
    except KatoLabError as exc:
        log.warning("%s failed: %s", name, exc)
        return check(name, None, False, **error_payload(exc))


# ---------------------------------------------------------------------
# Experiment configuration
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class OpCall:
    name: str
    params: Dict[str, Any]


@dataclass(frozen=True)
class ExperimentConfig:
    g: FunctionSpec
    f: FunctionSpec
    grid: Grid
    ops: Tuple[OpCall, ...]
    out_dir: str | None = None


def _require_keys(block: Any, allowed: FrozenSet[str], where: str) -> dict:
    if not isinstance(block, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = sorted(set(block) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    return block


def _grid_block(block: Any, where: str = "grid") -> Grid:
    block = _require_keys(block, frozenset({"L", "n"}), where)
    return build_grid(block.get("L", DEFAULT_HALF_WIDTH), block.get("n", DEFAULT_NODES))


Validator = Callable[[Any, str], Any]


def _number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{where} must be a finite number, got {value!r}")
    return float(value)


def _integer(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where} must be an integer, got {value!r}")
    return value


def _flag(value: Any, where: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{where} must be true or false, got {value!r}")
    return value


def _choice(*allowed: str) -> Validator:
    def validate(value: Any, where: str) -> str:
        if not isinstance(value, str) or value not in allowed:
            raise ConfigError(f"{where} must be one of {', '.join(allowed)}, got {value!r}")
        return value

    return validate


def _optional(validator: Validator) -> Validator:
    def validate(value: Any, where: str) -> Any:
        return None if value is None else validator(value, where)

    return validate


def _path(value: Any, where: str) -> str | None:
    if value is not None and not isinstance(value, str):
        raise ConfigError(f"{where} must be a path string, got {value!r}")
    return value


def load_sampled_csv(path: pathlib.Path) -> FunctionSpec:
    """Sampled function from a CSV with header x,value,derivative on a symmetric grid."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read sampled function {path}: {exc}") from None
    if not rows or [c.strip() for c in rows[0]] != ["x", "value", "derivative"]:
        raise ConfigError(f"{path}: header must be x,value,derivative")
    try:
        data = np.array([[float(c) for c in row] for row in rows[1:] if row], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if data.ndim != 2 or data.shape[1] != 3:
        raise ConfigError(f"{path}: expected three numeric columns")
    x = data[:, 0]
    grid = build_grid(float(x[-1]), x.size)
    if not np.allclose(x, grid.nodes, rtol=0.0, atol=1e-9 * grid.half_width):
        raise ConfigError(f"{path}: x column is not a symmetric uniform grid")
    return FunctionSpec.sampled(grid, data[:, 1], data[:, 2])


def parse_function(block: Any, where: str, base: pathlib.Path) -> FunctionSpec:
    if not isinstance(block, dict) or "type" not in block:
        raise ConfigError(f"{where} needs a 'type' of tanh_mixture or sampled")
    if block["type"] == "tanh_mixture":
        block = _require_keys(block, frozenset({"type", "atoms", "offset"}), where)
        atoms_block = block.get("atoms", [])
        if not isinstance(atoms_block, list):
            raise ConfigError(f"{where}.atoms must be a list")
        atoms = []
        for i, atom in enumerate(atoms_block):
            atom = _require_keys(atom, frozenset({"scale", "center", "weight"}), f"{where}.atoms[{i}]")
            if "scale" not in atom:
                raise ConfigError(f"{where}.atoms[{i}] needs a scale")
            atoms.append(TanhAtom(**atom))
        return FunctionSpec.mixture(atoms, block.get("offset", 0.0))
    if block["type"] == "sampled":
        block = _require_keys(block, frozenset({"type", "path"}), where)
        if not isinstance(block.get("path"), str):
            raise ConfigError(f"{where}.path must be a file path")
        return load_sampled_csv(base / block["path"])
    raise ConfigError(f"{where}.type must be tanh_mixture or sampled, got {block['type']!r}")


def _parse_ops(entries: Any) -> Tuple[OpCall, ...]:
    if not isinstance(entries, list):
        raise ConfigError("ops must be a list")
    calls = []
    for i, entry in enumerate(entries):
        if isinstance(entry, str):
            entry = {"op": entry}
        if not isinstance(entry, dict) or not isinstance(entry.get("op"), str):
            raise ConfigError(f"ops[{i}] must be an op name or an object with an 'op' key")
        name = entry["op"]
        if name not in OPS:
            raise ConfigError(f"ops[{i}]: unknown op {name!r} (known: {', '.join(sorted(OPS))})")
        params = {k: v for k, v in entry.items() if k != "op"}
        spec = OPS[name].params
        _require_keys(params, frozenset(spec), f"ops[{i}] ({name})")
        params = {k: spec[k](v, f"ops[{i}].{k}") for k, v in params.items()}
        calls.append(OpCall(name=name, params=params))
    return tuple(calls)


def parse_config(raw: Any, base: pathlib.Path = pathlib.Path(".")) -> ExperimentConfig:
    raw = _require_keys(raw, frozenset({"f", "g", "grid", "ops", "out_dir"}), "config")
    for key in ("f", "g"):
        if key not in raw:
            raise ConfigError(f"config needs '{key}'")
    g = parse_function(raw["g"], "g", base)
    f = parse_function(raw["f"], "f", base)
    if "grid" in raw:
        grid = _grid_block(raw["grid"])
    else:
        sampled = [s.grid for s in (g, f) if not s.is_mixture]
        grid = sampled[0] if sampled else grid_for(g, f)
    for name, spec in (("g", g), ("f", f)):
        if not spec.is_mixture and (spec.grid.n != grid.n
                                    or spec.grid.half_width != grid.half_width):
            raise ConfigError(f"sampled {name} must be given on the experiment grid")
    return ExperimentConfig(
        g=g,
        f=f,
        grid=grid,
        ops=_parse_ops(raw.get("ops", ["spectrum"])),
        out_dir=_path(raw.get("out_dir"), "out_dir"),
    )


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    path = pathlib.Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return parse_config(raw, base=path.parent)


# ---------------------------------------------------------------------
# Op registry for `run`
# ---------------------------------------------------------------------
@dataclass
class RunContext:
    config: ExperimentConfig
    rel_tol: float
    outputs: OutputSet
    _kernels: Dict[str, KernelMatrix] = field(default_factory=dict)
    _spectra: Dict[str, SpectralResult] = field(default_factory=dict)

    @property
    def grid(self) -> Grid:
        return self.config.grid

    def function(self, which: str) -> FunctionSpec:
        if which not in ("f", "g"):
            raise ParameterError(f"function must be 'f' or 'g', got {which!r}")
        return self.config.f if which == "f" else self.config.g

    def kernel(self, side: Side) -> KernelMatrix:
        if side not in self._kernels:
            self._kernels[side] = assemble_kernel(self.config.g, self.config.f, self.grid, side)
        return self._kernels[side]

    def spectrum(self, side: Side) -> SpectralResult:
        if side not in self._spectra:
            self._spectra[side] = eigendecompose(self.kernel(side), self.rel_tol)
        return self._spectra[side]


@dataclass(frozen=True)
class Op:
    fn: Callable[..., Dict[str, Any]]
    params: Dict[str, Validator]


OPS: Dict[str, Op] = {}
SIDE = _choice("position", "momentum")
FUNCTION = _choice("f", "g")


def op(name: str, **params: Validator):
    """Register an analysis under name; each keyword validates one config parameter."""

    def register(fn: Callable[..., Dict[str, Any]]):
        OPS[name] = Op(fn=fn, params=params)
        return fn

    return register


@op("spectrum", side=SIDE, assert_positive=_flag, assert_rank=_optional(_integer))
def _op_spectrum(ctx: RunContext, side: Side = "position", assert_positive: bool = False,
                 assert_rank: int | None = None) -> Dict[str, Any]:
    result = ctx.spectrum(side)
    passed = True
    if assert_positive:
        passed = passed and result.positivity
    if assert_rank is not None:
        passed = passed and result.rank == assert_rank
    return check(
        "spectrum", result.top_eigenvalue, passed,
        side=side,
        rank=result.rank,
        min_eigenvalue=result.min_eigenvalue,
        trace=result.trace,
        positivity=result.positivity,
        hermiticity_defect=ctx.kernel(side).hermiticity_defect(),
    )


@op("diagonal_identity", side=SIDE, max_residual=_number)
def _op_diagonal(ctx: RunContext, side: Side = "position",
                 max_residual: float = 1e-6) -> Dict[str, Any]:
    residual = diagonal_identity_residual(
        ctx.spectrum(side), ctx.config.g, ctx.config.f, ctx.grid, ctx.rel_tol
    )
    return {**at_most("diagonal_identity", residual, max_residual), "side": side}


@op("duality", top=_integer, max_residual=_number)
def _op_duality(ctx: RunContext, top: int = DUALITY_TOP,
                max_residual: float = 1e-6) -> Dict[str, Any]:
    return at_most("duality", duality_check(ctx.config.g, ctx.config.f, ctx.grid, top),
                   max_residual)


@op("strip_product", expect=_optional(_number), rel_tol=_number)
def _op_strip_product(ctx: RunContext, expect: float | None = None,
                      rel_tol: float = 0.05) -> Dict[str, Any]:
    report = strip_product_report(ctx.config.g, ctx.config.f, ctx.grid)
    passed = None if expect is None else abs(report.product - expect) <= rel_tol * abs(expect)
    return check("strip_product", report.product, passed, report=report.to_json())


@op("exp_moment", function=FUNCTION, s=_number, expect_diverging=_optional(_flag))
def _op_exp_moment(ctx: RunContext, function: str = "f", s: float = 0.0,
                   expect_diverging: bool | None = None) -> Dict[str, Any]:
    moment = exp_moment(ctx.function(function), s, ctx.grid)
    passed = None if expect_diverging is None else moment.diverging == expect_diverging
    return check("exp_moment", moment.value, passed,
                 function=function, s=s, diverging=moment.diverging)


@op("herglotz", function=FUNCTION, r=_optional(_number), levels=_integer)
def _op_herglotz(ctx: RunContext, function: str = "g", r: float | None = None,
                 levels: int = 8) -> Dict[str, Any]:
    spec = ctx.function(function)
    if r is None:
        strip = analytic_strip(spec)
        r = 1.0 if strip is None or not math.isfinite(strip) else 0.99 * strip
    ok = herglotz_grid_check(spec, r, ctx.grid, levels)
    return check("herglotz", ok, ok, function=function, r=r, levels=levels)


@op("fit_measure", function=FUNCTION, r_hat=_optional(_number),
    max_residual=_optional(_number))
def _op_fit_measure(ctx: RunContext, function: str = "g", r_hat: float | None = None,
                    max_residual: float | None = None) -> Dict[str, Any]:
    spec = ctx.function(function)
    if r_hat is None:
        strip = analytic_strip(spec)
        if strip is None or not math.isfinite(strip):
            raise ParameterError("fit_measure needs r_hat for this function")
        r_hat = HALF_PI / strip
    measure, residual = fit_measure(spec, r_hat, sample_grid=ctx.grid)
    name = "measure.json" if function == "g" else f"measure_{function}.json"
    ctx.outputs.add_json(name, measure.to_json(residual))
    passed = None if max_residual is None else residual <= max_residual
    return check("fit_measure", residual, passed, function=function, r_hat=r_hat,
                 atoms=len(measure.atoms), total_mass=measure.total_mass)


@op("plancherel", y=_number, s=_number, max_residual=_number)
def _op_plancherel(ctx: RunContext, y: float = 0.3, s: float = 0.3,
                   max_residual: float = 1e-8) -> Dict[str, Any]:
    return {**at_most("plancherel", plancherel_strip_check(y, s, ctx.grid), max_residual),
            "y": y, "s": s}


@op("continuation_identity", y=_number, max_residual=_number)
def _op_continuation(ctx: RunContext, y: float = 0.5,
                     max_residual: float = 1e-8) -> Dict[str, Any]:
    residual = strip_continuation_identity(ctx.config.g, ctx.config.f, ctx.grid, y)
    return {**at_most("continuation_identity", residual, max_residual), "y": y}


def run(config: ExperimentConfig, out_dir: str | os.PathLike | None = None,
        rel_tol: float = DEFAULT_REL_TOL, dump_kernel: bool = False) -> int:
    """Execute config.ops in order and write eigenvalues.csv, modes.csv and report.json."""
    target = out_dir or config.out_dir or "."
    outputs = OutputSet()
    ctx = RunContext(config=config, rel_tol=rel_tol, outputs=outputs)

    results = []
    for call in config.ops:
        log.info("op %s %s", call.name, safe_json(call.params))
        results.append(_guarded(call.name, lambda c=call: OPS[c.name].fn(ctx, **c.params)))

    try:
        _spectrum_files(outputs, ctx.spectrum("position"), config.grid, rel_tol)
        if dump_kernel:
            _kernel_file(outputs, ctx.kernel("position"))
    except KatoLabError as exc:
        results.append(check("spectrum_files", None, False, **error_payload(exc)))

    passed = _verdict(results)
    outputs.add_json("report.json", {
        "command": "run",
        "g": config.g.describe(),
        "f": config.f.describe(),
        "grid": config.grid.describe(),
        "rel_tol": rel_tol,
        "checks": results,
        "passed": passed,
    })
    outputs.commit(target)
    return EXIT_OK if passed else EXIT_FAILED


# ---------------------------------------------------------------------
# Built-in experiments
# ---------------------------------------------------------------------
def kato_pair(f_scale: float = HALF_PI) -> Tuple[FunctionSpec, FunctionSpec]:
    """g = tanh, f = tanh(f_scale * xi)."""
    return (FunctionSpec.mixture([TanhAtom(scale=1.0)]),
            FunctionSpec.mixture([TanhAtom(scale=f_scale)]))


def rank_three_pair(beta: float = 0.1) -> Tuple[FunctionSpec, FunctionSpec]:
    """g = tanh, f = tanh(pi xi / 2) + beta tanh(pi xi)."""
    atoms = [TanhAtom(scale=HALF_PI)]
    if beta > 0:
        atoms.append(TanhAtom(scale=math.pi, weight=beta))
    return FunctionSpec.mixture([TanhAtom(scale=1.0)]), FunctionSpec.mixture(atoms)


def phi_minus(x):
    """sinh(x/2) / cosh(x), the negative direction of the rank-three commutator."""
    x = np.asarray(x, dtype=float)
    return np.sinh(0.5 * x) * sech(x)


def _finish(command: str, checks: List[Dict[str, Any]], extra: Dict[str, Any],
            out_dir: str | os.PathLike, report_only: bool, outputs: OutputSet) -> int:
    passed = _verdict(checks)
    outputs.add_json("report.json", {
        "command": command, **extra, "checks": checks, "passed": passed,
    })
    outputs.commit(out_dir)
    for c in checks:
        if c["passed"] is False:
            log.warning("check %s failed: %s", c["name"], safe_json(c))
    if passed:
        log.info("%s: all checks passed", command)
    return EXIT_OK if passed or report_only else EXIT_FAILED


def _common_checks(g: FunctionSpec, f: FunctionSpec, grid: Grid, position: SpectralResult,
                   momentum: SpectralResult, relax: float, rel_tol: float) -> List[Dict[str, Any]]:
    return [
        _guarded("diagonal_identity_position", lambda: at_most(
            "diagonal_identity_position",
            diagonal_identity_residual(position, g, f, grid, rel_tol), 1e-6 * relax)),
        _guarded("diagonal_identity_momentum", lambda: at_most(
            "diagonal_identity_momentum",
            diagonal_identity_residual(momentum, g, f, grid, rel_tol), 1e-6 * relax)),
        _guarded("duality", lambda: at_most("duality", duality_check(g, f, grid), 1e-6 * relax)),
    ]


def verify_rank_one(out_dir: str | os.PathLike = ".", grid: Grid | None = None,
                    relax: float = 1.0, report_only: bool = False, f_scale: float = HALF_PI,
                    rel_tol: float = DEFAULT_REL_TOL, dump_kernel: bool = False) -> int:
    """
    Kato pair g = tanh, f = tanh(pi xi / 2): rank one, positive, top eigenvalue
    2/pi and mode proportional to sech.
    """
    if not relax >= 1.0:
        raise ParameterError(f"relax factor must be >= 1, got {relax}")
    g, f = kato_pair(f_scale)
    grid = grid or build_grid(DEFAULT_HALF_WIDTH, DEFAULT_NODES)
    outputs = OutputSet()
    position_kernel = assemble_kernel(g, f, grid, "position")
    position = eigendecompose(position_kernel, rel_tol)
    momentum = eigendecompose(assemble_kernel(g, f, grid, "momentum"), rel_tol)
    modes, _ = signed_modes(position, grid, rel_tol)
    x = grid.nodes
    overlap = mode_overlap(modes[0], sech(x), grid) if len(modes) else 0.0

    checks = [
        check("rank", position.rank, position.rank == 1, target=1),
        check("positivity", position.min_eigenvalue, position.positivity),
        close_to("top_eigenvalue", position.top_eigenvalue, 2.0 / math.pi, 1e-6 * relax),
        check("mode_overlap", overlap, overlap >= 1.0 - 1e-5 * relax, limit=1.0 - 1e-5 * relax),
        at_most("reconstruction", reconstruction_residual(position, position_kernel, rel_tol),
                1e-6 * relax),
        *_common_checks(g, f, grid, position, momentum, relax, rel_tol),
        _guarded("continuation_identity", lambda: at_most(
            "continuation_identity", strip_continuation_identity(g, f, grid, 0.5), 1e-6 * relax)),
    ]
    _spectrum_files(outputs, position, grid, rel_tol)
    if dump_kernel:
        _kernel_file(outputs, position_kernel)
    extra = {"grid": grid.describe(), "f_scale": f_scale, "relax": relax,
             "rank": position.rank, "rel_tol": rel_tol}
    return _finish("rank_one", checks, extra, out_dir, report_only, outputs)


def verify_rank_three(beta: float = 0.1, out_dir: str | os.PathLike = ".",
                      grid: Grid | None = None, relax: float = 1.0, report_only: bool = False,
                      rel_tol: float = DEFAULT_REL_TOL, dump_kernel: bool = False) -> int:
    """
    g = tanh, f = tanh(pi xi / 2) + beta tanh(pi xi): rank three with one
    negative eigenvalue -(beta / 2 pi)(pi - 2) along sinh(x/2)/cosh(x).
    beta = 0 degenerates to the Kato pair.
    """
    if not 0.0 <= beta <= 0.5:
        raise ParameterError(f"beta must lie in [0, 0.5], got {beta}")
    if not relax >= 1.0:
        raise ParameterError(f"relax factor must be >= 1, got {relax}")
    g, f = rank_three_pair(beta)
    grid = grid or build_grid(DEFAULT_HALF_WIDTH, DEFAULT_NODES)
    outputs = OutputSet()
    position_kernel = assemble_kernel(g, f, grid, "position")
    position = eigendecompose(position_kernel, rel_tol)
    momentum = eigendecompose(assemble_kernel(g, f, grid, "momentum"), rel_tol)
    x = grid.nodes
    minus = phi_minus(x)
    norm_minus = 0.5 * (math.pi - 2.0)

    checks = [
        check("rank", position.rank, position.rank == (3 if beta > 0 else 1),
              target=3 if beta > 0 else 1),
    ]
    if beta > 0:
        modes, signs = signed_modes(position, grid, rel_tol)
        negative = modes[signs < 0]
        overlap = mode_overlap(negative[-1], minus, grid) if len(negative) else 0.0
        sw_phi = np.sqrt(grid.weights) * minus
        quadratic = float(np.real(sw_phi @ position_kernel.entries @ sw_phi))
        checks += [
            close_to("min_eigenvalue", position.min_eigenvalue,
                     -(beta / (2.0 * math.pi)) * (math.pi - 2.0), 1e-5 * relax),
            check("negative_mode_overlap", overlap, overlap >= 1.0 - 1e-4 * relax,
                  limit=1.0 - 1e-4 * relax),
            close_to("quadratic_form", quadratic,
                     -(beta / math.pi) * norm_minus ** 2, 1e-5 * relax),
        ]
    else:
        checks.append(check("positivity", position.min_eigenvalue, position.positivity))

    checks.append(close_to("sech_orthogonality", integrate(grid, sech(x) * minus), 0.0, 1e-10))
    wide = build_grid(40.0, 3201)
    norm_phi = integrate(wide, sech(wide.nodes) ** 2)
    weighted = integrate(wide, np.exp(-wide.nodes) * sech(wide.nodes) ** 2)
    checks += [
        close_to("lambda_minus", norm_phi - weighted, 2.0 - math.pi, 1e-8),
        close_to("lambda_plus", norm_phi + weighted, 2.0 + math.pi, 1e-8),
        *_common_checks(g, f, grid, position, momentum, relax, rel_tol),
    ]
    _spectrum_files(outputs, position, grid, rel_tol)
    if dump_kernel:
        _kernel_file(outputs, position_kernel)
    extra = {"grid": grid.describe(), "beta": beta, "relax": relax,
             "rank": position.rank, "rel_tol": rel_tol, "bracket_f": bracket(f)}
    return _finish("rank_three", checks, extra, out_dir, report_only, outputs)


# ---------------------------------------------------------------------
# Conjecture scan
# ---------------------------------------------------------------------
SWEEP_KEYS = ("g_scale", "f_scale", "f2_scale", "beta")
SWEEP_DEFAULTS = {"g_scale": [1.0], "f_scale": [HALF_PI], "f2_scale": [math.pi], "beta": [0.0]}


def expand_sweep(sweep: Any) -> List[Tuple[float, float, float, float]]:
    """Cartesian product of the sweep lists, in key order g_scale, f_scale, f2_scale, beta."""
    sweep = _require_keys(sweep, frozenset(SWEEP_KEYS), "sweep")
    axes = []
    for key in SWEEP_KEYS:
        values = sweep.get(key, SWEEP_DEFAULTS[key])
        if not isinstance(values, list):
            raise ConfigError(f"sweep.{key} must be a list")
        axes.append([_number(v, f"sweep.{key}[{j}]") for j, v in enumerate(values)])
    total = math.prod(len(a) for a in axes)
    if total > MAX_SWEEP_POINTS:
        raise ConfigError(f"sweep has {total} points, limit is {MAX_SWEEP_POINTS}")
    return list(itertools.product(*axes))


def _scan_point(index: int, point: Tuple[float, float, float, float], grid: Grid | None,
                rel_tol: float) -> List[Any]:
    g_scale, f_scale, f2_scale, beta = point
    nan = float("nan")
    try:
        g = FunctionSpec.mixture([TanhAtom(scale=g_scale)])
        atoms = [TanhAtom(scale=f_scale)]
        if beta > 0:
            atoms.append(TanhAtom(scale=f2_scale, weight=beta))
        f = FunctionSpec.mixture(atoms)
        point_grid = grid or grid_for(g, f)
        result = eigendecompose(assemble_kernel(g, f, point_grid, "position"), rel_tol)
    except (KatoLabError, MemoryError) as exc:
        log.warning("scan point %d skipped: %s", index, exc)
        return [index, *point, nan, -1, nan, nan, nan]
    try:
        report = strip_product_report(g, f, point_grid)
        strips = [report.r, report.r_prime, report.product]
    except KatoLabError as exc:
        log.warning("scan point %d: strip estimate unavailable: %s", index, exc)
        strips = [nan, nan, nan]
    return [index, *point, result.min_eigenvalue, result.rank, *strips]


def conjecture_scan(sweep: Any, out_dir: str | os.PathLike = ".", grid: Grid | None = None,
                    threads: int = 1, rel_tol: float = DEFAULT_REL_TOL) -> int:
    """Spectrum and strip product per sweep point; rows stay in sweep order."""
    points = expand_sweep(sweep)
    if threads < 1:
        raise ParameterError(f"threads must be >= 1, got {threads}")
    log.info("scanning %d point(s) on %d thread(s)", len(points), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        rows = list(pool.map(lambda item: _scan_point(*item, grid, rel_tol), enumerate(points)))
    outputs = OutputSet()
    outputs.add_csv("scan.csv", SCAN_COLUMNS, rows)
    outputs.commit(out_dir)
    return EXIT_OK


def load_scan_config(path: str | os.PathLike | None) -> Tuple[Any, Grid | None, str | None]:
    if path is None:
        return {}, None, None
    try:
        raw = json.loads(pathlib.Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load scan config {path}: {exc}") from None
    raw = _require_keys(raw, frozenset({"sweep", "grid", "out_dir"}), "scan config")
    grid = _grid_block(raw["grid"]) if "grid" in raw else None
    return raw.get("sweep", {}), grid, _path(raw.get("out_dir"), "out_dir")


# ---------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------
def _default_threads() -> int:
    value = os.getenv("KATOLAB_THREADS", "1")
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"KATOLAB_THREADS must be an integer, got {value!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory")
    common.add_argument("--tol", type=float, default=DEFAULT_REL_TOL,
                        help="relative eigenvalue threshold for the numerical rank")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: KATOLAB_THREADS or 1)")
    common.add_argument("--dump-kernel", action="store_true",
                        help="also write the position kernel matrix as CSV")
    common.add_argument("--log-file")
    common.add_argument("--log-level")

    builtin = argparse.ArgumentParser(add_help=False)
    builtin.add_argument("--L", type=float, default=None, help="grid half-width")
    builtin.add_argument("--n", type=int, default=None, help="grid node count (odd)")
    builtin.add_argument("--relax", type=float, default=1.0,
                         help="multiply every tolerance by this factor")
    builtin.add_argument("--report-only", action="store_true",
                         help="write the report but exit 0 even if checks fail")

    parser = argparse.ArgumentParser(prog="katolab", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", parents=[common], help="run a JSON experiment config")
    p_run.add_argument("--config", required=True)
    p_one = sub.add_parser("rank-one", parents=[common, builtin], help="Kato pair checks")
    p_one.add_argument("--f-scale", type=float, default=HALF_PI)
    p_three = sub.add_parser("rank-three", parents=[common, builtin], help="rank-three checks")
    p_three.add_argument("--beta", type=float, default=0.1)
    p_scan = sub.add_parser("scan", parents=[common], help="strip-product conjecture scan")
    p_scan.add_argument("--config")
    return parser


def _override_grid(args: argparse.Namespace) -> Grid | None:
    if args.L is None and args.n is None:
        return None
    return build_grid(
        args.L if args.L is not None else DEFAULT_HALF_WIDTH,
        args.n if args.n is not None else DEFAULT_NODES,
    )


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID

    try:
        configure_logging(args.log_level, args.log_file)
        threads = args.threads if args.threads is not None else _default_threads()
        if args.command == "run":
            config = load_config(args.config)
            return run(config, args.out, rel_tol=args.tol, dump_kernel=args.dump_kernel)
        if args.command == "rank-one":
            return verify_rank_one(args.out or ".", _override_grid(args), args.relax,
                                   args.report_only, args.f_scale, args.tol, args.dump_kernel)
        if args.command == "rank-three":
            return verify_rank_three(args.beta, args.out or ".", _override_grid(args), args.relax,
                                     args.report_only, args.tol, args.dump_kernel)
        sweep, grid, out_dir = load_scan_config(args.config)
        return conjecture_scan(sweep, args.out or out_dir or ".", grid, threads, args.tol)
    except KatoLabError as exc:
        log.error("invalid input: %s", safe_json(error_payload(exc)))
        return EXIT_INVALID
    except OSError as exc:
        log.error("i/o failure: %s", exc)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
