"""Experiment engine: single runs, refinement studies, Table-1 comparison, CSV output."""

import csv
from dataclasses import asdict, dataclass, field, fields, replace
import logging
import math
from pathlib import Path
import time

import numpy as np

from .control import (
    ReducedProblem,
    classify_cells,
    control_l2_error,
    optimize,
    predicted_rate,
)
from .mesh import (
    choose_truncation,
    graded_partition,
    refine_uniform,
    tensor_cylinder,
    triangulate_convex_domain,
    uniform_square,
    unit_disk_curve,
)
from .solve import CylinderSolver, l2_error_vs_spectral, trace
from .spectral import FracParams, eigenvalue, exact_triple

log = logging.getLogger(__name__)

# (cells per side, y-intervals) reproducing the DOF counts (N+1)^2 (M+1) of the
# published comparison: 432, 3146, 10496, 25137, 49348, 85529, 137376.
TABLE1_MESHES = [(5, 11), (10, 25), (15, 40), (20, 56), (25, 72), (30, 88), (35, 105)]

# (#DOFs, scheme, s) -> published E_z for the same manufactured problem
REFERENCE_E_Z = {
    (432, "p0", 0.2): 0.147712126, (432, "p1", 0.2): 0.131130828,
    (432, "p0", 0.8): 0.1482301425, (432, "p1", 0.8): 0.1470944750,
    (3146, "p0", 0.2): 0.083305924, (3146, "p1", 0.2): 0.036668665,
    (3146, "p0", 0.8): 0.0840901319, (3146, "p1", 0.8): 0.0443202090,
    (10496, "p0", 0.2): 0.058953277, (10496, "p1", 0.2): 0.020712242,
    (10496, "p0", 0.8): 0.0588454408, (10496, "p1", 0.8): 0.0241526956,
    (25137, "p0", 0.2): 0.044253527, (25137, "p1", 0.2): 0.012937511,
    (25137, "p0", 0.8): 0.0441539905, (25137, "p1", 0.8): 0.0148381456,
    (49348, "p0", 0.2): 0.035650434, (49348, "p1", 0.2): 0.008967500,
    (49348, "p0", 0.8): 0.0356800357, (49348, "p1", 0.8): 0.0101409325,
    (85529, "p0", 0.2): 0.029769320, (85529, "p1", 0.2): 0.007334747,
    (85529, "p0", 0.8): 0.0297507072, (85529, "p1", 0.8): 0.0080907623,
    (137376, "p0", 0.2): 0.025419044, (137376, "p1", 0.2): 0.005094037,
    (137376, "p0", 0.8): 0.0254259814, (137376, "p1", 0.8): 0.0056585074,
}
TABLE1_DOFS = sorted({k[0] for k in REFERENCE_E_Z})

DISK_LAMBDA_1 = 2.404825557695773**2

CSV_HEADER = ["s", "scheme", "n_dofs", "h", "Y", "E_z", "state_err", "iters", "seconds"]


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    s_values: list = field(default_factory=lambda: [0.2, 0.8])
    levels: list = field(default_factory=lambda: [1, 2, 3, 4, 5, 6, 7])
    mesh_family: str = "table"
    gamma_factor: float = 1.1
    trunc_c0: float = 1.0
    vartheta: float = 1.0
    a_bound: float = -0.5
    b_bound: float = 0.5
    scheme: str = "p1"
    domain: str = "square"
    solver: str = "tensor"
    rel_tol: float = 1e-10
    opt_tol: float = 1e-8
    max_iter: int = 500
    timing: bool = True
    out_dir: str = "results"

    def validate(self):
        if not self.s_values:
            raise ConfigError("s_values is empty")
        for s in self.s_values:
            if not 0.0 < s < 1.0:
                raise ConfigError(f"s={s} outside (0, 1)")
        if not self.levels or min(self.levels) < 1:
            raise ConfigError("levels must be positive integers")
        if self.mesh_family not in ("table", "dyadic"):
            raise ConfigError(f"unknown mesh_family {self.mesh_family!r}")
        if self.mesh_family == "table" and self.domain == "square" and max(self.levels) > len(TABLE1_MESHES):
            raise ConfigError(f"table mesh family has only {len(TABLE1_MESHES)} levels")
        if not self.gamma_factor > 1.0:
            raise ConfigError("gamma_factor must exceed 1")
        if not self.trunc_c0 > 0.0:
            raise ConfigError("trunc_c0 must be positive")
        if not self.vartheta > 0.0:
            raise ConfigError("vartheta must be positive")
        if not self.a_bound < self.b_bound:
            raise ConfigError("a_bound must be below b_bound")
        if self.scheme not in ("p0", "p1"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.domain not in ("square", "disk"):
            raise ConfigError(f"unknown domain {self.domain!r}")
        if self.solver not in ("tensor", "splu", "cg"):
            raise ConfigError(f"unknown solver {self.solver!r}")
        if not (self.rel_tol > 0.0 and self.opt_tol > 0.0 and self.max_iter > 0):
            raise ConfigError("tolerances and max_iter must be positive")
        return self


def _parse_value(name, text, kind):
    text = text.strip()
    if kind is bool:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: cannot parse boolean {text!r}")
    try:
        if kind is list:
            conv = int if name == "levels" else float
            return [conv(v) for v in text.replace(" ", "").split(",") if v]
        return kind(text)
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from None


_FIELD_KINDS = {
    "s_values": list, "levels": list, "mesh_family": str, "gamma_factor": float,
    "trunc_c0": float, "vartheta": float, "a_bound": float, "b_bound": float,
    "scheme": str, "domain": str, "solver": str, "rel_tol": float, "opt_tol": float,
    "max_iter": int, "timing": bool, "out_dir": str,
}


def parse_config(text, base=None) -> ExperimentConfig:
    """Parse flat ``key = value`` lines (``#`` comments); lists are comma separated."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, val = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "s":
            key = "s_values"
        if key not in _FIELD_KINDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, val, _FIELD_KINDS[key])
    return replace(base or ExperimentConfig(), **values)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


@dataclass
class ConvergenceRecord:
    s: float
    scheme: str
    n_dofs: int
    h: float
    Y: float
    E_z: float
    state_err: float
    iters: int
    seconds: float


@dataclass
class RunResult:
    record: ConvergenceRecord
    iterate: object
    problem: object
    mesh: object
    n_free: int
    kink_measure: float


def build_mesh(config: ExperimentConfig, s: float, level: int):
    """Cylinder mesh for one refinement level, with Y from :func:`choose_truncation`."""
    if config.domain == "square":
        if config.mesh_family == "table":
            n, M = TABLE1_MESHES[level - 1]
        else:
            n = M = 2**level
        base = uniform_square(n)
        lam1 = eigenvalue(1, 1)
    else:
        base = triangulate_convex_domain(unit_disk_curve(), 0.5)
        for _ in range(level - 1):
            base = refine_uniform(base)
        M = 2 ** (level + 1)
        lam1 = DISK_LAMBDA_1
    Y = choose_truncation(M, lam1, config.trunc_c0)
    part = graded_partition(M, Y, s=s, gamma_factor=config.gamma_factor)
    return tensor_cylinder(base, part)


def _disk_data(params):
    def u_d(x1, x2):
        return 4.0 * (1.0 - x1**2 - x2**2) * np.cos(2.0 * x1)

    return u_d, None


def run_single(config: ExperimentConfig, s: float, level: int) -> RunResult:
    """Build, assemble, optimize from Z = 0 and evaluate one level."""
    config.validate()
    t0 = time.perf_counter()
    params = FracParams(s, config.vartheta, config.a_bound, config.b_bound)
    mesh = build_mesh(config, s, level)
    solver = CylinderSolver(mesh, params, method=config.solver, rel_tol=config.rel_tol)
    if config.domain == "square":
        triple = exact_triple(params)
        u_d, forcing = triple.u_d, triple.f
    else:
        triple = None
        u_d, forcing = _disk_data(params)
    problem = ReducedProblem(mesh, params, u_d, forcing=forcing, scheme=config.scheme, solver=solver)
    iterate = optimize(problem, tol=config.opt_tol, max_iter=config.max_iter)
    if not iterate.converged:
        log.warning("optimizer stopped at max_iter=%d with pg=%.3e", config.max_iter, iterate.pg_norm)
    if triple is not None:
        E_z = control_l2_error(problem.space, iterate.Z, triple.z_bar)
        state_err = l2_error_vs_spectral(trace(iterate.V), triple.u_bar)
    else:
        E_z = state_err = math.nan
    cells = classify_cells(problem.space, iterate.Z, config.a_bound, config.b_bound)
    seconds = time.perf_counter() - t0 if config.timing else 0.0
    record = ConvergenceRecord(
        s=float(s), scheme=config.scheme, n_dofs=int(mesh.n_dofs_total), h=mesh.base.h,
        Y=mesh.partition.Y, E_z=E_z, state_err=state_err, iters=iterate.iterations, seconds=seconds,
    )
    log.info("s=%g %s level=%d dofs=%d E_z=%.6e iters=%d", s, config.scheme, level,
             record.n_dofs, E_z, iterate.iterations)
    return RunResult(record, iterate, problem, mesh, mesh.n_dofs, cells.kink_measure)


@dataclass
class RateFit:
    slope: float
    observed_target: float
    predicted_slope: float
    monotone: bool


def fit_rate(n_dofs, errors, last=3) -> float:
    """Least-squares slope of log(error) against log(n_dofs) over the last points."""
    x = np.log(np.asarray(n_dofs, dtype=float)[-last:])
    y = np.log(np.asarray(errors, dtype=float)[-last:])
    if len(x) < 2:
        raise ValueError("need at least two points for a rate")
    xc = x - x.mean()
    return float(np.sum(xc * (y - y.mean())) / np.sum(xc * xc))


def run_convergence(config: ExperimentConfig, s: float):
    """Refinement study for one s; returns ``(records, RateFit)``."""
    if len(config.levels) < 3:
        raise ConfigError("a convergence study needs at least 3 levels")
    records = [run_single(config, s, lv).record for lv in sorted(config.levels)]
    errs = [r.E_z for r in records]
    monotone = all(b < a for a, b in zip(errs, errs[1:]))
    if not monotone:
        log.warning("non-monotone error sequence for s=%g: %s", s, errs)
    fit = RateFit(
        slope=fit_rate([r.n_dofs for r in records], errs),
        observed_target=-0.5,
        predicted_slope=-predicted_rate(s),
        monotone=monotone,
    )
    return records, fit


@dataclass
class Table1Row:
    target_dofs: int
    n_dofs: int
    scheme: str
    s: float
    E_z: float
    reference: float

    @property
    def rel_dev(self):
        return (self.E_z - self.reference) / self.reference


def nearest_level(config: ExperimentConfig, target: int) -> int:
    """Level of the configured square mesh family whose total DOF count is closest to ``target``."""
    counts = {}
    for lv in range(1, (len(TABLE1_MESHES) if config.mesh_family == "table" else 8) + 1):
        if config.mesh_family == "table":
            n, M = TABLE1_MESHES[lv - 1]
        else:
            n = M = 2**lv
        counts[lv] = (n + 1) ** 2 * (M + 1)
    return min(counts, key=lambda lv: abs(counts[lv] - target))


def reproduce_table1(config: ExperimentConfig | None = None, targets=None, s_values=(0.2, 0.8),
                     schemes=("p0", "p1")):
    config = replace(config or ExperimentConfig(), domain="square")
    rows = []
    for target in targets or TABLE1_DOFS:
        lv = nearest_level(config, target)
        for s in s_values:
            for scheme in schemes:
                rec = run_single(replace(config, scheme=scheme), s, lv).record
                rows.append(Table1Row(target, rec.n_dofs, scheme, s, rec.E_z,
                                      REFERENCE_E_Z[(target, scheme, s)]))
    return rows


def format_table1(rows) -> str:
    lines = [
        "# #DOFs counts every vertex of T_Y (Dirichlet vertices included).",
        f"{'target':>8} {'n_dofs':>8} {'scheme':>6} {'s':>4} {'E_z':>14} {'reference':>14} {'rel.dev':>8}",
    ]
    for r in rows:
        lines.append(f"{r.target_dofs:>8d} {r.n_dofs:>8d} {r.scheme:>6} {r.s:>4.1f} "
                     f"{r.E_z:>14.9f} {r.reference:>14.9f} {100 * r.rel_dev:>7.2f}%")
    return "\n".join(lines)


def _fmt(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.12g}"


def emit_csv(records, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow([_fmt(getattr(r, name)) for name in CSV_HEADER])
    return path


def read_csv(path):
    kinds = {f.name: f.type for f in fields(ConvergenceRecord)}
    with open(path, newline="") as fh:
        return [ConvergenceRecord(**{name: kinds[name](row[name]) for name in CSV_HEADER})
                for row in csv.DictReader(fh)]


def emit_plotdata(records, path):
    """Log-log pairs ``log10(n_dofs) log10(E_z)``, one block per (s, scheme) series."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    series = {}
    for r in records:
        series.setdefault((r.s, r.scheme), []).append(r)
    with open(path, "w") as fh:
        for (s, scheme), rs in series.items():
            fh.write(f"# s={_fmt(s)} scheme={scheme}\n")
            for r in sorted(rs, key=lambda r: r.n_dofs):
                fh.write(f"{math.log10(r.n_dofs):.12g} {math.log10(r.E_z):.12g}\n")
            fh.write("\n\n")
    return path


def config_dict(config: ExperimentConfig):
    return asdict(config)
