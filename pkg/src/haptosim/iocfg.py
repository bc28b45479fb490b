"""Run-configuration ingestion plus VTK and CSV emission.

Configuration files are flat ``key = value`` lines; ``#`` starts a comment.
Unknown keys are rejected, missing keys take the documented defaults.
Snapshots are written as legacy ASCII VTK unstructured grids (quad type 9 /
hexahedron type 12) with the three point-data arrays u, c, p; per-step
diagnostics are written as a flat CSV.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import model
from .mesh import StructuredMesh, build_structured_mesh
from .model import InitialData, Parameters, SimState

CONFIG_KEYS = (
    "dim", "domain_min", "domain_max", "base_cells", "refinements",
    "alpha", "chi", "mu", "epsilon", "theta", "dt", "t_final", "beta",
    "tol_fp", "max_fp_iters", "tol_lin", "blowup_threshold",
    "initial", "snapshots", "out_dir", "vtk_every",
)

DIAGNOSTICS_HEADER = (
    "time,max_u,min_u,max_c,min_c,max_p,min_p,mass_u,mass_c,mass_p,fp_iters,breakdown"
)

_VTK_CELL_TYPE = {2: 9, 3: 12}  # quad, hexahedron


class ConfigError(ValueError):
    """Malformed or invalid run configuration."""


@dataclass(frozen=True)
class RunConfig:
    """A fully validated run setup."""

    dim: int
    extents: tuple[tuple[float, float], ...]
    base_cells: tuple[int, ...]
    refinements: int
    params: Parameters
    initial: str
    snapshots: tuple[float, ...]
    out_dir: str
    vtk_every: int

    def build_mesh(self) -> StructuredMesh:
        return build_structured_mesh(
            self.dim, self.extents, self.base_cells, self.refinements
        )

    def initial_data(self) -> InitialData:
        return model.initial_data_family(self.initial)

    @property
    def n_steps(self) -> int:
        return int(round(self.params.t_final / self.params.dt))


def read_pairs(text: str):
    """Split config text into (line_number, key, raw_value) triples."""
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: missing key")
        pairs.append((lineno, key, value))
    return pairs


def _parse_int(key, value, lineno):
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"line {lineno}: {key} must be an integer, got {value!r}")


def _parse_float(key, value, lineno):
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"line {lineno}: {key} must be a number, got {value!r}")


def _parse_float_list(key, value, lineno):
    return tuple(
        _parse_float(key, part.strip(), lineno) for part in value.split(",") if part.strip() != ""
    )


def _parse_int_list(key, value, lineno):
    return tuple(
        _parse_int(key, part.strip(), lineno) for part in value.split(",") if part.strip() != ""
    )


def _per_axis(key, values, dim, lineno=0):
    if len(values) == 1:
        return values * dim
    if len(values) != dim:
        raise ConfigError(
            f"{key} needs 1 or {dim} comma-separated values, got {len(values)}"
        )
    return values


def _is_step_multiple(t, dt) -> bool:
    ratio = t / dt
    return abs(ratio - round(ratio)) <= 1e-12 * max(1.0, abs(ratio))


def build_config(pairs) -> RunConfig:
    """Validate key/value pairs (as from :func:`read_pairs`) into a RunConfig."""
    seen = {}
    for lineno, key, value in pairs:
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(
                f"line {lineno}: duplicate key {key!r} (first on line {seen[key][0]})"
            )
        seen[key] = (lineno, value)

    def raw(key, default=None):
        if key in seen:
            return seen[key]
        return (0, default)

    lineno, value = raw("dim", "2")
    dim = _parse_int("dim", value, lineno)
    if dim not in (2, 3):
        raise ConfigError(f"dim must be 2 or 3, got {dim}")

    lineno, value = raw("domain_min", "0")
    lo = _per_axis("domain_min", _parse_float_list("domain_min", value, lineno), dim)
    lineno, value = raw("domain_max", "20")
    hi = _per_axis("domain_max", _parse_float_list("domain_max", value, lineno), dim)
    extents = tuple(zip(lo, hi))
    for axis, (a, b) in enumerate(extents):
        if not (b > a):
            raise ConfigError(f"domain interval [{a}, {b}] on axis {axis} is empty")

    lineno, value = raw("base_cells", "1")
    base_cells = _per_axis("base_cells", _parse_int_list("base_cells", value, lineno), dim)
    if any(b < 1 for b in base_cells):
        raise ConfigError(f"base_cells must be >= 1, got {base_cells}")

    lineno, value = raw("refinements", "5")
    refinements = _parse_int("refinements", value, lineno)
    if refinements < 0:
        raise ConfigError(f"refinements must be >= 0, got {refinements}")

    float_keys = (
        "alpha", "chi", "mu", "epsilon", "theta", "dt", "t_final", "beta",
        "tol_fp", "tol_lin", "blowup_threshold",
    )
    numbers = {}
    for key in float_keys:
        if key in seen:
            lineno, value = seen[key]
            numbers[key] = _parse_float(key, value, lineno)
    if "max_fp_iters" in seen:
        lineno, value = seen["max_fp_iters"]
        numbers["max_fp_iters"] = _parse_int("max_fp_iters", value, lineno)
    try:
        params = Parameters(**numbers)
    except model.ParameterError as exc:
        raise ConfigError(str(exc)) from exc

    if not _is_step_multiple(params.t_final, params.dt):
        raise ConfigError(
            f"t_final = {params.t_final} is not a whole number of steps of dt = {params.dt}"
        )

    lineno, value = raw("initial", "corner-gaussian")
    initial = value
    if initial not in model.INITIAL_FAMILIES:
        known = ", ".join(sorted(model.INITIAL_FAMILIES))
        raise ConfigError(f"unknown initial-data family {initial!r} (known: {known})")

    lineno, value = raw("snapshots", "5, 15, 25, 35")
    snapshots = _parse_float_list("snapshots", value, lineno)
    for t in snapshots:
        if t < 0.0:
            raise ConfigError(f"snapshot time {t} is negative")
        if not _is_step_multiple(t, params.dt):
            raise ConfigError(
                f"snapshot time {t} does not land on a step boundary of dt = {params.dt}"
            )

    _, value = raw("out_dir", None)
    out_dir = value if value is not None else os.environ.get("HAPTOSIM_OUT", "out")

    lineno, value = raw("vtk_every", "0")
    vtk_every = _parse_int("vtk_every", value, lineno)
    if vtk_every < 0:
        raise ConfigError(f"vtk_every must be >= 0, got {vtk_every}")

    return RunConfig(
        dim=dim,
        extents=extents,
        base_cells=base_cells,
        refinements=refinements,
        params=params,
        initial=initial,
        snapshots=snapshots,
        out_dir=out_dir,
        vtk_every=vtk_every,
    )


def parse_config(text: str) -> RunConfig:
    """Parse and validate a config file; see module docstring for the format."""
    return build_config(read_pairs(text))


def apply_overrides(pairs, overrides):
    """Apply ``key=value`` override strings on top of file pairs."""
    merged = list(pairs)
    for n, item in enumerate(overrides, start=1):
        if "=" not in item:
            raise ConfigError(f"override {n}: expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        key, value = key.strip(), value.strip()
        merged = [p for p in merged if p[1] != key]
        merged.append((0, key, value))
    return merged


def render_config(config: RunConfig) -> str:
    """Emit a config in canonical form; parse(render(c)) == c."""

    def floats(values):
        return ", ".join(repr(float(v)) for v in values)

    p = config.params
    lines = [
        f"dim = {config.dim}",
        f"domain_min = {floats(lo for lo, _ in config.extents)}",
        f"domain_max = {floats(hi for _, hi in config.extents)}",
        f"base_cells = {', '.join(str(b) for b in config.base_cells)}",
        f"refinements = {config.refinements}",
        f"alpha = {p.alpha!r}",
        f"chi = {p.chi!r}",
        f"mu = {p.mu!r}",
        f"epsilon = {p.epsilon!r}",
        f"theta = {p.theta!r}",
        f"dt = {p.dt!r}",
        f"t_final = {p.t_final!r}",
        f"beta = {p.beta!r}",
        f"tol_fp = {p.tol_fp!r}",
        f"max_fp_iters = {p.max_fp_iters}",
        f"tol_lin = {p.tol_lin!r}",
        f"blowup_threshold = {p.blowup_threshold!r}",
        f"initial = {config.initial}",
        f"snapshots = {floats(config.snapshots)}" if config.snapshots else "snapshots =",
        f"out_dir = {config.out_dir}",
        f"vtk_every = {config.vtk_every}",
    ]
    return "\n".join(lines) + "\n"


def write_vtk(state: SimState, path) -> None:
    """Write one snapshot as a legacy ASCII VTK unstructured grid.

    Numbers are printed with ``repr``, i.e. the shortest digit string that
    round-trips the double exactly.  Fields flagged as breakdown artifacts
    are marked in the title line.
    """
    mesh = state.mesh
    flagged = state.u.breakdown or state.c.breakdown or state.p.breakdown
    title = f"haptosim fields u,c,p at t={state.t!r}"
    if flagged:
        title += " [breakdown artifact]"

    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_nodes} double",
    ]
    for x in mesh.node_coords:
        coords = list(x) + [0.0] * (3 - mesh.dim)
        lines.append(" ".join(repr(float(c)) for c in coords))

    npe = mesh.nodes_per_element
    lines.append(f"CELLS {mesh.n_elements} {mesh.n_elements * (npe + 1)}")
    for elem in mesh.elements:
        lines.append(f"{npe} " + " ".join(str(i) for i in elem))
    lines.append(f"CELL_TYPES {mesh.n_elements}")
    cell_type = _VTK_CELL_TYPE[mesh.dim]
    lines.extend(str(cell_type) for _ in range(mesh.n_elements))

    lines.append(f"POINT_DATA {mesh.n_nodes}")
    for name, fld in (("u", state.u), ("c", state.c), ("p", state.p)):
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(repr(float(v)) for v in fld.coeffs)

    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def write_diagnostics_csv(records, path) -> None:
    """Write per-step diagnostics; one row per completed time level.

    ``records`` is an iterable of objects exposing the column names of
    ``DIAGNOSTICS_HEADER`` as attributes (see the stepper's StepRecord).
    """
    with open(path, "w", encoding="ascii") as fh:
        fh.write(DIAGNOSTICS_HEADER + "\n")
        for rec in records:
            row = [
                repr(float(rec.time)),
                repr(float(rec.max_u)), repr(float(rec.min_u)),
                repr(float(rec.max_c)), repr(float(rec.min_c)),
                repr(float(rec.max_p)), repr(float(rec.min_p)),
                repr(float(rec.mass_u)), repr(float(rec.mass_c)),
                repr(float(rec.mass_p)),
                str(int(rec.fp_iters)),
                str(int(rec.breakdown)),
            ]
            fh.write(",".join(row) + "\n")
            if rec.breakdown:
                break


def read_diagnostics_csv(path):
    """Read a diagnostics CSV back as a dict of column -> numpy array."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != DIAGNOSTICS_HEADER:
            raise ConfigError(f"unexpected diagnostics header in {path}")
        columns = header.split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    data = np.array([[float(v) for v in row] for row in rows])
    if data.size == 0:
        data = data.reshape(0, len(columns))
    return {name: data[:, k] for k, name in enumerate(columns)}
