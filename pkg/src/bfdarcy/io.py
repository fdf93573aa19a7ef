"""Run configuration, binary snapshots and diagnostics CSV files.

Config files are flat ``key = value`` text with dotted section names::

    # 32^3 Taylor-Green run
    grid.n_h = 32
    grid.n_v = 32
    t_end = 1.0
    physics.nu = 0.05
    ic.type = taylor_green+vertical_shear

Everything except ``grid.n_h``, ``grid.n_v`` and ``t_end`` has a default,
listed in :data:`DEFAULTS`.
"""

from __future__ import annotations

import csv
import hashlib
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import RECORD_COLUMNS, DiagnosticsRecord
from .dynamics import PhysicsParams, StepperConfig
from .spectral import (
    GridSpec,
    SpectralVelocityField,
    make_grid,
    random_divergence_free,
    taylor_green,
    uniform_field,
    vertical_shear,
)

__all__ = [
    "ConfigError",
    "SnapshotError",
    "RunConfig",
    "DEFAULTS",
    "REQUIRED",
    "parse_config_text",
    "load_config",
    "build_config",
    "config_hash",
    "initial_condition",
    "SNAPSHOT_MAGIC",
    "write_snapshot",
    "read_snapshot",
    "CsvWriter",
    "read_diagnostics_csv",
]

REQUIRED = ("grid.n_h", "grid.n_v", "t_end")

TWO_PI_REPR = repr(2.0 * math.pi)

DEFAULTS = {
    "grid.box_lengths": f"{TWO_PI_REPR}, {TWO_PI_REPR}, {TWO_PI_REPR}",
    "physics.nu": "0.05",
    "physics.a": "1.0",
    "physics.alpha": "1.5",
    "physics.strict": "true",
    "stepper.dt": "0.001",
    "stepper.scheme": "imex_rk3",
    "stepper.damping_mode": "explicit",
    "stepper.cfl_safety": "0.5",
    "stepper.dt_max": "0.1",
    "ic.type": "taylor_green",
    "ic.amplitude": "1.0",
    "ic.slope": "-1.6666666666666667",
    "ic.seed": "0",
    "ic.energy": "1.0",
    "ic.vector": "1.0, 0.0, 0.0",
    "ic.path": "",
    "diag_every": "1",
    "snapshot_every": "500",
    "output_dir": "bfdarcy_output",
    # verify suites
    "verify.grid_n": "16",
    "verify.samples": "500",
    "verify.pairs": "1000000",
    "verify.alphas": "1.25, 1.5, 2.0",
    "verify.seed": "0",
    "verify.budget_tol": "1e-5",
    "stability.delta": "1e-4",
    "stability.perturbation_seed": "1000",
    "stability.kappa": "auto",
    "stability.record_every": "10",
}

IC_TYPES = ("taylor_green", "vertical_shear", "random", "uniform", "file")


class ConfigError(ValueError):
    """Invalid or incomplete configuration (CLI exit code 2)."""


class SnapshotError(ValueError):
    """Corrupt, truncated or mismatched snapshot file."""


# -- config ---------------------------------------------------------------------

def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        values[key] = value
    return values


def load_config(path, overrides: dict[str, str] | None = None) -> "RunConfig":
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    values = parse_config_text(text, str(path))
    values.update(overrides or {})
    return build_config(values)


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec
    physics: PhysicsParams
    stepper: StepperConfig
    ic: dict
    t_end: float
    diag_every: int
    snapshot_every: int
    output_dir: Path
    values: dict

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.stepper.dt))

    def resolved_text(self) -> str:
        """Normalised ``key = value`` listing of every setting, sorted by key."""
        return "".join(f"{k} = {v}\n" for k, v in sorted(self.values.items()))


def _get(values, key, conv):
    raw = values[key]
    try:
        return conv(raw)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid value for {key}: {raw!r} ({err})") from err


def _floats(raw: str) -> tuple[float, ...]:
    return tuple(float(x) for x in raw.replace(",", " ").split())


def _bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def build_config(values: dict[str, str]) -> RunConfig:
    missing = [k for k in REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required config key(s): {', '.join(missing)}")
    unknown = sorted(k for k in values if k not in DEFAULTS and k not in REQUIRED)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    merged = dict(DEFAULTS)
    merged.update(values)

    try:
        grid = make_grid(
            _get(merged, "grid.n_h", int),
            _get(merged, "grid.n_v", int),
            _get(merged, "grid.box_lengths", _floats),
        )
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(f"grid: {err}") from err
    try:
        physics = PhysicsParams(
            nu=_get(merged, "physics.nu", float),
            a=_get(merged, "physics.a", float),
            alpha=_get(merged, "physics.alpha", float),
            strict=_get(merged, "physics.strict", _bool),
        )
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(f"physics: {err}") from err
    try:
        stepper = StepperConfig(
            dt=_get(merged, "stepper.dt", float),
            scheme=merged["stepper.scheme"],
            damping_mode=merged["stepper.damping_mode"],
            cfl_safety=_get(merged, "stepper.cfl_safety", float),
            dt_max=_get(merged, "stepper.dt_max", float),
        )
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(f"stepper: {err}") from err

    t_end = _get(merged, "t_end", float)
    if not t_end > 0:
        raise ConfigError(f"t_end must be positive, got {t_end!r}")
    n_steps = round(t_end / stepper.dt)
    if not math.isclose(n_steps * stepper.dt, t_end, rel_tol=1e-9):
        raise ConfigError(f"t_end={t_end} is not a whole number of steps of dt={stepper.dt}")
    cadences = {}
    for key in ("diag_every", "snapshot_every"):
        cadences[key] = _get(merged, key, int)
        if cadences[key] < 1:
            raise ConfigError(f"{key} must be an integer >= 1")

    ic_types = merged["ic.type"].split("+")
    for name in ic_types:
        if name.strip() not in IC_TYPES:
            raise ConfigError(f"invalid value for ic.type: {merged['ic.type']!r}")
    ic = {
        "types": tuple(n.strip() for n in ic_types),
        "amplitude": _get(merged, "ic.amplitude", float),
        "slope": _get(merged, "ic.slope", float),
        "seed": _get(merged, "ic.seed", int),
        "energy": _get(merged, "ic.energy", float),
        "vector": _get(merged, "ic.vector", _floats),
        "path": merged["ic.path"],
    }
    if "file" in ic["types"] and not ic["path"]:
        raise ConfigError("ic.type = file needs ic.path")
    if len(ic["vector"]) != 3:
        raise ConfigError("ic.vector needs three components")
    return RunConfig(
        grid=grid,
        physics=physics,
        stepper=stepper,
        ic=ic,
        t_end=t_end,
        diag_every=cadences["diag_every"],
        snapshot_every=cadences["snapshot_every"],
        output_dir=Path(merged["output_dir"]),
        values=merged,
    )


def config_hash(config: RunConfig) -> str:
    return hashlib.sha256(config.resolved_text().encode()).hexdigest()


def initial_condition(config: RunConfig) -> SpectralVelocityField:
    """Sum of the configured initial-condition components."""
    g = config.grid
    ic = config.ic
    total = None
    for name in ic["types"]:
        if name == "taylor_green":
            u = taylor_green(g, ic["amplitude"])
        elif name == "vertical_shear":
            u = vertical_shear(g, ic["amplitude"])
        elif name == "random":
            u = random_divergence_free(g, ic["slope"], ic["seed"], ic["energy"])
        elif name == "uniform":
            u = uniform_field(g, ic["vector"])
        else:
            u, _ = read_snapshot(ic["path"], expect_grid=g)
        total = u if total is None else total + u
    return total


# -- snapshots --------------------------------------------------------------------

SNAPSHOT_MAGIC = b"ABFDNS01"
_HEADER = struct.Struct("<8sII3ddI")
SPECTRAL_COMPONENTS = 6  # real and imaginary planes of three velocity components


def _full_spectrum(half: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Extend rfft-half coefficients to the full Hermitian spectrum."""
    n_h, n_v = grid.n_h, grid.n_v
    full = np.empty(half.shape[:-1] + (n_v,), dtype=np.complex128)
    m = n_v // 2 + 1
    full[..., :m] = half
    j3 = np.arange(m, n_v)
    neg = (-np.arange(n_h)) % n_h
    mirrored = half[..., (n_v - j3)]
    full[..., m:] = np.conj(mirrored[..., neg, :, :][..., :, neg, :])
    return full


def write_snapshot(path, u: SpectralVelocityField, t: float) -> None:
    """Write spectral coefficients; reading back restores them bit for bit."""
    g = u.grid
    full = _full_spectrum(u.coefficients, g)
    header = _HEADER.pack(SNAPSHOT_MAGIC, g.n_h, g.n_v, *g.box_lengths, float(t), SPECTRAL_COMPONENTS)
    planes = []
    for comp in range(3):
        planes.append(np.ascontiguousarray(full[comp].real).ravel(order="F"))
        planes.append(np.ascontiguousarray(full[comp].imag).ravel(order="F"))
    payload = np.concatenate(planes).astype("<f8").tobytes()
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(payload)
    os.replace(tmp, path)


def read_snapshot(path, expect_grid: GridSpec | None = None):
    """Return ``(velocity, header dict)``; validates magic, extents and payload length."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise SnapshotError(
            f"{path}: truncated header: expected {_HEADER.size} bytes, got {len(data)}"
        )
    magic, n_h, n_v, L1, L2, L3, t, ncomp = _HEADER.unpack_from(data)
    if magic != SNAPSHOT_MAGIC:
        raise SnapshotError(f"{path}: bad magic {magic!r}, expected {SNAPSHOT_MAGIC!r}")
    if ncomp != SPECTRAL_COMPONENTS:
        raise SnapshotError(f"{path}: expected {SPECTRAL_COMPONENTS} components, header says {ncomp}")
    try:
        grid = make_grid(n_h, n_v, (L1, L2, L3))
    except ValueError as err:
        raise SnapshotError(f"{path}: corrupt header: {err}") from err
    expected = ncomp * n_h * n_h * n_v * 8
    actual = len(data) - _HEADER.size
    if actual != expected:
        raise SnapshotError(f"{path}: payload is {actual} bytes, expected {expected} bytes")
    if expect_grid is not None and grid != expect_grid:
        raise SnapshotError(f"{path}: snapshot grid {grid} does not match configured grid {expect_grid}")
    flat = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    planes = flat.reshape(ncomp, n_h * n_h * n_v)
    shape = (n_h, n_h, n_v)
    full = np.empty((3,) + shape, dtype=np.complex128)
    for comp in range(3):
        full[comp].real = planes[2 * comp].reshape(shape, order="F")
        full[comp].imag = planes[2 * comp + 1].reshape(shape, order="F")
    half = np.ascontiguousarray(full[..., : n_v // 2 + 1])
    header = {"n_h": n_h, "n_v": n_v, "box_lengths": (L1, L2, L3), "t": t, "components": ncomp}
    return SpectralVelocityField(half, grid, True), header


# -- diagnostics CSV --------------------------------------------------------------

def metadata_line(config: RunConfig, **extra) -> str:
    parts = [f"bfdarcy={__version__}", f"config_sha256={config_hash(config)}"]
    parts += [f"{k}={v}" for k, v in extra.items()]
    return "# " + " ".join(parts) + "\n"


class CsvWriter:
    """Append-only diagnostics CSV with a leading ``#`` metadata line.

    Floats are written with ``repr`` so that values read back are identical.
    """

    def __init__(self, path, metadata: str):
        self.path = Path(path)
        self._fh = open(self.path, "w", newline="")
        self._fh.write(metadata)
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(RECORD_COLUMNS)

    def write(self, record: DiagnosticsRecord):
        self._writer.writerow([repr(float(x)) for x in record.as_row()])

    def comment(self, text: str):
        self._fh.write(f"# {text}\n")

    def flush(self):
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_diagnostics_csv(path) -> tuple[list[str], list[DiagnosticsRecord]]:
    """Return ``(comment lines, records)``."""
    comments, records = [], []
    with open(path, newline="") as fh:
        rows = []
        for line in fh:
            if line.startswith("#"):
                comments.append(line[1:].strip())
            else:
                rows.append(line)
    reader = csv.reader(rows)
    header = next(reader, None)
    if header is None or tuple(header) != RECORD_COLUMNS:
        raise ValueError(f"{path}: unexpected diagnostics header {header}")
    for row in reader:
        if row:
            records.append(DiagnosticsRecord(*(float(x) for x in row)))
    return comments, records
