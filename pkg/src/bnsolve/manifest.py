"""Run configuration, initial data construction, and file I/O.

The manifest is a plain INI-style file (section headers in brackets,
key = value pairs, '#' comments). Every module precondition is validated
before any compute starts, and the initial sup-density moment c0 is computed
and recorded at load time. Outputs are plain CSV plus a documented binary
snapshot; both are reproducible byte for byte in deterministic mode.
"""

import configparser
import struct
from dataclasses import dataclass, field as dfield
from pathlib import Path

import numpy as np

from .equilibria import EquilibriumParams, bose_einstein_field
from .geometry import KernelSpec
from .grids import (DistributionField, SphereQuadrature, TorusGrid,
                    VelocityGrid, build_sphere_quadrature, field_from_function,
                    lebedev26)
from .solver import SolverConfig, TheoryConstants, initial_sup_moment

SNAPSHOT_MAGIC = b"BNKF"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIIIdd")  # magic, version, n_x, n_v, v_max, time

CSV_HEADER = ("time,mass,px,py,pz,energy,entropy,linf,"
              "window_n,fp_iters,projection_norm")

_KNOWN_KEYS = {
    "grid": {"n_x", "n_v", "v_max"},
    "kernel": {"b0", "gamma", "form"},
    "solver": {"alpha", "dt", "t_end", "fp_tol", "fp_max_iter", "L",
               "projection", "deterministic", "blowup_ceiling", "beta_max",
               "quad", "quad_order", "max_halvings", "chi_bound"},
    "initial": {"type", "temperature", "mu", "drift", "amplitude",
                "centers", "widths", "amplitudes", "path"},
    "output": {"directory", "cadence", "snapshots"},
    "study": {"mode", "alphas", "perturbation", "perturb_center",
              "perturb_width"},
}

_MODES = ("single", "alpha_sweep", "stability_pair", "theory_only")


class ManifestError(ValueError):
    """Configuration rejected before any compute started."""


@dataclass
class RunManifest:
    config_path: str
    cfg: SolverConfig
    vgrid: VelocityGrid
    tgrid: TorusGrid
    f0: DistributionField
    c0: float
    constants: TheoryConstants
    output_dir: Path
    cadence: int
    snapshots: bool
    mode: str
    alphas: list = dfield(default_factory=list)
    perturbation: float = 0.0
    perturb_center: np.ndarray | None = None
    perturb_width: float = 0.0


def _parse_vector(raw: str, key: str) -> np.ndarray:
    try:
        parts = [float(p) for p in raw.replace("(", "").replace(")", "").split(",")]
    except ValueError:
        raise ManifestError(f"key '{key}': cannot parse vector from {raw!r}")
    if len(parts) != 3:
        raise ManifestError(f"key '{key}': expected 3 components")
    return np.array(parts)


class _Section:
    """Typed access to one config section with error messages naming the key."""

    def __init__(self, parser, name, overrides):
        self.name = name
        self.data = dict(parser[name]) if parser.has_section(name) else {}
        for full_key, value in overrides.items():
            sec, _, key = full_key.partition(".")
            if sec == name:
                self.data[key] = value

    def _raw(self, key, default):
        return self.data.get(key, default)

    def get_float(self, key, default=None):
        raw = self._raw(key, default)
        if raw is None:
            raise ManifestError(f"missing required key '{self.name}.{key}'")
        try:
            return float(raw)
        except (TypeError, ValueError):
            raise ManifestError(f"key '{self.name}.{key}': not a number: {raw!r}")

    def get_int(self, key, default=None):
        raw = self._raw(key, default)
        if raw is None:
            raise ManifestError(f"missing required key '{self.name}.{key}'")
        try:
            return int(str(raw))
        except (TypeError, ValueError):
            raise ManifestError(f"key '{self.name}.{key}': not an integer: {raw!r}")

    def get_bool(self, key, default):
        raw = str(self._raw(key, default)).strip().lower()
        if raw in ("1", "true", "yes", "on"):
            return True
        if raw in ("0", "false", "no", "off"):
            return False
        raise ManifestError(f"key '{self.name}.{key}': not a boolean: {raw!r}")

    def get_str(self, key, default=None):
        raw = self._raw(key, default)
        if raw is None:
            raise ManifestError(f"missing required key '{self.name}.{key}'")
        return str(raw).strip()

    def has(self, key):
        return key in self.data


def _build_initial(sec: _Section, vgrid: VelocityGrid,
                   tgrid: TorusGrid) -> DistributionField:
    kind = sec.get_str("type")
    if kind == "maxwellian":
        T = sec.get_float("temperature", 1.0)
        amp = sec.get_float("amplitude", 1.0)
        u = (_parse_vector(sec.get_str("drift"), "initial.drift")
             if sec.has("drift") else np.zeros(3))
        if T <= 0:
            raise ManifestError("key 'initial.temperature': must be positive")

        def maxw(vx, vy, vz):
            esq = (vx - u[0]) ** 2 + (vy - u[1]) ** 2 + (vz - u[2]) ** 2
            return amp * np.exp(-esq / (2.0 * T))

        return field_from_function(maxw, vgrid, tgrid)
    if kind == "bose_einstein":
        T = sec.get_float("temperature", 1.0)
        mu = sec.get_float("mu", -1.0)
        u = (_parse_vector(sec.get_str("drift"), "initial.drift")
             if sec.has("drift") else np.zeros(3))
        p = EquilibriumParams(u=u, T=T, mu=mu)
        return bose_einstein_field(p, vgrid, tgrid)
    if kind == "two_bumps":
        centers = [
            _parse_vector(c, "initial.centers")
            for c in sec.get_str("centers").split(";") if c.strip()
        ]
        widths = [float(w) for w in sec.get_str("widths").split(";") if w.strip()]
        amps = [float(a) for a in sec.get_str("amplitudes").split(";") if a.strip()]
        if not (len(centers) == len(widths) == len(amps)):
            raise ManifestError("keys 'initial.centers/widths/amplitudes': "
                                "length mismatch")

        def bumps(vx, vy, vz):
            out = np.zeros_like(vx)
            for c, w, a in zip(centers, widths, amps):
                esq = (vx - c[0]) ** 2 + (vy - c[1]) ** 2 + (vz - c[2]) ** 2
                out += a * np.exp(-esq / (2.0 * w ** 2))
            return out

        return field_from_function(bumps, vgrid, tgrid)
    if kind == "file":
        f = load_snapshot(sec.get_str("path"))
        if f.vgrid.n_v != vgrid.n_v or f.tgrid.n_x != tgrid.n_x \
                or abs(f.vgrid.v_max - vgrid.v_max) > 1e-12:
            raise ManifestError("key 'initial.path': snapshot grid does not "
                                "match the [grid] section")
        return f
    raise ManifestError(f"key 'initial.type': unknown value {kind!r}")


def load_manifest(path, overrides: dict | None = None) -> RunManifest:
    """Fully validated manifest; no run starts that already violates a precondition."""
    overrides = overrides or {}
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.optionxform = str  # keys are case-sensitive ('L' stays 'L')
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ManifestError(f"cannot parse config: {exc}")

    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            raise ManifestError(f"unknown section '[{section}]'")
        for key in parser[section]:
            if key not in _KNOWN_KEYS[section]:
                raise ManifestError(f"unknown key '{section}.{key}'")
    for full_key in overrides:
        sec, _, key = full_key.partition(".")
        if sec not in _KNOWN_KEYS or key not in _KNOWN_KEYS[sec]:
            raise ManifestError(f"unknown override key '{full_key}'")

    grid = _Section(parser, "grid", overrides)
    kernel_s = _Section(parser, "kernel", overrides)
    solver_s = _Section(parser, "solver", overrides)
    initial = _Section(parser, "initial", overrides)
    output = _Section(parser, "output", overrides)
    study = _Section(parser, "study", overrides)

    mode = study.get_str("mode", "single")
    if mode not in _MODES:
        raise ManifestError(f"key 'study.mode': unknown value {mode!r}")

    n_x = grid.get_int("n_x", 1)
    n_v = grid.get_int("n_v")
    v_max = grid.get_float("v_max")
    try:
        vgrid = VelocityGrid(v_max=v_max, n_v=n_v)
        tgrid = TorusGrid(n_x=n_x)
    except ValueError as exc:
        raise ManifestError(f"[grid]: {exc}")

    try:
        kernel = KernelSpec(b0=kernel_s.get_float("b0", 1.0),
                            gamma=kernel_s.get_float("gamma", 0.1),
                            form=kernel_s.get_str("form", "constant"))
    except ValueError as exc:
        raise ManifestError(f"[kernel]: {exc}")

    quad_name = solver_s.get_str("quad", "product")
    if quad_name == "lebedev26":
        quad = lebedev26()
    elif quad_name == "product":
        quad = build_sphere_quadrature(solver_s.get_int("quad_order", 2))
    else:
        raise ManifestError(f"key 'solver.quad': unknown value {quad_name!r}")

    alpha = solver_s.get_float("alpha", 0.0)
    L = solver_s.get_int("L", 0)
    try:
        cfg = SolverConfig(
            alpha=alpha,
            dt=solver_s.get_float("dt", 1e-3),
            t_end=solver_s.get_float("t_end", 0.0),
            kernel=kernel, quad=quad, L=L,
            fp_tol=solver_s.get_float("fp_tol", 1e-10),
            fp_max_iter=solver_s.get_int("fp_max_iter", 50),
            projection=solver_s.get_bool("projection", True),
            ordered=solver_s.get_bool("deterministic", True),
            blowup_ceiling=(solver_s.get_float("blowup_ceiling")
                            if solver_s.has("blowup_ceiling") else None),
            beta_max=(solver_s.get_float("beta_max")
                      if solver_s.has("beta_max") else None),
            chi_bound=(solver_s.get_float("chi_bound")
                       if solver_s.has("chi_bound") else None),
            output_every=output.get_int("cadence", 1),
            max_halvings=solver_s.get_int("max_halvings", 8),
        )
    except ValueError as exc:
        raise ManifestError(f"[solver]: {exc}")

    if alpha > 0 and v_max < 1.0 / alpha:
        raise ManifestError(
            f"key 'grid.v_max': v_max >= 1/alpha required (v_max = {v_max}, "
            f"1/alpha = {1.0 / alpha})")

    f0 = _build_initial(initial, vgrid, tgrid)
    try:
        f0.validate()
    except ValueError as exc:
        raise ManifestError(f"[initial]: {exc}")
    linf0 = f0.linf()
    if linf0 > 2.0 ** L:
        raise ManifestError(
            f"key 'solver.L': ||f0||_inf = {linf0:.6g} exceeds 2^L = {2.0 ** L:.6g}")

    c0 = initial_sup_moment(f0)
    if not np.isfinite(c0):
        raise ManifestError("initial sup-density moment is not finite")
    constants = TheoryConstants(
        c0=c0, b0=kernel.b0, gamma=kernel.gamma, L=L,
        beta_max=cfg.beta_max if cfg.beta_max is not None else kernel.gamma ** -2)

    alphas = []
    if study.has("alphas"):
        try:
            alphas = [float(a) for a in study.get_str("alphas").split(",")]
        except ValueError:
            raise ManifestError("key 'study.alphas': expected comma-separated floats")
    if mode == "alpha_sweep" and len(alphas) < 2:
        raise ManifestError("key 'study.alphas': alpha_sweep needs >= 2 values")

    perturb_center = (_parse_vector(study.get_str("perturb_center"),
                                    "study.perturb_center")
                      if study.has("perturb_center") else np.zeros(3))

    return RunManifest(
        config_path=str(path), cfg=cfg, vgrid=vgrid, tgrid=tgrid, f0=f0,
        c0=c0, constants=constants,
        output_dir=Path(output.get_str("directory", "out")),
        cadence=output.get_int("cadence", 1),
        snapshots=output.get_bool("snapshots", False),
        mode=mode, alphas=alphas,
        perturbation=study.get_float("perturbation", 0.0),
        perturb_center=perturb_center,
        perturb_width=study.get_float("perturb_width", 0.5),
    )


def _fmt(x) -> str:
    return f"{x:.17g}"


def emit_timeseries(history, path):
    """Write the moment history as CSV with 17 significant digits."""
    if not history:
        raise ValueError("history is empty")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [CSV_HEADER]
    for row in history:
        lines.append(",".join([
            _fmt(row["time"]), _fmt(row["mass"]), _fmt(row["px"]),
            _fmt(row["py"]), _fmt(row["pz"]), _fmt(row["energy"]),
            _fmt(row["entropy"]), _fmt(row["linf"]),
            str(int(row["window_n"])), str(int(row["fp_iters"])),
            _fmt(row["projection_norm"]),
        ]))
    path.write_text("\n".join(lines) + "\n")
    return path


def emit_snapshot(field: DistributionField, time: float, path):
    """Bit-exact binary snapshot: BNKF header + row-major f64, x-major then v."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, field.tgrid.n_x,
                          field.vgrid.n_v, field.vgrid.v_max, time)
    data = np.ascontiguousarray(field.values, dtype="<f8").tobytes()
    path.write_bytes(header + data)
    return path


def load_snapshot(path) -> tuple:
    """Load and validate a snapshot; returns the DistributionField (time attached)."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ManifestError(f"snapshot truncated: {len(raw)} bytes, header "
                            f"needs {_HEADER.size}")
    magic, version, n_x, n_v, v_max, time = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise ManifestError(f"bad snapshot magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise ManifestError(f"unsupported snapshot version {version}")
    count = n_x ** 3 * n_v ** 3
    expected = _HEADER.size + 8 * count
    if len(raw) != expected:
        raise ManifestError(f"snapshot has {len(raw)} bytes, expected {expected}")
    vals = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    vals = vals.reshape((n_x,) * 3 + (n_v,) * 3)
    if not np.all(np.isfinite(vals)):
        raise ManifestError("snapshot contains non-finite values")
    if np.any(vals < 0):
        raise ManifestError("snapshot contains negative values")
    f = DistributionField(vals, VelocityGrid(v_max=v_max, n_v=n_v),
                          TorusGrid(n_x=n_x))
    f.time = time
    return f


def perturbed_copy(m: RunManifest) -> DistributionField:
    """Second member of a stability pair: f0 plus a small velocity bump."""
    eps = m.perturbation
    c = m.perturb_center
    w = m.perturb_width

    def bump(vx, vy, vz):
        esq = (vx - c[0]) ** 2 + (vy - c[1]) ** 2 + (vz - c[2]) ** 2
        return eps * np.exp(-esq / (2.0 * w ** 2))

    extra = field_from_function(bump, m.vgrid, m.tgrid)
    return DistributionField(m.f0.values + extra.values, m.vgrid, m.tgrid)
