"""Batch driver: config parsing, presets, solving, and result serialization.

Subcommands:
  solve <config.json>          solve a run configuration, write outputs
  preset <name> [--scale desk] [--out FILE]   emit a canned configuration
  converge <config.json> --levels K           nested-grid convergence study
  compare-nls <config.json>    solve and march the paraxial reference

Exit codes: 0 converged / success, 2 controlled non-convergence (report still
written), 1 error. The output directory is the config's output_dir, else
$NLHELM_OUTPUT_ROOT/<name>, else ./<name>-out. All files are written
atomically (temp file + rename).
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import json
import math
import os
import struct
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import solvers
from .beams import (
    BeamSpec,
    grid_convergence_study,
    interpolate_field,
    make_incoming,
    nls_march,
    on_axis_index,
    poynting_flux,
)
from .errors import ConfigError, NlhError
from .fields import (
    Grid1D,
    GridMultiD,
    Layer,
    MaterialStack,
    build_grid_1d,
    build_grid_multi,
)
from .helmholtz_1d import Incoming1D, Problem1D
from .helmholtz_nd import HelmholtzProblem
from .solvers import NewtonConfig

__all__ = ["RunConfig", "preset", "run", "main", "read_field", "PRESET_NAMES"]

MAGIC = b"NLHM-FLD-v1\x00\x00\x00\x00\x00"
assert len(MAGIC) == 16
_GEOMETRY_TAGS = {"1d": 0, "cartesian": 1, "cylindrical": 2}
_GEOMETRY_NAMES = {v: k for k, v in _GEOMETRY_TAGS.items()}


@dataclass
class RunConfig:
    """One solver run, fully serializable to JSON."""

    name: str
    geometry: str            # "1d" | "cartesian" | "cylindrical"
    Zmax: float
    N: int
    k0: float
    sigma: float
    layers: list[dict]       # {"z_from", "z_to", "nu", "eps"}
    extent: float | None = None   # Xmax / Rmax (multi-D only)
    M: int = 1
    beam_left: dict | None = None
    beam_right: dict | None = None
    solver: str = "newton"
    omega: float = 0.5
    switch_threshold: float = 0.01
    convergence_tol: float = 1e-12
    max_iterations: int = 200
    born_inner_iterations: int = 5
    output_dir: str | None = None
    desk_scaled: bool = False

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def newton_config(self, initial_guess=None) -> NewtonConfig:
        return NewtonConfig(
            omega=self.omega,
            switch_threshold=self.switch_threshold,
            convergence_tol=self.convergence_tol,
            max_iterations=self.max_iterations,
            initial_guess=initial_guess,
            born_inner_iterations=self.born_inner_iterations,
        )


_REQUIRED = ("name", "geometry", "Zmax", "N", "k0", "sigma", "layers")
_ALIASES = {"cartesian2d": "cartesian"}


def parse_config(data: dict, source: str = "<config>") -> RunConfig:
    """Validate a raw dict into a RunConfig; errors name the offending field."""
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: config must be a JSON object")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{source}: unknown field {key!r}")
    for key in _REQUIRED:
        if key not in data:
            raise ConfigError(f"{source}: missing required field {key!r}")
    data = dict(data)
    data["geometry"] = _ALIASES.get(data["geometry"], data["geometry"])
    cfg = RunConfig(**data)
    if cfg.geometry not in _GEOMETRY_TAGS:
        raise ConfigError(f"{source}: geometry: unknown value {cfg.geometry!r}")
    if cfg.geometry != "1d":
        if cfg.extent is None:
            raise ConfigError(f"{source}: extent: required for multi-D runs")
        if cfg.M < 1:
            raise ConfigError(f"{source}: M: must be at least 1")
    if cfg.solver not in ("newton", "freezing", "born"):
        raise ConfigError(f"{source}: solver: unknown value {cfg.solver!r}")
    if not cfg.layers:
        raise ConfigError(f"{source}: layers: must be non-empty")
    for i, lay in enumerate(cfg.layers):
        if not isinstance(lay, dict):
            raise ConfigError(f"{source}: layers[{i}]: must be an object")
        for fld in ("z_from", "z_to", "nu", "eps"):
            if fld not in lay:
                raise ConfigError(f"{source}: layers[{i}].{fld}: missing")
    for side in ("beam_left", "beam_right"):
        beam = getattr(cfg, side)
        if beam is not None and not isinstance(beam, dict):
            raise ConfigError(f"{source}: {side}: must be an object")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return parse_config(data, source=str(path))


_BEAM_FIELDS = {"shape", "r0", "width", "samples", "amplitude_re",
                "amplitude_im", "center", "tilt_angle", "adjust"}


def _beam_spec(beam: dict, side: str, source: str) -> BeamSpec:
    extra = set(beam) - _BEAM_FIELDS
    if extra:
        raise ConfigError(f"{source}: beam_{side}: unknown fields {sorted(extra)}")
    if "shape" not in beam:
        raise ConfigError(f"{source}: beam_{side}: missing field 'shape'")
    samples = beam.get("samples")
    try:
        return BeamSpec(
            shape=beam["shape"],
            r0=beam.get("r0"),
            width=beam.get("width"),
            samples=None if samples is None else np.asarray(samples, dtype=complex),
            amplitude=complex(beam.get("amplitude_re", 1.0),
                              beam.get("amplitude_im", 0.0)),
            center=beam.get("center", 0.0),
            tilt_angle=beam.get("tilt_angle", 0.0),
            side=side,
            adjust=beam.get("adjust", False),
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: beam_{side}: {exc}") from exc


def _material(cfg: RunConfig) -> MaterialStack:
    layers = tuple(
        Layer(float(l["z_from"]), float(l["z_to"]), float(l["nu"]), float(l["eps"]))
        for l in cfg.layers
    )
    return MaterialStack(k0=float(cfg.k0), sigma=float(cfg.sigma), layers=layers)


def build_problem(cfg: RunConfig, initial_guess=None):
    """(problem, grid, mat, solver_config) from a parsed run configuration."""
    mat = _material(cfg)
    if abs(mat.Zmax - cfg.Zmax) > 1e-12 * max(1.0, abs(cfg.Zmax)):
        raise ConfigError(
            f"layers: stack ends at {mat.Zmax}, config Zmax is {cfg.Zmax}"
        )
    if cfg.geometry == "1d":
        grid = build_grid_1d(cfg.Zmax, cfg.N)

        def plane_amplitude(beam, side):
            if beam is None:
                return 0.0
            extra = set(beam) - {"amplitude_re", "amplitude_im"}
            if extra:
                raise ConfigError(
                    f"beam_{side}: 1d beams take only amplitude_re/amplitude_im, "
                    f"got {sorted(extra)}"
                )
            return complex(beam.get("amplitude_re", 0.0), beam.get("amplitude_im", 0.0))

        inc = Incoming1D(
            EincL=plane_amplitude(cfg.beam_left, "left"),
            EincR=plane_amplitude(cfg.beam_right, "right"),
        )
        problem = Problem1D(grid, mat, inc)
    else:
        grid = build_grid_multi(cfg.Zmax, cfg.N, cfg.extent, cfg.M, cfg.geometry)
        einc_left = einc_right = None
        if cfg.beam_left is not None:
            einc_left = make_incoming(_beam_spec(cfg.beam_left, "left", cfg.name),
                                      grid, mat)
        if cfg.beam_right is not None:
            einc_right = make_incoming(_beam_spec(cfg.beam_right, "right", cfg.name),
                                       grid, mat)
        problem = HelmholtzProblem(grid, mat, einc_left, einc_right)
    return problem, grid, mat, cfg.newton_config(initial_guess)


# --- output writing -----------------------------------------------------------

def _atomic_write(path: Path, data: bytes | str):
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    try:
        with open(tmp, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def write_field(path, E: np.ndarray, grid, k0: float) -> None:
    """Binary field file: 16-byte magic, (geometry, N, M) as little-endian
    u64, (h_z, h_perp, k0) as little-endian f64, then the complex nodes
    row-major as little-endian f64 (Re, Im) pairs."""
    if isinstance(grid, GridMultiD):
        tag, M, h_z, h_perp = _GEOMETRY_TAGS[grid.geometry], grid.M, grid.h_z, grid.h_perp
    else:
        tag, M, h_z, h_perp = _GEOMETRY_TAGS["1d"], 1, grid.h, 0.0
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<QQQddd", tag, grid.N, M, h_z, h_perp, k0))
    buf.write(np.ascontiguousarray(E, dtype=np.complex128).astype("<c16").tobytes())
    _atomic_write(Path(path), buf.getvalue())


def read_field(path) -> tuple[dict, np.ndarray]:
    """Inverse of write_field: (header dict, complex field)."""
    raw = Path(path).read_bytes()
    if raw[:16] != MAGIC:
        raise ValueError(f"{path}: not a field file (bad magic)")
    tag, N, M, h_z, h_perp, k0 = struct.unpack_from("<QQQddd", raw, 16)
    header = {
        "geometry": _GEOMETRY_NAMES[tag],
        "N": int(N),
        "M": int(M),
        "h_z": h_z,
        "h_perp": h_perp,
        "k0": k0,
    }
    body = np.frombuffer(raw, dtype="<c16", offset=16 + struct.calcsize("<QQQddd"))
    count = (int(N) + 7) * int(M)
    if body.size != count:
        raise ValueError(f"{path}: expected {count} nodes, found {body.size}")
    E = body.astype(np.complex128)
    if header["geometry"] != "1d":
        E = E.reshape(int(N) + 7, int(M))
    return header, E


def _csv(rows, header: str) -> str:
    out = [header]
    for row in rows:
        out.append(",".join("" if v is None else repr(float(v)) for v in row))
    return "\n".join(out) + "\n"


def _report_dict(report: solvers.SolveReport, runtime: float) -> dict:
    return {
        "converged": report.converged,
        "iterations": report.iterations,
        "max_amplitude": report.max_amplitude,
        "divergence_reason": report.divergence_reason,
        "runtime_seconds": runtime,
        "history": [
            {
                "step_norm": h.step_norm,
                "residual_norm": h.residual_norm,
                "applied_step_norm": h.applied_step_norm,
            }
            for h in report.history
        ],
    }


def resolve_output_dir(cfg: RunConfig) -> Path:
    if cfg.output_dir:
        return Path(cfg.output_dir)
    root = os.environ.get("NLHELM_OUTPUT_ROOT")
    if root:
        return Path(root) / cfg.name
    return Path(f"{cfg.name}-out")


def write_outputs(out_dir: Path, cfg: RunConfig, E: np.ndarray, grid, mat,
                  report: solvers.SolveReport, runtime: float) -> None:
    write_field(out_dir / "field.bin", E, grid, mat.k0)
    meta = {
        "magic": MAGIC.rstrip(b"\x00").decode(),
        "geometry": cfg.geometry,
        "N": grid.N,
        "M": getattr(grid, "M", 1),
        "h_z": grid.h,
        "h_perp": getattr(grid, "h_perp", 0.0),
        "k0": mat.k0,
        "Zmax": grid.Zmax,
        "extent": getattr(grid, "extent", None),
        "sigma": mat.sigma,
        "config": cfg.to_dict(),
    }
    _atomic_write(out_dir / "field.meta.json",
                  json.dumps(meta, indent=2, sort_keys=True) + "\n")
    # diagnostics are still written for a diverged run; its amplitudes may
    # overflow to inf, which is the honest value to record
    with np.errstate(over="ignore", invalid="ignore"):
        flux = poynting_flux(E, grid, mat.k0)
        if isinstance(grid, GridMultiD):
            axis = on_axis_index(grid)
            amp_sq = np.abs(E[flux.n + 3, axis]) ** 2
            s_axis = flux.S_z[:, axis]
        else:
            amp_sq = np.abs(E[flux.n + 3]) ** 2
            s_axis = flux.S_z
    _atomic_write(
        out_dir / "on_axis.csv",
        _csv(zip(flux.z, amp_sq, s_axis, flux.power),
             "z,abs_E_squared,S_z,beam_power"),
    )
    _atomic_write(out_dir / "flux.csv", _csv(zip(flux.z, flux.power), "z,beam_power"))
    _atomic_write(out_dir / "report.json",
                  json.dumps(_report_dict(report, runtime), indent=2) + "\n")


# --- presets -------------------------------------------------------------------

def _soliton_preset(desk: bool) -> RunConfig:
    Zmax, N = (40.0, 382) if desk else (240.0, 4480)
    eps = 1.0 / 16.0
    return RunConfig(
        name="soliton-2d-desk" if desk else "soliton-2d-paper",
        geometry="cartesian",
        Zmax=Zmax,
        N=N,
        extent=12.0,
        M=112,
        k0=4.0,
        sigma=1.0,
        layers=[{"z_from": 0.0, "z_to": Zmax, "nu": 1.0, "eps": eps}],
        beam_left={"shape": "sech", "r0": math.sqrt(2.0), "adjust": True},
        desk_scaled=desk,
    )


def _collapse_preset(desk: bool) -> RunConfig:
    N, M = (432, 144) if desk else (1080, 360)
    return RunConfig(
        name="collapse-cyl-desk" if desk else "collapse-cyl-paper",
        geometry="cylindrical",
        Zmax=9.0,
        N=N,
        extent=3.5,
        M=M,
        k0=8.0,
        sigma=1.0,
        layers=[{"z_from": 0.0, "z_to": 9.0, "nu": 1.0, "eps": 0.15}],
        beam_left={"shape": "gaussian", "width": 1.0, "adjust": True},
        desk_scaled=desk,
    )


def _quintic_preset(desk: bool) -> RunConfig:
    N, M = (240, 80) if desk else (480, 160)
    return RunConfig(
        name="collapse-quintic-desk" if desk else "collapse-quintic-paper",
        geometry="cartesian",
        Zmax=6.0,
        N=N,
        extent=3.0,
        M=M,
        k0=8.0,
        sigma=2.0,
        layers=[{"z_from": 0.0, "z_to": 6.0, "nu": 1.0, "eps": 0.125}],
        beam_left={"shape": "gaussian", "width": 1.0, "adjust": True},
        desk_scaled=desk,
    )


_PRESETS = {
    "soliton-2d-paper": lambda: _soliton_preset(False),
    "soliton-2d-desk": lambda: _soliton_preset(True),
    "collapse-cyl-paper": lambda: _collapse_preset(False),
    "collapse-cyl-desk": lambda: _collapse_preset(True),
    "collapse-quintic-paper": lambda: _quintic_preset(False),
    "collapse-quintic-desk": lambda: _quintic_preset(True),
}
PRESET_NAMES = sorted(_PRESETS)


def preset(name: str, scale: str | None = None) -> RunConfig:
    """Look up a preset; `scale` rewrites the -paper/-desk suffix."""
    key = name
    if scale is not None:
        base = name.rsplit("-", 1)[0] if name.endswith(("-paper", "-desk")) else name
        key = f"{base}-{scale}"
    if key not in _PRESETS:
        raise ConfigError(
            f"unknown preset {key!r}; available: {', '.join(PRESET_NAMES)}"
        )
    return _PRESETS[key]()


# --- subcommand drivers ---------------------------------------------------------

def run(config_path) -> int:
    """Solve one configuration and write its outputs; returns the exit code."""
    try:
        cfg = load_config(config_path)
        problem, grid, mat, solver_cfg = build_problem(cfg)
        t0 = time.perf_counter()
        E, report = solvers.solve(problem, config=solver_cfg, method=cfg.solver)
        runtime = time.perf_counter() - t0
        out_dir = resolve_output_dir(cfg)
        write_outputs(out_dir, cfg, E, grid, mat, report, runtime)
    except (NlhError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    status = "converged" if report.converged else \
        f"did not converge ({report.divergence_reason})"
    print(f"{cfg.name}: {status} in {report.iterations} iterations, "
          f"max|E| = {report.max_amplitude:.6g}, outputs in {out_dir}")
    return 0 if report.converged else 2


def _cmd_preset(args) -> int:
    try:
        cfg = preset(args.name, args.scale)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    text = cfg.to_json()
    if args.out:
        _atomic_write(Path(args.out), text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _refined(cfg: RunConfig, factor: int) -> RunConfig:
    d = cfg.to_dict()
    d["name"] = f"{cfg.name}-x{factor}"
    d["N"] = cfg.N * factor
    if cfg.geometry != "1d":
        d["M"] = cfg.M * factor
    return RunConfig(**d)


def converge(config_path, levels: int) -> int:
    """Solve a factor-2 nested family (coarsest = the config) and report the
    observed convergence rates."""
    try:
        if levels < 2:
            raise ConfigError("--levels must be at least 2")
        base = load_config(config_path)
        fields, grids = [], []
        all_converged = True
        guess = None
        for i in range(levels):
            cfg_i = _refined(base, 2 ** i)
            problem, grid, mat, solver_cfg = build_problem(cfg_i, initial_guess=guess)
            E, report = solvers.solve(problem, config=solver_cfg, method=cfg_i.solver)
            all_converged &= report.converged
            print(f"level {i}: N={cfg_i.N} M={cfg_i.M} converged={report.converged} "
                  f"iterations={report.iterations}")
            fields.append(E)
            grids.append(grid)
            if i + 1 < levels:
                next_grid_cfg = _refined(base, 2 ** (i + 1))
                next_problem_grid = (
                    build_grid_1d(next_grid_cfg.Zmax, next_grid_cfg.N)
                    if base.geometry == "1d"
                    else build_grid_multi(next_grid_cfg.Zmax, next_grid_cfg.N,
                                          next_grid_cfg.extent, next_grid_cfg.M,
                                          next_grid_cfg.geometry)
                )
                guess = interpolate_field(E, grid, next_problem_grid)
        table = grid_convergence_study(fields, grids)
        out_dir = resolve_output_dir(base)
        _atomic_write(out_dir / "converge.csv",
                      _csv(table.rows(), "N,M,diff_to_next,rate"))
        for (N, M, diff, rate) in table.rows():
            print(f"N={N} M={M} diff={diff} rate={rate}")
    except (NlhError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0 if all_converged else 2


def compare_nls(config_path) -> int:
    """Solve the full model, march the paraxial reference from the same
    (unadjusted) input beam, and write the on-axis comparison."""
    try:
        cfg = load_config(config_path)
        if cfg.geometry == "1d" or cfg.beam_left is None:
            raise ConfigError(
                "compare-nls needs a multi-D config with a left beam")
        problem, grid, mat, solver_cfg = build_problem(cfg)
        E, report = solvers.solve(problem, config=solver_cfg, method=cfg.solver)
        raw_beam = dict(cfg.beam_left)
        raw_beam["adjust"] = False
        nls_initial = make_incoming(_beam_spec(raw_beam, "left", cfg.name), grid, mat)
        first_layer = mat.layers[0]
        result = nls_march(grid, mat.k0, first_layer.eps, mat.sigma,
                           nls_initial, dz=grid.h_z)
        axis = on_axis_index(grid)
        z_nodes = np.arange(0, grid.N + 1) * grid.h_z
        nlh_axis = np.abs(E[np.arange(0, grid.N + 1) + 3, axis])
        nls_axis = np.interp(z_nodes, result.z, np.abs(result.on_axis))
        if result.blew_up:
            nls_axis[z_nodes > result.z_star] = np.nan
        out_dir = resolve_output_dir(cfg)
        _atomic_write(out_dir / "compare_nls.csv",
                      _csv(zip(z_nodes, nlh_axis, nls_axis),
                           "z,nlh_on_axis_abs,nls_on_axis_abs"))
        _atomic_write(out_dir / "nls_report.json", json.dumps({
            "blew_up": result.blew_up,
            "z_star": result.z_star,
            "nlh_converged": report.converged,
            "nlh_max_amplitude": report.max_amplitude,
        }, indent=2) + "\n")
        msg = (f"paraxial reference blew up at z = {result.z_star:.4g}"
               if result.blew_up else "paraxial reference stayed bounded")
        print(f"{cfg.name}: {msg}; outputs in {out_dir}")
    except (NlhError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0 if report.converged else 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nlhelm",
        description="Layered-Kerr-medium frequency-domain beam solver",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve a run configuration")
    p_solve.add_argument("config")

    p_preset = sub.add_parser("preset", help="emit a canned configuration")
    p_preset.add_argument("name")
    p_preset.add_argument("--scale", choices=["paper", "desk"], default=None)
    p_preset.add_argument("--out", default=None)

    p_conv = sub.add_parser("converge", help="nested-grid convergence study")
    p_conv.add_argument("config")
    p_conv.add_argument("--levels", type=int, default=3)

    p_cmp = sub.add_parser("compare-nls", help="solve and march the paraxial reference")
    p_cmp.add_argument("config")

    args = parser.parse_args(argv)
    if args.command == "solve":
        return run(args.config)
    if args.command == "preset":
        return _cmd_preset(args)
    if args.command == "converge":
        return converge(args.config, args.levels)
    if args.command == "compare-nls":
        return compare_nls(args.config)
    parser.error(f"unknown command {args.command!r}")
    return 1


if __name__ == "__main__":
    sys.exit(main())
