"""Command-line scenario runner.

Every subcommand writes CSV: '#' comment lines (tool version, config hash,
parameter echo), one header row, then data rows.  Exit status is 0 on
success, 1 on invalid input and 2 on numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from mofsim import __version__
from mofsim.core import DriveParams, MiroscParams, MirrorConfig, NumericalError, ParameterError

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


class ConfigError(ParameterError):
    """Invalid configuration, with the offending key path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


# ---------------------------------------------------------------------------
# Config loading
# ---------------------------------------------------------------------------

def _num(obj: Dict[str, Any], key: str, path: str, default: Any = ..., positive: bool = False,
         nonneg: bool = False) -> Any:
    where = f"{path}.{key}" if path else key
    if key not in obj:
        if default is ...:
            raise ConfigError(where, "required key is missing")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(where, f"expected a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(where, "must be finite")
    if positive and not v > 0:
        raise ConfigError(where, f"must be > 0, got {v}")
    if nonneg and v < 0:
        raise ConfigError(where, f"must be >= 0, got {v}")
    return v


def _freq_scale(cfg: Dict[str, Any]) -> float:
    units = cfg.get("units")
    if units == "rad_per_s":
        return 1.0
    if units == "hz":
        return 2.0 * math.pi
    raise ConfigError("units", f"must be \"rad_per_s\" or \"hz\", got {units!r}")


def _mirror(obj: Any, path: str, scale: float) -> Dict[str, Any]:
    if not isinstance(obj, dict):
        raise ConfigError(path, "expected an object")
    out = {
        "m": _num(obj, "m", path, nonneg=True),
        "omega": _num(obj, "omega", path, positive=True) * scale,
        "lambda": _num(obj, "lambda", path, nonneg=True),
        "M": _num(obj, "M", path, default=1.0, positive=True),
        "z_eq": _num(obj, "z_eq", path, default=0.0),
        "position": _num(obj, "position", path, default=None) if "position" in obj else None,
        "static": bool(obj.get("static", False)),
        "q": _num(obj, "q", path, default=0.0),
        "p": _num(obj, "p", path, default=0.0),
        "velocity": _num(obj, "velocity", path, default=0.0),
    }
    w0 = obj.get("trap_omega0")
    out["trap_omega0"] = None if w0 is None else _num(obj, "trap_omega0", path, positive=True) * scale
    if abs(out["velocity"]) >= 1:
        raise ConfigError(f"{path}.velocity", "must satisfy |v| < 1")
    try:
        mirror_config(out)
    except ParameterError as exc:
        raise ConfigError(path, str(exc)) from None
    return out


def mirror_config(m: Dict[str, Any]) -> MirrorConfig:
    return MirrorConfig(MiroscParams(m["m"], m["omega"], m["lambda"]), m["M"], m["z_eq"], m["trap_omega0"])


def validate_config(raw: Any) -> Dict[str, Any]:
    """Check a scenario document eagerly and return it with all defaults filled in."""
    if not isinstance(raw, dict):
        raise ConfigError("", "config must be a JSON object")
    scale = _freq_scale(raw)
    cfg: Dict[str, Any] = {"units": raw["units"]}
    mirrors = raw.get("mirrors", [])
    if not isinstance(mirrors, list):
        raise ConfigError("mirrors", "expected a list")
    cfg["mirrors"] = [_mirror(m, f"mirrors[{i}]", scale) for i, m in enumerate(mirrors)]
    cfg["notes"] = []
    for i, m in enumerate(cfg["mirrors"]):
        if m["trap_omega0"] is None:
            cfg["notes"].append(f"mirrors[{i}].trap_omega0 absent: free mirror assumed")
    if "drive" in raw and raw["drive"] is not None:
        d = raw["drive"]
        if not isinstance(d, dict):
            raise ConfigError("drive", "expected an object")
        cfg["drive"] = {"A": _num(d, "A", "drive"),
                        "omega_D": _num(d, "omega_D", "drive", positive=True) * scale,
                        "x_start": _num(d, "x_start", "drive", default=-math.inf) if "x_start" in d else None,
                        "x_stop": _num(d, "x_stop", "drive", default=math.inf) if "x_stop" in d else None}
    else:
        cfg["drive"] = None
    if "L" in raw:
        cfg["L"] = _num(raw, "L", "", positive=True)
    if "sweep" in raw:
        s = raw["sweep"]
        if not isinstance(s, dict):
            raise ConfigError("sweep", "expected an object")
        cfg["sweep"] = {"L_min": _num(s, "L_min", "sweep", positive=True),
                        "L_max": _num(s, "L_max", "sweep", positive=True),
                        "n": int(_num(s, "n", "sweep", default=200, positive=True))}
        if cfg["sweep"]["L_max"] <= cfg["sweep"]["L_min"]:
            raise ConfigError("sweep.L_max", "must exceed sweep.L_min")
    g = raw.get("grid", {})
    if not isinstance(g, dict):
        raise ConfigError("grid", "expected an object")
    bnd = g.get("boundary", ["absorbing", "absorbing"])
    if (not isinstance(bnd, list) or len(bnd) != 2
            or any(b not in ("absorbing", "reflecting") for b in bnd)):
        raise ConfigError("grid.boundary", 'expected two of "absorbing" | "reflecting"')
    cfg["grid"] = {"x_min": _num(g, "x_min", "grid", default=None) if "x_min" in g else None,
                   "x_max": _num(g, "x_max", "grid", default=None) if "x_max" in g else None,
                   "dx": _num(g, "dx", "grid", default=None, positive=True) if "dx" in g else None,
                   "boundary": list(bnd),
                   "runaway_filter": bool(g.get("runaway_filter", True))}
    it = raw.get("integrator", {})
    if not isinstance(it, dict):
        raise ConfigError("integrator", "expected an object")
    kind = it.get("kind", "nonrel")
    if kind not in ("nonrel", "relativistic", "averaged", "full_delay"):
        raise ConfigError("integrator.kind", f"unknown integrator {kind!r}")
    cfg["integrator"] = {"kind": kind,
                         "dt": _num(it, "dt", "integrator", default=None, positive=True) if "dt" in it else None,
                         "t_end": _num(it, "t_end", "integrator", default=None, positive=True)
                         if "t_end" in it else None,
                         "sample_every": int(_num(it, "sample_every", "integrator", default=1, positive=True)),
                         "Z0": _num(it, "Z0", "integrator", default=0.0),
                         "V0": _num(it, "V0", "integrator", default=0.0),
                         "order": int(_num(it, "order", "integrator", default=2, positive=True))}
    if cfg["integrator"]["order"] not in (2, 4):
        raise ConfigError("integrator.order", "must be 2 or 4")
    out = raw.get("outputs", {})
    if not isinstance(out, dict):
        raise ConfigError("outputs", "expected an object")
    cfg["outputs"] = {"gnuplot": bool(out.get("gnuplot", False)),
                      "field_snapshots": bool(out.get("field_snapshots", False))}
    return cfg


def load_config(path: str) -> Dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("", f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"malformed JSON in {path}: {exc}") from None
    return validate_config(raw)


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_jsonable(v) for v in obj]
    return obj


def config_hash(cfg: Dict[str, Any]) -> str:
    blob = json.dumps(_jsonable(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    if not directory.is_dir():
        raise ConfigError("output", f"directory does not exist: {directory}")
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=f".{path.name}.", suffix=".tmp")
    except OSError as exc:
        raise ConfigError("output", f"cannot write to {directory}: {exc.strerror}") from None
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        os.unlink(tmp)
        raise ConfigError("output", f"cannot write {path}: {exc.strerror}") from None


def _cell(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def render_csv(columns: Sequence[str], rows: Iterable[Sequence[Any]], params: Dict[str, Any]) -> str:
    lines = [f"# mofsim {__version__}",
             f"# config_hash {config_hash(params)}",
             f"# params {json.dumps(_jsonable(params), sort_keys=True)}",
             ",".join(columns)]
    lines += [",".join(_cell(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence[Any]], params: Dict[str, Any]) -> None:
    _atomic_write(Path(path), render_csv(columns, list(rows), params))


def write_echo(path: Path, cfg: Dict[str, Any]) -> None:
    _atomic_write(Path(path), json.dumps(_jsonable(cfg), indent=2, sort_keys=True) + "\n")


def write_gnuplot(directory: Path, name: str, xs: Sequence[float], ys: Sequence[float]) -> None:
    text = "".join(f"{_cell(x)} {_cell(y)}\n" for x, y in zip(xs, ys))
    _atomic_write(directory / f"{name}.dat", text)


def _echo_path(out: Path) -> Path:
    return out / "config.echo.json" if out.is_dir() else out.with_name(out.name + ".echo.json")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _freq_grid(args) -> np.ndarray:
    scale = 2 * math.pi if args.units == "hz" else 1.0
    if not (0 < args.wmin < args.wmax) or args.n < 2:
        raise ConfigError("wmin/wmax/n", "need 0 < wmin < wmax and n >= 2")
    return np.linspace(args.wmin, args.wmax, args.n) * scale


def cmd_scatter(args) -> int:
    from mofsim.scattering import mof_R

    scale = 2 * math.pi if args.units == "hz" else 1.0
    p = MiroscParams(args.m, args.omega * scale, args.lam)
    p.require_scatterable()
    w = _freq_grid(args)
    R = mof_R(p, w)
    rows = [(wi, r.real, r.imag, abs(r) ** 2, abs(1 + r) ** 2) for wi, r in zip(w, R)]
    params = {"m": p.m, "omega": p.omega, "lambda": p.lam, "units": args.units}
    write_csv(args.output, ["omega", "re_R", "im_R", "abs_R2", "abs_T2"], rows, params)
    return EXIT_OK


def cmd_bc(args) -> int:
    from mofsim.scattering import bc_R

    if args.gamma < 0:
        raise ConfigError("gamma", "must be >= 0")
    w = _freq_grid(args)
    R = bc_R(args.gamma, w)
    rows = [(wi, r.real, r.imag, abs(r) ** 2, abs(1 + r) ** 2) for wi, r in zip(w, R)]
    write_csv(args.output, ["omega", "re_R", "im_R", "abs_R2", "abs_T2"], rows,
              {"gamma": args.gamma, "units": args.units})
    return EXIT_OK


def _cavity_from(cfg: Dict[str, Any]):
    from mofsim.cavity import CavityConfig

    if len(cfg["mirrors"]) != 2:
        raise ConfigError("mirrors", "a cavity needs exactly two mirrors")
    if "L" not in cfg:
        raise ConfigError("L", "required key is missing")
    return CavityConfig(mirror_config(cfg["mirrors"][0]), mirror_config(cfg["mirrors"][1]), cfg["L"])


def cmd_cavity(args) -> int:
    from mofsim.cavity import two_mirror_scatter

    cfg = load_config(args.config)
    c = _cavity_from(cfg)
    w = _freq_grid(args)
    rows = []
    for wi in w:
        s = two_mirror_scatter(c, wi)
        r_tot, t_tot = s.psi[0][1], s.psi[2][0]
        rows.append((wi, s.interior_enhancement, abs(r_tot) ** 2, abs(t_tot) ** 2, r_tot.real, r_tot.imag))
    write_csv(args.output, ["omega", "interior_enhancement", "abs_R2", "abs_T2", "re_R", "im_R"], rows, cfg)
    write_echo(_echo_path(Path(args.output)), cfg)
    return EXIT_OK


def cmd_modes(args, with_nx: bool = False) -> int:
    from mofsim.cavity import cavity_modes_boxed, nx_coupling

    cfg = load_config(args.config)
    c = _cavity_from(cfg)
    modes = cavity_modes_boxed(c, args.box, args.n_modes)
    p2 = c.mirror2.mirosc
    rows = []
    for md in modes:
        row = [md.k, md.N_k, md.interior_weight, float(md.u(c.L))]
        if with_nx:
            row.append(nx_coupling(md, p2))
        rows.append(row)
    cols = ["k", "N_k", "interior_weight", "u_at_L"] + (["nx_coupling"] if with_nx else [])
    write_csv(args.output, cols, rows, dict(cfg, box=args.box, n_modes=args.n_modes))
    write_echo(_echo_path(Path(args.output)), cfg)
    return EXIT_OK


def _cooling_setup(cfg: Dict[str, Any], L: Optional[float] = None):
    from mofsim.cooling import CoolingSetup

    if len(cfg["mirrors"]) != 1:
        raise ConfigError("mirrors", "the cooling setup has exactly one movable mirror")
    if cfg["drive"] is None:
        raise ConfigError("drive", "required key is missing")
    d = cfg["drive"]
    L = cfg.get("L") if L is None else L
    if L is None:
        raise ConfigError("L", "required key is missing")
    return CoolingSetup(mirror_config(cfg["mirrors"][0]), L, DriveParams(d["A"], d["omega_D"]))


def _sweep_point(args) -> List[float]:
    from mofsim.cooling import cooling_coefficients

    cfg, L = args
    c = cooling_coefficients(_cooling_setup(cfg, L))
    return [L, c.F_rad, c.Gamma, c.effective_frequency, c.dOmega2, c.unstable]


def cmd_cooling_sweep(args) -> int:
    cfg = load_config(args.config)
    if "sweep" not in cfg:
        raise ConfigError("sweep", "required key is missing")
    s = cfg["sweep"]
    Ls = np.linspace(s["L_min"], s["L_max"], s["n"])
    _cooling_setup(cfg, float(Ls[0]))
    jobs = [(cfg, float(L)) for L in Ls]
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            rows = list(pool.map(_sweep_point, jobs, chunksize=max(1, len(jobs) // (4 * args.workers))))
    else:
        rows = [_sweep_point(j) for j in jobs]
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "cooling_sweep.csv",
              ["L", "F_rad", "Gamma", "effective_frequency", "dOmega2", "unstable"], rows, cfg)
    if cfg["outputs"]["gnuplot"] or args.gnuplot:
        for j, name in ((1, "F_rad"), (2, "Gamma"), (3, "effective_frequency")):
            write_gnuplot(out, name, [r[0] for r in rows], [r[j] for r in rows])
    write_echo(out / "config.echo.json", cfg)
    return EXIT_OK


def cmd_cooling_evolve(args) -> int:
    from mofsim.cooling import cooling_coefficients, evolve_averaged, evolve_full_delay

    cfg = load_config(args.config)
    setup = _cooling_setup(cfg)
    it = cfg["integrator"]
    t_end = args.t_end if args.t_end is not None else it["t_end"]
    dt = args.dt if args.dt is not None else it["dt"]
    if t_end is None or dt is None:
        raise ConfigError("integrator", "t_end and dt are required (config or flags)")
    kind = it["kind"] if it["kind"] in ("averaged", "full_delay") else "averaged"
    if kind == "averaged":
        tr = evolve_averaged(setup, cooling_coefficients(setup), it["Z0"], it["V0"], t_end, dt)
    else:
        tr = evolve_full_delay(setup, it["Z0"], it["V0"], t_end, dt)
    k = it["sample_every"]
    rows = zip(tr.times[::k], tr.Z[::k], tr.Zdot[::k])
    write_csv(args.output, ["t", "Z", "Zdot"], rows, dict(cfg, integrator=dict(it, kind=kind, t_end=t_end, dt=dt)))
    write_echo(_echo_path(Path(args.output)), cfg)
    return EXIT_OK


def build_lattice(cfg: Dict[str, Any]):
    from mofsim import timedomain as td

    g = cfg["grid"]
    for key in ("x_min", "x_max", "dx"):
        if g[key] is None:
            raise ConfigError(f"grid.{key}", "required key is missing")
    if not g["x_max"] > g["x_min"]:
        raise ConfigError("grid.x_max", "must exceed grid.x_min")
    relativistic = cfg["integrator"]["kind"] == "relativistic"
    states = []
    for i, m in enumerate(cfg["mirrors"]):
        mc = mirror_config(m)
        Z = m["position"] if m["position"] is not None else m["z_eq"]
        v = m["velocity"]
        if relativistic:
            meff = td.effective_mass(m["q"], m["p"], 0.0, mc)
            P = meff * v / math.sqrt(1 - v * v)
        else:
            P = mc.M * v
        states.append(td.MirrorState(mc, m["q"], m["p"], Z, P, m["static"]))
    drive = None
    if cfg["drive"] is not None:
        d = cfg["drive"]
        drive = td.Drive(DriveParams(d["A"], d["omega_D"]),
                         -math.inf if d["x_start"] is None else d["x_start"],
                         math.inf if d["x_stop"] is None else d["x_stop"])
    try:
        return td.make_lattice(g["x_min"], g["x_max"], g["dx"], states, boundary=tuple(g["boundary"]),
                               drive=drive)
    except ParameterError as exc:
        raise ConfigError("grid", str(exc)) from None


def cmd_evolve(args) -> int:
    from mofsim import timedomain as td

    cfg = load_config(args.config)
    if not cfg["mirrors"]:
        raise ConfigError("mirrors", "at least one mirror is required")
    state = build_lattice(cfg)
    it = cfg["integrator"]
    if it["kind"] not in ("nonrel", "relativistic"):
        raise ConfigError("integrator.kind", "evolve needs \"nonrel\" or \"relativistic\"")
    t_end = args.t_end if args.t_end is not None else it["t_end"]
    dt = args.dt if args.dt is not None else it["dt"]
    if t_end is None or dt is None:
        raise ConfigError("integrator", "t_end and dt are required (config or flags)")
    if all(m.static for m in state.mirrors) and cfg["grid"]["runaway_filter"]:
        state.filter = td.RunawayFilter.build(state, dt)
    n_total = int(round(t_end / dt))
    every = it["sample_every"]
    energy = td.total_energy_relativistic if it["kind"] == "relativistic" else td.total_energy_nonrel
    rows = []
    snaps = []

    def record():
        E = energy(state)
        for a, m in enumerate(state.mirrors):
            rows.append((state.t, a, m.q, m.p, m.Z, m.P, E))
        if cfg["outputs"]["field_snapshots"]:
            snaps.extend((state.t, float(x), float(f)) for x, f in zip(state.x, state.Phi))

    record()
    done = 0
    while done < n_total:
        n = min(every, n_total - done)
        if it["kind"] == "relativistic":
            td.step_relativistic(state, dt, n, order=it["order"])
        else:
            td.step_nonrel(state, dt, n)
        done += n
        record()
    params = dict(cfg, integrator=dict(it, t_end=t_end, dt=dt))
    write_csv(args.output, ["t", "mirror", "q", "p", "Z", "P", "energy"], rows, params)
    if snaps:
        out = Path(args.output)
        write_csv(out.with_name(out.stem + ".field.csv"), ["t", "x", "Phi"], snaps, params)
    if args.checkpoint:
        with open(args.checkpoint, "wb") as fh:
            td.save_checkpoint(state, fh)
    write_echo(_echo_path(Path(args.output)), cfg)
    return EXIT_OK


def cmd_scatter_packet(args) -> int:
    from mofsim.scattering import mof_scatter
    from mofsim.timedomain import GridSpec, WavePacket, packet_reflectance, scatter_wavepacket

    p = MiroscParams(args.m, args.omega, args.lam)
    p.require_scatterable()
    pk = WavePacket(-6.0 * args.sigma, args.sigma, args.w0)
    r = scatter_wavepacket(p, pk, GridSpec(args.dx))
    exact = abs(mof_scatter(p, args.w0).R) ** 2
    rows = [(args.w0, r.R_num, r.T_num, r.residual, exact, packet_reflectance(p, pk))]
    params = {"m": p.m, "omega": p.omega, "lambda": p.lam, "w0": args.w0, "sigma": args.sigma, "dx": args.dx}
    write_csv(args.output, ["omega0", "R_num", "T_num", "residual", "abs_R2_closed", "R_packet_closed"], rows,
              params)
    return EXIT_OK


def cmd_qbm_export(args) -> int:
    from mofsim.qbm import export_slow_motion, export_static, write_export

    cfg = load_config(args.config)
    if not cfg["mirrors"]:
        raise ConfigError("mirrors", "at least one mirror is required")
    mirrors = [mirror_config(m) for m in cfg["mirrors"]]
    pos = [m["position"] if m["position"] is not None else m["z_eq"] for m in cfg["mirrors"]]
    fn = export_slow_motion if args.slow else export_static
    e = fn(mirrors, pos, args.box, args.cutoff, args.modes, normalization=args.normalization)
    out = Path(args.output)
    if not out.parent.is_dir():
        raise ConfigError("output", f"directory does not exist: {out.parent}")
    buf = io.StringIO()
    write_export(e, buf)
    _atomic_write(out, buf.getvalue())
    write_echo(_echo_path(out), cfg)
    return EXIT_OK


def selfcheck_results() -> List[tuple]:
    """Fast invariant battery: (name, passed, detail)."""
    from mofsim.cavity import CavityConfig, two_mirror_scatter
    from mofsim.core import plasma_frequency, rp_index
    from mofsim.qbm import export_static
    from mofsim.scattering import bc_R, mof_R, mof_reflectivity_spectrum, mof_to_bc_convergence

    rng = np.random.default_rng(12345)
    out = []
    m, Om, lam, w = (10 ** rng.uniform(-2, 2, 2000) for _ in range(4))
    err = 0.0
    for i in range(2000):
        r = mof_R(MiroscParams(m[i], Om[i], lam[i]), w[i])
        err = max(err, abs(abs(r) ** 2 + abs(1 + r) ** 2 - 1))
        rb = bc_R(lam[i], w[i])
        err = max(err, abs(abs(rb) ** 2 + abs(1 + rb) ** 2 - 1))
    out.append(("unitarity", err < 1e-12, f"max | |R|^2+|T|^2-1 | = {err:.2e}"))
    p = MiroscParams(1.0, 1.0, math.sqrt(4 / 3**1.5))
    v = mof_reflectivity_spectrum(p, [1 / math.sqrt(3)])[0]
    out.append(("reflectivity minimum", abs(v - 0.5) < 1e-10 and abs(rp_index(p) - 1) < 1e-12,
                f"|R|^2 at y=1/sqrt3: {v:.12f}"))
    out.append(("plasma index product", abs(plasma_frequency(p) * rp_index(p) - p.omega) < 1e-14, ""))
    dev = mof_to_bc_convergence(1.0, 1.0, np.linspace(0.1, 5, 50), [10.0 ** -k for k in range(2, 9)])
    out.append(("BC limit", bool(np.all(np.diff(dev) < 0) and dev[-1] < 1e-5), f"last {dev[-1]:.2e}"))
    c = CavityConfig(MirrorConfig(MiroscParams(1, 3, 2), 1.0), MirrorConfig(MiroscParams(2, 1, 1), 1.0), 0.7)
    s = two_mirror_scatter(c, 1.3)
    u = abs(s.psi[0][1]) ** 2 + abs(s.psi[2][0]) ** 2
    out.append(("cavity unitarity", abs(u - 1) < 1e-12, f"{u - 1:.2e}"))
    e = export_static([MirrorConfig(MiroscParams(1, 1, 1), 1.0)], [0.0], 10.0, 20.0, 30)
    out.append(("qbm sine decoupling at origin", bool(np.all(e.couplings[30:] == 0)), ""))
    return out


def cmd_selfcheck(args) -> int:
    ok = True
    for name, passed, detail in selfcheck_results():
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {name} {detail}".rstrip())
    return EXIT_OK if ok else EXIT_NUMERICAL


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError("arguments", message)


def _add_freq_grid(sp):
    sp.add_argument("--wmin", type=float, required=True)
    sp.add_argument("--wmax", type=float, required=True)
    sp.add_argument("--n", type=int, default=1000)
    sp.add_argument("--units", choices=("rad_per_s", "hz"), default="rad_per_s")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="mofsim", description="Mirror-oscillator-field model scenarios.")
    ap.add_argument("--version", action="version", version=f"mofsim {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("scatter", help="single-mirror reflection spectrum")
    sp.add_argument("--m", type=float, required=True)
    sp.add_argument("--omega", type=float, required=True)
    sp.add_argument("--lambda", dest="lam", type=float, required=True)
    _add_freq_grid(sp)
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_scatter)

    sp = sub.add_parser("bc", help="delta-potential (gamma) mirror spectrum")
    sp.add_argument("--gamma", type=float, required=True)
    _add_freq_grid(sp)
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_bc)

    sp = sub.add_parser("cavity", help="two-mirror scattering spectrum")
    sp.add_argument("--config", required=True)
    _add_freq_grid(sp)
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_cavity)

    for name, nx in (("modes", False), ("nx", True)):
        sp = sub.add_parser(name, help="boxed cavity modes" + (" with photon-number coupling" if nx else ""))
        sp.add_argument("--config", required=True)
        sp.add_argument("--box", type=float, required=True)
        sp.add_argument("--n-modes", type=int, default=20)
        sp.add_argument("-o", "--output", required=True)
        sp.set_defaults(func=lambda a, nx=nx: cmd_modes(a, nx))

    sp = sub.add_parser("cooling-sweep", help="cooling coefficients against cavity length")
    sp.add_argument("--config", required=True)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--gnuplot", action="store_true")
    sp.add_argument("-o", "--output", required=True, help="output directory")
    sp.set_defaults(func=cmd_cooling_sweep)

    sp = sub.add_parser("cooling-evolve", help="averaged or full-delay mirror trajectory")
    sp.add_argument("--config", required=True)
    sp.add_argument("--t-end", type=float)
    sp.add_argument("--dt", type=float)
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_cooling_evolve)

    sp = sub.add_parser("evolve", help="lattice time-domain run")
    sp.add_argument("--config", required=True)
    sp.add_argument("--t-end", type=float)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--checkpoint")
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_evolve)

    sp = sub.add_parser("scatter-packet", help="lattice wave-packet reflection against the closed form")
    sp.add_argument("--m", type=float, required=True)
    sp.add_argument("--omega", type=float, required=True)
    sp.add_argument("--lambda", dest="lam", type=float, required=True)
    sp.add_argument("--w0", type=float, required=True)
    sp.add_argument("--sigma", type=float, required=True)
    sp.add_argument("--dx", type=float, default=0.01)
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_scatter_packet)

    sp = sub.add_parser("qbm-export", help="Brownian-motion coefficient export")
    sp.add_argument("--config", required=True)
    sp.add_argument("--box", type=float, required=True)
    sp.add_argument("--cutoff", type=float, required=True)
    sp.add_argument("--modes", type=int, required=True)
    sp.add_argument("--slow", action="store_true", help="include displacement couplings")
    sp.add_argument("--normalization", choices=("frequency", "canonical"), default="frequency")
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_qbm_export)

    sp = sub.add_parser("selfcheck", help="run the fast invariant battery")
    sp.set_defaults(func=cmd_selfcheck)
    return ap


def run(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ParameterError as exc:
        print(f"mofsim: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"mofsim: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
