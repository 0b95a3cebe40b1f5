"""``coulomb-lab``: one entry point for every experiment.

Each verb (and ``jellium`` / ``gl`` subcommand) declares its parameters in
``COMMANDS``.  Values are resolved as schema default < config file < flag,
then frozen into a :class:`RunConfig`.  A run writes its artifacts plus a
``manifest.json`` (config, input hashes, code version, wall time, seed)
into the output directory; ``reproduce`` re-runs a manifest and compares the
CSV artifacts byte by byte.

Exit codes: 0 success, 2 usage / config error, 3 solver failure,
4 reproduction mismatch.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import sys
import tempfile
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import io as aio
from ._backend import BACKEND, thread_cap
from .errors import CoulombLabError, ConfigError, ReproductionMismatch

FORMATS = ("csv", "json", "svg")


@dataclass(frozen=True)
class Param:
    name: str
    kind: str  # int | float | str | bool | floats | path
    default: object = None
    help: str = ""
    required: bool = False

    @property
    def flag(self) -> str:
        return "--" + self.name.replace("_", "-")


def _potential_params():
    return [
        Param("potential", "str", "quadratic", "potential tag (quadratic, anisotropic)"),
        Param("quad", "floats", None, "coefficients a_k of Σ a_k x_k² (overrides the tag)"),
        Param("radial", "floats", None, "coefficients b_m of Σ b_m |x|^m"),
    ]


def _field_params(synthetic="vortices", n=257, eps=0.02, h_ex=0.0):
    return [
        Param("field", "path", None, "field CSV with columns x, y, Re u, Im u, A1, A2"),
        Param("synthetic", "str", synthetic, "generated field when --field is absent: vortices | smooth"),
        Param("n", "int", n, "nodes per side of a generated field"),
        Param("eps", "float", eps, "Ginzburg-Landau ε"),
        Param("h_ex", "float", h_ex, "applied field"),
    ]


COMMANDS: dict[str, list[Param]] = {
    "equilibrium": [Param("dim", "int", 2, "space dimension"), *_potential_params(),
                    Param("h", "float", 1 / 32, "cell size"), Param("box", "float", 2.5, "half-width of the box"),
                    Param("tol", "float", 1e-6, "KKT tolerance")],
    "energy": [Param("points", "path", None, "points CSV, one point per row", required=True), *_potential_params(),
               Param("h", "float", 1 / 32, "equilibrium cell size"), Param("box", "float", 2.5, "box half-width"),
               Param("eta", "float", None, "smearing radius (default from the minimum separation)")],
    "jellium.green": [Param("dim", "int", 2), Param("tau_re", "float", 0.5), Param("tau_im", "float", math.sqrt(3) / 2),
                      Param("volume", "float", 1.0, "torus volume (period in d = 1)"),
                      Param("x", "floats", None, "one evaluation point"),
                      Param("points", "path", None, "evaluation points CSV")],
    "jellium.energy": [Param("points", "path", None, "configuration CSV", required=True), Param("dim", "int", 2),
                       Param("tau_re", "float", 0.5), Param("tau_im", "float", math.sqrt(3) / 2),
                       Param("volume", "float", None, "torus volume (default: number of points)")],
    "jellium.scan-lattices": [Param("grid", "int", 101, "nodes per axis"), Param("y_max", "float", 1.6)],
    "jellium.minimize": [Param("N", "int", 4, "number of points"), Param("dim", "int", 2),
                         Param("lattice", "str", "triangular4", "triangular4 | tau"),
                         Param("tau_re", "float", 0.0), Param("tau_im", "float", 1.0),
                         Param("volume", "float", None, "torus volume (default N)"),
                         Param("gtol", "float", 1e-8)],
    "sample": [Param("n", "int", 128), Param("beta", "float", 2.0), Param("dim", "int", 2), *_potential_params(),
               Param("sigma", "float", 0.1), Param("sweeps", "int", 10000), Param("burn_in", "int", 1000),
               Param("thin", "int", 100), Param("chains", "int", 4), Param("init_radius", "float", 1.0)],
    "gl.energy": _field_params(),
    "gl.vortices": [*_field_params(), Param("s", "float", 2.0, "ball growth factor"),
                    Param("threshold", "float", None, "bad-set threshold (default ε^{1/4})")],
    "gl.london": [Param("domain", "str", "disk:2", "disk:R | square:L | rect:x0,x1,y0,y1"),
                  Param("h", "float", 1 / 32), Param("h_ex", "float", 1.0), Param("mu", "float", 0.0)],
    "gl.obstacle": [Param("lam", "float", 1.5, "λ"), Param("domain", "str", "disk:2"), Param("h", "float", 1 / 32)],
    "gl.split": [*_field_params("smooth", 129, 0.1, 3.0), Param("lam", "float", None, "sets h_ex = λ|log ε|")],
}

VERBS = {"equilibrium": None, "energy": None, "sample": None,
         "jellium": ["green", "energy", "scan-lattices", "minimize"],
         "gl": ["energy", "vortices", "london", "obstacle", "split"]}


# --------------------------------------------------------------------------
# configuration


def _coerce(p: Param, value, path: str):
    if value is None or (isinstance(value, str) and value.strip().lower() in ("", "none", "null")):
        return None
    try:
        if p.kind == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if p.kind == "float":
            return float(value)
        if p.kind == "bool":
            if isinstance(value, str):
                if value.lower() in ("1", "true", "yes", "on"):
                    return True
                if value.lower() in ("0", "false", "no", "off"):
                    return False
                raise ValueError
            return bool(value)
        if p.kind == "floats":
            if isinstance(value, str):
                value = [t for t in value.replace(",", " ").split()]
            return [float(t) for t in value]
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"expected {p.kind}, got {value!r}", field=path) from None


def _text(p: Param, value) -> str:
    if value is None:
        return "none"
    if p.kind == "floats":
        return ",".join(repr(float(v)) for v in value)
    if p.kind == "float":
        return repr(float(value))
    if p.kind == "bool":
        return "true" if value else "false"
    return str(value)


@dataclass(frozen=True)
class RunConfig:
    verb: str
    sub: str | None = None
    params: dict = field(default_factory=dict)
    seed: int = 0
    out: str = "out"
    formats: tuple = FORMATS

    @property
    def command(self) -> str:
        return self.verb if self.sub is None else f"{self.verb}.{self.sub}"

    @property
    def schema(self) -> list:
        return COMMANDS[self.command]

    def to_dict(self) -> dict:
        return {"verb": self.verb, "sub": self.sub, "seed": self.seed, "out": self.out,
                "formats": list(self.formats), "params": dict(self.params)}

    @classmethod
    def from_dict(cls, doc: dict, overrides: dict | None = None) -> "RunConfig":
        """Validate and resolve a (possibly partial) config; unknown keys are errors."""
        doc = dict(doc)
        verb = doc.get("verb")
        if verb not in VERBS:
            raise ConfigError(f"unknown verb {verb!r}", field="verb")
        sub = doc.get("sub")
        if VERBS[verb] is None:
            if sub not in (None, "", "none"):
                raise ConfigError(f"{verb} takes no subcommand", field="sub")
            sub = None
        elif sub not in VERBS[verb]:
            raise ConfigError(f"unknown {verb} subcommand {sub!r}", field="sub")
        key = verb if sub is None else f"{verb}.{sub}"
        schema = {p.name: p for p in COMMANDS[key]}
        raw = dict(doc.get("params") or {})
        raw.update(overrides or {})
        params = {}
        for name in raw:
            if name not in schema:
                raise ConfigError("unknown parameter", field=f"{key}.{name}")
        for name, p in schema.items():
            value = _coerce(p, raw.get(name, p.default), f"{key}.{name}")
            if value is None and p.required:
                raise ConfigError("required", field=f"{key}.{name}")
            params[name] = value
        try:
            seed = int(doc.get("seed", 0))
        except (TypeError, ValueError):
            raise ConfigError(f"expected int, got {doc.get('seed')!r}", field="seed") from None
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer", field="seed")
        formats = doc.get("formats", FORMATS)
        if isinstance(formats, str):
            formats = [t for t in formats.replace(",", " ").split()]
        formats = tuple(formats)
        for f in formats:
            if f not in FORMATS:
                raise ConfigError(f"unknown format {f!r}", field="formats")
        return cls(verb, sub, params, seed, str(doc.get("out", "out")), formats)

    def to_ini(self) -> str:
        lines = ["[run]", f"verb = {self.verb}", f"sub = {self.sub or 'none'}", f"seed = {self.seed}",
                 f"out = {self.out}", f"formats = {','.join(self.formats)}", "", "[params]"]
        for p in self.schema:
            lines.append(f"{p.name} = {_text(p, self.params.get(p.name))}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def parse_config_text(text: str) -> dict:
    """JSON object, or INI with optional [run] / [params] sections (flat keys allowed)."""
    s = text.lstrip()
    if s.startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON ({exc.msg}, line {exc.lineno})", field="config") from None
        if not isinstance(doc, dict):
            raise ConfigError("top level must be an object", field="config")
        return doc
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text if s.startswith("[") else "[params]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"invalid INI ({exc.__class__.__name__})", field="config") from None
    doc: dict = {"params": {}}
    for sec in cp.sections():
        for k, v in cp.items(sec):
            if k in ("verb", "sub", "seed", "out", "formats"):
                doc[k] = v
            else:
                doc["params"][k] = v
    return doc


def load_config(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"no such file {str(path)!r}", field="config")
    return parse_config_text(p.read_text())


# --------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("run options")
    g.add_argument("--config", default=argparse.SUPPRESS, help="INI or JSON config file")
    g.add_argument("--seed", default=argparse.SUPPRESS, help="64-bit seed")
    g.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    g.add_argument("--formats", default=argparse.SUPPRESS, help="comma list of csv,json,svg")

    parser = argparse.ArgumentParser(prog="coulomb-lab", parents=[common],
                                     description="Coulomb gas, jellium and Ginzburg-Landau experiments")
    verbs = parser.add_subparsers(dest="verb", metavar="VERB", required=True)

    def add_params(sp, key):
        for p in COMMANDS[key]:
            sp.add_argument(p.flag, dest=p.name, default=argparse.SUPPRESS, help=p.help or None)

    helps = {"equilibrium": "equilibrium measure of a confining potential",
             "energy": "renormalized energy and splitting of a point configuration",
             "sample": "Metropolis chains for the log-gas",
             "jellium": "torus Green functions and lattice energies", "gl": "Ginzburg-Landau fields"}
    for verb, subs in VERBS.items():
        vp = verbs.add_parser(verb, parents=[common], help=helps[verb])
        if subs is None:
            add_params(vp, verb)
            continue
        sps = vp.add_subparsers(dest="sub", metavar="SUB", required=True)
        for sub in subs:
            add_params(sps.add_parser(sub, parents=[common]), f"{verb}.{sub}")
    rp = verbs.add_parser("reproduce", parents=[common], help="re-run a manifest and compare outputs")
    rp.add_argument("manifest")
    return parser


def config_from_args(argv) -> RunConfig | tuple:
    ns = vars(_build_parser().parse_args(argv))
    verb = ns.pop("verb")
    if verb == "reproduce":
        return ("reproduce", ns)
    sub = ns.pop("sub", None)
    doc = load_config(ns.pop("config")) if "config" in ns else {"params": {}}
    if doc.get("verb") not in (None, verb) or (sub is not None and doc.get("sub") not in (None, "none", sub)):
        raise ConfigError(f"config file is for {doc.get('verb')} {doc.get('sub') or ''}".strip(), field="verb")
    doc["verb"], doc["sub"] = verb, sub
    for k in ("seed", "out", "formats"):
        if k in ns:
            doc[k] = ns.pop(k)
    return RunConfig.from_dict(doc, overrides=ns)


# --------------------------------------------------------------------------
# verbs


def _potential(cfg: RunConfig, d: int):
    from .potentials import from_dict

    p = cfg.params
    doc = {"dim": d, "tag": p["potential"]}
    if p.get("quad") is not None:
        doc["quad"] = p["quad"]
    if p.get("radial") is not None:
        doc["radial"] = p["radial"]
    return from_dict(doc)


def _read_points(path, key):
    header, data = aio.read_csv(path)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ConfigError("points file is empty", field=key)
    return data


class Outputs:
    """Serialized artifact writer for one run."""

    def __init__(self, cfg: RunConfig, out: Path, run_id: str):
        self.cfg, self.out, self.run_id = cfg, out, run_id
        self.written: list[str] = []

    def csv(self, name, header, rows):
        if "csv" in self.cfg.formats:
            aio.write_csv(self.out / name, header, rows, self.run_id)
            self.written.append(name)

    def json(self, name, doc):
        if "json" in self.cfg.formats:
            aio.write_json(self.out / name, doc, self.run_id)
            self.written.append(name)

    def svg(self, name, series, **kw):
        if "svg" in self.cfg.formats:
            aio.write_svg(self.out / name, series, **kw)
            self.written.append(name)


def _run_equilibrium(cfg, o: Outputs):
    from .equilibrium import solve_equilibrium_direct

    p = cfg.params
    sol = solve_equilibrium_direct(_potential(cfg, p["dim"]), h=p["h"], box=p["box"], tol=p["tol"])
    pts = sol.grid.points().reshape(-1, sol.d)
    axes = ["x", "y", "z"][: sol.d]
    o.csv("mu0.csv", [*axes, "mu0", "h_mu0", "zeta"],
          np.column_stack([pts, sol.density.reshape(-1), sol.potential.reshape(-1), sol.zeta.reshape(-1)]))
    o.json("summary.json", {**sol.summary(), "kkt_residual": sol.kkt_residual, "iterations": sol.iterations,
                            "h": p["h"], "dim": sol.d})
    # slice through the origin along the first axis
    idx = tuple([slice(None)] + [int(np.argmin(np.abs(a))) for a in sol.grid.axes[1:]])
    o.svg("mu0.svg", [(sol.grid.axes[0], sol.density[idx], "line")], title="equilibrium density", xlabel="x",
          ylabel="mu0")


def _run_energy(cfg, o: Outputs):
    from .equilibrium import solve_equilibrium_direct
    from .gas_energy import PointConfiguration, splitting_report

    p = cfg.params
    x = _read_points(p["points"], "energy.points")
    sol = solve_equilibrium_direct(_potential(cfg, x.shape[1]), h=p["h"], box=p["box"])
    rep = splitting_report(PointConfiguration(x), sol, eta=p["eta"])
    o.json("report.json", rep.to_dict())


def _torus(p, d, N=None):
    from .jellium import TorusLattice

    vol = p.get("volume")
    vol = float(N if vol is None else vol)
    if d == 1:
        return TorusLattice(((vol,),))
    return TorusLattice.from_tau(complex(p["tau_re"], p["tau_im"]), vol)


def _run_jellium(cfg, o: Outputs):
    from . import jellium as J

    p = cfg.params
    if cfg.sub == "green":
        lat = _torus(p, p["dim"], 1.0)
        if p["points"] is not None:
            x = _read_points(p["points"], "jellium.green.points")
        elif p["x"] is not None:
            x = np.asarray(p["x"], float).reshape(1, -1)
        else:
            raise ConfigError("give --x or --points", field="jellium.green.x")
        if x.shape[1] != lat.d:
            raise ConfigError(f"points must have {lat.d} columns", field="jellium.green.points")
        G = np.atleast_1d(J.torus_green(lat, x if lat.d == 2 else x[:, 0]))
        o.csv("green.csv", [*["x", "y"][: lat.d], "G"], np.column_stack([x, G]))
    elif cfg.sub == "energy":
        x = _read_points(p["points"], "jellium.energy.points")
        if x.shape[1] != p["dim"]:
            raise ConfigError(f"points must have {p['dim']} columns", field="jellium.energy.points")
        conf = J.TorusConfiguration(_torus(p, p["dim"], x.shape[0]), x)
        o.json("energy.json", {"W": J.periodic_W(conf), "N": conf.N, "density": conf.density,
                               "volume": conf.lattice.volume})
    elif cfg.sub == "scan-lattices":
        X, Y, H = J.scan_lattices(p["grid"], p["y_max"])
        ok = np.isfinite(H)
        rows = np.column_stack([X[ok], Y[ok], H[ok]])
        o.csv("lattices.csv", ["tau_re", "tau_im", "height"], rows)
        k = int(np.argmin(rows[:, 2]))
        o.json("scan.json", {"argmin_tau": [rows[k, 0], rows[k, 1]], "min_height": rows[k, 2],
                             "grid": p["grid"], "y_max": p["y_max"]})
        o.svg("lattices.svg", [(Y[0], H[0], "line"), (Y[-1], H[-1], "line")],
              title="lattice height at Re tau = 0 and 1/2", xlabel="Im tau", ylabel="height")
    else:
        if p["lattice"] == "triangular4":
            lat = J.triangular_compatible_torus(p["N"])
        elif p["lattice"] == "tau":
            lat = _torus(p, p["dim"], p["N"])
        else:
            raise ConfigError("expected triangular4 or tau", field="jellium.minimize.lattice")
        conf = J.minimize_torus_config(lat, p["N"], seed=cfg.seed, gtol=p["gtol"])
        o.csv("config.csv", ["x", "y"][: lat.d], conf.points)
        o.json("energy.json", {"W": conf.energy, "N": conf.N, "gradient": conf.info.get("gradient"),
                               "basis": lat.B})


def _run_sample(cfg, o: Outputs):
    from .sampler import GibbsSpec, radial_cdf_distance, sample_chains

    p = cfg.params
    spec = GibbsSpec(p["n"], p["beta"], _potential(cfg, p["dim"]), sigma=p["sigma"], sweeps=p["sweeps"],
                     burn_in=p["burn_in"], seed=cfg.seed, thin=p["thin"], init_radius=p["init_radius"])
    chains = sample_chains(spec, p["chains"])
    d = p["dim"]
    rows = []
    for ch in chains:
        k, n, _ = ch.snapshots.shape
        idx = np.indices((k, n)).reshape(2, -1).T
        rows.append(np.column_stack([np.full(k * n, ch.chain_id), idx, ch.snapshots.reshape(-1, d)]))
    snaps = np.vstack(rows)
    o.csv("snapshots.csv", ["chain", "snapshot", "index", *["x", "y", "z"][:d]],
          [(int(r[0]), int(r[1]), int(r[2]), *r[3:]) for r in snaps])
    radii = np.linalg.norm(snaps[:, 3:], axis=1)
    ref = (lambda t: np.minimum(t, 1.0) ** 2) if d == 2 else None
    pooled = {"points": int(radii.size), "fraction_outside_1.05": float(np.mean(radii > 1.05))}
    if ref is not None:
        pooled["radial_sup_distance"] = radial_cdf_distance(radii)
    o.json("stats.json", {"chains": [dict(ch.stats.to_dict(), chain=ch.chain_id) for ch in chains],
                          "pooled": pooled, "reference": "circle law r^2" if ref else None})
    r = np.linspace(0.0, max(1.5, float(radii.max()) if radii.size else 1.5), 201)
    emp = np.searchsorted(np.sort(radii), r, side="right") / max(1, radii.size)
    refv = ref(r) if ref else np.full_like(r, np.nan)
    o.csv("radial_cdf.csv", ["r", "empirical", "reference"], np.column_stack([r, emp, refv]))
    series = [(r, emp, "line")] + ([(r, refv, "line")] if ref else [])
    o.svg("radial_cdf.svg", series, title="radial CDF", xlabel="r", ylabel="F(r)")


def read_field(path, eps, h_ex):
    """GLState from a nodal CSV (x, y, Re u, Im u, A1, A2) on a uniform square grid."""
    from .gl_field import GLState

    header, data = aio.read_csv(path)
    if data.ndim != 2 or data.shape[1] != 6:
        raise ConfigError("field CSV needs columns x, y, Re u, Im u, A1, A2", field="gl.field")
    xs, ys = np.unique(data[:, 0]), np.unique(data[:, 1])
    if xs.size < 3 or ys.size < 3 or xs.size * ys.size != data.shape[0]:
        raise ConfigError("field nodes do not form a full rectangular grid", field="gl.field")
    h = xs[1] - xs[0]
    if not (np.allclose(np.diff(xs), h, rtol=1e-9) and np.allclose(np.diff(ys), h, rtol=1e-9)):
        raise ConfigError("field grid must be uniform with equal spacing in x and y", field="gl.field")
    i = np.rint((data[:, 0] - xs[0]) / h).astype(int)
    j = np.rint((data[:, 1] - ys[0]) / h).astype(int)
    u = np.zeros((xs.size, ys.size), complex)
    A = np.zeros((xs.size, ys.size, 2))
    u[i, j] = data[:, 2] + 1j * data[:, 3]
    A[i, j] = data[:, 4:6]
    return GLState.from_nodal(float(xs[0]), float(ys[0]), float(h), u, A, eps, h_ex)


def field_rows(state):
    X, Y = state.nodes()
    A = state.nodal_A()
    return np.column_stack([X.ravel(), Y.ravel(), state.u.real.ravel(), state.u.imag.ravel(),
                            A[..., 0].ravel(), A[..., 1].ravel()])


FIELD_HEADER = ["x", "y", "Re u", "Im u", "A1", "A2"]


def _gl_state(cfg):
    from .gl_field import random_smooth_state, random_vortex_layout, vortex_state

    p = cfg.params
    if p["field"] is not None:
        return read_field(p["field"], p["eps"], p["h_ex"])
    if p["synthetic"] == "vortices":
        centers, degrees = random_vortex_layout(cfg.seed)
        return vortex_state(centers, degrees, p["eps"], n=p["n"], h_ex=p["h_ex"])
    if p["synthetic"] == "smooth":
        return random_smooth_state(cfg.seed, n=p["n"], eps=p["eps"], h_ex=p["h_ex"])
    raise ConfigError("expected vortices or smooth", field=f"{cfg.command}.synthetic")


def _run_gl(cfg, o: Outputs):
    from . import gl_field as G
    from . import london as L
    from . import vortex_balls as VB

    p = cfg.params
    if cfg.sub in ("energy", "vortices", "split"):
        state = _gl_state(cfg)
        if p["field"] is None:
            o.csv("field.csv", FIELD_HEADER, field_rows(state))
    if cfg.sub == "energy":
        total, parts = G.gl_energy(state, parts=True)
        dens, mu = G.energy_density(state), G.vorticity(state)
        X, Y = dens.centers()
        o.csv("density.csv", ["cx", "cy", "energy", "mu"],
              np.column_stack([X.ravel(), Y.ravel(), dens.values.ravel(), mu.values.ravel()]))
        o.json("energy.json", {"energy": total, **parts, "eps": state.eps, "h_ex": state.h_ex, "h": state.h,
                               "total_vorticity": mu.integral()})
    elif cfg.sub == "vortices":
        init = VB.initial_balls(state, p["threshold"])
        bs = VB.ball_construction(init, p["s"], state.bounds) if len(init) else init
        bb = VB.ball_lower_bound_vs_energy(state, bs)
        o.csv("balls.csv", ["cx", "cy", "r", "d"], bs.rows())
        o.json("bound.json", {"bound": bb.bound, "energy_in_balls": bb.energy, "D": bb.D, "r_total": bb.r_total,
                              "eps": bb.eps, "C_required": bb.C_required, "s": bs.s, "merges": len(bs.merges),
                              "initial_balls": len(init)})
    elif cfg.sub == "london":
        dom = L.domain_from_spec(p["domain"])
        f = L.london_solve(p["mu"], p["h_ex"], dom, p["h"])
        crit = L.first_critical_lambda(dom, p["h"])
        pts = f.grid.points()[f.boundary]
        o.csv("h.csv", ["x", "y", "h"], np.column_stack([pts, f.values[f.boundary]]))
        o.json("london.json", {"domain": dom.describe(), "h": p["h"], "h_ex": p["h_ex"], "mu": p["mu"],
                               "lambda_Omega": crit.lam, "argmax": crit.argmax, "h0_min": crit.h0_min})
    elif cfg.sub == "obstacle":
        dom = L.domain_from_spec(p["domain"])
        ob = L.gl_obstacle(p["lam"], dom, p["h"])
        crit = L.first_critical_lambda(dom, p["h"])
        inside = ob.h.boundary
        pts = ob.h.grid.points()[inside]
        o.csv("omega.csv", ["x", "y", "omega", "h"],
              [(a, b, bool(w), v) for (a, b), w, v in zip(pts, ob.omega[inside], ob.h.values[inside])])
        o.json("obstacle.json", {"lambda": p["lam"], "lambda_Omega": crit.lam, "mu_level": ob.level,
                                 "omega_fraction": float(ob.omega[inside].mean()), "residual": ob.residual})
    elif cfg.sub == "split":
        sp = L.gl_splitting_check(state, lam=p["lam"])
        o.json("split.json", {"lhs": sp.lhs, "rhs": sp.rhs, "G0": sp.G0, "G1": sp.G1, "remainder": sp.remainder,
                              "residual": sp.residual, "relative": sp.relative, "level": sp.level,
                              "coincidence_fraction": sp.coincidence_fraction})


RUNNERS = {"equilibrium": _run_equilibrium, "energy": _run_energy, "jellium": _run_jellium,
           "sample": _run_sample, "gl": _run_gl}


# --------------------------------------------------------------------------
# run / reproduce


def code_version() -> str:
    from . import __version__

    return __version__


def _inputs(cfg: RunConfig) -> dict:
    out = {}
    for p in cfg.schema:
        v = cfg.params.get(p.name)
        if p.kind == "path" and v is not None:
            path = Path(v)
            if not path.is_file():
                raise ConfigError(f"no such file {v!r}", field=f"{cfg.command}.{p.name}")
            out[p.name] = {"path": str(path.resolve()), "sha256": aio.sha256_file(path)}
    return out


def run(cfg: RunConfig, out: Path | None = None) -> dict:
    """Execute ``cfg`` into ``out`` (default cfg.out); returns the manifest."""
    out = Path(cfg.out if out is None else out)
    out.mkdir(parents=True, exist_ok=True)
    inputs = _inputs(cfg)
    run_id = aio.sha256_text(json.dumps({"config": cfg.to_dict() | {"out": None},
                                         "inputs": {k: v["sha256"] for k, v in inputs.items()}},
                                        sort_keys=True))[:16]
    o = Outputs(cfg, out, run_id)
    t0 = time.perf_counter()
    RUNNERS[cfg.verb](cfg, o)
    manifest = {
        "run": run_id,
        "config": cfg.to_dict(),
        "inputs": inputs,
        "code_version": code_version(),
        "backend": BACKEND,
        "threads": thread_cap(),
        "seed": cfg.seed,
        "wall_time_s": time.perf_counter() - t0,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "artifacts": {name: aio.sha256_file(out / name) for name in o.written},
    }
    aio.write_json(out / aio.MANIFEST_NAME, manifest)
    return manifest


def reproduce(manifest_path, seed: int | None = None, stream=None) -> int:
    """Re-run a manifest in a scratch directory and diff its CSV artifacts.

    With ``seed`` different from the recorded one, divergence is expected and
    reported as such (exit 0); otherwise any difference raises
    :class:`ReproductionMismatch`.  Missing originals are restored.
    """
    stream = sys.stdout if stream is None else stream
    mpath = Path(manifest_path)
    if not mpath.is_file():
        raise ConfigError(f"no such manifest {str(manifest_path)!r}", field="manifest")
    man = json.loads(mpath.read_text())
    doc = dict(man["config"])
    for k, rec in man.get("inputs", {}).items():
        if not Path(rec["path"]).is_file() or aio.sha256_file(rec["path"]) != rec["sha256"]:
            raise ReproductionMismatch(f"input {k} ({rec['path']}) changed since the recorded run")
    expect_diverge = seed is not None and int(seed) != int(doc.get("seed", 0))
    if expect_diverge:
        doc["seed"] = int(seed)
    cfg = RunConfig.from_dict(doc)
    base = mpath.parent
    with tempfile.TemporaryDirectory() as tmp:
        new = run(cfg, Path(tmp))
        diffs, restored = [], []
        for name in man["artifacts"]:
            if not name.endswith(".csv"):
                continue
            orig, fresh = base / name, Path(tmp) / name
            if not orig.exists():
                orig.write_bytes(_rerun_text(fresh, man["run"], new["run"]))
                restored.append(name)
                continue
            if expect_diverge:
                div = aio.first_divergence(orig, fresh)
            else:
                div = aio.first_divergence(orig, fresh) if new["run"] == man["run"] else \
                    {"file": name, "line": 1, "column": None, "expected": man["run"], "actual": new["run"]}
            if div is not None:
                diffs.append(div)
    for name in restored:
        print(f"restored {name}", file=stream)
    stream.flush()
    if expect_diverge:
        print(f"expected-divergence: seed {man['config'].get('seed')} -> {seed}; "
              f"{len(diffs)} artifact(s) differ", file=stream)
        for dv in diffs:
            print(f"  {_fmt_div(dv)}", file=stream)
        return 0
    if diffs:
        raise ReproductionMismatch("reproduction failed: " + "; ".join(_fmt_div(dv) for dv in diffs))
    print(f"reproduced {sum(n.endswith('.csv') for n in man['artifacts'])} CSV artifact(s) bit-exactly",
          file=stream)
    return 0


def _rerun_text(path: Path, old_run: str, new_run: str) -> bytes:
    return path.read_bytes().replace(new_run.encode(), old_run.encode(), 1)


def _fmt_div(dv: dict) -> str:
    where = f"{dv['file']} line {dv['line']}" + (f" column {dv['column']}" if dv.get("column") else "")
    return f"{where}: expected {dv['expected']!r}, got {dv['actual']!r}"


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        try:
            parsed = config_from_args(argv)
        except SystemExit as exc:  # argparse usage errors and --help
            return int(exc.code or 0) if not isinstance(exc.code, str) else 2
        if isinstance(parsed, tuple):
            ns = parsed[1]
            return reproduce(ns["manifest"], seed=int(ns["seed"]) if "seed" in ns else None)
        man = run(parsed)
        print(f"wrote {len(man['artifacts'])} artifact(s) to {parsed.out} (run {man['run']})")
        return 0
    except ConfigError as exc:
        print(f"coulomb-lab: usage error: {exc}", file=sys.stderr)
        return 2
    except CoulombLabError as exc:
        print(f"coulomb-lab: {exc.__class__.__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
