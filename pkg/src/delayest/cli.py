"""Command-line front end: JSON run configs, pipeline commands, artifacts.

A single config document drives every command.  Sections: system (builtin
benchmark or explicit matrices), basis (function descriptors per delay
interval), supply, synthesis, simulation, spectral, output.  The schema
rejects unknown keys so typos fail before any computation.

Exit codes, for CI use: 0 success, 1 config or input-file errors, 2 solver
reports infeasible (also unstable spectra under --fail-if-unstable), 3
numerical trouble in the solver.

Artifacts land in output.directory: gains.json, certificate.json,
report.json (synth); trajectory.csv plus states/error/outputs/error_output
gnuplot scripts (simulate); eigs.csv (spectrum).  Reports are emitted with
sorted keys so reruns of one config are byte-identical apart from the
timestamp field.
"""

from __future__ import annotations

import json
import time
from pathlib import Path
from types import SimpleNamespace

import click
import numpy as np
from jsonschema import Draft202012Validator

from .basis import BasisFn, BasisSpec, build_eda
from .driver import (
    SynthesisError,
    analyze_gains,
    refine_algorithm1,
    synth_theorem2,
)
from .model import (
    DelaySystem,
    EstimatorGains,
    example_A,
    example_B_hooks,
    preset_supply,
    validate,
)
from .simulate import DisturbanceSpec, SimConfig, series_names, simulate, write_csv
from .spectral import SpectralConfig, error_dynamics_model, spectral_abscissa

__all__ = ["main", "load_config", "build_run", "ConfigError"]


class ConfigError(Exception):
    """Config ingestion failure; messages name the offending path."""

    def __init__(self, messages):
        if isinstance(messages, str):
            messages = [messages]
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


_MATRIX = {
    "type": "array", "minItems": 1,
    "items": {"type": "array", "minItems": 1, "items": {"type": "number"}},
}
_MATRIX_LIST = {"type": "array", "items": _MATRIX}
_VECTOR = {"type": "array", "items": {"type": "number"}}
_FN = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": [
            "constant", "monomial", "sine", "cosine", "exp_sine",
            "exp_cosine", "recip_sine", "recip_cosine", "sampled_table",
        ]},
        "k": {"type": "integer", "minimum": 1},
        "a": {"type": "number"},
        "b": {"type": "number"},
        "c": {"type": "number"},
        "grid": _VECTOR,
        "values": _VECTOR,
    },
}
_FN_LIST = {"type": "array", "items": _FN}

_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["system"],
    "properties": {
        "seed": {"type": "integer"},
        "system": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "builtin": {"enum": ["example_A"]},
                "sigma": {"type": "integer", "minimum": 0},
                "lambda": {"type": "integer", "minimum": 1},
                "delays": {"type": "array", "minItems": 1,
                           "items": {"type": "number", "exclusiveMinimum": 0}},
                "A": _MATRIX_LIST,
                "C": _MATRIX_LIST,
                "Ahat": _MATRIX_LIST,
                "Chat": _MATRIX_LIST,
                "Cmeas": _MATRIX,
                "D1": _MATRIX, "D2": _MATRIX, "D3": _MATRIX, "D4": _MATRIX,
            },
        },
        "basis": {
            "type": "object",
            "additionalProperties": False,
            "required": ["per_interval"],
            "properties": {
                "per_interval": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["f"],
                        "properties": {
                            "phi": _FN_LIST, "varphi": _FN_LIST, "f": _FN_LIST,
                        },
                    },
                },
            },
        },
        "supply": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "preset": {"enum": ["l2gain", "strict_passivity"]},
                "gamma": {"type": "number", "exclusiveMinimum": 0},
                "J1": _MATRIX,
            },
        },
        "synthesis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alpha": {"type": ["array", "null"], "items": {"type": "number"}},
                "rho1": {"type": "number", "exclusiveMinimum": 0},
                "rho2": {"type": "number", "exclusiveMinimum": 0},
                "eps": {"type": "number", "minimum": 0},
                "max_loops": {"type": "integer", "minimum": 0},
                "gamma_weight": {"type": "number", "exclusiveMinimum": 0},
                "delay_free_estimator": {"type": "boolean"},
                "solver_tol": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "simulation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "h": {"type": "number", "exclusiveMinimum": 0},
                "T": {"type": "number", "minimum": 0},
                "N_dd": {"type": "integer", "minimum": 2},
                "route": {"enum": ["coupled", "direct"]},
                "estimator_noise_mode": {"enum": ["ideal", "injected"]},
                "hooks_enabled": {"type": "boolean"},
                "plant_ic": _VECTOR,
                "estimator_ic": _VECTOR,
                "disturbance": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"enum": ["none", "windowed_sine"]},
                        "amplitude": {"type": "number"},
                        "omega": {"type": "number"},
                        "t_on": {"type": "number"},
                        "t_off": {"type": "number"},
                    },
                },
                "hooks": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["builtin"],
                    "properties": {
                        "builtin": {"enum": ["example_B"]},
                        "alpha": {"type": "number"},
                    },
                },
            },
        },
        "spectral": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "N": {"type": "integer"},
                "eig_count": {"type": "integer"},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "formats": {"type": "array",
                            "items": {"enum": ["json", "csv", "gp"]}},
            },
        },
    },
}

_EXPLICIT_KEYS = ("delays", "A", "C", "Ahat", "Chat",
                  "Cmeas", "D1", "D2", "D3", "D4")

_FN_BUILDERS = {
    "constant": lambda d: BasisFn.constant(),
    "monomial": lambda d: BasisFn.monomial(d["k"]),
    "sine": lambda d: BasisFn.sine(d["a"]),
    "cosine": lambda d: BasisFn.cosine(d["a"]),
    "exp_sine": lambda d: BasisFn.exp_sine(d["a"]),
    "exp_cosine": lambda d: BasisFn.exp_cosine(d["a"]),
    "recip_sine": lambda d: BasisFn.recip_sine(d["c"], d.get("b", 0.0)),
    "recip_cosine": lambda d: BasisFn.recip_cosine(d["c"], d.get("b", 0.0)),
    "sampled_table": lambda d: BasisFn.sampled_table(d["grid"], d["values"]),
}


def load_config(path) -> dict:
    """Parse and schema-validate a config file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    errors = []
    for err in sorted(Draft202012Validator(_SCHEMA).iter_errors(doc),
                      key=lambda e: e.json_path):
        errors.append(f"{err.json_path.replace('$', 'config', 1)}: {err.message}")
    if errors:
        raise ConfigError(errors)
    return doc


def _matrix(raw, path, shape=None) -> np.ndarray:
    widths = {len(r) for r in raw}
    if len(widths) != 1:
        raise ConfigError(f"{path}: rows have unequal lengths {sorted(widths)}")
    arr = np.array(raw, dtype=float)
    if shape is not None and arr.shape != shape:
        raise ConfigError(f"{path}: shape {arr.shape}, expected {shape}")
    return arr


def _build_basis(doc: dict, delays) -> BasisSpec:
    per = doc["per_interval"]
    if len(per) != len(delays):
        raise ConfigError(
            f"config.basis.per_interval: {len(per)} interval entries for "
            f"{len(delays)} delays")
    lists = {"phi": [], "varphi": [], "f": []}
    for i, entry in enumerate(per):
        for part in ("phi", "varphi", "f"):
            fns = []
            for j, d in enumerate(entry.get(part, [])):
                try:
                    fns.append(_FN_BUILDERS[d["kind"]](d))
                except KeyError as exc:
                    raise ConfigError(
                        f"config.basis.per_interval[{i}].{part}[{j}]: "
                        f"{d['kind']} needs parameter {exc}") from exc
                except ValueError as exc:
                    raise ConfigError(
                        f"config.basis.per_interval[{i}].{part}[{j}]: {exc}"
                    ) from exc
            lists[part].append(fns)
    try:
        spec = BasisSpec.create(delays, lists["phi"], lists["varphi"], lists["f"])
        spec.validate()
    except ValueError as exc:
        raise ConfigError(f"config.basis: {exc}") from exc
    return spec


def _build_system(doc: dict):
    sysdoc = doc["system"]
    if "builtin" in sysdoc:
        extras = [k for k in _EXPLICIT_KEYS if k in sysdoc]
        if extras:
            raise ConfigError(
                f"config.system: builtin excludes explicit fields {extras}")
        if "basis" in doc:
            raise ConfigError(
                "config.basis: not allowed with a builtin system (the "
                "benchmark carries its own basis)")
        s = sysdoc.get("sigma", 1)
        lam = sysdoc.get("lambda", 1)
        return example_A(sigma1=s, sigma2=s, lambda1=lam, lambda2=lam)

    missing = [k for k in _EXPLICIT_KEYS if k not in sysdoc]
    if missing:
        raise ConfigError(
            f"config.system: missing fields {missing} (or use builtin)")
    if "basis" not in doc:
        raise ConfigError("config.basis: required for an explicit system")
    delays = tuple(float(x) for x in sysdoc["delays"])
    spec = _build_basis(doc["basis"], delays)

    def mats(key):
        return tuple(_matrix(m, f"config.system.{key}[{i}]")
                     for i, m in enumerate(sysdoc[key]))

    A, C, Ahat, Chat = mats("A"), mats("C"), mats("Ahat"), mats("Chat")
    Cmeas = _matrix(sysdoc["Cmeas"], "config.system.Cmeas")
    D1 = _matrix(sysdoc["D1"], "config.system.D1")
    D2 = _matrix(sysdoc["D2"], "config.system.D2")
    D3 = _matrix(sysdoc["D3"], "config.system.D3")
    D4 = _matrix(sysdoc["D4"], "config.system.D4")
    n = A[0].shape[0]
    sys = DelaySystem(
        n=n, m=D2.shape[0], l=Cmeas.shape[0], q=D1.shape[1],
        delays=delays, A=A, C=C, Ahat=Ahat, Chat=Chat, Cmeas=Cmeas,
        D1=D1, D2=D2, D3=D3, D4=D4,
    )
    errs = validate(sys, spec)
    if errs:
        raise ConfigError([f"config.system: {e}" for e in errs])
    return sys, spec


def build_run(doc: dict) -> SimpleNamespace:
    """Materialize a validated config into model objects and settings."""
    sys, spec = _build_system(doc)
    try:
        eda = build_eda(spec, sys.delays)
    except (ValueError, RuntimeError) as exc:
        raise ConfigError(f"config.basis: {exc}") from exc

    sup = doc.get("supply", {})
    try:
        supply = preset_supply(
            sup.get("preset", "l2gain"), m=sys.m, q=sys.q,
            gamma=sup.get("gamma"),
            J1=np.array(sup["J1"], dtype=float) if "J1" in sup else None,
        )
    except ValueError as exc:
        raise ConfigError(f"config.supply: {exc}") from exc

    syn = doc.get("synthesis", {})
    synthesis = SimpleNamespace(
        alpha=np.array(syn["alpha"], dtype=float)
        if syn.get("alpha") is not None else None,
        rho1=syn.get("rho1", 0.01),
        rho2=syn.get("rho2", 0.01),
        eps=syn.get("eps", 1e-3),
        max_loops=syn.get("max_loops", 50),
        gamma_weight=syn.get("gamma_weight", 1.0),
        delay_free=syn.get("delay_free_estimator", False),
        solver_tol=syn.get("solver_tol", 1e-8),
    )

    spe = doc.get("spectral", {})
    try:
        spectral = SpectralConfig(N=spe.get("N", 40),
                                  eig_count=spe.get("eig_count", 8))
    except ValueError as exc:
        raise ConfigError(f"config.spectral: {exc}") from exc

    out = doc.get("output", {})
    return SimpleNamespace(
        sys=sys, spec=spec, eda=eda, supply=supply, synthesis=synthesis,
        simdoc=doc.get("simulation", {}), spectral=spectral,
        outdir=Path(out.get("directory", "out")),
        formats=set(out.get("formats", ["json", "csv", "gp"])),
        seed=doc.get("seed", 0), doc=doc,
    )


def _build_sim_config(run) -> tuple:
    """(SimConfig | None, hooks); None signals an empty horizon."""
    d = run.simdoc
    sys = run.sys
    hooks = None
    if "hooks" in d:
        if (sys.n, sys.l) != (2, 1):
            raise ConfigError(
                "config.simulation.hooks: the example_B hook expects the "
                "two-state single-measurement benchmark layout")
        hooks = example_B_hooks(d["hooks"].get("alpha", 0.5))

    dist = DisturbanceSpec.none()
    dd = d.get("disturbance")
    if dd is not None and dd["kind"] == "windowed_sine":
        try:
            dist = DisturbanceSpec.windowed_sine(
                amplitude=dd.get("amplitude", 1.0),
                omega=dd.get("omega", 20.0 * np.pi),
                t_on=dd.get("t_on", 0.0),
                t_off=dd.get("t_off", 3.0),
            )
        except ValueError as exc:
            raise ConfigError(f"config.simulation.disturbance: {exc}") from exc

    def ic(key):
        if key not in d:
            return None
        v = np.array(d[key], dtype=float)
        if v.shape != (sys.n,):
            raise ConfigError(
                f"config.simulation.{key}: length {v.size}, expected {sys.n}")
        return v

    if d.get("T", 20.0) == 0.0:
        return None, hooks
    try:
        cfg = SimConfig(
            h=d.get("h", 0.002), T=d.get("T", 20.0), N_dd=d.get("N_dd", 200),
            disturbance=dist, plant_ic=ic("plant_ic"),
            estimator_ic=ic("estimator_ic"),
            estimator_noise_mode=d.get("estimator_noise_mode", "injected"),
            hooks_enabled=d.get("hooks_enabled", True),
            route=d.get("route", "coupled"),
        )
    except ValueError as exc:
        raise ConfigError(f"config.simulation: {exc}") from exc
    return cfg, hooks


def _load_gains(path, run) -> EstimatorGains:
    try:
        doc = json.loads(Path(path).read_text())
        gains = EstimatorGains.from_doc(doc)
    except (OSError, json.JSONDecodeError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: not a readable gains document: {exc}") from exc
    sys = run.sys
    shapes = [(f"L[{i}]", g, (sys.n, sys.l)) for i, g in enumerate(gains.L)]
    shapes += [(f"Lz[{i}]", g, (sys.m, sys.l)) for i, g in enumerate(gains.Lz)]
    shapes += [(f"Lhat[{i}]", g, (sys.n, k * sys.l))
               for i, (g, k) in enumerate(zip(gains.Lhat, run.eda.dims.kappa_i))]
    shapes += [(f"Lzhat[{i}]", g, (sys.m, k * sys.l))
               for i, (g, k) in enumerate(zip(gains.Lzhat, run.eda.dims.kappa_i))]
    bad = [f"{name} has shape {g.shape}, expected {want}"
           for name, g, want in shapes if g.shape != want]
    if len(gains.L) != sys.nu + 1 or len(gains.Lhat) != sys.nu:
        bad.append(f"{len(gains.L)} pointwise / {len(gains.Lhat)} distributed "
                   f"gain blocks for nu = {sys.nu}")
    if bad:
        raise ConfigError([f"{path}: {b}" for b in bad])
    return gains


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(
        json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _write_trajectory_csv(path: Path, sys, traj) -> None:
    if traj is None:
        path.write_text(",".join(series_names(sys.n, sys.m, sys.q)) + "\n")
    else:
        write_csv(traj, path)


def _plot_script(csv_name: str, title: str, ylabel: str, png: str,
                 series: list) -> str:
    plots = ", \\\n     ".join(
        f"'{csv_name}' using 1:{col} with lines title '{name}'"
        for name, col in series)
    return (
        "set datafile separator \",\"\n"
        "set key autotitle columnhead\n"
        "set key outside\n"
        f"set title '{title}'\n"
        "set xlabel 't'\n"
        f"set ylabel '{ylabel}'\n"
        "set grid\n"
        "set terminal pngcairo size 960,600\n"
        f"set output '{png}'\n"
        f"plot {plots}\n"
    )


def _write_plot_scripts(outdir: Path, sys) -> list:
    names = series_names(sys.n, sys.m, sys.q)
    col = {name: i + 1 for i, name in enumerate(names)}

    def series(*prefixes):
        out = []
        for p in prefixes:
            out += [(nm, c) for nm, c in col.items()
                    if nm.startswith(p) and nm[len(p):].isdigit()]
            if p in col:
                out.append((p, col[p]))
        return out

    figures = {
        "states.gp": ("state and estimate trajectories", "x",
                      "states.png", series("x", "xhat")),
        "error.gp": ("estimation error", "e", "error.png", series("e")),
        "outputs.gp": ("performance output and estimate", "z",
                       "outputs.png", series("z", "zhat")),
        "error_output.gp": ("output estimation error", "zeta",
                            "error_output.png", series("zeta")),
    }
    written = []
    for fname, (title, ylabel, png, ser) in figures.items():
        (outdir / fname).write_text(
            _plot_script("trajectory.csv", title, ylabel, png, ser))
        written.append(fname)
    return written


def _echo_errors(exc: ConfigError) -> None:
    for msg in exc.messages:
        click.echo(msg, err=True)


@click.group()
def main():
    """Estimator synthesis for time-delay systems: solve, simulate, inspect."""


@main.command("synth")
@click.argument("config_path", metavar="CONFIG")
@click.option("--theorem", type=click.Choice(["1", "2"]), default="2",
              help="2 synthesizes gains (default); 1 solves the analysis "
                   "program with zero gains as a no-correction baseline.")
@click.option("--refine", is_flag=True,
              help="Run the iterative refinement after the one-shot solve.")
def cmd_synth(config_path, theorem, refine):
    """Solve the synthesis problem and write gains/certificate/report."""
    try:
        run = build_run(load_config(config_path))
        if refine and theorem == "1":
            raise ConfigError("--refine requires --theorem 2")
    except ConfigError as exc:
        _echo_errors(exc)
        raise SystemExit(1)

    syn = run.synthesis
    try:
        if theorem == "2":
            res = synth_theorem2(
                run.sys, run.eda, run.supply, alpha=syn.alpha,
                delay_free=syn.delay_free, solver_tol=syn.solver_tol)
        else:
            kappa_i = list(run.eda.dims.kappa_i)
            res = analyze_gains(
                run.sys, run.eda, run.supply,
                EstimatorGains.zeros(run.sys, kappa_i),
                delay_free=syn.delay_free, solver_tol=syn.solver_tol)
        if refine:
            res = refine_algorithm1(
                run.sys, run.eda, run.supply, res,
                rho1=syn.rho1, rho2=syn.rho2, eps=syn.eps,
                max_loops=syn.max_loops, gamma_weight=syn.gamma_weight,
                delay_free=syn.delay_free, solver_tol=syn.solver_tol)
    except SynthesisError as exc:
        click.echo(f"synthesis failed: {exc}", err=True)
        status = (exc.diagnostics or {}).get("status")
        raise SystemExit(2 if status == "infeasible" else 3)
    except ValueError as exc:
        click.echo(f"config.synthesis: {exc}", err=True)
        raise SystemExit(1)

    run.outdir.mkdir(parents=True, exist_ok=True)
    _write_json(run.outdir / "gains.json", res.gains.to_doc())
    cert = res.certificate
    _write_json(run.outdir / "certificate.json", {
        "gamma": res.gamma,
        "P1": cert.P1, "P2": cert.P2, "P3": cert.P3,
        "Q": list(cert.Q), "R": list(cert.R),
        "margins": res.margins,
    })
    _write_json(run.outdir / "report.json", {
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "seed": run.seed,
        "config": run.doc,
        **res.report(),
    })
    if res.warning:
        click.echo(f"warning: {res.warning}")
    gamma = "n/a" if res.gamma is None else f"{res.gamma:.6f}"
    click.echo(f"mode = {res.mode}  gamma = {gamma}")
    click.echo(f"artifacts in {run.outdir}")
    raise SystemExit(0)


@main.command("simulate")
@click.argument("config_path", metavar="CONFIG")
@click.argument("gains_path", metavar="GAINS")
def cmd_simulate(config_path, gains_path):
    """Integrate the plant/estimator pair and write CSV + plot scripts."""
    try:
        run = build_run(load_config(config_path))
        gains = _load_gains(gains_path, run)
        cfg, hooks = _build_sim_config(run)
    except ConfigError as exc:
        _echo_errors(exc)
        raise SystemExit(1)

    run.outdir.mkdir(parents=True, exist_ok=True)
    traj = None
    if cfg is not None:
        traj = simulate(run.sys, run.spec, gains, hooks, cfg)
    if "csv" in run.formats:
        _write_trajectory_csv(run.outdir / "trajectory.csv", run.sys, traj)
    if "gp" in run.formats:
        _write_plot_scripts(run.outdir, run.sys)
    if traj is None:
        click.echo("empty horizon: wrote header-only trajectory.csv")
    else:
        if traj.diverged_at is not None:
            click.echo(f"note: trajectory diverged at t = {traj.diverged_at:g}")
        click.echo(
            f"T = {traj.t[-1]:g}  final |e| = {np.linalg.norm(traj.e[-1]):.3e}")
    click.echo(f"artifacts in {run.outdir}")
    raise SystemExit(0)


@main.command("spectrum")
@click.argument("config_path", metavar="CONFIG")
@click.argument("gains_path", metavar="GAINS", required=False)
@click.option("--open-loop", is_flag=True,
              help="Use zero gains (the uncorrected error dynamics).")
@click.option("--fail-if-unstable", is_flag=True,
              help="Exit 2 when the abscissa is nonnegative.")
def cmd_spectrum(config_path, gains_path, open_loop, fail_if_unstable):
    """Report the spectral abscissa of the error dynamics."""
    try:
        run = build_run(load_config(config_path))
        if open_loop:
            gains = EstimatorGains.zeros(run.sys, list(run.eda.dims.kappa_i))
        elif gains_path is not None:
            gains = _load_gains(gains_path, run)
        else:
            raise ConfigError("provide a gains file or --open-loop")
    except ConfigError as exc:
        _echo_errors(exc)
        raise SystemExit(1)

    try:
        res = spectral_abscissa(
            error_dynamics_model(run.sys, run.spec, gains), run.spectral)
    except RuntimeError as exc:
        click.echo(f"spectral analysis failed: {exc}", err=True)
        raise SystemExit(3)

    click.echo(f"abscissa = {res.abscissa:.10f}")
    for z in res.eigenvalues:
        click.echo(f"  {z.real:+.10f} {z.imag:+.10f}i")
    if "csv" in run.formats:
        run.outdir.mkdir(parents=True, exist_ok=True)
        (run.outdir / "eigs.csv").write_text(res.csv())
        click.echo(f"eigenvalues in {run.outdir / 'eigs.csv'}")
    if fail_if_unstable and res.abscissa >= 0:
        raise SystemExit(2)
    raise SystemExit(0)


if __name__ == "__main__":
    main()
