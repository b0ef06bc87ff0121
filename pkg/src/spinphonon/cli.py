"""Command-line entry point.

Configuration is an INI file with one section per module.  Values are
layered: built-in defaults, then figure presets, then ``--config``, then
``--set section.key=value`` flags.  Every CSV or JSON output is written
next to a ``<name>.manifest.json`` describing how it was produced.

Exit codes: 0 success, 2 configuration error, 3 capacity guard,
4 numerical failure.
"""

import argparse
import ast
import configparser
import csv
import json
import math
import operator
import os
import sys
import time
import warnings
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from . import annealing, classical, couplings, expparams, lattice, quantum
from .errors import ConfigError, SpinPhononError

OUT_DIR_ENV = "SPINPHONON_OUT_DIR"
DEFAULT_OUT_DIR = "spinphonon-out"

# None marks a key that has no default and must be supplied.
DEFAULTS = {
    "chain": {
        "N": None,
        "t_C": None,
        "delta_target": "1.0",
        "g": "1.0",
        "dk_d0": "0.0",
        "hopping_model": "PBC_DIPOLAR",
        "hopping_prefactor": "0.5",
        "pbc_images": "true",
    },
    "couplings": {"provenance": "EXACT_MODE_SUM", "j0": "4", "t_C_values": "0.1, 1, 5"},
    "classical": {
        "window": "1e-3",
        "threshold": "",
        "t_C_values": "",
        "t_C_min": "0.3",
        "t_C_max": "0.8",
        "t_C_step": "0.02",
    },
    "anneal": {
        "omega_x0": "5.0",
        "omega_z0": "",
        "tau_ev": "100.0",
        "tau_ratio": "10.0",
        "t_final": "",
        "samples": "2000",
        "orientation": "aligned",
        "include_self": "true",
        "t_C_values": "0.1, 0.5, 0.55, 1.0",
        "tau_min": "1.0",
        "tau_max": "1000.0",
        "points_per_decade": "12",
    },
    "exact": {
        "n_max": "auto",
        "tail": "1e-3",
        "omega_x": "1.0",
        "omega_min": "0.01",
        "omega_max": "20.0",
        "points": "41",
    },
    "setup": {
        "ion": "Be9",
        "omega_x_hz": "5e6",
        "omega_z_hz": "192e3",
        "d0": "10e-6",
        "lambda_eff": "320e-9",
        "theta_deg": "0.6",
        "N": "20",
        "charge": "1",
        "g_hz": "100e3",
        "delta_hz": "",
    },
}

# Nearest-neighbour bond amplitude t_C, as in the figure reproductions.
_FIGURE_CHAIN = {"hopping_model": "OPEN_NN", "hopping_prefactor": "1.0"}

PRESETS = {
    "fig1b": {"chain": {"N": "20", "t_C": "1.0", "dk_d0": "0"},
              "couplings": {"j0": "4", "t_C_values": "0.1, 1, 5"}},
    "fig9": {"chain": dict(_FIGURE_CHAIN, N="20", t_C="0.1", dk_d0="2pi/3"),
             "anneal": {"omega_x0": "5.0", "omega_z0": "0.5", "tau_ratio": "10"}},
    "fig10": {"chain": dict(_FIGURE_CHAIN, N="20", t_C="2.0", dk_d0="0"),
              "anneal": {"omega_x0": "5.0", "omega_z0": "5.0", "tau_ev": "100.0", "tau_ratio": "8"}},
}

_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
        ast.Div: operator.truediv, ast.Pow: operator.pow, ast.USub: operator.neg, ast.UAdd: operator.pos}


def parse_number(text, key="value"):
    """Float from plain numbers or small expressions such as ``2pi/3``."""
    src = str(text).strip().replace("π", "pi")
    src = "".join(f"{c}*" if c.isdigit() and nxt == "p" else c for c, nxt in zip(src, src[1:] + " "))

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ValueError
    try:
        return float(ev(ast.parse(src, mode="eval")))
    except (SyntaxError, ValueError, ZeroDivisionError, TypeError):
        raise ConfigError(f"{key}: cannot parse number {text!r}") from None


def parse_list(text, key="value"):
    return [parse_number(t, key) for t in str(text).replace(";", ",").split(",") if t.strip()]


def parse_bool(text, key="value"):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


class Settings:
    """Layered configuration with typed accessors."""

    def __init__(self, layers):
        self.values = {s: dict(v) for s, v in DEFAULTS.items()}
        for layer in layers:
            for section, items in layer.items():
                if section not in self.values:
                    raise ConfigError(f"unknown config section [{section}]")
                for key, val in items.items():
                    if key not in self.values[section]:
                        raise ConfigError(f"unknown config key {section}.{key}")
                    self.values[section][key] = val

    def raw(self, section, key):
        val = self.values[section][key]
        if val is None:
            raise ConfigError(f"missing required config key {section}.{key}")
        return val

    def num(self, section, key):
        return parse_number(self.raw(section, key), f"{section}.{key}")

    def opt_num(self, section, key):
        val = self.raw(section, key)
        return None if str(val).strip() == "" else parse_number(val, f"{section}.{key}")

    def int(self, section, key):
        x = self.num(section, key)
        if x != int(x):
            raise ConfigError(f"{section}.{key} must be an integer, got {x!r}")
        return int(x)

    def list(self, section, key):
        return parse_list(self.raw(section, key), f"{section}.{key}")

    def bool(self, section, key):
        return parse_bool(self.raw(section, key), f"{section}.{key}")

    def snapshot(self):
        return {s: {k: v for k, v in items.items()} for s, items in self.values.items()}


def read_config(path):
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    return {s: dict(parser.items(s)) for s in parser.sections()}


def parse_overrides(items):
    layer = {}
    for item in items or []:
        key, sep, val = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot or not name:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        layer.setdefault(section, {})[name] = val.strip()
    return layer


def chain_config(st):
    return lattice.ChainConfig(
        N=st.int("chain", "N"),
        t_C=st.num("chain", "t_C"),
        delta_target=st.num("chain", "delta_target"),
        g=st.num("chain", "g"),
        dk_d0=st.num("chain", "dk_d0") % (2 * math.pi),
        hopping_model=st.raw("chain", "hopping_model").strip().upper(),
        hopping_prefactor=st.num("chain", "hopping_prefactor"),
        pbc_images=st.bool("chain", "pbc_images"),
    )


def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


class Run:
    """Collects outputs of one invocation and writes their manifests."""

    def __init__(self, args, settings, out_dir):
        self.args, self.settings, self.out_dir = args, settings, Path(out_dir)
        self.started = time.perf_counter()
        self.outputs = []
        self.extra = {}

    def _manifest(self, path, error=None):
        try:
            tool_version = version("artifact")
        except PackageNotFoundError:
            tool_version = "unknown"
        return {
            "subcommand": self.args.command,
            "preset": getattr(self.args, "preset", None),
            "config": self.settings.snapshot() if self.settings else None,
            "seed": self.args.seed,
            "jobs": self.args.jobs,
            "tool_version": tool_version,
            "output": str(path) if path else None,
            "outputs": [str(p) for p in self.outputs],
            "wall_clock_s": time.perf_counter() - self.started,
            "extra": self.extra,
            "error": error,
        }

    def _write_manifest(self, path, error=None):
        target = Path(f"{path}.manifest.json")
        target.write_text(json.dumps(self._manifest(path, error), indent=2, default=fmt) + "\n")

    def csv(self, name, header, rows):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([fmt(v) for v in row])
        self.outputs.append(path)
        self._write_manifest(path)
        return path

    def json(self, name, payload):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        path.write_text(json.dumps(payload, indent=2, default=fmt) + "\n")
        self.outputs.append(path)
        self._write_manifest(path)
        return path

    def fail(self, exc):
        error = {"type": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code}
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            self._write_manifest(self.out_dir / f"{self.args.command}-error", error)
        except OSError:
            pass


def cmd_modes(run, st):
    cfg = chain_config(st)
    m = lattice.chain_modes(cfg)
    header = ["n", "delta_n"] + [f"{p}_M_{j}" for j in range(cfg.N) for p in ("re", "im")]
    M = np.asarray(m.wavefunctions, dtype=complex)
    rows = ([n, m.frequencies[n]] + [v for j in range(cfg.N) for v in (M[j, n].real, M[j, n].imag)]
            for n in range(cfg.N))
    run.extra["zigzag_index"] = m.zigzag_index
    run.extra["delta_x"] = lattice.delta_x_from_target(cfg)
    run.csv("modes.csv", header, rows)


def _comparison_rows(cfg, j0):
    exact = couplings.exact_couplings(lattice.chain_modes(cfg), cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        analytic = couplings.analytic_couplings(cfg)
    cmp = couplings.compare_couplings(exact, analytic, j0)
    return exact, analytic, cmp, [str(w.message) for w in caught]


def cmd_couplings(run, st):
    cfg = chain_config(st)
    j0 = st.int("couplings", "j0")
    exact, analytic, cmp, notes = _comparison_rows(cfg, j0)
    chosen = analytic if couplings.Provenance(st.raw("couplings", "provenance").strip().upper()) \
        is couplings.Provenance.ANALYTIC else exact
    N = cfg.N
    run.extra.update(provenance=chosen.provenance.value, model_mismatch=cmp.meta["model_mismatch"], warnings=notes)
    if analytic.constants is not None:
        run.extra["analytic_constants"] = vars(analytic.constants)
    run.csv("couplings_matrix.csv", ["j", "l", "J"],
            ([j, l, chosen.J[j, l]] for j in range(N) for l in range(N)))
    run.csv("couplings_comparison.csv", ["separation", "site", "J_exact", "J_analytic", "rel_err"],
            zip(cmp.separation, cmp.site, cmp.j_exact, cmp.j_analytic, cmp.rel_err))


def _overlap_cols():
    return [f"overlap_{p.value}" for p in classical.Pattern]


def cmd_ground_state(run, st):
    cfg = chain_config(st)
    J = couplings.couplings_for(cfg, st.raw("couplings", "provenance").strip().upper()).J
    rep = classical.exact_ground_state(J, cfg.dk_d0, window=st.num("classical", "window"),
                                       threshold=st.opt_num("classical", "threshold"))
    g = rep.ground
    run.extra["diagonal_constant"] = float(np.trace(J))
    run.csv("ground_state.csv",
            ["configuration", "energy", "degeneracy_count", "window", "phase_label"] + _overlap_cols(),
            [[g.label(), g.energy, rep.degeneracy_count, rep.window, rep.phase_label.value]
             + [g.overlaps[p.value] for p in classical.Pattern]])


def _scan_grid(st):
    values = st.raw("classical", "t_C_values")
    if str(values).strip():
        return st.list("classical", "t_C_values")
    lo, hi, step = st.num("classical", "t_C_min"), st.num("classical", "t_C_max"), st.num("classical", "t_C_step")
    if step <= 0 or hi < lo:
        raise ConfigError("classical scan needs t_C_step > 0 and t_C_max >= t_C_min")
    return list(np.round(lo + step * np.arange(int(round((hi - lo) / step)) + 1), 12))


def cmd_frustration_scan(run, st):
    cfg = chain_config(st)
    rows = classical.frustration_scan(cfg, _scan_grid(st), window=st.num("classical", "window"),
                                      threshold=st.opt_num("classical", "threshold"),
                                      provenance=st.raw("couplings", "provenance").strip().upper())
    run.csv("frustration_scan.csv",
            ["t_C", "energy", "degeneracy_count", "phase_label", "configuration"] + _overlap_cols(),
            ([r.t_C, r.energy, r.degeneracy_count, r.phase_label.value, r.configuration]
             + [r.overlaps[p.value] for p in classical.Pattern] for r in rows))


def _schedule(st, g0, tau=None):
    tau = st.num("anneal", "tau_ev") if tau is None else tau
    return annealing.AnnealSchedule(tau_ev=tau, omega_x0=st.num("anneal", "omega_x0"),
                                    omega_z0=st.opt_num("anneal", "omega_z0"), g0=g0,
                                    tau_ev_prime=tau / st.num("anneal", "tau_ratio"),
                                    t_final=st.opt_num("anneal", "t_final"))


def _integrate_kw(st):
    return {"orientation": st.raw("anneal", "orientation").strip().lower(),
            "include_self": st.bool("anneal", "include_self"),
            "samples": st.int("anneal", "samples")}


def _trajectory(run, st, name):
    cfg = chain_config(st)
    J = couplings.couplings_for(cfg).J
    exact = classical.exact_ground_state(J, cfg.dk_d0).ground
    sched = _schedule(st, cfg.g)
    traj = annealing.integrate_anneal(cfg, sched, J, **_integrate_kw(st))
    F = traj.fidelity_trace(exact)
    ox, oz, w = annealing.schedule_values(traj.times, sched)
    adia = annealing.adiabaticity_check(traj, lattice.chain_modes(cfg))
    run.extra.update(final_fidelity=float(F[-1]), norm_drift=traj.norm_drift(), steps=traj.steps,
                     exact_configuration=exact.label(), adiabaticity=vars(adia) | {"violated": adia.violated})
    N = cfg.N
    header = ["t", "omega_x", "omega_z", "g2_weight"] + [f"{c}_{j}" for j in range(N) for c in "xyz"] + ["F"]
    rows = ([traj.times[k], ox[k], oz[k], w[k]] + traj.bloch[k].reshape(-1).tolist() + [F[k]]
            for k in range(traj.times.size))
    run.csv(name, header, rows)


def cmd_anneal(run, st):
    _trajectory(run, st, "anneal_trajectory.csv")


def _tau_grid(st):
    lo, hi = st.num("anneal", "tau_min"), st.num("anneal", "tau_max")
    ppd = st.int("anneal", "points_per_decade")
    if not 0 < lo < hi or ppd < 1:
        raise ConfigError("anneal sweep needs 0 < tau_min < tau_max and points_per_decade >= 1")
    n = int(round(np.log10(hi / lo) * ppd)) + 1
    return np.logspace(np.log10(lo), np.log10(hi), n)


def _sweep(run, st, name):
    cfg = chain_config(st)
    sched = _schedule(st, cfg.g, tau=1.0)
    rows = annealing.anneal_sweep(cfg, st.list("anneal", "t_C_values"), _tau_grid(st),
                                  omega_x0=sched.omega_x0, omega_z0=sched.omega_z0,
                                  tau_ratio=st.num("anneal", "tau_ratio"), jobs=run.args.jobs,
                                  **_integrate_kw(st))
    run.extra["max_norm_drift"] = max(r.norm_drift for r in rows)
    run.csv(name, ["t_C", "tau_ev", "F_final", "norm_drift"],
            ([r.t_C, r.tau_ev, r.fidelity, r.norm_drift] for r in rows))


def cmd_anneal_sweep(run, st):
    _sweep(run, st, "anneal_sweep.csv")


def _hilbert(st, cfg):
    if st.raw("exact", "n_max").strip().lower() == "auto":
        cut = quantum.poisson_cutoffs(lattice.chain_modes(cfg), cfg.g, cfg.dk_d0, st.num("exact", "tail"))
        return quantum.TruncatedHilbert(cfg.N, cut)
    n_max = st.list("exact", "n_max")
    if any(x != int(x) or x < 1 for x in n_max):
        raise ConfigError(f"exact.n_max must be 'auto' or positive integers, got {n_max!r}")
    n_max = [int(x) for x in n_max]
    return quantum.TruncatedHilbert(cfg.N, n_max[0] if len(n_max) == 1 else n_max)


def cmd_exact(run, st):
    cfg = chain_config(st)
    hs = _hilbert(st, cfg)
    omega_x = st.num("exact", "omega_x")
    H = quantum.build_hamiltonian(cfg, hs, omega_x)
    gs = quantum.parity_ground_state(H, hs, seed=run.args.seed)
    obs = quantum.observables(gs.state, hs, energy=gs.energy)
    payload = {"omega_x": omega_x, "parity": gs.parity, "dimension": hs.dimension,
               "n_max": list(hs.n_max), **obs.as_dict(),
               "critical_field_estimate": quantum.critical_field_estimate(obs.mean_phonons, cfg)}
    run.json("exact.json", payload)


def cmd_exact_sweep(run, st):
    cfg = chain_config(st)
    hs = _hilbert(st, cfg)
    unit = cfg.g**2 / cfg.delta_target
    grid = np.logspace(np.log10(st.num("exact", "omega_min")), np.log10(st.num("exact", "omega_max")),
                       st.int("exact", "points")) * unit
    sw = quantum.omega_x_sweep(cfg, hs, grid, seed=run.args.seed)
    run.extra.update(crossover=sw.crossover, critical_field_estimate=sw.critical_estimate)
    run.csv("exact_sweep.csv", ["omega_x", "energy", "oaf", "mean_phonons", "max_abs_sigma_z", "parity"],
            zip(sw.omega_x, sw.energy, sw.oaf, sw.mean_phonons, sw.max_abs_sigma_z, sw.parity))


def physical_setup(st):
    two_pi = 2 * math.pi
    ion = st.raw("setup", "ion").strip()
    try:
        ion = float(ion)
    except ValueError:
        pass
    g = st.opt_num("setup", "g_hz")
    return expparams.PhysicalSetup(
        ion=ion, omega_x=two_pi * st.num("setup", "omega_x_hz"), omega_z=two_pi * st.num("setup", "omega_z_hz"),
        d0=st.num("setup", "d0"), lambda_eff=st.num("setup", "lambda_eff"),
        theta=math.radians(st.num("setup", "theta_deg")), N=st.int("setup", "N"),
        charge=st.int("setup", "charge"), g=None if g is None else two_pi * g)


def cmd_params(run, st):
    setup = physical_setup(st)
    delta = st.opt_num("setup", "delta_hz")
    payload = expparams.report(setup, None if delta is None else 2 * math.pi * delta)
    if delta is not None:
        cfg = expparams.to_chain_config(setup, 2 * math.pi * delta)
        payload["chain_config"] = {k: (v.value if hasattr(v, "value") else v) for k, v in vars(cfg).items()}
    run.json("params.json", payload)


def cmd_figure(run, st):
    preset = run.args.preset
    if preset == "fig1b":
        base = chain_config(st)
        j0 = st.int("couplings", "j0")
        for t_C in st.list("couplings", "t_C_values"):
            cfg = base.replace(t_C=t_C)
            _, _, cmp, _ = _comparison_rows(cfg, j0)
            run.csv(f"fig1b_tC{fmt(t_C)}.csv", ["separation", "J_exact", "J_analytic"],
                    zip(cmp.separation, cmp.j_exact, cmp.j_analytic))
    elif preset == "fig9":
        _sweep(run, st, "fig9.csv")
    else:
        _trajectory(run, st, "fig10.csv")


COMMANDS = {
    "modes": (cmd_modes, "normal modes: n, delta_n, re/im M_{j,n} per site j"),
    "couplings": (cmd_couplings, "coupling matrix (j, l, J) and comparison table"),
    "ground-state": (cmd_ground_state, "exact classical ground state with overlaps"),
    "frustration-scan": (cmd_frustration_scan, "t_C, energy, degeneracy_count, phase_label, configuration"),
    "anneal": (cmd_anneal, "trajectory: t, fields, x/y/z per site, F(t)"),
    "anneal-sweep": (cmd_anneal_sweep, "t_C, tau_ev, F_final, norm_drift"),
    "exact": (cmd_exact, "exact-diagonalization observables as JSON"),
    "exact-sweep": (cmd_exact_sweep, "omega_x, energy, oaf, mean_phonons, max_abs_sigma_z, parity"),
    "params": (cmd_params, "experimental parameter report as JSON"),
    "figure": (cmd_figure, "figure presets fig1b, fig9, fig10 as plot-ready CSV"),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [chain], [couplings], [classical], [anneal], [exact], [setup]")
    common.add_argument("--out-dir", help=f"output directory (default ${OUT_DIR_ENV} or ./{DEFAULT_OUT_DIR})")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config value; repeatable, applied last")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="parallel workers for sweeps")
    common.add_argument("--seed", type=int, default=0, help="seed for eigensolver start vectors")
    parser = argparse.ArgumentParser(prog="spinphonon", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, columns) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=columns, description=f"Output columns: {columns}.")
        if name == "figure":
            p.add_argument("preset", choices=sorted(PRESETS))
        if name == "couplings":
            p.add_argument("--provenance", choices=[v.value for v in couplings.Provenance])
            p.add_argument("--j0", type=int, help="reference site for the comparison table")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    out_dir = args.out_dir or os.environ.get(OUT_DIR_ENV) or DEFAULT_OUT_DIR
    run = Run(args, None, out_dir)
    try:
        layers = []
        if args.command == "figure":
            layers.append(PRESETS[args.preset])
        if args.config:
            layers.append(read_config(args.config))
        flags = {}
        if getattr(args, "provenance", None):
            flags.setdefault("couplings", {})["provenance"] = args.provenance
        if getattr(args, "j0", None) is not None:
            flags.setdefault("couplings", {})["j0"] = str(args.j0)
        layers += [flags, parse_overrides(args.overrides)]
        run.settings = Settings(layers)
        COMMANDS[args.command][0](run, run.settings)
    except SpinPhononError as exc:
        run.fail(exc)
        print(f"spinphonon {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    for path in run.outputs:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
