"""Command-line entry point: ``conflict-dyn COMMAND [key=value ...] [flags]``.

Configuration is a flat ``key=value`` file (``--config``) merged with
``key=value`` arguments and the common flags; later sources win.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .equilibria import find_equilibria
from .errors import (
    ConfigError,
    ConflictDynError,
    InfeasibleError,
    NumericalError,
    SynthesisError,
)
from .integrator import SimOptions, simulate
from .model import Constant, Heaviside, SingularFeedback, StructParams
from .optimal import OptOptions, hamiltonian, minimize_time, verify_pontryagin
from .separatrix import SepOptions, trace_gamma
from .sweep import basin_grid, basin_svg, curves_svg, format_float, sweep, write_csv
from .synth import DEFAULT_A_GRID, find_constant_winner, synth_heaviside
from .victory import constrained_bound, eps_upper, in_victory_set, victory_boundary

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_SYNTHESIS = 4
EXIT_NUMERIC = 5

_SIM_KEYS = {"tmax": 1000.0, "rel_tol": 1e-10, "abs_tol": 1e-10}
_GRID_KEYS = {"nx": 101, "ny": 101}
_INT_KEYS = {"nx", "ny", "n_nodes", "coarse_nodes", "substeps", "n"}
_STR_KEYS = {"strategy", "svg"}
_LIST_KEYS = {"values"}

# command -> (required keys, optional keys with defaults)
SCHEMA = {
    "simulate": (
        ("c", "rho", "u0", "v0"),
        {"strategy": "constant", "a": None, "a_before": None, "a_after": None, "t_switch": None,
         "m": None, "M": None, **_SIM_KEYS},
    ),
    "basin": (
        ("a", "c", "rho"),
        {**_GRID_KEYS, "u_min": 0.0, "u_max": 1.0, "v_min": 0.0, "v_max": 1.0, "svg": None,
         "curve_tol": 1e-4, "near_band": 0.01, **_SIM_KEYS},
    ),
    "sweep-c": (("a", "rho", "values"), {"nx": 61, "ny": 61, "probe_u": None, "probe_v": None, **_SIM_KEYS}),
    "sweep-rho": (("a", "c", "values"), {"nx": 61, "ny": 61, "probe_u": None, "probe_v": None, **_SIM_KEYS}),
    "sweep-a": (("c", "rho", "values"), {"nx": 61, "ny": 61, "probe_u": None, "probe_v": None, **_SIM_KEYS}),
    "equilibria": (("a", "c", "rho"), {}),
    "separatrix": (("a", "c", "rho"), {"svg": None}),
    "victory": (("c", "rho"), {"m": None, "M": None, "eps": None, "u0": None, "v0": None, "n": 201, "svg": None}),
    "synth": (("c", "rho", "u0", "v0"), {"M_floor": 2.0}),
    "optimize": (
        ("c", "rho", "u0", "v0", "m", "M"),
        {"n_nodes": 128, "coarse_nodes": 64, "substeps": 8, **_SIM_KEYS},
    ),
}


# ---------------------------------------------------------------------------
# configuration


def parse_config_text(text):
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _convert(key, raw):
    if raw is None or not isinstance(raw, str):
        return raw
    try:
        if key in _STR_KEYS:
            return raw
        if key in _LIST_KEYS:
            return [float(x) for x in raw.split(",") if x.strip()]
        if key in _INT_KEYS:
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"key {key!r}: cannot parse {raw!r}") from None


def resolve_config(command, raw: dict):
    """Validate keys for ``command`` and fill defaults.

    Raises
    ------
    ConfigError
        On an unknown command, unknown key, missing required key or bad value.
    """
    if command not in SCHEMA:
        raise ConfigError(f"unknown command {command!r}")
    required, optional = SCHEMA[command]
    allowed = set(required) | set(optional)
    for k in raw:
        if k not in allowed:
            raise ConfigError(f"unknown key {k!r} for {command}")
    for k in required:
        if k not in raw:
            raise ConfigError(f"missing required key {k!r}")
    cfg = dict(optional)
    cfg.update(raw)
    return {k: _convert(k, v) for k, v in cfg.items()}


def _need(cfg, *keys):
    for k in keys:
        if cfg.get(k) is None:
            raise ConfigError(f"missing required key {k!r}")
    return [cfg[k] for k in keys]


def _sim(cfg):
    return SimOptions(t_max=cfg["tmax"], rel_tol=cfg["rel_tol"], abs_tol=cfg["abs_tol"],
                      event_tol=min(1e-10, cfg["abs_tol"]))


def _params(cfg):
    return StructParams(cfg["c"], cfg["rho"])


def _write_text(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _fmt(x):
    return format_float(float(x))


# ---------------------------------------------------------------------------
# commands


def _strategy(cfg):
    kind = cfg["strategy"]
    if kind == "constant":
        (a,) = _need(cfg, "a")
        return Constant(a)
    if kind == "heaviside":
        return Heaviside(*_need(cfg, "a_before", "a_after", "t_switch"))
    if kind == "feedback":
        return SingularFeedback(*_need(cfg, "m", "M"))
    raise ConfigError(f"key 'strategy': unknown kind {kind!r}")


def outcome_summary(out):
    """One-line summary of a simulation outcome."""
    lab = out.label
    if lab == "extinction":
        return f"extinction T_s={_fmt(out.T_s)} u_final={_fmt(out.u_final)}"
    if lab == "converged-to-sink":
        return f"converged-to-sink t_enter={_fmt(out.t_enter)}"
    if lab == "undecided":
        return f"undecided t_max={_fmt(out.t_max)}"
    return lab


def cmd_simulate(cfg, out, stdout):
    p = _params(cfg)
    traj, res = simulate((cfg["u0"], cfg["v0"]), _strategy(cfg), p, _sim(cfg))
    if out:
        write_csv(out, ["t", "u", "v", "a"], zip(traj.times, traj.u, traj.v, traj.controls))
    print(outcome_summary(res), file=stdout)


def cmd_basin(cfg, out, stdout):
    p = _params(cfg)
    g = basin_grid(
        cfg["a"], p, cfg["nx"], cfg["ny"], (cfg["u_min"], cfg["u_max"]), (cfg["v_min"], cfg["v_max"]),
        sim=_sim(cfg), sep=SepOptions(curve_tol=cfg["curve_tol"]), near_band=cfg["near_band"],
    )
    if out:
        write_csv(out, ["i", "j", "u", "v", "cell"], g.rows())
    if cfg["svg"]:
        _write_text(cfg["svg"], basin_svg(g))
    fr = " ".join(f"{k}={_fmt(g.fraction(k))}" for k in ("E", "B", "M", "U"))
    print(f"basin {g.shape[1]}x{g.shape[0]} {fr} fallback={'true' if g.fallback else 'false'}", file=stdout)


def _cmd_sweep(name, cfg, out, stdout):
    base = {k: cfg.get(k) for k in ("a", "c", "rho") if k != name}
    vals = cfg["values"]
    probe = None
    if cfg["probe_u"] is not None or cfg["probe_v"] is not None:
        probe = tuple(_need(cfg, "probe_u", "probe_v"))
    rows = sweep(name, vals, base, cfg["nx"], cfg["ny"], sim=_sim(cfg), probe=probe)
    header = [name, "e_area", "m_area", "undecided", "gained", "lost", "gamma0_area", "line_area", "probe", "fallback"]
    table = [
        (r.value, r.e_area, r.m_area, r.undecided, r.gained, r.lost, r.gamma0_area, r.line_area, r.probe, r.fallback)
        for r in rows
    ]
    if out:
        write_csv(out, header, table)
    for r in rows:
        line = f"{name}={_fmt(r.value)} e_area={_fmt(r.e_area)} gained={_fmt(r.gained)} lost={_fmt(r.lost)}"
        if r.probe:
            line += f" probe={r.probe}"
        print(line, file=stdout)


def cmd_equilibria(cfg, out, stdout):
    p = _params(cfg)
    eqs = find_equilibria(cfg["a"], p)
    rows = []
    for e in eqs:
        l1, l2 = e.eigenvalues
        rows.append((e.location.u, e.location.v, e.klass.value, l1.real, l1.imag, l2.real, l2.imag))
        print(
            f"({_fmt(e.location.u)}, {_fmt(e.location.v)}) {e.klass.value} "
            f"eig=({_fmt(l1.real)}, {_fmt(l2.real)})",
            file=stdout,
        )
    if out:
        write_csv(out, ["u", "v", "class", "eig1_re", "eig1_im", "eig2_re", "eig2_im"], rows)


def cmd_separatrix(cfg, out, stdout):
    p = _params(cfg)
    cur = trace_gamma(cfg["a"], p)
    if out:
        write_csv(out, ["u", "v"], zip(cur.u_samples, cur.v_samples))
    if cfg["svg"]:
        _write_text(cfg["svg"], curves_svg([(cur.u_samples, cur.v_samples, "#e03030")], f"wall a={_fmt(cfg['a'])}"))
    print(f"separatrix {cur.regime.value} endpoint=({_fmt(cur.u_M)}, {_fmt(cur.v_M)}) samples={len(cur.u_samples)}",
          file=stdout)


def cmd_victory(cfg, out, stdout):
    p = _params(cfg)
    vb = victory_boundary(p)
    u, v = vb.polyline(cfg["n"])
    header = ["u", "boundary"]
    cols = [u, v]
    curves = [(u, v, "#7b3fa0")]
    if cfg["M"] is not None:
        m = cfg["m"] if cfg["m"] is not None else 0.0
        eps = cfg["eps"] if cfg["eps"] is not None else 0.5 * eps_upper(cfg["M"], p.c)
        bound = constrained_bound(p, m, cfg["M"], eps)
        bv = bound(u)
        header.append("constrained_bound")
        cols.append(bv)
        curves.append((u, bv, "#2060c0"))
    if out:
        write_csv(out, header, zip(*cols))
    if cfg["svg"]:
        _write_text(cfg["svg"], curves_svg(curves, f"victory c={_fmt(p.c)} rho={_fmt(p.rho)}"))
    pieces = ",".join(f"{pc.tag.value}[{_fmt(pc.lo)},{_fmt(pc.hi)}]" for pc in vb.pieces)
    print(f"victory {vb.regime.value} pieces={pieces}", file=stdout)
    if cfg["u0"] is not None or cfg["v0"] is not None:
        s0 = tuple(_need(cfg, "u0", "v0"))
        print(f"in_victory_set={'true' if in_victory_set(s0, p) else 'false'}", file=stdout)


def strategy_json(strat):
    if isinstance(strat, Constant):
        return json.dumps({"kind": "constant", "a": strat.a})
    if isinstance(strat, Heaviside):
        return json.dumps(
            {"kind": "heaviside", "a_before": strat.a_before, "a_after": strat.a_after, "t_switch": strat.t_switch}
        )
    return json.dumps({"kind": type(strat).__name__})


def cmd_synth(cfg, out, stdout):
    p = _params(cfg)
    s0 = (cfg["u0"], cfg["v0"])
    if not in_victory_set(s0, p):
        print("not in victory set: no strategy wins from this start", file=stdout)
        return
    found = find_constant_winner(s0, p, DEFAULT_A_GRID)
    if found is not None:
        res = found[1]
    else:
        try:
            res = synth_heaviside(s0, p, M_floor=cfg["M_floor"])
        except ConflictDynError as exc:
            diag = getattr(exc, "diagnostics", {})
            raise SynthesisError(f"no constant winner and {exc}", diag) from None
        if not res.verified:
            raise SynthesisError("constructed strategy failed verification", {"strategy": strategy_json(res.strategy)})
    print(strategy_json(res.strategy), file=stdout)
    print(f"verified={'true' if res.verified else 'false'} T_s={_fmt(res.T_s)}", file=stdout)
    if out:
        w = res.witness
        write_csv(out, ["t", "u", "v", "a"], zip(w.times, w.u, w.v, w.controls))


def cmd_optimize(cfg, out, stdout):
    p = _params(cfg)
    m, M = cfg["m"], cfg["M"]
    opts = OptOptions(
        n_nodes=cfg["n_nodes"],
        coarse_nodes=cfg["coarse_nodes"] or None,
        substeps=cfg["substeps"],
        sim=_sim(cfg),
    )
    res = minimize_time((cfg["u0"], cfg["v0"]), p, m, M, opts)
    rep = verify_pontryagin(res, p, m, M)
    tr, adj = res.trajectory, res.adjoint
    with np.errstate(divide="ignore", invalid="ignore"):
        u, v = tr.u, tr.v
        a_s = np.where(
            u > 0, (1 - u - v) * (u * (2 * p.c + 1 - p.rho * p.c) + p.rho * p.c) / (2 * p.c * u * (p.c + 1)), np.nan
        )
    phi = p.c * adj.p_u + adj.p_v
    H = hamiltonian(tr, adj, p)
    if out:
        write_csv(out, ["t", "u", "v", "a", "a_s", "phi", "H"], zip(tr.times, u, v, tr.controls, a_s, phi, H))
    tol = 0.05 * (M - m) if M > m else 0.0
    arcs = ",".join(f"{a.label.value}[{_fmt(a.t_start)},{_fmt(a.t_end)}]" for a in res.arcs)
    print(
        f"T={_fmt(res.T)} H_residual={_fmt(rep.max_abs_H)} sign_consistency={_fmt(rep.sign_consistency)} "
        f"singular_window={_fmt(res.longest_singular_window(tol) if tol > 0 else 0.0)} "
        f"converged={'true' if res.converged else 'false'}",
        file=stdout,
    )
    print(f"arcs={arcs}", file=stdout)


COMMANDS = {
    "simulate": cmd_simulate,
    "basin": cmd_basin,
    "sweep-c": lambda cfg, out, so: _cmd_sweep("c", cfg, out, so),
    "sweep-rho": lambda cfg, out, so: _cmd_sweep("rho", cfg, out, so),
    "sweep-a": lambda cfg, out, so: _cmd_sweep("a", cfg, out, so),
    "equilibria": cmd_equilibria,
    "separatrix": cmd_separatrix,
    "victory": cmd_victory,
    "synth": cmd_synth,
    "optimize": cmd_optimize,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="conflict-dyn", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("overrides", nargs="*", metavar="key=value", help="configuration overrides")
    ap.add_argument("--config", help="key=value configuration file")
    ap.add_argument("--out", help="CSV output path")
    ap.add_argument("--seed", type=int, default=0, help="seed recorded for reproducibility")
    ap.add_argument("--grid", help="grid size NX,NY")
    ap.add_argument("--tmax", type=float, help="simulation horizon")
    return ap


def _merge(ns):
    raw = {}
    if ns.config:
        with open(ns.config) as fh:
            raw.update(parse_config_text(fh.read()))
    raw.update(parse_config_text("\n".join(ns.overrides)))
    if ns.grid:
        parts = ns.grid.split(",")
        if len(parts) != 2:
            raise ConfigError(f"--grid expects NX,NY, got {ns.grid!r}")
        raw["nx"], raw["ny"] = parts[0].strip(), parts[1].strip()
    if ns.tmax is not None:
        raw["tmax"] = str(ns.tmax)
    return raw


def main(argv=None, stdout=None, stderr=None):
    """Run one command; returns the process exit code."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    ap = build_parser()
    try:
        ns = ap.parse_intermixed_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(ns.command, _merge(ns))
        COMMANDS[ns.command](cfg, ns.out, stdout)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=stderr)
        return EXIT_INFEASIBLE
    except SynthesisError as exc:
        print(f"synthesis failed: {exc}", file=stderr)
        for k, v in exc.diagnostics.items():
            print(f"  {k}: {v}", file=stderr)
        return EXIT_SYNTHESIS
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=stderr)
        return EXIT_NUMERIC
    except (ConflictDynError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
