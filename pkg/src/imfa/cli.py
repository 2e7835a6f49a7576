"""Command-line front end: ``imfa <command> [flags]``.

Every command writes CSV (or JSON for ``wef``) to ``--out`` or stdout.
When ``--out`` is given, a ``<out>.manifest.json`` sidecar records the
resolved configuration; passing that file back through ``--config``
reproduces the result byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (capacity_mc, exit_curve, exit_trajectory, spc_ber_bound, turbo_ber_bound,
                       uncoded_union_bound)
from .channel import build_correlation, snr_db_to_noise_var
from .conv import build_rsc, compute_iowef, compute_wef
from .im import ImConfig
from .simulation import ExperimentConfig, run_experiment
from .turbo import Interleaver, TurboCode, turbo_cwef


class ConfigError(ValueError):
    pass


# config key -> flag, for diagnostics
FLAGS = {
    "scheme": "--scheme", "n_ports": "--ports", "mod_order": "--mod", "fa_size": "--fa-size",
    "snr": "--snr", "snr_grid_db": "--snr", "seed": "--seed", "max_trials": "--trials",
    "min_errors": "--min-errors", "workers": "--workers", "generators": "--gen",
    "block_len": "--interleaver", "n_iters": "--iters", "terms": "--terms", "w_max": "--w-max",
    "z_max": "--z-max", "samples": "--samples", "blocks": "--blocks", "grid_points": "--grid-points",
    "d_max": "--d-max",
}

DEFAULTS = {
    "ber-sim": dict(scheme="uncoded", n_ports=None, mod_order=None, fa_size=None, snr=None, seed=0,
                    max_trials=10**6, min_errors=100, workers=1, generators=None, block_len=1024,
                    n_iters=15),
    "ber-bound": dict(scheme="uncoded", n_ports=None, mod_order=None, fa_size=None, snr=None,
                      generators=None, block_len=1024, terms=10, w_max=8, z_max=30),
    "capacity": dict(n_ports=None, mod_order=None, fa_size=None, snr=None, seed=0, samples=10_000),
    "exit-chart": dict(n_ports=None, mod_order=None, fa_size=None, snr=None, seed=0, generators=None,
                       block_len=4096, n_iters=15, blocks=1, grid_points=11),
    "wef": dict(generators=None, d_max=12, block_len=None, w_max=4, z_max=20),
}


def parse_snr_grid(text: str) -> list[float]:
    """``a:b:c`` is start:step:stop inclusive; a bare number is a single point."""
    parts = str(text).split(":")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"--snr: cannot parse {text!r}") from None
    if len(vals) == 1:
        return vals
    if len(vals) != 3:
        raise ConfigError(f"--snr: expected start:step:stop, got {text!r}")
    start, step, stop = vals
    if step <= 0 or stop < start:
        raise ConfigError(f"--snr: need step > 0 and stop >= start, got {text!r}")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 10) for i in range(n)]


def _add_common(p, *names):
    add = {
        "ports": lambda: p.add_argument("--ports", dest="n_ports", type=int),
        "mod": lambda: p.add_argument("--mod", dest="mod_order", type=int),
        "fa": lambda: p.add_argument("--fa-size", dest="fa_size", type=float),
        "snr": lambda: p.add_argument("--snr", dest="snr", help="start:step:stop in dB"),
        "seed": lambda: p.add_argument("--seed", type=int),
        "scheme": lambda: p.add_argument("--scheme", choices=["uncoded", "spc", "turbo"]),
        "gen": lambda: p.add_argument("--gen", dest="generators", help="octal list, feedback last"),
        "interleaver": lambda: p.add_argument("--interleaver", "--block-len", dest="block_len", type=int),
        "iters": lambda: p.add_argument("--iters", dest="n_iters", type=int),
    }
    for n in names:
        add[n]()
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--config", help="JSON config or run manifest; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="imfa", description="Index modulation over fluid antennas.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ber-sim", help="Monte Carlo BER curve")
    _add_common(p, "scheme", "ports", "mod", "fa", "snr", "seed", "gen", "interleaver", "iters")
    p.add_argument("--trials", dest="max_trials", type=int)
    p.add_argument("--min-errors", type=int)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("ber-bound", help="analytical BER bound")
    _add_common(p, "scheme", "ports", "mod", "fa", "snr", "gen", "interleaver")
    p.add_argument("--terms", type=int)
    p.add_argument("--w-max", type=int)
    p.add_argument("--z-max", type=int)

    p = sub.add_parser("capacity", help="discrete-input capacity")
    _add_common(p, "ports", "mod", "fa", "snr", "seed")
    p.add_argument("--samples", type=int, help="draws per hypothesis")

    p = sub.add_parser("exit-chart", help="EXIT curve and decoding trajectory")
    _add_common(p, "ports", "mod", "fa", "snr", "seed", "gen", "interleaver", "iters")
    p.add_argument("--blocks", type=int, help="blocks averaged per curve point")
    p.add_argument("--grid-points", type=int)

    p = sub.add_parser("wef", help="weight enumerator dump (JSON)")
    _add_common(p, "gen")
    p.add_argument("--d-max", type=int)
    p.add_argument("--block-len", dest="block_len", type=int, help="also dump the IOWEF at this length")
    p.add_argument("--w-max", type=int)
    p.add_argument("--z-max", type=int)
    return parser


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[command])
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"--config: {exc}") from None
        if "config" in data and "command" in data:
            if data["command"] != command:
                raise ConfigError(f"--config: manifest is for {data['command']!r}, not {command!r}")
            data = data["config"]
        unknown = set(data) - set(cfg)
        if unknown:
            raise ConfigError(f"--config: unknown field(s) {sorted(unknown)}")
        cfg.update(data)
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    for key, val in cfg.items():
        if val is None and key not in ("generators", "block_len"):
            raise ConfigError(f"{FLAGS.get(key, key)}: required")
    if isinstance(cfg.get("generators"), list):
        cfg["generators"] = ",".join(str(g) for g in cfg["generators"])
    return cfg


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17e")


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _wrap(field: str, fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except ConfigError:
        raise
    except ValueError as exc:
        msg = str(exc)
        key, sep, rest = msg.partition(":")
        if sep and key in FLAGS:
            raise ConfigError(f"{FLAGS[key]} ({key}):{rest}") from None
        raise ConfigError(f"{FLAGS.get(field, field)}: {msg}") from None


def _im(cfg):
    return _wrap("n_ports", ImConfig, cfg["n_ports"], cfg["mod_order"])


def _corr(cfg):
    return _wrap("fa_size", build_correlation, cfg["n_ports"], cfg["fa_size"])


def _code(cfg):
    if not cfg.get("generators"):
        raise ConfigError("--gen: required for this scheme")
    return _wrap("generators", build_rsc, cfg["generators"])


def cmd_ber_sim(cfg: dict) -> str:
    exp = _wrap("scheme", ExperimentConfig, scheme=cfg["scheme"], n_ports=cfg["n_ports"],
                mod_order=cfg["mod_order"], fa_size=cfg["fa_size"], snr_grid_db=parse_snr_grid(cfg["snr"]),
                max_trials=cfg["max_trials"], min_errors=cfg["min_errors"], seed=cfg["seed"],
                generators=cfg["generators"] or None, block_len=cfg["block_len"], n_iters=cfg["n_iters"])
    curve = _wrap("workers", run_experiment, exp, workers=cfg["workers"])
    rows = [(p.snr_db, p.ber, p.bit_errors, p.bits_sent, p.mc_std_error) for p in curve.points]
    return _csv(["snr_db", "ber", "bit_errors", "bits_sent", "std_error"], rows)


def cmd_ber_bound(cfg: dict) -> str:
    snr = np.array(parse_snr_grid(cfg["snr"]))
    nv = snr_db_to_noise_var(snr)
    im, corr = _im(cfg), _corr(cfg)
    scheme = cfg["scheme"]
    if scheme == "uncoded":
        bound = _wrap("n_ports", uncoded_union_bound, im, corr, nv)
    elif scheme == "spc":
        code = _code(cfg)
        if code.input_arity != im.n_bits_port - 1:
            raise ConfigError(f"--gen: SPC on {im.n_ports} ports needs a rate "
                              f"{im.n_bits_port - 1}/{im.n_bits_port} code")
        bound = _wrap("terms", spc_ber_bound, code, im, corr, nv, terms=cfg["terms"])
    else:
        code = _code(cfg)
        if code.input_arity != im.k - 2:
            raise ConfigError(f"--gen: turbo with log2(NM)={im.k} needs a rate {im.k - 2}/{im.k - 1} constituent")
        L = cfg["block_len"]
        iowef = _wrap("block_len", compute_iowef, code, L, cfg["w_max"], cfg["z_max"], terminate=False,
                      track_composition=True)
        twef = turbo_cwef(iowef, iowef, L, cfg["w_max"], cfg["z_max"])
        bound = _wrap("n_ports", turbo_ber_bound, twef, im, corr, nv, L)
    return _csv(["snr_db", "bound"], zip(snr, np.atleast_1d(bound)))


def cmd_capacity(cfg: dict) -> str:
    im, corr = _im(cfg), _corr(cfg)
    rows = []
    for i, snr in enumerate(parse_snr_grid(cfg["snr"])):
        rng = np.random.default_rng(np.random.SeedSequence([cfg["seed"], i]))
        est = _wrap("samples", capacity_mc, im, corr, float(snr_db_to_noise_var(snr)), cfg["samples"], rng)
        rows.append((snr, est.value, est.std_error))
    return _csv(["snr_db", "capacity", "std_error"], rows)


def cmd_exit(cfg: dict) -> tuple[str, str]:
    grid = parse_snr_grid(cfg["snr"])
    if len(grid) != 1:
        raise ConfigError("--snr: exit-chart takes a single SNR value")
    im, corr, code = _im(cfg), _corr(cfg), _code(cfg)
    if code.input_arity != im.k - 2:
        raise ConfigError(f"--gen: turbo with log2(NM)={im.k} needs a rate {im.k - 2}/{im.k - 1} constituent")
    if cfg["grid_points"] < 2:
        raise ConfigError("--grid-points: need at least 2")
    tc = TurboCode(code, _wrap("block_len", Interleaver.random, cfg["block_len"], cfg["seed"]))
    nv = float(snr_db_to_noise_var(grid[0]))
    i_a = np.linspace(0.0, code.input_arity, cfg["grid_points"])
    rng = np.random.default_rng(np.random.SeedSequence([cfg["seed"], 0]))
    curve = exit_curve(tc, im, corr, nv, i_a, cfg["blocks"], rng)
    rng = np.random.default_rng(np.random.SeedSequence([cfg["seed"], 1]))
    traj = exit_trajectory(tc, im, corr, nv, cfg["n_iters"], rng)
    return (_csv(["i_a", "i_e"], [(p.i_a, p.i_e) for p in curve]),
            _csv(["iteration", "decoder", "i_e"], traj))


def cmd_wef(cfg: dict) -> str:
    code = _code(cfg)
    d_free, coeffs = _wrap("d_max", compute_wef, code, cfg["d_max"])
    out = {"generators": code.octal(), "rate": list(code.rate), "states": code.n_states,
           "d_free": d_free, "wef": {str(d): a for d, a in sorted(coeffs.items())}}
    if cfg["block_len"]:
        e = _wrap("block_len", compute_iowef, code, cfg["block_len"], cfg["w_max"], cfg["z_max"])
        out["iowef"] = {"block_len": e.block_len, "terms": [
            {"w": w, "u": u, "z": z, "count": c} for (w, u, z), c in sorted(e.counts.items())]}
    return json.dumps(out, indent=2) + "\n"


COMMANDS = {"ber-sim": cmd_ber_sim, "ber-bound": cmd_ber_bound, "capacity": cmd_capacity,
            "exit-chart": cmd_exit, "wef": cmd_wef}


def _trajectory_path(out: Path) -> Path:
    return out.with_name(f"{out.stem}_trajectory{out.suffix or '.csv'}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = datetime.now(timezone.utc).isoformat()
    try:
        cfg = resolve_config(args.command, args)
        result = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"imfa {args.command}: error: {exc}", file=sys.stderr)
        return 2
    texts = result if isinstance(result, tuple) else (result,)
    if not args.out:
        for t in texts:
            sys.stdout.write(t)
        return 0
    out = Path(args.out)
    paths = [out] + ([_trajectory_path(out)] if len(texts) > 1 else [])
    for path, text in zip(paths, texts):
        _atomic_write(path, text)
    manifest = {"command": args.command, "config": cfg, "seed": cfg.get("seed"), "version": __version__,
                "started": started, "finished": datetime.now(timezone.utc).isoformat(),
                "outputs": [str(p) for p in paths]}
    _atomic_write(out.with_name(out.name + ".manifest.json"), json.dumps(manifest, indent=2) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
