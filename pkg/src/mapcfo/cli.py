"""Command-line front end.

Subcommands
-----------
gen-pilot      write a pilot matrix as a row,col,re,im CSV
bounds         tabulate beta / CRLB / BCRLB across an SNR grid
simulate snr   Monte-Carlo MSE-vs-SNR sweep
simulate range Monte-Carlo acquisition-range sweep
simulate track Monte-Carlo packet-to-packet tracking run
estimate       single-frame frequency + channel estimate (debugging aid)

Every command writes a JSON manifest next to its primary output, and
``mapcfo --from-manifest PATH`` replays the recorded configuration
bit-exactly. Flags override ``--config`` file entries (flat
``key = value`` lines), which override built-in defaults; the
``MAPCFO_SEED`` environment variable supplies the default seed. Report
commands also render a PNG figure next to the CSV unless ``--no-plot``.

Grid syntax: ``start:stop:step`` includes start and excludes stop;
comma lists and single values are also accepted.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys

from . import __version__
from .bounds import beta_iid, make_bounds
from .estimators import build_workspace, estimate_frame, grid_search_oracle
from .pilots import read_complex_csv, write_complex_csv
from .simulation import (
    PilotSpec,
    SweepConfig,
    TrackingConfig,
    run_acquisition_sweep,
    run_mse_vs_snr,
    run_tracking,
    snr_db_to_power,
    tracking_stationary_variance,
    write_sweep_csv,
)
from .types import CfoPrior, ChannelPrior, ConfigError, Frame, MimoConfig, NumericalError

SEED_ENV_VAR = "MAPCFO_SEED"


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _parse_grid(text: str) -> list:
    """``start:stop:step`` (stop exclusive), comma list, or single value."""
    text = str(text).strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"bad grid {text!r}: expected start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0 or stop <= start:
            raise ConfigError(f"bad grid {text!r}: need step > 0 and stop > start")
        count = int(math.ceil((stop - start) / step - 1e-12))
        return [start + i * step for i in range(count)]
    return [float(p) for p in text.split(",") if p.strip()]


def _parse_variance(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise ConfigError(f"variance must be positive (or inf), got {text!r}")
    return value


def _parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_modes(text) -> tuple:
    if isinstance(text, (list, tuple)):
        modes = tuple(text)
    else:
        modes = tuple(p.strip().lower() for p in str(text).split(",") if p.strip())
    for mode in modes:
        if mode not in ("map", "ml"):
            raise ConfigError(f"unknown estimator mode {mode!r}")
    return modes


def _choice(options):
    def convert(text):
        value = str(text).strip().lower()
        if value not in options:
            raise ConfigError(f"expected one of {options}, got {text!r}")
        return value

    return convert


def _load_config_file(path: str) -> dict:
    values = {}
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, value = line.split("=", 1)
                values[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return values


def _resolve(ns: argparse.Namespace, spec: dict) -> dict:
    """Layer defaults < config file < command-line flags, then convert."""
    file_cfg = {}
    if getattr(ns, "config", None):
        file_cfg = _load_config_file(ns.config)
    resolved = {}
    for key, (convert, default) in spec.items():
        raw = getattr(ns, key, None)
        if raw is None and key in file_cfg:
            raw = file_cfg[key]
        if raw is None and key == "seed":
            raw = os.environ.get(SEED_ENV_VAR)
        if raw is None:
            resolved[key] = default
        else:
            resolved[key] = convert(raw)
    return resolved


def _pilot_spec_from(cfg: dict) -> PilotSpec:
    layout = cfg["pilot"]
    l_t = cfg["lt"]
    scrambling = cfg.get("scrambling", "none")
    if layout == "combined":
        head, tail = cfg.get("head"), cfg.get("tail")
        if head is None or tail is None:
            raise ConfigError("combined layout needs --head and --tail symbol counts")
        if head % l_t or tail % l_t:
            raise ConfigError("head and tail symbol counts must be multiples of --lt")
        return PilotSpec("combined", l_t, head_m=head // l_t, tail_m=tail // l_t,
                         scrambling=scrambling)
    m, n = cfg.get("m"), cfg.get("n")
    if m is None and n is None:
        raise ConfigError(f"{layout} layout needs --m or --n")
    if m is not None and n is not None and n != m * l_t:
        raise ConfigError(f"inconsistent --m {m} and --n {n} for lt={l_t}")
    if m is None:
        if n % l_t:
            raise ConfigError(f"n={n} is not a multiple of l_t={l_t}")
        m = n // l_t
    return PilotSpec(layout, l_t, m=m, scrambling=scrambling)


def _write_manifest(command: str, cfg: dict, outputs: list, derived=None) -> str:
    path = str(outputs[0]) + ".manifest.json"
    payload = {
        "command": command,
        "artifact_version": __version__,
        "master_seed": cfg.get("seed"),
        "config": cfg,
        "outputs": [str(p) for p in outputs],
    }
    if derived:
        payload["derived"] = derived
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


# Per-command configuration schemas: key -> (converter, default).

GEN_PILOT_SPEC = {
    "pilot": (_choice(("periodic", "td", "combined")), "periodic"),
    "lt": (int, 2),
    "m": (int, None),
    "n": (int, None),
    "head": (int, None),
    "tail": (int, None),
    "power": (float, 1.0),
    "scrambling": (_choice(("none", "zc")), "none"),
    "out": (str, "pilot.csv"),
    "seed": (int, 0),
}

BOUNDS_SPEC = {
    "pilot": (_choice(("periodic", "td", "combined")), "periodic"),
    "lt": (int, 2),
    "lr": (int, 2),
    "m": (int, None),
    "n": (int, 16),
    "head": (int, None),
    "tail": (int, None),
    "scrambling": (_choice(("none", "zc")), "none"),
    "sigma_h2": (float, 1.0),
    "snr_db": (_parse_grid, [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]),
    "cfo_var": (_parse_variance, 1e-5),
    "out": (str, "bounds.csv"),
    "no_plot": (_parse_bool, False),
    "seed": (int, 0),
}

SIM_COMMON = {
    "pilot": (_choice(("periodic", "td", "combined")), "periodic"),
    "lt": (int, 2),
    "lr": (int, 2),
    "m": (int, None),
    "n": (int, 16),
    "head": (int, None),
    "tail": (int, None),
    "scrambling": (_choice(("none", "zc")), "none"),
    "sigma_h2": (float, 1.0),
    "cfo_mean": (float, 0.01),
    "cfo_var": (_parse_variance, 1e-5),
    "trials": (int, 10000),
    "seed": (int, 0),
    "threads": (int, os.cpu_count() or 1),
    "no_plot": (_parse_bool, False),
}

SIM_SNR_SPEC = dict(
    SIM_COMMON,
    snr_db=(_parse_grid, [-5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]),
    modes=(_parse_modes, ("map", "ml")),
    out=(str, "sweep_snr.csv"),
)

SIM_RANGE_SPEC = dict(
    SIM_COMMON,
    snr_db=(float, 20.0),
    cfo=(_parse_grid, None),
    modes=(_parse_modes, ("ml",)),
    out=(str, "sweep_range.csv"),
)

SIM_TRACK_SPEC = dict(
    SIM_COMMON,
    snr_db=(float, 10.0),
    ar_rho=(float, 0.9),
    ar_mean=(float, 0.1),
    ar_noise_var=(float, 1e-8),
    frames=(int, 100),
    runs=(int, 500),
    out=(str, "sweep_track.csv"),
)

ESTIMATE_SPEC = {
    "frame": (str, None),
    "pilot_csv": (str, None),
    "pilot": (_choice(("periodic", "td", "combined")), "periodic"),
    "lt": (int, 2),
    "m": (int, None),
    "n": (int, None),
    "head": (int, None),
    "tail": (int, None),
    "power": (float, 1.0),
    "scrambling": (_choice(("none", "zc")), "none"),
    "sigma_h2": (float, 1.0),
    "cfo_mean": (float, 0.0),
    "cfo_var": (_parse_variance, 1e-5),
    "mode": (_choice(("map", "ml")), "map"),
    "oracle": (_parse_bool, False),
    "oracle_step": (float, 1e-5),
    "out": (str, None),
    "seed": (int, 0),
}


def _channel_prior(cfg: dict, l_r: int, l_t: int) -> ChannelPrior:
    return ChannelPrior.iid(cfg["sigma_h2"], l_r, l_t)


def _cfo_prior(cfg: dict) -> CfoPrior:
    return CfoPrior.from_variance(cfg["cfo_mean"], cfg["cfo_var"])


def _maybe_plot(cfg, render, outputs) -> None:
    if cfg.get("no_plot"):
        return
    png = os.path.splitext(str(cfg["out"]))[0] + ".png"
    render(png)
    outputs.append(png)


def execute_gen_pilot(cfg: dict) -> list:
    pilot = _pilot_spec_from(cfg).build(cfg["power"])
    write_complex_csv(pilot.entries, cfg["out"])
    outputs = [cfg["out"]]
    _write_manifest("gen-pilot", cfg, outputs)
    return outputs


def execute_bounds(cfg: dict) -> list:
    spec = _pilot_spec_from(cfg)
    rows = []
    for snr in cfg["snr_db"]:
        rho = snr_db_to_power(snr, cfg["sigma_h2"])
        pilot = spec.build(rho)
        beta = beta_iid(pilot, cfg["sigma_h2"], cfg["lr"])
        snapshot = {
            "n": spec.n,
            "l_t": spec.l_t,
            "l_r": cfg["lr"],
            "rho": rho,
            "sigma_h2": cfg["sigma_h2"],
            "cfo_mean": cfg.get("cfo_mean", 0.0),
            "cfo_var": cfg["cfo_var"],
        }
        result = make_bounds(
            beta, _cfo_prior_from_var(cfg), pilot_kind=spec.layout, inputs=snapshot
        )
        rows.append(
            {
                "pilot_kind": spec.layout,
                "n": spec.n,
                "lt": spec.l_t,
                "lr": cfg["lr"],
                "snr_db": snr,
                "beta": result.beta,
                "crlb": result.crlb,
                "bcrlb": result.bcrlb,
            }
        )
    table = ["pilot_kind,n,lt,lr,snr_db,beta,crlb,bcrlb"]
    for row in rows:
        table.append(
            f"{row['pilot_kind']},{row['n']},{row['lt']},{row['lr']},"
            f"{_fmt(row['snr_db'])},{_fmt(row['beta'])},{_fmt(row['crlb'])},"
            f"{_fmt(row['bcrlb'])}"
        )
    print("\n".join(table))
    with open(cfg["out"], "w", newline="") as fh:
        fh.write("\n".join(table) + "\n")
    outputs = [cfg["out"]]

    def render(png):
        from .plotting import plot_bounds

        plot_bounds(rows, png, title="frequency-estimation error bounds")

    _maybe_plot(cfg, render, outputs)
    _write_manifest("bounds", cfg, outputs)
    return outputs


def _cfo_prior_from_var(cfg: dict) -> CfoPrior:
    mean = cfg.get("cfo_mean", 0.0)
    return CfoPrior.from_variance(mean, cfg["cfo_var"])


def _sweep_config_snr(cfg: dict) -> SweepConfig:
    spec = _pilot_spec_from(cfg)
    mimo = MimoConfig(spec.l_t, cfg["lr"], spec.n)
    return SweepConfig(
        mimo=mimo,
        pilot=spec,
        channel_prior=_channel_prior(cfg, cfg["lr"], spec.l_t),
        cfo_prior=_cfo_prior(cfg),
        trials=cfg["trials"],
        seed=cfg["seed"],
        modes=cfg["modes"],
        snr_db=tuple(cfg["snr_db"]),
    )


def execute_simulate_snr(cfg: dict) -> list:
    result = run_mse_vs_snr(_sweep_config_snr(cfg), workers=cfg["threads"])
    write_sweep_csv(result, cfg["out"])
    outputs = [cfg["out"]]

    def render(png):
        from .plotting import plot_sweep

        plot_sweep(result, png, title="frequency MSE vs SNR")

    _maybe_plot(cfg, render, outputs)
    _write_manifest("simulate-snr", cfg, outputs)
    return outputs


def execute_simulate_range(cfg: dict) -> list:
    if not cfg.get("cfo"):
        raise ConfigError("simulate range needs --cfo with the true-offset grid")
    spec = _pilot_spec_from(cfg)
    mimo = MimoConfig(spec.l_t, cfg["lr"], spec.n)
    sweep = SweepConfig(
        mimo=mimo,
        pilot=spec,
        channel_prior=_channel_prior(cfg, cfg["lr"], spec.l_t),
        cfo_prior=_cfo_prior(cfg),
        trials=cfg["trials"],
        seed=cfg["seed"],
        modes=cfg["modes"],
        true_cfo=tuple(cfg["cfo"]),
        fixed_snr_db=cfg["snr_db"],
    )
    result = run_acquisition_sweep(sweep, workers=cfg["threads"])
    write_sweep_csv(result, cfg["out"])
    outputs = [cfg["out"]]

    def render(png):
        from .plotting import plot_sweep

        plot_sweep(result, png, title=f"acquisition range at {cfg['snr_db']:g} dB")

    _maybe_plot(cfg, render, outputs)
    _write_manifest("simulate-range", cfg, outputs)
    return outputs


def execute_simulate_track(cfg: dict) -> list:
    spec = _pilot_spec_from(cfg)
    mimo = MimoConfig(spec.l_t, cfg["lr"], spec.n)
    track = TrackingConfig(
        mimo=mimo,
        pilot=spec,
        channel_prior=_channel_prior(cfg, cfg["lr"], spec.l_t),
        snr_db=cfg["snr_db"],
        ar_rho=cfg["ar_rho"],
        ar_mean=cfg["ar_mean"],
        ar_noise_var=cfg["ar_noise_var"],
        frames=cfg["frames"],
        runs=cfg["runs"],
        seed=cfg["seed"],
    )
    result = run_tracking(track, workers=cfg["threads"])
    write_sweep_csv(result, cfg["out"])
    outputs = [cfg["out"]]

    pilot = spec.build(snr_db_to_power(cfg["snr_db"], cfg["sigma_h2"]))
    beta = beta_iid(pilot, cfg["sigma_h2"], cfg["lr"])
    stationary_var = tracking_stationary_variance(beta, cfg["ar_rho"], cfg["ar_noise_var"])
    derived = {
        "beta": beta,
        "crlb": (1.0 / beta) if beta else float("inf"),
        "idealized_stationary_bcrlb": (
            1.0 / (beta + 1.0 / cfg["ar_noise_var"]) if cfg["ar_noise_var"] > 0 else 0.0
        ),
        "recursion_fixed_point_variance": stationary_var,
        "recursion_fixed_point_bcrlb": (
            1.0 / (beta + 1.0 / stationary_var) if stationary_var > 0 else 0.0
        ),
    }

    def render(png):
        from .plotting import plot_sweep

        plot_sweep(result, png, title="tracking MSE per frame")

    _maybe_plot(cfg, render, outputs)
    _write_manifest("simulate-track", cfg, outputs, derived=derived)
    return outputs


def execute_estimate(cfg: dict) -> list:
    if not cfg.get("frame"):
        raise ConfigError("estimate needs --frame pointing at a row,col,re,im CSV")
    samples = read_complex_csv(cfg["frame"])
    if cfg.get("pilot_csv"):
        from .pilots import custom_pilot

        pilot = custom_pilot(read_complex_csv(cfg["pilot_csv"]))
    else:
        spec_cfg = dict(cfg)
        if spec_cfg.get("m") is None and spec_cfg.get("n") is None:
            spec_cfg["n"] = samples.shape[0]
        pilot = _pilot_spec_from(spec_cfg).build(cfg["power"])
    if samples.shape[0] != pilot.n:
        raise ConfigError(
            f"frame has {samples.shape[0]} rows but the pilot has {pilot.n} symbols"
        )
    l_r = samples.shape[1]
    frame = Frame(samples, MimoConfig(pilot.l_t, l_r, pilot.n))
    channel_prior = _channel_prior(cfg, l_r, pilot.l_t)
    cfo_prior = _cfo_prior(cfg)
    if cfg["mode"] == "ml":
        cfo_prior = CfoPrior.flat(cfo_prior.mean)
    cfo, chan = estimate_frame(frame, pilot, channel_prior, cfo_prior)
    lines = [("f_hat", cfo.value, 0.0), ("mode", cfo.mode, None)]
    if cfg["oracle"]:
        ws = build_workspace(pilot, channel_prior)
        oracle = grid_search_oracle(frame, ws, cfo_prior, step=cfg["oracle_step"])
        lines.append(("f_oracle", oracle.value, 0.0))
        lines.append(("oracle_gap", abs(cfo.value - oracle.value), 0.0))
    for i, coeff in enumerate(chan.coefficients):
        lines.append((f"h_hat_{i}", coeff.real, coeff.imag))
    for name, value, imag in lines:
        if imag is None:
            print(f"{name} = {value}")
        elif imag == 0.0:
            print(f"{name} = {_fmt(value)}")
        else:
            print(f"{name} = {_fmt(value)} {'+' if imag >= 0 else '-'} {_fmt(abs(imag))}j")
    outputs = []
    if cfg.get("out"):
        with open(cfg["out"], "w", newline="") as fh:
            fh.write("name,re,im\n")
            for name, value, imag in lines:
                if imag is None:
                    fh.write(f"{name},{value},\n")
                else:
                    fh.write(f"{name},{_fmt(value)},{_fmt(imag)}\n")
        outputs.append(cfg["out"])
    manifest_base = outputs[0] if outputs else cfg["frame"] + ".estimate"
    _write_manifest("estimate", cfg, outputs or [manifest_base])
    return outputs


EXECUTORS = {
    "gen-pilot": execute_gen_pilot,
    "bounds": execute_bounds,
    "simulate-snr": execute_simulate_snr,
    "simulate-range": execute_simulate_range,
    "simulate-track": execute_simulate_track,
    "estimate": execute_estimate,
}

COMMAND_SPECS = {
    "gen-pilot": GEN_PILOT_SPEC,
    "bounds": BOUNDS_SPEC,
    "simulate-snr": SIM_SNR_SPEC,
    "simulate-range": SIM_RANGE_SPEC,
    "simulate-track": SIM_TRACK_SPEC,
    "estimate": ESTIMATE_SPEC,
}


def _add_spec_args(parser: argparse.ArgumentParser, spec: dict) -> None:
    # accept values like "-0.6:0.6:0.01" without forcing the --flag= form
    if hasattr(parser, "_negative_number_matcher"):
        parser._negative_number_matcher = re.compile(r"^-(\d|\.\d)")
    parser.add_argument("--config", default=None, help="flat key=value config file")
    for key in spec:
        flag = "--" + key.replace("_", "-")
        if key in ("no_plot", "oracle"):
            parser.add_argument(flag, action="store_const", const=True, default=None)
        elif key == "pilot":
            parser.add_argument(flag, "--layout", dest="pilot", default=None,
                                metavar="LAYOUT")
        else:
            parser.add_argument(flag, default=None, metavar=key.upper())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mapcfo",
        description="MAP frequency-offset and MIMO channel estimation toolkit",
    )
    parser.add_argument("--version", action="version", version=f"mapcfo {__version__}")
    parser.add_argument(
        "--from-manifest",
        default=None,
        metavar="PATH",
        help="replay a previously written run manifest bit-exactly",
    )
    sub = parser.add_subparsers(dest="command")

    _add_spec_args(sub.add_parser("gen-pilot", help="write a pilot matrix CSV"), GEN_PILOT_SPEC)
    _add_spec_args(sub.add_parser("bounds", help="tabulate error bounds"), BOUNDS_SPEC)

    simulate = sub.add_parser("simulate", help="Monte-Carlo experiments")
    sim_sub = simulate.add_subparsers(dest="variant")
    _add_spec_args(sim_sub.add_parser("snr", help="MSE vs SNR sweep"), SIM_SNR_SPEC)
    _add_spec_args(sim_sub.add_parser("range", help="acquisition-range sweep"), SIM_RANGE_SPEC)
    _add_spec_args(sim_sub.add_parser("track", help="AR(1) tracking run"), SIM_TRACK_SPEC)

    _add_spec_args(sub.add_parser("estimate", help="single-frame estimate"), ESTIMATE_SPEC)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        if ns.from_manifest:
            with open(ns.from_manifest) as fh:
                manifest = json.load(fh)
            command = manifest.get("command")
            if command not in EXECUTORS:
                raise ConfigError(f"manifest names unknown command {command!r}")
            EXECUTORS[command](manifest["config"])
            return 0
        command = ns.command
        if command == "simulate":
            variant = getattr(ns, "variant", None)
            if variant is None:
                raise ConfigError("simulate needs a variant: snr, range, or track")
            command = f"simulate-{variant}"
        if command is None:
            parser.print_help()
            return 2
        cfg = _resolve(ns, COMMAND_SPECS[command])
        EXECUTORS[command](cfg)
        return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
