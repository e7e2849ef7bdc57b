"""
Command-line front end: every curve as CSV, plus the Monte Carlo campaign.

Parameters come from built-in defaults, then an optional ``key=value``
config file, then command-line flags, each layer overriding the previous
one. The resolved parameter set is echoed as ``#`` comments at the top of
every CSV so a file records how it was produced.
"""

from __future__ import annotations

import argparse
import io
import math
import sys
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import __version__
from .airlink import SystemConfig
from .estimation import estimation_variance
from .montecarlo import analytic_for, run_trials
from .quantizer import ConvergenceError, Family, agc_sweep, cached_design, normalized_mse
from .rate import CombinerKind, near_far_rate, rate_sweep

PROG = "qmimo"


def _split(text: str) -> list[str]:
    items = [s.strip() for s in text.split(",") if s.strip()]
    if not items:
        raise ValueError("empty list")
    return items


def _bits(text: str):
    return None if text.strip().lower() == "none" else int(text)


def _bits_list(text: str):
    return [_bits(s) for s in _split(text)]


def _int_list(text: str):
    return [int(s) for s in _split(text)]


def _kind_list(text: str):
    return [CombinerKind(s.lower()) for s in _split(text)]


def _mode(text: str) -> str:
    if text not in ("snr_sweep", "mu_sweep"):
        raise ValueError("mode must be snr_sweep or mu_sweep")
    return text


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return value


@dataclass(frozen=True)
class Param:
    parse: Callable[[str], object]
    default: str
    help: str


_SYSTEM = {
    "m_antennas": Param(int, "100", "base-station antennas M"),
    "k_users": Param(int, "5", "users K"),
    "l_taps": Param(int, "8", "channel taps L"),
    "mu": Param(int, "1", "pilot excess factor"),
    "kind": Param(CombinerKind, "zf", "combiner, mr or zf"),
    "family": Param(Family, "optimal", "quantizer family, optimal or uniform"),
}

COMMANDS: dict[str, dict[str, Param]] = {
    "qmse": {
        "bits": Param(_int_list, "1,2,3,4,5", "resolutions in bits"),
    },
    "agc": {
        "bits": Param(int, "4", "quantizer resolution"),
        "family": _SYSTEM["family"],
        "db_min": Param(float, "-10", "smallest AGC offset in dB"),
        "db_max": Param(float, "10", "largest AGC offset in dB"),
        "step": Param(float, "1", "AGC offset step in dB"),
    },
    "estvar": {
        "mode": Param(_mode, "snr_sweep", "snr_sweep or mu_sweep"),
        "k_users": _SYSTEM["k_users"],
        "l_taps": _SYSTEM["l_taps"],
        "bits": Param(_bits_list, "none,1,2,3", "resolutions; none means ideal ADCs"),
        "family": _SYSTEM["family"],
        "mu": Param(int, "1", "pilot excess factor for snr_sweep"),
        "snr_min": Param(float, "0", "first SNR in dB for snr_sweep"),
        "snr_max": Param(float, "15", "last SNR in dB for snr_sweep"),
        "snr_step": Param(float, "1", "SNR step in dB"),
        "mu_list": Param(_int_list, "1,2,3,4,5", "pilot excess factors for mu_sweep"),
        "snr_db": Param(float, "-10", "SNR in dB for mu_sweep"),
    },
    "rates": {
        **_SYSTEM,
        "bits": Param(_bits_list, "1,2,3,4,5,none", "resolutions; none means ideal ADCs"),
        "snr_min": Param(float, "-10", "first SNR in dB"),
        "snr_max": Param(float, "10", "last SNR in dB"),
        "snr_step": Param(float, "1", "SNR step in dB"),
    },
    "nearfar": {
        **_SYSTEM,
        "bits": Param(_bits_list, "none,1,2,3", "resolutions; none means ideal ADCs"),
        "snr_db": Param(float, "-5", "SNR of the weak users in dB"),
        "extra_min": Param(float, "0", "smallest extra power of the strong user in dB"),
        "extra_max": Param(float, "15", "largest extra power of the strong user in dB"),
        "extra_step": Param(float, "1", "extra power step in dB"),
    },
    "validate": {
        "m_antennas": Param(int, "32", "base-station antennas M"),
        "k_users": Param(int, "4", "users K"),
        "l_taps": Param(int, "16", "channel taps L"),
        "mu": _SYSTEM["mu"],
        "snr_db": Param(float, "0", "SNR of every user in dB"),
        "kinds": Param(_kind_list, "mr,zf", "combiners"),
        "bits": Param(_bits_list, "none,1,3", "resolutions; none means ideal ADCs"),
        "family": _SYSTEM["family"],
        "trials": Param(int, "400", "coherence blocks per cell"),
        "n_data": Param(int, "256", "data block length"),
        "tolerance": Param(float, "0.1", "largest relative rate error that passes"),
    },
}


class CliError(Exception):
    """Bad invocation: unknown config key, malformed value, empty grid."""


def grid(start: float, stop: float, step: float) -> np.ndarray:
    """Inclusive arithmetic grid; the last point is dropped if it overshoots."""
    if step <= 0:
        raise CliError("step must be positive")
    if stop < start:
        raise CliError(f"empty range [{start}, {stop}]")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


def read_config(path) -> dict[str, str]:
    """Parse a flat ``key=value`` file; blank lines and ``#`` lines are skipped."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise CliError(f"{path}:{lineno}: expected key=value")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def resolve(command: str, file_values: dict[str, str], flag_values: dict[str, str]):
    """Layer defaults, file and flags, then parse every value."""
    table = COMMANDS[command]
    raw = {name: p.default for name, p in table.items()}
    raw["seed"] = "0"
    for source in (file_values, flag_values):
        for key, value in source.items():
            if key != "seed" and key not in table:
                raise CliError(f"unknown parameter {key!r} for {command}")
            raw[key] = value
    params = {}
    for key, value in raw.items():
        parse = _seed if key == "seed" else table[key].parse
        try:
            params[key] = parse(value)
        except ValueError as exc:
            raise CliError(f"bad value for {key}: {value!r} ({exc})") from None
    return params


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, (CombinerKind, Family)):
        return value.value
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return "%.10g" % value
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    return str(value)


def render(command: str, params: dict, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# {PROG} {__version__}\n")
    buf.write(f"# command: {command}\n")
    for key in sorted(params):
        buf.write(f"# {key}: {_fmt(params[key])}\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def cmd_qmse(p):
    rows = [(b, fam.value, normalized_mse(b, fam))
            for fam in (Family.OPTIMAL, Family.UNIFORM) for b in p["bits"]]
    return ("bits", "family", "q_over_prx"), rows, True


def cmd_agc(p):
    spec = cached_design(p["bits"], p["family"].value)
    ref = normalized_mse(3, p["family"])
    sweep = agc_sweep(spec, grid(p["db_min"], p["db_max"], p["step"]))
    rows = [(float(db), q, ref) for db, q in sweep]
    return ("agc_db", "q_over_prx", "ref_3bit"), rows, True


def _c_db(cfg, bits, family):
    q_mse = normalized_mse(bits, family) * cfg.rx_power
    with np.errstate(divide="ignore"):
        return float(10 * np.log10(estimation_variance(cfg, q_mse)[0]))


def cmd_estvar(p):
    k, l = p["k_users"], p["l_taps"]
    rows = []
    if p["mode"] == "snr_sweep":
        xs = grid(p["snr_min"], p["snr_max"], p["snr_step"])
        for bits in p["bits"]:
            for snr in xs:
                cfg = SystemConfig.uniform(1, k, l, float(snr), p["mu"])
                rows.append((bits, float(snr), _c_db(cfg, bits, p["family"])))
        return ("bits", "snr_db", "c_db"), rows, True
    for bits in p["bits"]:
        for mu in p["mu_list"]:
            cfg = SystemConfig.uniform(1, k, l, p["snr_db"], mu)
            rows.append((bits, mu, _c_db(cfg, bits, p["family"])))
    return ("bits", "mu", "c_db"), rows, True


def _template(p, snr_db=0.0):
    return SystemConfig.uniform(p["m_antennas"], p["k_users"], p["l_taps"], snr_db, p["mu"])


def cmd_rates(p):
    snrs = grid(p["snr_min"], p["snr_max"], p["snr_step"])
    rows = rate_sweep(_template(p), p["kind"], p["bits"], snrs, p["family"])
    return ("bits", "snr_db", "rate"), rows, True


def cmd_nearfar(p):
    cfg = _template(p, p["snr_db"])
    extras = grid(p["extra_min"], p["extra_max"], p["extra_step"])
    rows = []
    for bits in p["bits"]:
        base = float(near_far_rate(cfg, p["kind"], bits, 0.0, p["family"]).rate[0])
        for extra in extras:
            r = float(near_far_rate(cfg, p["kind"], bits, float(extra), p["family"]).rate[0])
            rows.append((bits, float(extra), r, 1 - r / base))
    return ("bits", "extra_db", "weak_rate", "degradation"), rows, True


def cmd_validate(p):
    cfg = SystemConfig.uniform(p["m_antennas"], p["k_users"], p["l_taps"], p["snr_db"],
                               p["mu"], n_data=p["n_data"])
    rows, ok = [], True
    for kind in p["kinds"]:
        for bits in p["bits"]:
            sim = run_trials(cfg, kind, bits, p["trials"], p["seed"], family=p["family"])
            analytic = float(np.mean(analytic_for(cfg, kind, bits, p["family"]).rate))
            empirical = float(np.mean(sim.rate))
            # users treated as independent for the pooled standard error
            se = float(np.sqrt(np.sum(sim.rate_se ** 2)) / cfg.k_users)
            rel = empirical / analytic - 1
            passed = abs(rel) <= p["tolerance"]
            ok &= passed
            rows.append((kind, bits, analytic, empirical, se, rel, sim.rejected,
                         "pass" if passed else "fail"))
    columns = ("kind", "bits", "analytic_rate", "empirical_rate", "empirical_se",
               "relative_error", "rejected", "verdict")
    return columns, rows, ok


HANDLERS = {
    "qmse": cmd_qmse,
    "agc": cmd_agc,
    "estvar": cmd_estvar,
    "rates": cmd_rates,
    "nearfar": cmd_nearfar,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", default=argparse.SUPPRESS, help="RNG seed (default 0)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output CSV path (default stdout)")
    common.add_argument("--config", default=argparse.SUPPRESS, help="key=value parameter file")

    parser = argparse.ArgumentParser(prog=PROG, parents=[common], description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"{PROG} {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, table in COMMANDS.items():
        sp = sub.add_parser(name, parents=[common], help=HANDLERS[name].__name__.removeprefix("cmd_"))
        for key, param in table.items():
            sp.add_argument("--" + key.replace("_", "-"), dest=key, default=argparse.SUPPRESS,
                            help=f"{param.help} (default {param.default})")
    return parser


def run(argv=None) -> tuple[str, bool, str | None]:
    """Execute one invocation; returns the CSV text, the verdict and the output path."""
    ns = vars(build_parser().parse_args(argv))
    command = ns.pop("command")
    out = ns.pop("out", None)
    config = ns.pop("config", None)
    file_values = read_config(config) if config else {}
    params = resolve(command, file_values, ns)
    columns, rows, ok = HANDLERS[command](params)
    return render(command, params, columns, rows), ok, out


def main(argv=None) -> int:
    try:
        text, ok, out = run(argv)
    except (CliError, ValueError, ConvergenceError, OSError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if not ok:
        print(f"{PROG}: validation failed, see the verdict column", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
