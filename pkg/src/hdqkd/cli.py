"""Command-line interface: simulate | bounds | keyrate | sweep | validate."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .channel import observed_statistics, write_stats_csv
from .config import ProtocolConfig
from .decoy import estimate_bounds, write_bounds_csv
from .errors import ConfigError, EstimationAbortError, HdqkdError, \
    NumericalToleranceError
from .keyrate import key_rate, optimize_params, sweep, write_sweep_csv
from .validate import run_validation

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ABORT = 2
EXIT_NUMERICAL = 3

#: Named parameter sets mirroring the two simulation scenarios of the
#: reference figures.  The intensities, threshold and binning are values
#: tuned with this package's own optimizer, not published numbers.
PRESETS = {
    "fig2_ideal_det": {
        "source.mu0": "0.12", "source.mu1": "0.06", "source.mu2": "0.015",
        "source.mu3": "0.0001",
        "detector.eta_det": "1.0", "detector.trusted": "true",
        "channel.distance_km": "5.0", "decoding.tau": "1.8",
    },
    "fig3_72pct": {
        "source.mu0": "0.50", "source.mu1": "0.04", "source.mu2": "0.012",
        "source.mu3": "0.0001",
        "detector.eta_det": "0.72", "detector.trusted": "true",
        "channel.distance_km": "5.0", "decoding.tau": "1.62",
    },
}

_KEY_MAP = {
    "source.mu0": ("intensities", 0, float),
    "source.mu1": ("intensities", 1, float),
    "source.mu2": ("intensities", 2, float),
    "source.mu3": ("intensities", 3, float),
    "source.p_mu0": ("intensity_probs", 0, float),
    "source.p_mu1": ("intensity_probs", 1, float),
    "source.p_mu2": ("intensity_probs", 2, float),
    "source.p_mu3": ("intensity_probs", 3, float),
    "source.p_z": ("p_z", None, float),
    "detector.eta_det": ("eta_det", None, float),
    "detector.trusted": ("trusted_detector", None, "bool"),
    "channel.xi_db_per_km": ("xi_db_per_km", None, float),
    "channel.distance_km": ("distance_km", None, float),
    "decoding.tau": ("tau", None, float),
    "decoding.delta": ("delta", None, float),
    "decoding.nu_min": ("nu_min", None, int),
    "decoding.nu_max": ("nu_max", None, int),
    "cutoffs.n_max": ("n_max", None, int),
    "cutoffs.m_max": ("m_max", None, int),
    "cutoffs.n_sec": ("n_sec", None, "int_list"),
    "report.asymptotic_prefactor": ("asymptotic_prefactor", None, "bool"),
    "report.reconciliation_efficiency": ("reconciliation_efficiency", None, float),
    "numerics.quad_tol": ("quad_tol", None, float),
    "numerics.phase_tol": ("phase_tol", None, float),
    "numerics.solver_tol": ("solver_tol", None, float),
    "numerics.lp_feas_margin": ("lp_feas_margin", None, float),
}

#: Keys consumed by subcommands rather than ProtocolConfig.
_RUN_KEYS = {"sweep.distances", "sweep.reoptimize"}


def _parse_value(raw: str, kind):
    raw = raw.strip()
    if kind == "bool":
        if raw.lower() in ("true", "yes", "1"):
            return True
        if raw.lower() in ("false", "no", "0"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind == "int_list":
        return tuple(int(tok) for tok in raw.split(",") if tok.strip())
    if kind == "float_list":
        return tuple(float(tok) for tok in raw.split(",") if tok.strip())
    return kind(raw)


def parse_config_text(text: str) -> dict:
    """Parse the flat `section.key = value` format into a raw dict."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, _, value = stripped.partition("=")
        raw[key.strip()] = value.strip()
    return raw


def build_config(raw: dict) -> tuple[ProtocolConfig, dict]:
    """Turn raw dotted keys into a ProtocolConfig plus run options."""
    fields = {}
    intensities = list(ProtocolConfig.intensities)
    probs = list(ProtocolConfig.intensity_probs)
    run: dict = {}
    for key, raw_value in raw.items():
        if key in _RUN_KEYS:
            if key == "sweep.distances":
                run["distances"] = _parse_value(raw_value, "float_list")
            else:
                run["reoptimize"] = _parse_value(raw_value, "bool")
            continue
        if key not in _KEY_MAP:
            raise ConfigError(f"unknown config key: {key}")
        field, index, kind = _KEY_MAP[key]
        value = _parse_value(raw_value, kind)
        if field == "intensities":
            intensities[index] = value
        elif field == "intensity_probs":
            probs[index] = value
        else:
            fields[field] = value
    fields["intensities"] = tuple(intensities)
    fields["intensity_probs"] = tuple(probs)
    return ProtocolConfig(**fields), run


def load_config(path=None, preset=None, overrides=None) -> tuple[ProtocolConfig, dict]:
    raw = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(
                f"unknown preset {preset!r}; available: {', '.join(sorted(PRESETS))}")
        raw.update(PRESETS[preset])
    if path is not None:
        raw.update(parse_config_text(Path(path).read_text()))
    if overrides:
        raw.update(overrides)
    return build_config(raw)


_PLOT_TEMPLATE = '''#!/usr/bin/env python3
"""Standalone plot of a key-rate sweep CSV (rate, log scale, vs km)."""
import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "{csv_name}"
curves = {{}}
with open(path) as handle:
    rows = [r for r in csv.reader(handle) if r and not r[0].startswith("#")]
header = rows[0]
for row in rows[1:]:
    record = dict(zip(header, row))
    if record["abort_flag"] == "1" or not record["R_bits_per_pulse"]:
        continue
    label = f'{{record["mode"]}}/{{record["trust"]}}'
    curves.setdefault(label, []).append(
        (float(record["L_km"]), float(record["R_bits_per_pulse"])))
for label, points in sorted(curves.items()):
    points.sort()
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    plt.semilogy(xs, ys, marker="o", label=label)
plt.xlabel("distance (km)")
plt.ylabel("key rate (bits/pulse)")
plt.grid(True, which="both", alpha=0.3)
plt.legend()
plt.tight_layout()
plt.savefig("{png_name}", dpi=160)
print("wrote {png_name}")
'''


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="hdqkd", description=__doc__)
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--preset", help="named preset: " + ", ".join(sorted(PRESETS)))
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--mode", default="four-intensity",
                        choices=["four-intensity", "infinite-decoy"])
    parser.add_argument("--trust", default=None,
                        choices=["trusted", "untrusted"])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", help="write the observed-statistics CSV")
    sub.add_parser("bounds", help="write the decoy-estimation bounds CSV")
    p_key = sub.add_parser("keyrate", help="single key-rate report")
    p_key.add_argument("--optimize", action="store_true",
                       help="re-tune intensities and threshold first")
    p_sweep = sub.add_parser("sweep", help="key rate vs distance curve")
    p_sweep.add_argument("--distances",
                         help="comma-separated km list (overrides config)")
    p_sweep.add_argument("--reoptimize", action="store_true")
    p_val = sub.add_parser("validate", help="run the oracle self-checks")
    p_val.add_argument("--quick", action="store_true")
    return parser


def _cmd_simulate(cfg, run, args) -> int:
    stats = observed_statistics(cfg)
    out = Path(args.out) / "statistics.csv"
    write_stats_csv(stats, out, cfg.digest())
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_bounds(cfg, run, args) -> int:
    stats = observed_statistics(cfg)
    bounds = estimate_bounds(cfg, stats)
    out = Path(args.out) / "bounds.csv"
    write_bounds_csv(bounds, out, cfg.digest())
    print(f"wrote {out} ({bounds.n_solves} LP solves, "
          f"max gap {bounds.max_gap:.2e})")
    return EXIT_OK


def _cmd_keyrate(cfg, run, args) -> int:
    if args.optimize:
        cfg = optimize_params(cfg)
    report = key_rate(cfg, mode=args.mode, trust=args.trust)
    out = Path(args.out) / "keyrate.csv"
    write_sweep_csv([report], [cfg.distance_km], out, report.config, args.mode)
    print(f"distance {cfg.distance_km} km | mode {args.mode} | "
          f"{'trusted' if report.trusted else 'untrusted'} detector")
    print(f"gain Q = {report.gain:.6f}, QBER E = {report.qber:.6f}, "
          f"leakage = {report.leakage:.6f}")
    for term in report.terms:
        print(f"  n={term.n}: p_n={term.p_n:.4f} q_leq={term.q_leq:.4f} "
              f"pps<={term.pps[1]:.4f} v={term.v_tilde:.5f} "
              f"entropy={term.entropy:.5f} -> {term.contribution:.6f}")
    print(f"key rate R = {report.rate:.6e} bits/pulse "
          f"({report.rate * 1e9:.3e} bits/s at 1 GHz)")
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_sweep(cfg, run, args) -> int:
    if args.distances:
        distances = tuple(float(tok) for tok in args.distances.split(","))
    elif "distances" in run:
        distances = run["distances"]
    else:
        raise ConfigError("missing config key: sweep.distances")
    reoptimize = args.reoptimize or run.get("reoptimize", False)
    out = Path(args.out) / "sweep.csv"
    reports = sweep(cfg, distances, mode=args.mode, trust=args.trust,
                    reoptimize=reoptimize, csv_path=out)
    plot_path = Path(args.out) / "plot_sweep.py"
    plot_path.write_text(_PLOT_TEMPLATE.format(csv_name=out.name,
                                               png_name="sweep.png"))
    n_ok = sum(1 for r in reports if r is not None)
    print(f"wrote {out} and {plot_path} ({n_ok}/{len(reports)} points)")
    return EXIT_OK


def _cmd_validate(cfg, run, args) -> int:
    results = run_validation(cfg, seed=args.seed, quick=args.quick)
    failed = False
    for name, ok, detail in results:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        failed = failed or not ok
    return EXIT_NUMERICAL if failed else EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg, run = load_config(args.config, args.preset)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        handler = {
            "simulate": _cmd_simulate,
            "bounds": _cmd_bounds,
            "keyrate": _cmd_keyrate,
            "sweep": _cmd_sweep,
            "validate": _cmd_validate,
        }[args.command]
        return handler(cfg, run, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EstimationAbortError as exc:
        print(f"estimation abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except (NumericalToleranceError, HdqkdError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
