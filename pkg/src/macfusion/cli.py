"""Command-line driver producing the figure-data CSVs.

Every run writes its CSVs plus ``manifest.json`` (resolved config, seed,
version, checksums, duration) to the output directory. ``replay`` re-runs a
manifest and checks the regenerated files against the recorded checksums.

Exit codes: 0 success, 2 configuration or usage error, 3 runtime or
quadrature failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__, analytic, config
from .channel import Scheme
from .config import ConfigError
from .geometry import ClusterLayout, circumscribed_radius
from .montecarlo import (RULES, ExperimentConfig, empirical_moments, empirical_power, pd_at_pfa,
                         roc_on_grid, rule_config, rule_statistics, run_trials)
from .quadrature import QuadratureError
from .sensing import Hypothesis, TargetParams

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 2, 3, 4
MANIFEST = "manifest.json"
VARY = ("clusters", "lambda", "snr")

Table = tuple[list[str], list[list]]

MOMENTS_HEADER = ["lambda", "scheme", "alpha", "hypothesis", "cluster", "mean_emp", "mean_se",
                  "mean_analytic", "var_emp", "var_se", "var_analytic"]
ROC_HEADER = ["rule", "pfa", "pd"]
POWER_HEADER = ["M", "scheme", "alpha", "P_emp", "se", "P_exact", "P_approx"]
DEFLECTION_HEADER = ["scheme", "g_tc", "d2"]


def _fmt(v) -> str:
    if isinstance(v, Scheme):
        return v.value
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def render_csv(header: Sequence[str], rows) -> bytes:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue().encode("utf-8")


def _with_channel(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    return cfg.replace(channel=dataclasses.replace(cfg.channel, **changes))


def _scalar_intensity(cfg: ExperimentConfig) -> float:
    if np.ndim(cfg.intensity) != 0:
        raise ConfigError("this command needs a scalar [network] intensity")
    return float(cfg.intensity)


def _fixed_target(cfg: ExperimentConfig) -> TargetParams:
    if cfg.target_location is None:
        raise ConfigError("this command needs a fixed [target] location")
    return TargetParams(cfg.target_power, cfg.target_location)


def cmd_moments(cfg: ExperimentConfig, workers: int = 1, **_) -> dict[str, Table]:
    """Empirical vs analytic moments of ``Ybar_m`` over the lambda grid."""
    target = _fixed_target(cfg)
    rows = []
    for alpha in cfg.grid.alphas:
        ints = analytic.layout_integrals(cfg.layout, alpha, cfg.channel.ref_distance, cfg.sensing, target)
        for scheme in cfg.grid.schemes:
            cm = analytic.combiner_moments(scheme, cfg.channel.fading_scale)
            for lam in cfg.grid.lambdas:
                run_cfg = _with_channel(cfg.replace(intensity=lam), scheme=scheme, path_loss=alpha)
                for hyp in Hypothesis:
                    emp = empirical_moments(run_trials(run_cfg, hyp, workers)).ybar
                    for m, ci in enumerate(ints):
                        mean_a, var_a = analytic.ybar_moments(lam, cm, ci)
                        rows.append([lam, scheme, alpha, int(hyp), m, emp.mean[m], emp.mean_se[m],
                                     mean_a[hyp], emp.var[m], emp.var_se[m], var_a[hyp]])
    return {"moments.csv": (MOMENTS_HEADER, rows)}


def cmd_roc(cfg: ExperimentConfig, rules: Sequence[str], workers: int = 1, **_) -> dict[str, Table]:
    stats = rule_statistics(cfg, rules, workers)
    rows = []
    for rule in rules:
        curve = roc_on_grid(*stats[rule], cfg.grid.roc_points)
        rows.extend([rule, p, d] for p, d in zip(curve.pfa, curve.pd))
    return {"roc.csv": (ROC_HEADER, rows)}


def _sweep_configs(cfg: ExperimentConfig, vary: str):
    if vary == "clusters":
        return [(m, cfg.replace(grid_dim=math.isqrt(m))) for m in cfg.grid.clusters]
    if vary == "lambda":
        return [(lam, cfg.replace(intensity=lam)) for lam in cfg.grid.lambdas]
    if vary == "snr":
        ch = cfg.channel
        return [(snr, _with_channel(cfg, ch_noise=ch.sn_power / 10 ** (snr / 10)))
                for snr in cfg.grid.snr_ch_db]
    raise ConfigError(f"--vary must be one of {', '.join(VARY)}")


def cmd_sweep(cfg: ExperimentConfig, rules: Sequence[str], vary: str, workers: int = 1,
              **_) -> dict[str, Table]:
    """P_D at the global false-alarm target over one parameter grid."""
    if vary == "clusters":
        _scalar_intensity(cfg)
    rows = []
    for value, run_cfg in _sweep_configs(cfg, vary):
        stats = rule_statistics(run_cfg, rules, workers)
        for rule in rules:
            est = pd_at_pfa(*stats[rule], cfg.grid.pfa_global)
            rows.append([value, rule, est.pd, est.se])
    return {f"sweep_{vary}.csv": ([vary, "rule", "pd", "se"], rows)}


def cmd_power(cfg: ExperimentConfig, workers: int = 1, **_) -> dict[str, Table]:
    """Per-cluster H0 received power vs the circumscribed-circle laws."""
    lam = _scalar_intensity(cfg)
    pfa = cfg.sensing.pfa
    rows = []
    for n_clusters in cfg.grid.clusters:
        k = math.isqrt(n_clusters)
        R = float(circumscribed_radius(ClusterLayout.square(cfg.side_length, k))[0])
        for scheme in cfg.grid.schemes:
            cm = analytic.combiner_moments(scheme, cfg.channel.fading_scale)
            for alpha in cfg.grid.alphas:
                run_cfg = _with_channel(cfg.replace(grid_dim=k), scheme=scheme, path_loss=alpha)
                mean, se = empirical_power(run_trials(run_cfg, Hypothesis.H0, workers),
                                           cfg.channel.sn_power)
                r0, ptx = cfg.channel.ref_distance, cfg.channel.sn_power
                rows.append([n_clusters, scheme, alpha, float(np.mean(mean)),
                             float(math.sqrt(np.sum(se**2)) / len(se)),
                             analytic.power_circular_exact(R, r0, lam, ptx, alpha, pfa, cm),
                             analytic.power_circular_approx(R, r0, lam, ptx, alpha, pfa, cm)])
    return {"power.csv": (POWER_HEADER, rows)}


def cmd_deflection(cfg: ExperimentConfig, **_) -> dict[str, Table]:
    """Single-cluster deflection coefficient per combining scheme."""
    lam = _scalar_intensity(cfg)
    target = _fixed_target(cfg)
    layout = ClusterLayout.square(cfg.side_length, 1)
    ints = analytic.cluster_integrals(layout.cell_bounds(0), layout.ch_positions[0],
                                      cfg.channel.path_loss, cfg.channel.ref_distance,
                                      cfg.sensing, target)
    rows = [[s, analytic.combining_gain(s), analytic.deflection(lam, s, ints)] for s in cfg.grid.schemes]
    return {"deflection.csv": (DEFLECTION_HEADER, rows)}


COMMANDS: dict[str, Callable[..., dict[str, Table]]] = {
    "moments": cmd_moments,
    "roc": cmd_roc,
    "sweep": cmd_sweep,
    "power": cmd_power,
    "deflection": cmd_deflection,
}


def execute(command: str, resolved: dict, options: dict, out_dir, workers: int = 1,
            seed_override: int | None = None) -> dict:
    """Run ``command``, write its CSVs and manifest into ``out_dir``; return the manifest."""
    if seed_override is not None:
        resolved = {sec: dict(keys) for sec, keys in resolved.items()}
        resolved["experiment"]["master_seed"] = str(seed_override)
    cfg = config.build(resolved)
    for rule in options.get("rules", ()):
        rule_config(cfg, rule)
    started = time.perf_counter()
    tables = COMMANDS[command](cfg, workers=workers, **options)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checksums = {}
    for name, (header, rows) in tables.items():
        data = render_csv(header, rows)
        (out_dir / name).write_bytes(data)
        checksums[name] = hashlib.sha256(data).hexdigest()
    manifest = {
        "tool": "macfusion",
        "version": __version__,
        "command": command,
        "options": options,
        "config": resolved,
        "master_seed": cfg.master_seed,
        "workers": workers,
        "outputs": checksums,
        "started_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "duration_s": time.perf_counter() - started,
    }
    (out_dir / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def replay(manifest_path, out_dir, workers: int = 1) -> tuple[dict, list[str]]:
    """Re-run a manifest; returns the new manifest and the names of mismatching outputs."""
    try:
        old = json.loads(Path(manifest_path).read_text())
        command, options, resolved = old["command"], old["options"], old["config"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"{manifest_path}: not a valid run manifest ({exc})") from None
    if command not in COMMANDS:
        raise ConfigError(f"{manifest_path}: unknown command {command!r}")
    new = execute(command, resolved, options, out_dir, workers)
    bad = sorted(k for k in set(old["outputs"]) | set(new["outputs"])
                 if old["outputs"].get(k) != new["outputs"].get(k))
    return new, bad


def _rules(text: str) -> list[str]:
    rules = [r.strip() for r in text.split(",") if r.strip()]
    bad = [r for r in rules if r not in RULES]
    if bad or not rules:
        raise argparse.ArgumentTypeError(f"unknown rule(s) {bad}; valid rules: {', '.join(RULES)}")
    return rules


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="macfusion", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("-c", "--config", help="INI configuration file (defaults if omitted)")
        p.add_argument("-o", "--out", default=".", help="output directory")
        p.add_argument("-j", "--workers", type=_positive_int, default=1, help="worker processes")

    for name in ("moments", "power", "deflection"):
        common(sub.add_parser(name, help=COMMANDS[name].__doc__))
    p = sub.add_parser("roc", help="empirical ROC per fusion rule")
    common(p)
    p.add_argument("--rules", type=_rules, default=list(RULES), help="comma-separated rule names")
    p = sub.add_parser("sweep", help="P_D at the global P_FA over a parameter grid")
    common(p)
    p.add_argument("--vary", choices=VARY, required=True)
    p.add_argument("--rules", type=_rules, default=list(RULES), help="comma-separated rule names")
    p = sub.add_parser("replay", help="re-run a manifest and verify its checksums")
    p.add_argument("manifest")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("-j", "--workers", type=_positive_int, default=1, help="worker processes")
    return parser


def _seed_from_env() -> int | None:
    raw = os.environ.get(config.SEED_ENV)
    if raw is None or not raw.strip():
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{config.SEED_ENV}={raw!r} is not an integer") from None


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            manifest, bad = replay(args.manifest, args.out, args.workers)
            if bad:
                print(f"replay mismatch: {', '.join(bad)}", file=sys.stderr)
                return EXIT_RUNTIME
            print(f"replay ok: {', '.join(sorted(manifest['outputs']))}")
            return EXIT_OK
        text = Path(args.config).read_text() if args.config else ""
        resolved = config.resolve(text, args.config or "<defaults>")
        options = {k: getattr(args, k) for k in ("rules", "vary") if hasattr(args, k)}
        manifest = execute(args.command, resolved, options, args.out, args.workers, _seed_from_env())
        for name in sorted(manifest["outputs"]):
            print(Path(args.out) / name)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QuadratureError, ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
