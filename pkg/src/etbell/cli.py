"""Command-line front end: ``etbell simulate | fringes | tomo | lhv | analyze``.

Settings come from an optional flat ``key = value`` config file and are
overridden by flags. Every random draw derives from the one ``seed``.
"""
from __future__ import annotations

import argparse
import math
import re
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import io as eio
from .analysis import chsh_from_counts, chsh_from_fits, fit_scan, mean_visibility
from .errors import (
    ConfigError,
    DegeneratePostselectionError,
    DomainError,
    IncompleteDataError,
    ParseError,
    SingularFitError,
    SolverError,
    UndefinedEstimateError,
)
from .events import GeometryConfig, fringe_scan, run_chsh_experiment
from .lhv import PostselectionRule, adversary_json, max_postselected_chsh, reproduce_quantum_statistics
from .quantum import MeasurementSettings, canonical_settings
from .tomography import (
    fidelity_error_bar,
    ml_reconstruction,
    reconstruct_with_accidental_subtraction,
    table2_settings,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARSE = 3
EXIT_NUMERIC = 4
EXIT_INFEASIBLE = 5


@dataclass
class RunConfig:
    scheme: str = "franson"
    visibility: float = 1.0
    phi_a: float = math.pi / 4
    phi_a2: float = -math.pi / 4
    phi_b: float = 0.0
    phi_b2: float = -math.pi / 2
    pairs_per_setting: int = 1_000_000
    pairs_per_point: int = 100_000
    grid_points: int = 16
    seed: int | None = None
    efficiency: float = 0.15
    pair_rate: float = 1e4
    path_delay: float = 3e-9
    coincidence_window: float = 1e-9
    dead_time: float = 1e-9
    background_rate: float = 0.0

    def geometry(self) -> GeometryConfig:
        return GeometryConfig(
            scheme=self.scheme,
            path_delay=self.path_delay,
            coincidence_window=self.coincidence_window,
            dead_time=self.dead_time,
            detection_efficiency=self.efficiency,
            pair_rate=self.pair_rate,
            visibility=self.visibility,
            background_rate=self.background_rate,
        )

    def settings(self) -> MeasurementSettings:
        return MeasurementSettings(self.phi_a, self.phi_a2, self.phi_b, self.phi_b2)

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("a seed is required (--seed or 'seed = ...' in the config file)")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        return self.seed


_PI_RE = re.compile(r"^([+-]?)\s*(\d*\.?\d*)\s*\*?\s*pi\s*(?:/\s*(\d*\.?\d+))?$")


def _parse_value(text: str):
    """Number, string, or a multiple of pi such as ``pi/4``, ``-pi/2``, ``3*pi/4``."""
    t = text.strip()
    m = _PI_RE.match(t.lower())
    if m:
        sign, coef, den = m.groups()
        val = (float(coef) if coef else 1.0) * math.pi / (float(den) if den else 1.0)
        return -val if sign == "-" else val
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def load_config(path: str | Path) -> dict:
    """Read ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    known = {f.name for f in fields(RunConfig)}
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected key = value", line=n)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {n}: unknown config key {key!r}")
        out[key] = _parse_value(value)
    return out


def build_config(args: argparse.Namespace) -> RunConfig:
    values = load_config(args.config) if getattr(args, "config", None) else {}
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    cfg = RunConfig()
    for key, v in values.items():
        default = getattr(cfg, key)
        try:
            if isinstance(default, bool):
                v = bool(v)
            elif isinstance(default, int) or key == "seed":
                if isinstance(v, float) and not v.is_integer():
                    raise ValueError
                v = int(v)
            elif isinstance(default, float):
                v = float(v)
            else:
                v = str(v)
        except (TypeError, ValueError):
            raise ConfigError(f"bad value for {key}: {v!r}") from None
        setattr(cfg, key, v)
    return cfg


def _out_dir(args) -> Path:
    return Path(args.out or ".")


def cmd_simulate(args) -> int:
    cfg = build_config(args)
    seed = cfg.require_seed()
    settings = cfg.settings()
    table = run_chsh_experiment(cfg.geometry(), settings, cfg.pairs_per_setting, seed)
    out = _out_dir(args)
    csv_text = eio.count_table_to_csv(table)
    eio.write_text(out / "counts.csv", csv_text)
    # analyze the table as written so the report matches a later re-ingest
    report = chsh_from_counts(eio.count_table_from_csv(csv_text), settings)
    eio.write_text(out / "chsh.json", report.to_json())
    print(f"S = {report.s:.4f} +/- {report.delta_s:.4f} ({report.sigma_violation:.2f} sigma)")
    return EXIT_OK


def cmd_analyze(args) -> int:
    table = eio.count_table_from_csv(eio.read_text(args.counts))
    report = chsh_from_counts(table)
    text = report.to_json()
    if args.out:
        eio.write_text(Path(args.out) / "chsh.json", text)
    sys.stdout.write(text)
    return EXIT_OK


def _grid(args, cfg: RunConfig) -> np.ndarray:
    if args.grid:
        try:
            return np.array([float(_parse_value(x)) for x in args.grid.split(",") if x.strip()])
        except (TypeError, ValueError):
            raise ConfigError(f"cannot parse grid {args.grid!r}") from None
    if cfg.grid_points < 4:
        raise ConfigError("a fringe scan needs at least 4 points")
    return np.linspace(-math.pi, math.pi, cfg.grid_points, endpoint=False)


def cmd_fringes(args) -> int:
    cfg = build_config(args)
    seed = cfg.require_seed()
    grid = _grid(args, cfg)
    if np.unique(np.round(np.mod(grid, 2 * math.pi), 12)).size < 4:
        raise ConfigError("a fringe scan needs at least 4 distinct phases")
    phi_bs = [cfg.phi_b] if args.scan_phi_b is None else [float(_parse_value(x)) for x in args.scan_phi_b.split(",")]
    scans = [fringe_scan(cfg.geometry(), b, grid, cfg.pairs_per_point, [seed, k]) for k, b in enumerate(phi_bs)]
    fits = {sc.phi_b: fit_scan(sc.phi_a, sc.counts) for sc in scans}
    mv = mean_visibility(fits)
    out = _out_dir(args)
    eio.write_text(out / "fringes.csv", eio.fringe_scan_to_csv(scans))
    eio.write_text(out / "fringe_fits.json", eio.fits_to_json(fits, mv))
    try:
        report = chsh_from_fits(fits, cfg.settings())
    except IncompleteDataError:
        report = None  # the scans do not cover both phi_b settings
    if report is not None:
        eio.write_text(out / "chsh_fit.json", report.to_json())
    print(f"mean visibility = {mv[0]:.4f} +/- {mv[1]:.4f}")
    return EXIT_OK


def _rates(text: str | None):
    if text is None:
        return None
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise ConfigError(f"cannot parse accidental rates {text!r}") from None
    if len(vals) not in (1, 16) or any(v < 0 for v in vals):
        raise ConfigError("give one nonnegative rate or sixteen (one per measurement)")
    return vals[0] if len(vals) == 1 else np.array(vals)


def cmd_tomo(args) -> int:
    if args.table2 == bool(args.counts):
        raise ConfigError("give either a counts file or --table2")
    settings = table2_settings() if args.table2 else eio.tomography_from_csv(eio.read_text(args.counts))
    rates = _rates(args.subtract_accidentals)
    if rates is not None:
        result = reconstruct_with_accidental_subtraction(settings, rates)
    else:
        result = ml_reconstruction(settings)
    extra = {}
    if args.bootstrap:
        if args.seed is None:
            raise ConfigError("--bootstrap needs --seed")
        extra["fidelity_error"] = fidelity_error_bar(settings, args.bootstrap, args.seed)
        extra["bootstrap_resamples"] = args.bootstrap
    text = result.to_json(extra)
    eio.write_text(_out_dir(args) / "tomography.json", text)
    print(f"fidelity = {result.fidelity_with_phi_plus:.4f}, predicted S = {result.predicted_s:.4f}")
    return EXIT_OK


def cmd_lhv(args) -> int:
    rule = PostselectionRule(args.rule)
    result = max_postselected_chsh(rule)
    repro = None
    if args.target_quantum is not None:
        settings = canonical_settings()
        repro = reproduce_quantum_statistics(settings, args.target_quantum, rule)
    eio.write_text(_out_dir(args) / "lhv.json", adversary_json(result, repro))
    print(f"rule = {rule.kind}, S* = {result.s_star:.6f}")
    if repro is not None:
        print("quantum statistics reproducible" if repro.feasible else "quantum statistics not reproducible")
        if not repro.feasible:
            return EXIT_INFEASIBLE
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser, physics: bool = True) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int, help="seed for every random draw")
    p.add_argument("--out", help="output directory (default: current)")
    if not physics:
        return
    p.add_argument("--scheme", choices=["franson", "hug"])
    p.add_argument("--visibility", type=float)
    p.add_argument("--efficiency", type=float)
    p.add_argument("--pair-rate", dest="pair_rate", type=float)
    p.add_argument("--path-delay", dest="path_delay", type=float)
    p.add_argument("--window", dest="coincidence_window", type=float)
    p.add_argument("--dead-time", dest="dead_time", type=float)
    p.add_argument("--background-rate", dest="background_rate", type=float)
    p.add_argument("--phi-a", dest="phi_a", type=_parse_value)
    p.add_argument("--phi-a2", dest="phi_a2", type=_parse_value)
    p.add_argument("--phi-b", dest="phi_b", type=_parse_value)
    p.add_argument("--phi-b2", dest="phi_b2", type=_parse_value)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="etbell", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Monte Carlo CHSH run -> counts.csv + chsh.json")
    _add_common(p)
    p.add_argument("--pairs", dest="pairs_per_setting", type=int, help="emitted pairs per setting pair")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fringes", help="fringe scan vs phi_a -> fringes.csv + fringe_fits.json")
    _add_common(p)
    p.add_argument("--pairs-per-point", dest="pairs_per_point", type=int)
    p.add_argument("--points", dest="grid_points", type=int)
    p.add_argument("--grid", help="comma-separated phi_a values (radians, 'pi' allowed)")
    p.add_argument("--scan-phi-b", help="comma-separated phi_b values to scan (default: phi_b)")
    p.set_defaults(func=cmd_fringes)

    p = sub.add_parser("tomo", help="state reconstruction -> tomography.json")
    _add_common(p, physics=False)
    p.add_argument("counts", nargs="?", help="CSV: index,proj_a,proj_b,count,duration_s")
    p.add_argument("--table2", action="store_true", help="use the embedded 16-measurement data set")
    p.add_argument("--subtract-accidentals", metavar="RATE[,RATE...]",
                   help="accidental rate(s) per second, one for all rows or sixteen")
    p.add_argument("--bootstrap", type=int, metavar="N", help="Poisson bootstrap resamples for the fidelity error")
    p.set_defaults(func=cmd_tomo)

    p = sub.add_parser("lhv", help="local hidden-variable adversary -> lhv.json")
    _add_common(p, physics=False)
    p.add_argument("--rule", choices=["none", "franson", "hug"], required=True)
    p.add_argument("--target-quantum", type=float, metavar="V",
                   help="also look for a mixture reproducing the quantum statistics at visibility V")
    p.set_defaults(func=cmd_lhv)

    p = sub.add_parser("analyze", help="CHSH report from a counts CSV")
    p.add_argument("counts")
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"etbell: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ConfigError, DomainError) as exc:
        print(f"etbell: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, SingularFitError, UndefinedEstimateError, DegeneratePostselectionError,
            IncompleteDataError) as exc:
        print(f"etbell: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"etbell: cannot access file: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
