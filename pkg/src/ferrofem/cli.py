"""Batch front end: flat-file configuration, study execution, table emission.

Commands
--------
run    --config FILE [--out-csv PATH] [--out-json PATH] [--parallel-levels]
table  --config FILE            (CSV on stdout)
check  [--seed K]               (property battery, one line per check)

The config format is one ``key = value`` per line with ``#`` comments; an
empty file reproduces the default convergence study (lowest-order pair on
levels 4..128 with unit material parameters).
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from dataclasses import dataclass

from . import verify
from .material import MaterialParams

DEFAULT_LEVELS = (4, 8, 16, 32, 64, 128)

CSV_HEADER = "N,h,err_phi_h1,err_H_hcurl,err_M_l2,err_u_h1h,err_p_l2,curl_inf"

_ERROR_COLS = verify.ERROR_COLUMNS


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    study: str = "uniform-square"
    pair: str = "l0"
    levels: tuple = DEFAULT_LEVELS
    mu0: float = 1.0
    Ms: float = 1.0
    gamma: float | None = None
    chi0: float | None = None
    rho: float = 1.0
    eta: float = 1.0
    picard_iters: int = 2
    oseen_iters: int = 2
    quad_bump: int = 2
    seed: int = 42
    out_csv: str = "study.csv"
    out_json: str = "study.json"

    def material_params(self) -> MaterialParams:
        gamma = self.gamma
        chi0 = self.chi0
        if gamma is None and chi0 is None:
            gamma = 1.0
        if gamma is None:
            gamma = 3.0 * chi0 / self.Ms
        kwargs = dict(mu0=self.mu0, Ms=self.Ms, gamma=gamma, rho=self.rho, eta=self.eta)
        if chi0 is not None:
            kwargs["chi0"] = chi0
        return MaterialParams(**kwargs)


def _parse_levels(text: str):
    try:
        levels = tuple(int(t) for t in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"invalid levels {text!r}: {exc}") from exc
    if not levels:
        raise ConfigError("levels must be nonempty")
    if any(n < 1 for n in levels):
        raise ConfigError("levels must be positive")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ConfigError("levels must be ascending")
    return levels


_PARSERS = {
    "study": str,
    "pair": str,
    "levels": _parse_levels,
    "mu0": float,
    "Ms": float,
    "gamma": float,
    "chi0": float,
    "rho": float,
    "eta": float,
    "picard_iters": int,
    "oseen_iters": int,
    "quad_bump": int,
    "seed": int,
    "out_csv": str,
    "out_json": str,
}


def parse_config(text: str) -> RunConfig:
    """Parse the flat ``key = value`` config format with line-numbered errors."""
    cfg = RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        parser = _PARSERS.get(key)
        if parser is None:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            setattr(cfg, key, parser(value))
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(
                f"line {lineno}: invalid value {value!r} for {key!r}: {exc}"
            ) from exc
    if cfg.pair not in ("l0", "l1"):
        raise ConfigError(f"pair must be 'l0' or 'l1', got {cfg.pair!r}")
    for name in ("picard_iters", "oseen_iters"):
        if getattr(cfg, name) < 1:
            raise ConfigError(f"{name} must be >= 1")
    try:
        cfg.material_params()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


# ---------------------------------------------------------------------------
# report serialization
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def format_csv(report: verify.StudyReport, failed_at: int | None = None) -> str:
    """Render the study as the plot-ready CSV table with order footers."""
    out = io.StringIO()
    out.write(CSV_HEADER + "\n")
    for row in report.rows:
        cols = [str(row.n), _fmt(row.h)]
        cols += [_fmt(row.errors[c]) for c in _ERROR_COLS]
        cols.append(f"{row.curl_inf:.3e}")  # 4 significant digits
        out.write(",".join(cols) + "\n")
    if report.orders_lsq:
        pairwise = [_fmt(report.orders_pairwise[c][-1]) for c in _ERROR_COLS]
        out.write("order_pairwise,," + ",".join(pairwise) + ",\n")
        lsq = [_fmt(report.orders_lsq[c]) for c in _ERROR_COLS]
        out.write("order_lsq,," + ",".join(lsq) + ",\n")
    if failed_at is not None:
        out.write(f"# FAILED at N={failed_at}\n")
    return out.getvalue()


def report_to_json(config: RunConfig, report: verify.StudyReport,
                   failed_at: int | None = None) -> dict:
    params = config.material_params()
    doc = {
        "study": config.study,
        "pair": config.pair,
        "levels": [row.n for row in report.rows],
        "params": {
            "mu0": params.mu0, "Ms": params.Ms, "gamma": params.gamma,
            "chi0": params.chi0, "rho": params.rho, "eta": params.eta,
        },
        "picard_iters": config.picard_iters,
        "oseen_iters": config.oseen_iters,
        "quad_bump": config.quad_bump,
        "rows": [
            {
                "N": row.n,
                "h": row.h,
                "errors": {c: row.errors[c] for c in _ERROR_COLS},
                "curl_inf": row.curl_inf,
                "diagnostics": row.diagnostics,
            }
            for row in report.rows
        ],
        "orders_pairwise": report.orders_pairwise,
        "orders_lsq": report.orders_lsq,
    }
    if failed_at is not None:
        doc["failed_at"] = failed_at
    return doc


def _run_study(config: RunConfig, parallel: bool):
    return verify.run_convergence_study(
        config.pair,
        list(config.levels),
        params=config.material_params(),
        picard_iters=config.picard_iters,
        oseen_iters=config.oseen_iters,
        quad_bump=config.quad_bump,
        parallel=parallel,
    )


def cmd_run(config: RunConfig, parallel: bool = False) -> int:
    """Execute the study and write the CSV/JSON reports. Exit 0 on success."""
    failed_at = None
    try:
        report = _run_study(config, parallel)
    except verify.StudyError as exc:
        report = exc.report
        failed_at = exc.failed_level
        print(f"error: {exc}", file=sys.stderr)
    csv_text = format_csv(report, failed_at)
    with open(config.out_csv, "w") as fh:
        fh.write(csv_text)
    with open(config.out_json, "w") as fh:
        json.dump(report_to_json(config, report, failed_at), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0 if failed_at is None else 1


def cmd_table(config: RunConfig, parallel: bool = False) -> int:
    """Execute the study and print the CSV table to stdout."""
    failed_at = None
    try:
        report = _run_study(config, parallel)
    except verify.StudyError as exc:
        report = exc.report
        failed_at = exc.failed_level
        print(f"error: {exc}", file=sys.stderr)
    sys.stdout.write(format_csv(report, failed_at))
    return 0 if failed_at is None else 1


def cmd_check(seed: int = 42, quick: bool = False) -> int:
    """Run the property battery; one PASS/FAIL line per invariant."""
    results = verify.run_property_battery(seed=seed, quick=quick)
    n_fail = 0
    for res in results:
        tag = "PASS" if res.passed else "FAIL"
        print(f"{tag} {res.name}: {res.detail}")
        n_fail += not res.passed
    if n_fail:
        first = next(r.name for r in results if not r.passed)
        print(f"{n_fail} properties failed (first: {first})", file=sys.stderr)
        return 1
    print(f"all {len(results)} properties passed")
    return 0


def _load_config(path: str) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path) as fh:
        return parse_config(fh.read())


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ferrofem",
        description="Ferrofluid-flow mixed finite element convergence harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a study and write CSV/JSON reports")
    p_run.add_argument("--config", default=None, help="flat key = value config file")
    p_run.add_argument("--out-csv", default=None)
    p_run.add_argument("--out-json", default=None)
    p_run.add_argument("--parallel-levels", action="store_true")

    p_table = sub.add_parser("table", help="run a study and print the CSV table")
    p_table.add_argument("--config", default=None)
    p_table.add_argument("--parallel-levels", action="store_true")

    p_check = sub.add_parser("check", help="run the property battery")
    p_check.add_argument("--seed", type=int, default=42)
    p_check.add_argument("--quick", action="store_true",
                         help="smaller meshes and sample counts")

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            config = _load_config(args.config)
            if args.out_csv:
                config.out_csv = args.out_csv
            if args.out_json:
                config.out_json = args.out_json
            return cmd_run(config, parallel=args.parallel_levels)
        if args.command == "table":
            return cmd_table(_load_config(args.config), parallel=args.parallel_levels)
        if args.command == "check":
            return cmd_check(seed=args.seed, quick=args.quick)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
