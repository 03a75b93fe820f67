"""Command line: ``carleman-lab <verify|run|sweep|fit|emit-plot-data>``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .config import config_hash, echo, parse_config
from .experiments import ExperimentConfig, refit_report, run_experiment
from .serialize import dumps_report, loads_report, plot_data, records_csv
from .verify import run_all

__all__ = ["COMMANDS", "RunManifest", "build_parser", "execute", "main"]

COMMANDS = ("verify", "run", "sweep", "fit", "emit-plot-data")
REPORT = "report.json"
RECORDS = "records.csv"
ECHO = "config_echo.txt"
ERROR = "error.json"


class CliError(RuntimeError):
    pass


@dataclass(frozen=True)
class RunManifest:
    command: str
    config_path: Path | None
    config: ExperimentConfig | None
    out: Path
    workers: int = 1
    seed: int | None = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise CliError(f"unknown command {self.command!r}")
        if self.workers < 1:
            raise CliError(f"workers must be >= 1, got {self.workers}")
        if self.command != "verify" and self.config is None:
            raise CliError(f"{self.command} needs --config")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="carleman-lab", description="Carleman-estimate experiments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="experiment configuration file")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory (default: current)")
    p.add_argument("--workers", type=int, default=1, help="worker processes for sweep (default: 1)")
    p.add_argument("--seed", type=int, default=None, help="global seed; overrides [experiment] seed")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}") from None


def _provenance(m: RunManifest, cfg: ExperimentConfig) -> dict:
    return {
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "grid": {"kind": cfg.domain_kind, "n": cfg.domain_n, "length": cfg.domain_length},
        "slack": cfg.slack,
        "version": __version__,
    }


def _write_report(out: Path, report) -> None:
    _write(out / REPORT, dumps_report(report))
    _write(out / RECORDS, records_csv(report))


def _read_report(out: Path):
    path = out / REPORT
    if not path.exists():
        raise CliError(f"no report at {path}; run or sweep first")
    return loads_report(path.read_text())


def execute(m: RunManifest) -> int:
    if m.command == "verify":
        results = run_all()
        for name, ok, detail in results:
            print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        return 0 if all(ok for _, ok, _ in results) else 1
    m.out.mkdir(parents=True, exist_ok=True)
    if not os.access(m.out, os.W_OK):
        raise CliError(f"output directory {m.out} is not writable")
    cfg = m.config.with_seed(m.seed)
    if m.command in ("run", "sweep"):
        _write(m.out / ECHO, echo(cfg))
        sys.stdout.write(echo(cfg))
        if m.command == "sweep" and m.workers > 1:
            with ProcessPoolExecutor(max_workers=m.workers) as pool:
                report = run_experiment(cfg, mapper=pool.map, provenance=_provenance(m, cfg))
        else:
            report = run_experiment(cfg, provenance=_provenance(m, cfg))
        _write_report(m.out, report)
        print(f"{report.mode}: {'pass' if report.passed else 'fail'} {json.dumps(report.flags, sort_keys=True)}")
        return 0
    report = _read_report(m.out)
    if m.command == "fit":
        report = refit_report(cfg, report)
        _write_report(m.out, report)
        print(f"refit: {'pass' if report.passed else 'fail'}")
        return 0
    for name, text in plot_data(report).items():
        _write(m.out / name, text)
    return 0


def _error_record(command: str, exc: Exception) -> str:
    return json.dumps({"command": command, "error": type(exc).__name__, "message": str(exc)}, sort_keys=True)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = None
        if args.config is not None:
            cfg = parse_config(args.config.read_text())
        manifest = RunManifest(args.command, args.config, cfg, args.out, args.workers, args.seed)
        return execute(manifest)
    except Exception as exc:
        record = _error_record(args.command, exc)
        print(record, file=sys.stderr)
        try:
            if args.out.is_dir():
                (args.out / ERROR).write_text(record + "\n")
        except OSError:
            pass
        return 2


if __name__ == "__main__":
    sys.exit(main())
