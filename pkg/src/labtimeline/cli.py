"""Operator entry points: ingest, validate, export-graph, gen, serve, report."""

from __future__ import annotations

import socket
import sys
from datetime import date
from pathlib import Path

import click

from . import store, timeline
from .errors import EngineError
from .ingest import ingest_files, load_rules, write_rejection_report

SEPARATOR_OPTION = click.option(
    "--separator", default="|", show_default=True, envvar="LABTIMELINE_SEPARATOR",
    help="Field separator of delimited input/output files.",
)


@click.group()
@click.version_option(package_name="labtimeline")
def main() -> None:
    """Lab-test timeline engine: normalize raw exports, categorize results,
    build per-patient clinical paths, serve or render them."""


@main.command("ingest")
@click.argument("inputs", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--rules", "rules_path", type=click.Path(dir_okay=False),
              envvar="LABTIMELINE_RULES", help="Rules config file (default: packaged rules).")
@click.option("--meta", "meta_path", type=click.Path(exists=True, dir_okay=False),
              help="Patient meta file (patient_id, sex, birth_year_or_age).")
@click.option("--outcomes", "outcome_path", type=click.Path(exists=True, dir_okay=False),
              help="Outcome file (patient_id, date, status_text).")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False),
              envvar="LABTIMELINE_DATASET", help="Destination dataset (JSONL).")
@click.option("--rejects", "rejects_path", type=click.Path(dir_okay=False),
              help="Write the rejection report here.")
@click.option("--strict", is_flag=True, help="Treat any rejection as fatal.")
@SEPARATOR_OPTION
def cmd_ingest(inputs, rules_path, meta_path, outcome_path, out_path, rejects_path,
               strict, separator) -> None:
    """Parse, normalize and clean raw result exports into a dataset file."""
    if rules_path is not None and not Path(rules_path).exists():
        raise click.ClickException(f"rules file not found: {rules_path}")
    try:
        rules = load_rules(rules_path)
        dataset, report, rejections = ingest_files(
            inputs, rules, meta_path=meta_path, outcome_path=outcome_path,
            separator=separator,
        )
    except (OSError, ValueError) as exc:
        raise click.ClickException(str(exc))

    if rejects_path:
        with open(rejects_path, "w", encoding="utf-8", newline="") as fh:
            write_rejection_report(rejections, fh, separator)
    for line in report.lines():
        click.echo(line)
    if strict and report.rejected:
        raise click.ClickException(f"{report.rejected} rejections with --strict")
    store.save(dataset, out_path)
    click.echo(f"wrote {out_path}")


@main.command("validate")
@click.argument("dataset_path", type=click.Path(exists=True, dir_okay=False),
                envvar="LABTIMELINE_DATASET")
def cmd_validate(dataset_path) -> None:
    """Check all dataset invariants; nonzero exit on any violation."""
    try:
        dataset = store.load(dataset_path)
    except EngineError as exc:
        raise click.ClickException(f"{dataset_path}: {exc}")
    problems = dataset.validate()
    for problem in problems:
        click.echo(f"{dataset_path}: {problem}", err=True)
    if problems:
        sys.exit(1)
    click.echo(f"{dataset_path}: ok "
               f"({len(dataset.patients)} patients, {len(dataset.results)} results)")


@main.command("export-graph")
@click.argument("dataset_path", type=click.Path(exists=True, dir_okay=False),
                envvar="LABTIMELINE_DATASET")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def cmd_export_graph(dataset_path, out_path) -> None:
    """Export the patient→test graph (edges are per-day results)."""
    try:
        dataset = store.load(dataset_path)
        graph = store.export_graph(dataset, out_path)
    except (EngineError, OSError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"wrote {out_path}: {len(graph['nodes'])} nodes, {len(graph['edges'])} edges")


@main.command("gen")
@click.option("--patients", "n_patients", default=10, show_default=True, type=int)
@click.option("--tests", default=12, show_default=True, type=int)
@click.option("--days", "day_span", default=60, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int, envvar="LABTIMELINE_SEED")
@click.option("--fill-rate", default=0.5, show_default=True, type=float)
@click.option("--out-of-range", default=0.2, show_default=True, type=float,
              help="Fraction of results generated outside their reference range.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def cmd_gen(n_patients, tests, day_span, seed, fill_rate, out_of_range, out_path) -> None:
    """Generate a reproducible synthetic dataset."""
    try:
        spec = store.SyntheticSpec(
            n_patients=n_patients, tests=tests, day_span=day_span, seed=seed,
            fill_rate=fill_rate, out_of_range_fraction=out_of_range,
        )
        dataset = store.generate_synthetic(spec)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    store.save(dataset, out_path)
    click.echo(f"wrote {out_path}: {len(dataset.patients)} patients, "
               f"{len(dataset.results)} results")


@main.command("serve")
@click.option("--dataset", "dataset_path", required=True,
              type=click.Path(exists=True, dir_okay=False), envvar="LABTIMELINE_DATASET")
@click.option("--listen", default="127.0.0.1:8000", show_default=True,
              envvar="LABTIMELINE_LISTEN", help="host:port to bind.")
@click.option("--config", "config_path", type=click.Path(dir_okay=False),
              envvar="LABTIMELINE_CONFIG",
              help="Sidecar file persisting presentation config across restarts.")
@click.option("--ui", "ui_dir", type=click.Path(exists=True, file_okay=False),
              help="Static UI directory to mount at /.")
@click.option("--groups", "groups_path", type=click.Path(exists=True, dir_okay=False),
              help="Alternative test-group ordering (JSON).")
def cmd_serve(dataset_path, listen, config_path, ui_dir, groups_path) -> None:
    """Serve the read-only HTTP API (and optionally the UI)."""
    import uvicorn

    from .api import create_app
    from .model import load_group_table

    host, _, port_text = listen.partition(":")
    try:
        port = int(port_text or "8000")
    except ValueError:
        raise click.ClickException(f"invalid port in --listen {listen!r}")
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((host or "127.0.0.1", port))
    except OSError as exc:
        raise click.ClickException(f"cannot bind {listen}: {exc}")
    finally:
        probe.close()

    try:
        dataset = store.load(dataset_path)
        groups = load_group_table(groups_path) if groups_path else None
    except (EngineError, ValueError) as exc:
        raise click.ClickException(str(exc))
    app = create_app(dataset, config_path=config_path, ui_dir=ui_dir, groups=groups)
    click.echo(f"serving {dataset_path} on http://{host or '127.0.0.1'}:{port}/v1")
    uvicorn.run(app, host=host or "127.0.0.1", port=port, log_level="info")


@main.command("report")
@click.option("--dataset", "dataset_path", required=True,
              type=click.Path(exists=True, dir_okay=False), envvar="LABTIMELINE_DATASET")
@click.argument("patient_id")
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--from", "date_from", type=click.DateTime(["%Y-%m-%d"]),
              help="Window start (yyyy-MM-dd).")
@click.option("--to", "date_to", type=click.DateTime(["%Y-%m-%d"]),
              help="Window end (yyyy-MM-dd).")
@click.option("--only-days-with-tests", is_flag=True)
@click.option("--tests", help="Comma-separated acronyms to render as series charts.")
@click.option("--threshold", default=100.0, show_default=True, type=float,
              help="Relevant-change threshold in percent.")
@SEPARATOR_OPTION
def cmd_report(dataset_path, patient_id, out_dir, date_from, date_to,
               only_days_with_tests, tests, threshold, separator) -> None:
    """Render a patient's clinical path to figures plus a delimited table."""
    from .report import write_report

    def to_day(value) -> date | None:
        return value.date() if value else None

    try:
        dataset = store.load(dataset_path)
        options = timeline.PathOptions(
            date_from=to_day(date_from),
            date_to=to_day(date_to),
            only_days_with_tests=only_days_with_tests,
        )
        written = write_report(
            dataset, patient_id, options, out_dir,
            tests=[t for t in (tests or "").split(",") if t],
            threshold_percent=threshold, separator=separator,
        )
    except (EngineError, ValueError, OSError) as exc:
        raise click.ClickException(str(exc))
    for item in written:
        click.echo(f"wrote {item}")


if __name__ == "__main__":
    main()
