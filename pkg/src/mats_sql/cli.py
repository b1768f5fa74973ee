import json
import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Callable, Iterator, Optional

import click
import numpy as np

from mats_sql import __version__
from mats_sql.constants import (
    CONFIG_SNAPSHOT_FILE,
    DEFAULT_ORPO_LAMBDA,
    DEFAULT_TIMEOUT,
    DEFAULT_VES_REPEATS,
    LOG_FILE,
    METRICS_FILE,
    PROJECT_NAME,
    BackendRole,
)
from mats_sql.config import RunConfig, load_config
from mats_sql.db.samples import load_samples
from mats_sql.errors import ConfigError, MatsError
from mats_sql.evaluation import metrics
from mats_sql.evaluation.report import breakdown_report, plot_breakdown, write_breakdown
from mats_sql.logger import add_jsonl_handler, setup_logging
from mats_sql.orpo import score_pairs_file
from mats_sql.pipeline.results import read_results
from mats_sql.pipeline.runner import run_benchmark
from mats_sql.rlef.iteration import run_iteration


def _verbosity(ctx: click.Context, param: click.Parameter, value: int) -> None:
    setup_logging()
    if value == 1:
        logging.getLogger(PROJECT_NAME).setLevel(logging.INFO)
    elif value >= 2:
        logging.getLogger(PROJECT_NAME).setLevel(logging.DEBUG)


@contextmanager
def _reported_errors() -> Iterator[None]:
    try:
        yield
    except ConfigError as e:
        raise click.UsageError(str(e)) from e
    except MatsError as e:
        raise click.ClickException(str(e)) from e


def _parse_fixtures(fixtures: tuple[str, ...]) -> dict[str, Any]:
    backends: dict[str, Any] = {}
    roles = [r.value for r in BackendRole]
    for item in fixtures:
        role, sep, path = item.partition("=")
        if not sep or role not in roles:
            raise click.BadParameter(
                f"expected ROLE=PATH with ROLE in {', '.join(roles)}, got {item!r}",
                param_hint="--fixture",
            )
        backends[role] = {"kind": "scripted", "fixture": path}
    return backends


def config_options(func: Callable[..., Any]) -> Callable[..., Any]:
    """Options shared by commands that build a RunConfig."""
    options = [
        click.option(
            "-c", "--config", "config_path", type=click.Path(), help="YAML config file."
        ),
        click.option(
            "-d", "--dataset", type=click.Path(), help="Dataset (JSON or JSONL)."
        ),
        click.option("--db-root", type=click.Path(), help="Database root directory."),
        click.option("-o", "--output-dir", type=click.Path(), help="Output directory."),
        click.option(
            "-K", "--candidates", type=int, help="Candidates / actions per sample [10]."
        ),
        click.option(
            "-T", "--temperature", type=float, help="Sampling temperature [1.0]."
        ),
        click.option("--top-k-values", type=int, help="Matched values per column [2]."),
        click.option("--selection-chunk", type=int, help="Tournament chunk size [5]."),
        click.option(
            "--max-tables", type=int, help="Tables kept by schema pruning [6]."
        ),
        click.option("--max-columns", type=int, help="Columns kept per table [10]."),
        click.option("--timeout", type=float, help="Query timeout in seconds [30]."),
        click.option("--parallelism", type=int, help="Worker threads [1]."),
        click.option(
            "--ranker-scores",
            type=click.Path(),
            help="Precomputed schema scores (JSON).",
        ),
        click.option("--seed-label", type=str, help="Free-form label of the run."),
        click.option(
            "--fixture",
            "fixtures",
            multiple=True,
            metavar="ROLE=PATH",
            help="Scripted backend fixture for a role (repeatable).",
        ),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _build_config(
    config_path: Optional[str], fixtures: tuple[str, ...], **flags: Any
) -> RunConfig:
    overrides = {
        "dataset": flags.get("dataset"),
        "db_root": flags.get("db_root"),
        "output_dir": flags.get("output_dir"),
        "candidates": flags.get("candidates"),
        "temperature": flags.get("temperature"),
        "top_k_values": flags.get("top_k_values"),
        "selection_chunk": flags.get("selection_chunk"),
        "max_tables": flags.get("max_tables"),
        "max_columns_per_table": flags.get("max_columns"),
        "timeout": flags.get("timeout"),
        "parallelism": flags.get("parallelism"),
        "ranker_scores": flags.get("ranker_scores"),
        "seed_label": flags.get("seed_label"),
        "backends": _parse_fixtures(fixtures) or None,
    }
    return load_config(config_path, overrides)


@contextmanager
def _run_log(output_dir: Path) -> Iterator[None]:
    handler = add_jsonl_handler(str(output_dir / LOG_FILE))
    try:
        yield
    finally:
        logging.getLogger(PROJECT_NAME).removeHandler(handler)
        handler.close()


@click.group()
@click.version_option(__version__)
@click.option("-v", count=True, callback=_verbosity, expose_value=False)
def main() -> None:
    """Multi-agent Text2SQL: run the pipeline, build preference data, evaluate.

    Typical order:\n
    1. `run` the pipeline over a dataset.\n
    2. `eval` the results (EX, optionally TS and VES).\n
    3. `build-rlef` preference pairs for the next training iteration.\n
    4. `orpo-score` scored pairs, `plot` the breakdown.\n
    """
    pass


@main.command("run")
@config_options
@click.option(
    "--no-progress", is_flag=True, default=False, help="Hide the progress bar."
)
def run(
    config_path: Optional[str],
    fixtures: tuple[str, ...],
    no_progress: bool,
    **flags: Any,
) -> None:
    """Run the agent pipeline over every sample of a dataset."""
    with _reported_errors():
        config = _build_config(config_path, fixtures, **flags)
        Path(config.output_dir).mkdir(parents=True, exist_ok=True)
        with _run_log(Path(config.output_dir)):
            click.echo(f"Effective configuration: {config.snapshot_json()}", err=True)
            _, summary = run_benchmark(config, progress=not no_progress)
    click.echo(
        f"EX {summary.ex_text()} ({summary.matches}/{summary.with_gold}), "
        f"{summary.failures} failed of {summary.total}; outputs in {config.output_dir}"
    )


@main.command("build-rlef")
@config_options
@click.option(
    "-t",
    "--iteration",
    type=int,
    default=1,
    show_default=True,
    help="Iteration number.",
)
@click.option(
    "--no-progress", is_flag=True, default=False, help="Hide the progress bar."
)
def build_rlef(
    config_path: Optional[str],
    fixtures: tuple[str, ...],
    iteration: int,
    no_progress: bool,
    **flags: Any,
) -> None:
    """Build preference pairs for planner, validators and fix agent."""
    with _reported_errors():
        config = _build_config(config_path, fixtures, **flags)
        Path(config.output_dir).mkdir(parents=True, exist_ok=True)
        with _run_log(Path(config.output_dir)):
            click.echo(f"Effective configuration: {config.snapshot_json()}", err=True)
            record = run_iteration(config, iteration, progress=not no_progress)
    counts = ", ".join(f"{agent}={n}" for agent, n in record.pair_counts.items())
    change = (
        "n/a"
        if record.relative_change is None
        else f"{100 * record.relative_change:.1f}%"
    )
    click.echo(
        f"Iteration {record.iteration}: {record.total} pairs ({counts}); "
        f"change {change}; {'stop' if record.stop else 'continue'}"
    )


@main.command("eval")
@click.option(
    "-r", "--results", "results_path", type=click.Path(exists=True), required=True
)
@click.option("-d", "--dataset", type=click.Path(exists=True), required=True)
@click.option("--db-root", type=click.Path(exists=True, file_okay=False), required=True)
@click.option(
    "-o", "--output-dir", type=click.Path(), default=None, help="[results dir]"
)
@click.option("--ts", is_flag=True, default=False, help="Compute test-suite accuracy.")
@click.option(
    "--variants", type=click.Path(file_okay=False), help="Variant databases for --ts."
)
@click.option(
    "--ves", is_flag=True, default=False, help="Compute valid efficiency score."
)
@click.option("--repeats", type=int, default=DEFAULT_VES_REPEATS, show_default=True)
@click.option("--timeout", type=float, default=DEFAULT_TIMEOUT, show_default=True)
def evaluate(
    results_path: str,
    dataset: str,
    db_root: str,
    output_dir: Optional[str],
    ts: bool,
    variants: Optional[str],
    ves: bool,
    repeats: int,
    timeout: float,
) -> None:
    """Score a results file: EX, optionally TS and VES, plus breakdown files."""
    if ts and variants is None:
        raise click.UsageError("--ts needs --variants")
    out = Path(output_dir) if output_dir else Path(results_path).parent
    out.mkdir(parents=True, exist_ok=True)
    with _reported_errors():
        records = metrics.build_eval_records(
            read_results(results_path), load_samples(dataset), db_root, timeout
        )
        summary = metrics.EvalSummary(
            total=len(records),
            ex=metrics.execution_accuracy(records),
            ts=(
                metrics.test_suite_accuracy(
                    records, metrics.discover_variants(variants, records), timeout
                )
                if ts and variants is not None
                else None
            ),
            ves=(
                metrics.valid_efficiency_score(records, repeats, timeout)
                if ves
                else None
            ),
        )
    with open(out / METRICS_FILE, "wt", encoding="utf-8") as f:
        f.write(summary.model_dump_json(indent=2) + "\n")
    with open(out / f"eval_{CONFIG_SNAPSHOT_FILE}", "wt", encoding="utf-8") as f:
        settings = {
            "results": results_path,
            "dataset": dataset,
            "db_root": db_root,
            "ts": ts,
            "variants": variants,
            "ves": ves,
            "repeats": repeats,
            "timeout": timeout,
        }
        json.dump(settings, f, indent=2)
        f.write("\n")
    write_breakdown(breakdown_report(records), out)

    def _fmt(value: Optional[float]) -> str:
        return "n/a" if value is None else f"{value:.2f}"

    line = f"EX {_fmt(summary.ex)}"
    if ts:
        line += f", TS {_fmt(summary.ts)}"
    if ves:
        line += f", VES {_fmt(summary.ves)}"
    click.echo(f"{line} over {summary.total} samples")


@main.command("orpo-score")
@click.argument("pairs_file", type=click.Path(exists=True, dir_okay=False))
@click.option(
    "-l",
    "--lambda",
    "lam",
    type=float,
    default=None,
    help=f"Weight of the odds-ratio term, overrides the file [{DEFAULT_ORPO_LAMBDA}].",
)
@click.option(
    "--unnormalized",
    is_flag=True,
    default=False,
    help="Use the plain sequence likelihood instead of the length-normalized one.",
)
def orpo_score(pairs_file: str, lam: Optional[float], unnormalized: bool) -> None:
    """Score chosen/rejected logprob pairs with the ORPO loss.

    Prints one tab-separated line per pair (line, total, nll, or) and the means.
    """
    with _reported_errors():
        scores = score_pairs_file(pairs_file, lam, normalized=not unnormalized)
    click.echo("line\ttotal\tnll\tor")
    for s in scores:
        click.echo(f"{s.line}\t{s.total:.9f}\t{s.nll:.9f}\t{s.odds_ratio:.9f}")
    if scores:
        means = np.mean([[s.total, s.nll, s.odds_ratio] for s in scores], axis=0)
        click.echo(f"mean\t{means[0]:.9f}\t{means[1]:.9f}\t{means[2]:.9f}")


@main.command("plot")
@click.argument("breakdown_json", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output-dir", type=click.Path(), default=None, help="[json dir]")
def plot(breakdown_json: str, output_dir: Optional[str]) -> None:
    """Render bar charts of a breakdown file (needs the `plot` extra)."""
    try:
        written = plot_breakdown(
            breakdown_json, output_dir or Path(breakdown_json).parent
        )
    except ImportError as e:
        raise click.ClickException(
            "matplotlib is not installed, install mats-sql[plot]"
        ) from e
    for path in written:
        click.echo(str(path))


if __name__ == "__main__":
    main()
