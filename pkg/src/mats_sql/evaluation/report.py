"""EX broken down by SQL characteristics of the gold query and by difficulty."""

import logging
from pathlib import Path
from typing import Sequence

import pandas as pd

from mats_sql.constants import BREAKDOWN_JSON, BREAKDOWN_TSV
from mats_sql.evaluation.metrics import EvalRecord

logger = logging.getLogger(__name__)

BREAKDOWN_COLUMNS = ["axis", "bucket", "count", "matches", "ex"]


def _connectors(n: int) -> str:
    return "0" if n == 0 else "1" if n == 1 else "2+"


def _record_frame(records: Sequence[EvalRecord]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "sample_id": r.sample_id,
                "match": r.match,
                "join": "join" if r.traits.has_join else "no-join",
                "subquery": "subquery" if r.traits.has_subquery else "no-subquery",
                "order_by": (
                    "order-by" if r.traits.has_order_by_outer else "no-order-by"
                ),
                "logical_connectors": _connectors(r.traits.logical_connectors),
                "difficulty": r.difficulty,
            }
            for r in records
        ]
    )


def breakdown_report(records: Sequence[EvalRecord]) -> pd.DataFrame:
    """Per axis and bucket: sample count, matches and EX in percent.

    Axes are join, subquery, order_by and logical_connectors, plus
    difficulty when the dataset provides labels. Within an axis the bucket
    counts add up to the number of records (difficulty: labelled records).
    """
    if not records:
        return pd.DataFrame(columns=BREAKDOWN_COLUMNS)
    df = _record_frame(records)
    axes = ["join", "subquery", "order_by", "logical_connectors"]
    if df["difficulty"].notna().any():
        axes.append("difficulty")
    frames = []
    for axis in axes:
        grouped = (
            df.dropna(subset=[axis])
            .groupby(axis)["match"]
            .agg(count="size", matches="sum")
            .reset_index()
            .rename(columns={axis: "bucket"})
        )
        grouped.insert(0, "axis", axis)
        frames.append(grouped)
    report = pd.concat(frames, ignore_index=True)
    report["matches"] = report["matches"].astype(int)
    report["ex"] = 100.0 * report["matches"] / report["count"]
    return report[BREAKDOWN_COLUMNS]


def write_breakdown(report: pd.DataFrame, output_dir: str | Path) -> tuple[Path, Path]:
    """Write the breakdown as a tab-separated table and a plot-ready JSON file."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    tsv, json_path = output_dir / BREAKDOWN_TSV, output_dir / BREAKDOWN_JSON
    report.to_csv(tsv, sep="\t", index=False, float_format="%.2f")
    report.to_json(json_path, orient="records", indent=2)
    logger.info("Wrote breakdown to %s and %s", tsv, json_path)
    return tsv, json_path


def plot_breakdown(json_path: str | Path, output_dir: str | Path) -> list[Path]:
    """Render one bar chart per axis of a breakdown JSON file.

    Needs the ``plot`` extra (matplotlib).

    Returns:
        list[Path]: written PNG files.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    report = pd.read_json(json_path, orient="records", dtype={"bucket": str})
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for axis, rows in report.groupby("axis", sort=False):
        fig, ax = plt.subplots(figsize=(4.8, 3.2), constrained_layout=True)
        ax.bar(rows["bucket"].astype(str), rows["ex"])
        for x, (ex, count) in enumerate(zip(rows["ex"], rows["count"])):
            ax.annotate(f"n={count}", (x, ex), ha="center", va="bottom", fontsize=8)
        ax.set_title(str(axis))
        ax.set_ylabel("EX (%)")
        ax.set_ylim(0.0, 105.0)
        ax.grid(True, axis="y", alpha=0.3)
        path = output_dir / f"breakdown_{axis}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    logger.info("Wrote %d breakdown plots to %s", len(written), output_dir)
    return written
