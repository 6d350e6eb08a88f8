"""
Plot data export
CSV tables behind the alpha/beta step plots and the beta-hat envelopes
"""
import csv
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import structlog

from hgfc.core.single_machine import AlphaBetaPlots, EnvelopeSnapshot
from hgfc.models.schemas import SUMMARY_COLUMNS, SummaryRow

logger = structlog.get_logger()

PathLike = Union[str, Path]

SEGMENT_COLUMNS = ["subjob", "job", "block", "start", "end", "split_height", "height", "decrease"]
BETA_COLUMNS = ["t", "split_beta", "beta"]
ENVELOPE_COLUMNS = ["job", "r", "t", "before", "after"]
CURVE_COLUMNS = ["machine", "t", "beta_hat"]
HRDF_COLUMNS = ["machine", "t", "accrual", "remaining"]


def _write(path: PathLike, columns: List[str], rows: Iterable[Dict[str, Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
            count += 1
    logger.debug("plot_data_written", path=str(path), rows=count)
    return path


class PlotDataService:
    """
    Service for exporting plot data
    """

    @staticmethod
    def segment_rows(split: AlphaBetaPlots, converted: Optional[AlphaBetaPlots] = None) -> List[Dict[str, Any]]:
        """One row per step: split height, converted height and its drop"""
        final = converted or split
        return [
            {
                "subjob": s.index,
                "job": s.parent,
                "block": s.block,
                "start": s.start,
                "end": s.end,
                "split_height": split.heights[s.index],
                "height": final.heights[s.index],
                "decrease": split.heights[s.index] - final.heights[s.index],
            }
            for s in split.split.subjobs
        ]

    @staticmethod
    def beta_rows(
        split: AlphaBetaPlots,
        converted: Optional[AlphaBetaPlots] = None,
        samples: int = 5
    ) -> List[Dict[str, Any]]:
        """
        Both beta curves sampled across each run

        The right end of a run is sampled as its left limit, so the step
        shape survives in the table.
        """
        final = converted or split
        rows = []
        for s in split.split.subjobs:
            for t in np.linspace(s.start, s.end, samples):
                t = float(t)
                rows.append({
                    "t": t,
                    "split_beta": split.beta_on(s.index, t),
                    "beta": final.beta_on(s.index, t),
                })
        return rows

    @staticmethod
    def envelope_rows(envelopes: Sequence[EnvelopeSnapshot]) -> List[Dict[str, Any]]:
        return [
            {"job": e.job, "r": e.r, "t": t, "before": before, "after": after}
            for e in envelopes
            for t, before, after in zip(e.times, e.before, e.after)
        ]

    @staticmethod
    def write_alpha_beta(
        directory: PathLike,
        instance_id: str,
        split: AlphaBetaPlots,
        converted: Optional[AlphaBetaPlots] = None
    ) -> List[Path]:
        """
        Write the step segments and beta samples of one HDF run

        Returns:
            Paths of the segment and beta tables
        """
        directory = Path(directory)
        return [
            _write(directory / f"{instance_id}.segments.csv", SEGMENT_COLUMNS,
                   PlotDataService.segment_rows(split, converted)),
            _write(directory / f"{instance_id}.beta.csv", BETA_COLUMNS,
                   PlotDataService.beta_rows(split, converted)),
        ]

    @staticmethod
    def write_envelopes(directory: PathLike, instance_id: str, envelopes: Sequence[EnvelopeSnapshot]) -> Path:
        return _write(
            Path(directory) / f"{instance_id}.envelopes.csv",
            ENVELOPE_COLUMNS,
            PlotDataService.envelope_rows(envelopes)
        )

    @staticmethod
    def write_beta_hat(directory: PathLike, instance_id: str, rows: Iterable[Dict[str, Any]]) -> Path:
        """Final beta-hat per machine and slot boundary"""
        return _write(Path(directory) / f"{instance_id}.beta_hat.csv", CURVE_COLUMNS, rows)

    @staticmethod
    def write_hrdf_curve(directory: PathLike, instance_id: str, rows: Iterable[Dict[str, Any]]) -> Path:
        return _write(Path(directory) / f"{instance_id}.hrdf_beta.csv", HRDF_COLUMNS, rows)

    @staticmethod
    def write_summary(path: PathLike, rows: Sequence[SummaryRow]) -> Path:
        """
        Write the summary table, one row per trial in trial order
        """
        path = _write(path, SUMMARY_COLUMNS, (row.to_csv_row() for row in rows))
        logger.info("summary_written", path=str(path), rows=len(rows))
        return path


# Global instance
plot_data = PlotDataService()
