"""Result tracker for sweep rows, CSV tables and the JSON summary report."""

import json
import logging
import math
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, TypedDict, Union

import pandas as pd

logger = logging.getLogger(__name__)

RESULT_COLUMNS = (
    "config_hash",
    "seed",
    "realization",
    "scheme",
    "axis",
    "axis_value",
    "status",
    "scnr_db",
    "min_sinr_db",
    "max_eve_sinr_db",
    "sinr_db",
    "eve_sinr_db",
    "power_w",
    "iterations",
    "converged",
)
AGGREGATE_COLUMNS = ("axis", "axis_value", "scheme", "mean_scnr_db", "std_scnr_db", "n_ok", "n_failed")
FLOAT_FORMAT = "%.10g"


class ResultRecord(TypedDict):
    """One attempted realization; failures carry ``status != "ok"`` and NaN metrics."""

    config_hash: str
    seed: int
    realization: int
    scheme: str
    axis: str
    axis_value: float
    status: str
    scnr_db: float
    sinr_db: List[float]
    eve_sinr_db: List[float]
    power_w: float
    iterations: int
    converged: bool
    wall_time_s: float


def failure_record(
    config_hash: str,
    seed: int,
    realization: int,
    scheme: str,
    axis: str,
    axis_value: float,
    status: str,
    wall_time_s: float = 0.0,
) -> ResultRecord:
    return {
        "config_hash": config_hash,
        "seed": seed,
        "realization": realization,
        "scheme": scheme,
        "axis": axis,
        "axis_value": axis_value,
        "status": status,
        "scnr_db": math.nan,
        "sinr_db": [],
        "eve_sinr_db": [],
        "power_w": math.nan,
        "iterations": 0,
        "converged": False,
        "wall_time_s": wall_time_s,
    }


def _join(values: List[float]) -> str:
    return ";".join(FLOAT_FORMAT % v for v in values)


class ResultTracker:
    """Collects result rows in submission order and writes them out."""

    def __init__(self) -> None:
        self._results: List[ResultRecord] = []

    def record(self, result: ResultRecord) -> None:
        self._results.append(result)
        if result["status"] == "ok":
            logger.debug(
                f"[RESULTS] {result['scheme']} {result['axis']}={result['axis_value']} "
                f"r{result['realization']}: {result['scnr_db']:.3f} dB"
            )
        else:
            logger.warning(
                f"[RESULTS] {result['scheme']} {result['axis']}={result['axis_value']} "
                f"r{result['realization']} failed: {result['status']}"
            )

    def get_results(self) -> List[ResultRecord]:
        return self._results.copy()

    def get_successful_results(self) -> List[ResultRecord]:
        return [r for r in self._results if r["status"] == "ok"]

    def clear_results(self) -> None:
        self._results.clear()

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for r in self._results:
            rows.append(
                {
                    **{column: r[column] for column in RESULT_COLUMNS if column in r},  # type: ignore[literal-required]
                    "min_sinr_db": min(r["sinr_db"], default=math.nan),
                    "max_eve_sinr_db": max(r["eve_sinr_db"], default=math.nan),
                    "sinr_db": _join(r["sinr_db"]),
                    "eve_sinr_db": _join(r["eve_sinr_db"]),
                }
            )
        return pd.DataFrame(rows, columns=list(RESULT_COLUMNS))

    def aggregate(self) -> pd.DataFrame:
        """Mean/std of SCNR in dB per (axis, axis_value, scheme) over successful realizations."""
        frame = self.to_frame()
        if frame.empty:
            return pd.DataFrame(columns=list(AGGREGATE_COLUMNS))
        frame["ok"] = frame["status"] == "ok"
        frame["ok_scnr_db"] = frame["scnr_db"].where(frame["ok"])
        grouped = frame.groupby(["axis", "axis_value", "scheme"], sort=False, dropna=False)
        summary = grouped.agg(
            mean_scnr_db=("ok_scnr_db", "mean"),
            std_scnr_db=("ok_scnr_db", "std"),
            n_ok=("ok", "sum"),
            n_failed=("ok", lambda s: int((~s).sum())),
        ).reset_index()
        return summary[list(AGGREGATE_COLUMNS)]

    def export_results_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False, float_format=FLOAT_FORMAT)
        logger.info(f"[RESULTS] {len(self._results)} rows exported to {path}")

    def export_aggregate_csv(self, path: Union[str, Path]) -> None:
        self.aggregate().to_csv(path, index=False, float_format=FLOAT_FORMAT)
        logger.info(f"[RESULTS] Aggregate exported to {path}")

    def export_summary_report(self, output_file: Union[str, Path] = "cra_isac_results.json") -> None:
        with open(output_file, "w", encoding="utf-8") as f:
            json.dump(
                {
                    "records": [_json_safe(r) for r in self._results],
                    "summary": {
                        "total": len(self._results),
                        "successful": len(self.get_successful_results()),
                        "generated_at": datetime.now().isoformat(),
                    },
                },
                f,
                indent=2,
            )
        logger.info(f"[RESULTS] Summary report exported to {output_file}")


def _json_safe(record: ResultRecord) -> Dict[str, Any]:
    """NaN and ±inf become None so the report is strict JSON."""

    def clean(value: Any) -> Any:
        if isinstance(value, float) and not math.isfinite(value):
            return None
        if isinstance(value, list):
            return [clean(v) for v in value]
        return value

    return {key: clean(value) for key, value in record.items()}


_result_tracker: Optional[ResultTracker] = None


def get_result_tracker() -> ResultTracker:
    """Get the global ResultTracker instance."""
    global _result_tracker
    if _result_tracker is None:
        _result_tracker = ResultTracker()
    return _result_tracker


def record_result(result: ResultRecord) -> None:
    get_result_tracker().record(result)


def export_results_report(output_file: Union[str, Path] = "cra_isac_results.json") -> None:
    """Export the global tracker's summary report to JSON."""
    get_result_tracker().export_summary_report(output_file)
