from .basins import DEFAULT_BOXES, basin_masks
from .eof import EOFResult, compute_anomalies, eof, project, reconstruct
from .metrics import (MetricReport, compute_metrics, correlation_map, nrmse_map, pc_compare,
                      reports_to_csv, reports_to_json)

__all__ = [
    "DEFAULT_BOXES", "basin_masks", "EOFResult", "compute_anomalies", "eof", "project",
    "reconstruct", "MetricReport", "compute_metrics", "correlation_map", "nrmse_map",
    "pc_compare", "reports_to_csv", "reports_to_json",
]
