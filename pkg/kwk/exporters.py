"""
Result Export Module

CSV tables with unit-bearing headers, binary field snapshots with JSON
sidecars, and the run metadata file (the only place timestamps appear)
"""

import csv
import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from . import __version__
from .diagnostics import EnergyReport
from .experiments import DataMatrix, SweepReport
from .models import Grid
from .solver import Trajectory


def _num(v) -> str:
    return f"{float(v):.17g}"


class ResultExporter:
    """Writes run artifacts under one output directory"""

    def __init__(self, output_dir):
        self.output_dir = Path(output_dir)
        self.written: List[Path] = []

    def _path(self, name: str) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.output_dir / name
        self.written.append(path)
        return path

    def _write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        path = self._path(name)
        with open(path, 'w', newline='', encoding='utf-8') as csvfile:
            writer = csv.writer(csvfile, lineterminator='\n')
            writer.writerow(header)
            for row in rows:
                writer.writerow([v if isinstance(v, str) else _num(v) for v in row])
        return path

    def export_traces(self, trajectory: Trajectory, name: str = "traces.csv") -> Path:
        """One row per sample time, one column per probe cell"""
        header = ["t [s]"] + [f"p{list(c)} [Pa]" for c in trajectory.probe_cells]
        rows = ([t] + list(trajectory.traces[:, k]) for k, t in enumerate(trajectory.trace_times))
        return self._write_csv(name, header, rows)

    def export_energy(self, report: EnergyReport, name: str = "energy.csv") -> Path:
        return self._write_csv(name, report.COLUMNS, report.rows())

    def export_data_matrix(self, matrix: DataMatrix, name: str) -> Path:
        """Labelled rows: source set, detector element, then the time samples"""
        header = ["source_set", "detector"] + [f"p@{_num(t)}s [Pa]" for t in matrix.times]
        rows = ([label, str(det)] + list(row) for (label, det), row in zip(matrix.labels, matrix.rows))
        return self._write_csv(name, header, rows)

    def export_spectrum(self, spectrum: np.ndarray, name: str, scale: Optional[float] = None) -> Path:
        """index, singular value, normalized singular value"""
        scale = 1.0 if scale is None else scale
        header = ["index [1]", "value [Pa]", "normalized [1]"]
        rows = ([str(i + 1), s * scale, s] for i, s in enumerate(spectrum))
        return self._write_csv(name, header, rows)

    def export_sweep(self, report: SweepReport, name: str = "sweep_report.csv") -> Path:
        return self._write_csv(name, report.COLUMNS, report.rows())

    def export_snapshot(self, grid: Grid, name: str, field: np.ndarray, time: float,
                        layout: str = "cells") -> Path:
        """Little-endian float64, row-major, with a JSON sidecar"""
        data = np.ascontiguousarray(field, dtype="<f8")
        bin_path = self._path(f"{name}.bin")
        bin_path.write_bytes(data.tobytes())
        sidecar: Dict[str, Any] = {
            "field": name,
            "layout": layout,
            "dims": list(grid.dims),
            "spacing": list(grid.spacing),
            "time": float(time),
            "dtype": "<f8",
            "order": "C",
            "count": int(data.size),
        }
        if layout == "faces":
            sidecar["face_dims"] = [[n - (k == axis) for k, n in enumerate(grid.dims)]
                                    for axis in range(grid.ndim)]
        json_path = self._path(f"{name}.json")
        json_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return bin_path

    def export_metadata(self, command: str, extra: Optional[Dict[str, Any]] = None) -> Path:
        metadata = {
            "tool": "kwk-galerkin",
            "version": __version__,
            "command": command,
            "generated_at": datetime.now().isoformat(),
        }
        metadata.update(extra or {})
        path = self._path("metadata.json")
        path.write_text(json.dumps(metadata, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
        return path
