"""CSV tables, binary snapshots and run metadata"""

import csv
import json

import numpy as np

from kwk import __version__
from kwk.diagnostics import energy_dissipation
from kwk.experiments import DataMatrix
from kwk.exporters import ResultExporter
from kwk.grid_ops import grid_operators
from kwk.solver import build_simulation


def _read(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


def test_traces_and_energy_tables(make_config, tmp_path):
    config = make_config()
    sim, initial = build_simulation(config)
    traj = sim.run(initial, config.probes)
    exporter = ResultExporter(tmp_path)
    rows = _read(exporter.export_traces(traj))
    assert rows[0] == ["t [s]", "p[3, 3] [Pa]", "p[6, 8] [Pa]"]
    assert len(rows) == 1 + 10
    assert float(rows[-1][0]) == traj.trace_times[-1]
    assert float(rows[1][2]) == traj.traces[1, 0]

    energy = _read(exporter.export_energy(energy_dissipation(traj, sim)))
    assert energy[0][:3] == ["t [s]", "E [1]", "D [1]"]
    assert len(energy) == 1 + 11
    assert exporter.written[-1].name == "energy.csv"


def test_data_matrix_and_spectrum(tmp_path):
    matrix = DataMatrix(np.array([[1.0, 2.0], [3.0, 4.0]]), [("S0", 1), ("S0+S2", 3)], np.array([0.5, 1.0]))
    exporter = ResultExporter(tmp_path)
    rows = _read(exporter.export_data_matrix(matrix, "traces_linear.csv"))
    assert rows[0] == ["source_set", "detector", "p@0.5s [Pa]", "p@1s [Pa]"]
    assert rows[2][:2] == ["S0+S2", "3"]

    spectrum = _read(exporter.export_spectrum(np.array([1.0, 0.25]), "sv.csv", scale=8.0))
    assert spectrum[0] == ["index [1]", "value [Pa]", "normalized [1]"]
    assert spectrum[2] == ["2", "2", "0.25"]


def test_snapshot_sidecars(make_config, tmp_path):
    config = make_config()
    exporter = ResultExporter(tmp_path / "snap")
    F = grid_operators(config.grid).n_faces
    u = np.arange(F, dtype=float)
    path = exporter.export_snapshot(config.grid, "u", u, 0.5, layout="faces")
    np.testing.assert_array_equal(np.fromfile(path, dtype="<f8"), u)
    sidecar = json.loads((tmp_path / "snap" / "u.json").read_text())
    assert sidecar["count"] == F
    assert sidecar["face_dims"] == [[11, 12], [12, 11]]
    assert sidecar["layout"] == "faces" and sidecar["order"] == "C"

    exporter.export_snapshot(config.grid, "sigma", np.zeros(config.grid.n_points), 0.5)
    cells = json.loads((tmp_path / "snap" / "sigma.json").read_text())
    assert "face_dims" not in cells
    assert cells["dims"] == [12, 12]


def test_metadata(tmp_path):
    exporter = ResultExporter(tmp_path)
    meta = json.loads(exporter.export_metadata("simulate", {"elapsed_s": 1.5}).read_text())
    assert meta["version"] == __version__
    assert meta["command"] == "simulate"
    assert meta["elapsed_s"] == 1.5
    assert "generated_at" in meta
