import math
import os

import numpy as np
import pytest

import peridyn.cli as cli
import peridyn.io as pio
from peridyn.analysis import ConvergenceRow, observed_order
from peridyn.app import (
    ConfigError, Scenario, converge, parse_config, preset_config, run,
    serialize_config,
)
from peridyn.forces import FieldState
from peridyn.geometry import build_grid

CUSTOM_TEXT = """
[scenario]
name = custom

[geometry]
box = 0, 0 ; 1, 0.5
dx = 0.1
thickness = 0.01

[material]
E = 1.92e9
nu = 0.3333333333333333
rho = 8000

[horizon]
delta = 0.3

[forces]
law = linear

[load.1]
kind = body_force
box = 0.9, 0 ; 1, 0.5
value = 0, 2e10

[fracture]
enabled = false

[time]
dt = 1e-5
n_steps = 8

[mts]
scheme = mts
order = 4
K = 2
fine_box.1 = 0.6, 0 ; 1, 0.5

[output]
directory = out
cadence = 4
formats = vtk,csv

[analysis]
error_component = y
"""


class TestParseConfig:
    def test_custom_text_parses(self):
        cfg = parse_config(CUSTOM_TEXT)
        assert cfg.geometry.dx == 0.1
        assert cfg.mts.K == 2
        assert cfg.loads[0].value == (0.0, 2e10)
        assert cfg.mts.fine_boxes == [((0.6, 0.0), (1.0, 0.5))]

    def test_parses_from_path(self, tmp_path):
        path = tmp_path / "case.cfg"
        path.write_text(CUSTOM_TEXT)
        cfg = parse_config(str(path))
        assert cfg.time.n_steps == 8

    def test_preset_plate2d_full_scale_values(self):
        cfg = preset_config("plate2d", paper_scale=True)
        assert cfg.material.E == 1.92e11
        assert cfg.material.nu == pytest.approx(1 / 3)
        assert cfg.material.rho == 8000
        assert cfg.delta == pytest.approx(0.03)
        cloud = build_grid((cfg.geometry.box_min, cfg.geometry.box_max),
                           cfg.geometry.dx, cfg.geometry.thickness)
        assert cloud.n_points == 100 * 50
        # b_p = p0 W / d = 2e8 * 1 / 0.01
        assert cfg.loads[0].value[1] == pytest.approx(2e10)

    def test_preset_block3d_full_scale_values(self):
        cfg = preset_config("block3d", paper_scale=True)
        assert cfg.material.E == 2.0e11  # printed as 2.0e5 MPa
        assert cfg.material.nu == 0.25
        cloud = build_grid((cfg.geometry.box_min, cfg.geometry.box_max),
                           cfg.geometry.dx)
        assert cloud.n_points == 100 * 30 * 30
        # loaded layer thickness d = 0.01 m
        assert cfg.loads[0].box[0][0] == pytest.approx(0.99)

    def test_preset_crack2d_pins(self):
        cfg = preset_config("crack2d")
        assert cfg.fracture.enabled and cfg.fracture.s0 == 0.01
        assert cfg.fracture.precrack == ((0.02, 0.025), (0.03, 0.025))
        values = sorted(load.value[1] for load in cfg.loads)
        assert values == [-20.0, 20.0]

    def test_wrong_poisson_rejected(self):
        text = CUSTOM_TEXT.replace("nu = 0.3333333333333333", "nu = 0.3")
        with pytest.raises(ConfigError, match="bond-based"):
            parse_config(text)

    def test_unknown_key_and_section_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config(CUSTOM_TEXT + "\n[material]\nshear = 1\n"
                         .replace("[material]\n", ""))
        with pytest.raises(ConfigError, match="unknown section"):
            parse_config(CUSTOM_TEXT + "\n[extras]\nfoo = 1\n")

    def test_syntax_error_carries_line(self):
        bad = CUSTOM_TEXT.replace("dx = 0.1", "dx 0.1")
        with pytest.raises(ConfigError, match="line"):
            parse_config(bad)

    def test_all_violations_reported_together(self):
        text = CUSTOM_TEXT.replace("dx = 0.1", "dx = -1") \
                          .replace("law = linear", "law = magic") \
                          .replace("K = 2", "K = 0")
        with pytest.raises(ConfigError) as err:
            parse_config(text)
        msg = str(err.value)
        assert "geometry.dx" in msg and "forces.law" in msg and "mts.K" in msg

    def test_cadence_must_divide_steps(self):
        text = CUSTOM_TEXT.replace("cadence = 4", "cadence = 3")
        with pytest.raises(ConfigError, match="cadence"):
            parse_config(text)

    def test_fine_box_outside_geometry(self):
        text = CUSTOM_TEXT.replace("fine_box.1 = 0.6, 0 ; 1, 0.5",
                                   "fine_box.1 = 0.6, 0 ; 2, 0.5")
        with pytest.raises(ConfigError, match="fine_box"):
            parse_config(text)

    def test_serialize_round_trip_idempotent(self):
        once = serialize_config(parse_config(CUSTOM_TEXT))
        twice = serialize_config(parse_config(once))
        assert once == twice

    def test_preset_round_trip(self):
        for name in ("plate2d", "block3d", "crack2d"):
            cfg = preset_config(name)
            text = serialize_config(cfg)
            assert serialize_config(parse_config(text)) == text


class TestVtkWriter:
    def parse_vtk(self, path):
        with open(path) as fp:
            tokens = fp.read().split("\n")
        arrays = {}
        i = 0
        n = None
        while i < len(tokens):
            line = tokens[i]
            if line.startswith("POINTS"):
                n = int(line.split()[1])
                arrays["points"] = [list(map(float, tokens[i + 1 + k].split()))
                                    for k in range(n)]
                i += n
            elif line.startswith("VECTORS"):
                name = line.split()[1]
                arrays[name] = [list(map(float, tokens[i + 1 + k].split()))
                                for k in range(n)]
                i += n
            elif line.startswith("SCALARS"):
                name = line.split()[1]
                arrays[name] = [float(tokens[i + 2 + k]) for k in range(n)]
                i += n + 1
            i += 1
        return {k: np.array(v) for k, v in arrays.items()}

    def test_single_point_structure(self, tmp_path):
        cloud = build_grid(((0, 0), (1, 1)), 1.0, thickness=1.0)
        state = FieldState(u=np.array([[0.25, -1.5]]),
                           v=np.array([[2.0, 0.125]]), t=0.0)
        path = tmp_path / "one.vtk"
        pio.write_vtk(cloud, state, np.array([0.5]), path)
        text = path.read_text()
        assert "POINTS 1 double" in text
        for name in ("displacement", "velocity"):
            assert f"VECTORS {name} double" in text
        assert "SCALARS damage double 1" in text

    def test_round_trip_bit_exact(self, tmp_path, rng):
        cloud = build_grid(((0, 0), (1, 0.5)), 0.125, thickness=0.01)
        n = cloud.n_points
        state = FieldState(u=rng.normal(size=(n, 2)) * 1e-7,
                           v=rng.normal(size=(n, 2)) * 13.7, t=0.0)
        damage = rng.uniform(0, 1, size=n)
        path = tmp_path / "snap.vtk"
        pio.write_vtk(cloud, state, damage, path)
        arrays = self.parse_vtk(path)
        assert np.array_equal(arrays["points"][:, :2], cloud.positions)
        assert np.array_equal(arrays["displacement"][:, :2], state.u)
        assert np.array_equal(arrays["velocity"][:, :2], state.v)
        assert np.array_equal(arrays["damage"], damage)

    def test_crack_snapshot_damage_in_unit_interval(self, tmp_path):
        cfg = preset_config("crack2d")
        import dataclasses
        cfg = dataclasses.replace(
            cfg, time=dataclasses.replace(cfg.time, n_steps=0),
            output=dataclasses.replace(cfg.output, cadence=0))
        traj, _, paths = run(cfg, out_dir=str(tmp_path))
        arrays = self.parse_vtk(paths[0])
        assert np.all(arrays["damage"] >= 0.0)
        assert np.all(arrays["damage"] <= 1.0)
        assert arrays["damage"].max() > 0  # pre-crack visible

    def test_crack_vtk_series_damage_grows_monotonically(self, tmp_path):
        import dataclasses
        cfg = preset_config("crack2d")
        cfg = dataclasses.replace(
            cfg, time=dataclasses.replace(cfg.time, n_steps=260),
            output=dataclasses.replace(cfg.output, cadence=130))
        _, _, paths = run(cfg, out_dir=str(tmp_path))
        snaps = sorted(p for p in paths if p.endswith(".vtk"))
        assert len(snaps) == 3
        totals = [self.parse_vtk(p)["damage"].sum() for p in snaps]
        assert all(b >= a for a, b in zip(totals, totals[1:]))
        assert totals[-1] > totals[0]  # the crack actually propagated


class TestCsvWriter:
    def test_empty_rows_header_only(self, tmp_path):
        path = tmp_path / "empty.csv"
        pio.write_csv([], path)
        assert path.read_text() == "dt,K,scope,error,CR\n"

    def test_single_row(self, tmp_path):
        path = tmp_path / "one.csv"
        pio.write_csv([ConvergenceRow(dt=1e-5, K=2, scope="all",
                                      error=3.2e-9, cr=None)], path)
        lines = path.read_text().strip().split("\n")
        assert len(lines) == 2
        assert lines[1] == "1.00000e-05,2,all,3.20000e-09,"

    def test_parse_recompute_round_trip(self, tmp_path):
        dts = [4e-5, 2e-5, 1e-5]
        errors = [5.31e-7, 6.72e-8, 8.41e-9]
        crs = [None] + observed_order(errors, dts)
        rows = [ConvergenceRow(dt=dt, K=1, scope="all", error=e, cr=cr)
                for dt, e, cr in zip(dts, errors, crs)]
        path = tmp_path / "sweep.csv"
        pio.write_csv(rows, path)
        parsed = pio.read_csv(path)
        recomputed = observed_order([r.error for r in parsed],
                                    [r.dt for r in parsed])
        for got, want in zip(recomputed, [r.cr for r in parsed[1:]]):
            assert got == pytest.approx(want, abs=2e-5)


class TestRunAndCli:
    def test_zero_steps_writes_initial_snapshot(self, mini_config, tmp_path):
        cfg = mini_config(n_steps=0)
        traj, timing, paths = run(cfg, out_dir=str(tmp_path))
        assert len(traj.states) == 1
        assert [os.path.basename(p) for p in paths] == ["snapshot_000000.vtk"]

    def test_run_writes_cadenced_snapshots_and_timing(self, mini_config,
                                                      tmp_path):
        cfg = mini_config(n_steps=8, cadence=4)
        traj, timing, paths = run(cfg, out_dir=str(tmp_path))
        names = sorted(os.path.basename(p) for p in paths)
        assert names == ["snapshot_000000.vtk", "snapshot_000004.vtk",
                         "snapshot_000008.vtk", "timing.txt"]
        assert timing.seconds("coarse") > 0

    def test_cli_validate_ok(self, tmp_path):
        path = tmp_path / "ok.cfg"
        path.write_text(CUSTOM_TEXT)
        assert cli.main(["validate", "--config", str(path)]) == 0

    def test_cli_config_error_exit_2(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text(CUSTOM_TEXT.replace("law = linear", "law = magic"))
        assert cli.main(["validate", "--config", str(path)]) == 2
        assert "forces.law" in capsys.readouterr().err

    def test_cli_unknown_preset_exit_2(self):
        assert cli.main(["validate", "--config", "nosuchpreset.cfg"]) == 2

    def test_cli_preset_name_and_paper_scale(self, capsys):
        assert cli.main(["validate", "--config", "plate2d"]) == 0
        desk = capsys.readouterr().out
        assert "1920000000.0" in desk  # softened desk modulus
        assert cli.main(["validate", "--config", "plate2d",
                         "--paper-scale"]) == 0
        full = capsys.readouterr().out
        assert "192000000000.0" in full

    def test_cli_run_preset_smoke(self, tmp_path, mini_config):
        path = tmp_path / "mini.cfg"
        path.write_text(serialize_config(mini_config(n_steps=4, cadence=0)))
        code = cli.main(["run", "--config", str(path),
                         "--out", str(tmp_path / "out")])
        assert code == 0
        assert (tmp_path / "out" / "snapshot_000004.vtk").exists()

    def test_cli_instability_exit_3(self, tmp_path, mini_config):
        cfg = mini_config(n_steps=40, dt=1.0, scheme="upd")
        path = tmp_path / "boom.cfg"
        path.write_text(serialize_config(cfg))
        code = cli.main(["run", "--config", str(path),
                         "--out", str(tmp_path / "out")])
        assert code == 3

    def test_cli_io_error_exit_4(self, tmp_path, mini_config):
        blocker = tmp_path / "blocker"
        blocker.write_text("a file, not a directory")
        path = tmp_path / "mini.cfg"
        path.write_text(serialize_config(mini_config(n_steps=4)))
        code = cli.main(["run", "--config", str(path),
                         "--out", str(blocker / "sub")])
        assert code == 4

    def test_cli_converge_deterministic_bytes(self, tmp_path, mini_config):
        path = tmp_path / "mini.cfg"
        path.write_text(serialize_config(mini_config(n_steps=8)))
        outputs = []
        for k in range(2):
            out = tmp_path / f"out{k}"
            code = cli.main(["converge", "--config", str(path),
                             "--dt-list", "1e-5,0.5e-5", "--k-list", "1,2",
                             "--out", str(out)])
            assert code == 0
            outputs.append((out / "convergence.csv").read_bytes())
        assert outputs[0] == outputs[1]

    def test_cli_compare_smoke(self, tmp_path, mini_config):
        path = tmp_path / "mini.cfg"
        path.write_text(serialize_config(mini_config(n_steps=6)))
        out = tmp_path / "cmp"
        code = cli.main(["compare", "--config", str(path), "--K", "2",
                         "--out", str(out)])
        assert code == 0
        text = (out / "compare.txt").read_text()
        assert "ratio," in text

    def test_converge_emits_scoped_rows(self, mini_config, tmp_path):
        cfg = mini_config(n_steps=8)
        out_csv = tmp_path / "table.csv"
        rows = converge(cfg, [1e-5, 0.5e-5], [1, 2], out_csv=str(out_csv))
        scopes = {(r.K, r.scope) for r in rows}
        assert scopes == {(1, "all"), (1, "coarse"), (1, "fine"),
                          (2, "all"), (2, "coarse"), (2, "fine")}
        k1_rows = [r for r in rows if r.K == 1 and r.scope == "all"]
        assert k1_rows[0].cr is None and k1_rows[1].cr is not None
        assert out_csv.exists()

    def test_converge_k1_vs_reference_dt_is_zero(self, mini_config):
        cfg = mini_config(n_steps=8)
        rows = converge(cfg, [1e-5, 0.5e-5], [1, 2], reference_dt=0.5e-5)
        zero_rows = [r for r in rows if r.K == 1 and r.dt == 0.5e-5]
        assert len(zero_rows) == 3
        assert all(r.error == 0.0 for r in zero_rows)
