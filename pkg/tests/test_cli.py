"""End-to-end subcommand tests driving the CLI in-process."""
import json
import subprocess
import sys

import numpy as np
import pytest

from wombler import archive
from wombler.cli import main, parse_grid
from conftest import synth_dataset


def read_rows(path):
    lines = path.read_text().splitlines()
    return lines[0], lines[1:]


class TestParseGrid:
    def test_valid(self):
        spec = parse_grid("-1,2,0,4,5,9")
        assert (spec.xmin, spec.xmax, spec.ymin, spec.ymax) == (-1.0, 2.0, 0.0, 4.0)
        assert (spec.nx, spec.ny) == (5, 9)

    def test_wrong_arity(self):
        import argparse

        with pytest.raises(argparse.ArgumentTypeError, match="xmin,xmax"):
            parse_grid("0,1,0,1,4")

    def test_bad_bounds(self):
        import argparse

        with pytest.raises(argparse.ArgumentTypeError):
            parse_grid("1,0,0,1,4,4")


class TestFit:
    def test_fit_prints_summaries_and_retains(self, tmp_path, capsys):
        data_csv = tmp_path / "d.csv"
        synth_dataset(data_csv, n=10, seed=2)
        rc = main(
            [
                "fit",
                "--input",
                str(data_csv),
                "--archive",
                str(tmp_path / "arch"),
                "--kernel",
                "matern2",
                "--iterations",
                "100",
                "--burn-in",
                "50",
                "--seed",
                "1",
            ]
        )
        out = capsys.readouterr().out
        assert rc == 0
        for name in ("sigma2", "phi", "tau2"):
            assert f"{name}: median" in out
        assert "95% CI" in out
        _, rows = read_rows(tmp_path / "arch" / archive.THETA_FILE)
        assert len(rows) == 50

    def test_archive_contents(self, fitted_archive):
        manifest = archive.load_manifest(fitted_archive)
        assert manifest["family"] == "matern52"
        assert manifest["seed"] == 11
        assert "config_digest" in manifest
        chain = archive.load_chain(fitted_archive)
        assert chain.shape == (200, 3)

    def test_missing_header_names_columns(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b,c\n1,2,3\n")
        rc = main(
            [
                "fit",
                "--input",
                str(bad),
                "--archive",
                str(tmp_path / "arch"),
                "--kernel",
                "matern1",
            ]
        )
        assert rc == 2
        assert "x,y,val" in capsys.readouterr().err

    def test_malformed_row_reports_line(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("x,y,val\n1,2,3\n0,1,2\n4,oops,6\n")
        rc = main(
            [
                "fit",
                "--input",
                str(bad),
                "--archive",
                str(tmp_path / "arch"),
                "--kernel",
                "matern1",
            ]
        )
        assert rc == 2
        assert "line 4" in capsys.readouterr().err

    def test_input_not_mutated(self, tmp_path):
        data_csv = tmp_path / "d.csv"
        synth_dataset(data_csv, n=10, seed=2)
        before = data_csv.read_bytes()
        main(
            [
                "fit",
                "--input",
                str(data_csv),
                "--archive",
                str(tmp_path / "arch"),
                "--kernel",
                "matern2",
                "--iterations",
                "60",
                "--burn-in",
                "30",
            ]
        )
        assert data_csv.read_bytes() == before


class TestZbeta:
    def test_draws_aligned(self, fitted_archive):
        draws = archive.load_draws(fitted_archive)
        assert draws.m == 200
        assert draws.z.shape == (200, 14)
        assert draws.beta.shape == (200, 1)

    def test_before_fit_names_fit(self, tmp_path, capsys):
        rc = main(["zbeta", "--archive", str(tmp_path / "nothing")])
        assert rc == 2
        assert "fit" in capsys.readouterr().err


class TestRates:
    def test_writes_component_csvs(self, fitted_archive, tmp_path):
        out = tmp_path / "rates"
        rc = main(
            [
                "rates",
                "--archive",
                str(fitted_archive),
                "--grid",
                "0,5,0,5,4,3",
                "--out",
                str(out),
            ]
        )
        assert rc == 0
        for comp in ("dx", "dy", "dxx", "dxy", "dyy"):
            header, rows = read_rows(out / f"rates_{comp}.csv")
            assert header == "x,y,q2.5,q50,q97.5,sig"
            assert len(rows) == 12
            assert all(r.split(",")[-1] in ("-1", "0", "1") for r in rows)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "rates"
        assert manifest["seed"] == 11
        assert "config_digest" in manifest and manifest["inputs"]

    def test_gradient_only_family_writes_two(self, gradient_only_archive, tmp_path):
        out = tmp_path / "rates"
        rc = main(
            [
                "rates",
                "--archive",
                str(gradient_only_archive),
                "--grid",
                "0,5,0,5,3,3",
                "--out",
                str(out),
            ]
        )
        assert rc == 0
        assert (out / "rates_dx.csv").exists()
        assert (out / "rates_dy.csv").exists()
        assert not (out / "rates_dxx.csv").exists()

    def test_before_zbeta_names_zbeta(self, tmp_path, capsys):
        data_csv = tmp_path / "d.csv"
        synth_dataset(data_csv, n=10, seed=3)
        arch = tmp_path / "arch"
        main(
            [
                "fit",
                "--input",
                str(data_csv),
                "--archive",
                str(arch),
                "--kernel",
                "matern2",
                "--iterations",
                "60",
                "--burn-in",
                "30",
            ]
        )
        rc = main(
            [
                "rates",
                "--archive",
                str(arch),
                "--grid",
                "0,5,0,5,3,3",
                "--out",
                str(tmp_path / "out"),
            ]
        )
        assert rc == 2
        assert "zbeta" in capsys.readouterr().err

    def test_rerun_reproduces_bytes(self, fitted_archive, tmp_path):
        args = lambda out: [
            "rates",
            "--archive",
            str(fitted_archive),
            "--grid",
            "0,5,0,5,3,3",
            "--out",
            str(out),
        ]
        assert main(args(tmp_path / "r1")) == 0
        assert main(args(tmp_path / "r2")) == 0
        for name in ("rates_dx.csv", "rates_dyy.csv", "manifest.json"):
            assert (tmp_path / "r1" / name).read_bytes() == (
                tmp_path / "r2" / name
            ).read_bytes()


class TestContour:
    def test_surface_and_contours(self, fitted_archive, tmp_path):
        out = tmp_path / "high"
        rc = main(
            [
                "contour",
                "--archive",
                str(fitted_archive),
                "--grid",
                "0,5,0,5,12,12",
                "--level",
                "1e9",
                "--out",
                str(out),
            ]
        )
        assert rc == 0
        header, rows = read_rows(out / "surface.csv")
        assert header == "x,y,z"
        assert len(rows) == 144
        assert not list(out.glob("contour_*.csv"))

        zs = np.array([float(r.split(",")[2]) for r in rows])
        mid = float(np.median(zs))
        out2 = tmp_path / "mid"
        rc = main(
            [
                "contour",
                "--archive",
                str(fitted_archive),
                "--grid",
                "0,5,0,5,12,12",
                "--level",
                str(mid),
                "--out",
                str(out2),
            ]
        )
        assert rc == 0
        curves = sorted(out2.glob("contour_*.csv"))
        assert curves
        header, rows = read_rows(curves[0])
        assert header == "x,y"
        assert len(rows) >= 2


class TestWomble:
    CURVE = [[0.5, 0.5], [2.0, 1.5], [3.5, 3.0]]

    def write_curve(self, path):
        archive.write_curve_csv(path, np.array(self.CURVE))
        return path

    def run(self, arch, curve, out, seed=None, measures=None):
        argv = [
            "womble",
            "--archive",
            str(arch),
            "--curve",
            str(curve),
            "--out",
            str(out),
        ]
        if seed is not None:
            argv += ["--seed", str(seed)]
        if measures is not None:
            argv += ["--measures", measures]
        return main(argv)

    def test_writes_measures_and_totals(self, fitted_archive, tmp_path):
        curve = self.write_curve(tmp_path / "curve.csv")
        out = tmp_path / "wm"
        assert self.run(fitted_archive, curve, out, seed=7) == 0
        for name in ("wm1.csv", "wm2.csv"):
            header, rows = read_rows(out / name)
            assert header == "seg,q2.5,q50,q97.5,sig"
            assert len(rows) == 2
        totals = json.loads((out / "totals.json").read_text())
        expected_len = np.hypot(1.5, 1.0) + np.hypot(1.5, 1.5)
        assert abs(totals["arc_length"] - expected_len) < 1e-12
        assert set(totals["totals"]) == {"gradient", "curvature"}
        assert totals["segment_count"] == 2
        for comp in ("gradient", "curvature"):
            assert totals["totals"][comp]["sig"] in (-1, 0, 1)
            assert set(totals["averages"][comp]) == {"q2.5", "q50", "q97.5"}

    def test_same_seed_bit_identical(self, fitted_archive, tmp_path):
        curve = self.write_curve(tmp_path / "curve.csv")
        assert self.run(fitted_archive, curve, tmp_path / "a", seed=5) == 0
        assert self.run(fitted_archive, curve, tmp_path / "b", seed=5) == 0
        for name in ("wm1.csv", "wm2.csv", "totals.json", "manifest.json"):
            assert (tmp_path / "a" / name).read_bytes() == (
                tmp_path / "b" / name
            ).read_bytes()

    def test_different_seed_differs(self, fitted_archive, tmp_path):
        curve = self.write_curve(tmp_path / "curve.csv")
        assert self.run(fitted_archive, curve, tmp_path / "a", seed=5) == 0
        assert self.run(fitted_archive, curve, tmp_path / "c", seed=6) == 0
        assert (tmp_path / "a" / "wm1.csv").read_bytes() != (
            tmp_path / "c" / "wm1.csv"
        ).read_bytes()

    def test_gradient_only_family_defaults_to_wm1(
        self, gradient_only_archive, tmp_path
    ):
        curve = self.write_curve(tmp_path / "curve.csv")
        out = tmp_path / "wm"
        assert self.run(gradient_only_archive, curve, out) == 0
        assert (out / "wm1.csv").exists()
        assert not (out / "wm2.csv").exists()
        totals = json.loads((out / "totals.json").read_text())
        assert set(totals["totals"]) == {"gradient"}

    def test_curvature_request_on_rough_kernel_errors(
        self, gradient_only_archive, tmp_path, capsys
    ):
        curve = self.write_curve(tmp_path / "curve.csv")
        rc = self.run(gradient_only_archive, curve, tmp_path / "wm", measures="both")
        assert rc == 2
        err = capsys.readouterr().err
        assert "curvature" in err and "matern52 or gaussian" in err

    def test_one_point_curve_rejected(self, fitted_archive, tmp_path, capsys):
        path = tmp_path / "curve.csv"
        archive.write_curve_csv(path, np.array([[1.0, 1.0]]))
        rc = self.run(fitted_archive, path, tmp_path / "wm")
        assert rc == 2
        assert "2 distinct" in capsys.readouterr().err


class TestPlot:
    def test_surface_field(self, fitted_archive, tmp_path):
        out = tmp_path / "plot"
        rc = main(
            [
                "plot",
                "--archive",
                str(fitted_archive),
                "--grid",
                "0,5,0,5,10,10",
                "--out",
                str(out),
            ]
        )
        assert rc == 0
        assert "<svg" in (out / "plot.svg").read_text()
        header, rows = read_rows(out / "surface.csv")
        assert header == "x,y,z" and len(rows) == 100

    def test_rates_field_with_curve_overlay(self, fitted_archive, tmp_path):
        curve_path = tmp_path / "curve.csv"
        archive.write_curve_csv(curve_path, np.array([[1.0, 1.0], [4.0, 4.0]]))
        out = tmp_path / "plot"
        rc = main(
            [
                "plot",
                "--archive",
                str(fitted_archive),
                "--grid",
                "0,5,0,5,6,6",
                "--out",
                str(out),
                "--field",
                "dx",
                "--curve",
                str(curve_path),
            ]
        )
        assert rc == 0
        assert (out / "plot.svg").exists()
        header, rows = read_rows(out / "rates_dx.csv")
        assert header == "x,y,q2.5,q50,q97.5,sig" and len(rows) == 36

    def test_unavailable_field_errors(self, gradient_only_archive, tmp_path, capsys):
        rc = main(
            [
                "plot",
                "--archive",
                str(gradient_only_archive),
                "--grid",
                "0,5,0,5,4,4",
                "--out",
                str(tmp_path / "plot"),
                "--field",
                "dxx",
            ]
        )
        assert rc == 2
        assert "dxx" in capsys.readouterr().err


class TestEntryPoints:
    def test_module_help(self):
        proc = subprocess.run(
            [sys.executable, "-m", "wombler", "--help"],
            capture_output=True,
            text=True,
            timeout=60,
        )
        assert proc.returncode == 0
        for sub in ("fit", "zbeta", "rates", "contour", "womble", "plot", "serve"):
            assert sub in proc.stdout

    def test_unknown_kernel_exits_2(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(
                [
                    "fit",
                    "--input",
                    "d.csv",
                    "--archive",
                    str(tmp_path),
                    "--kernel",
                    "cubic",
                ]
            )
        assert exc.value.code == 2
