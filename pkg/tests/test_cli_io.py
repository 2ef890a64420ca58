"""Manifest parsing, CSV/snapshot round-trips and the command-line driver."""

import numpy as np
import pytest

from bnsolve.cli import main
from bnsolve.grids import (DistributionField, TorusGrid, VelocityGrid,
                           field_from_function)
from bnsolve.manifest import (CSV_HEADER, ManifestError, emit_snapshot,
                              emit_timeseries, load_manifest, load_snapshot,
                              perturbed_copy)

BASE = """
[grid]
n_v = 6
v_max = 2.0

[kernel]
b0 = 1.0
gamma = 0.1

[solver]
alpha = 0.5
dt = 2e-3
t_end = 4e-3

[initial]
type = maxwellian
temperature = 0.5
amplitude = 0.8
"""


def _write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoadManifest:
    def test_minimal_manifest(self, tmp_path):
        m = load_manifest(_write(tmp_path, BASE))
        assert m.cfg.alpha == 0.5
        assert m.vgrid.n_v == 6 and m.vgrid.v_max == 2.0
        assert m.f0.values.shape == (1, 1, 1, 6, 6, 6)
        assert m.c0 > 0.0
        assert m.constants.b0 == 1.0
        assert m.mode == "single"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ManifestError):
            load_manifest(tmp_path / "nope.ini")

    def test_unknown_section_and_key(self, tmp_path):
        with pytest.raises(ManifestError, match="unknown section"):
            load_manifest(_write(tmp_path, BASE + "\n[bogus]\nx = 1\n"))
        with pytest.raises(ManifestError, match="unknown key"):
            load_manifest(_write(tmp_path, BASE + "\n[output]\nbogus = 1\n"))

    def test_missing_required_key(self, tmp_path):
        text = BASE.replace("n_v = 6\n", "")
        with pytest.raises(ManifestError, match="grid.n_v"):
            load_manifest(_write(tmp_path, text))

    def test_vmax_alpha_precondition(self, tmp_path):
        text = BASE.replace("v_max = 2.0", "v_max = 1.5")
        with pytest.raises(ManifestError, match="v_max"):
            load_manifest(_write(tmp_path, text))

    def test_sup_bound_precondition(self, tmp_path):
        text = BASE.replace("amplitude = 0.8", "amplitude = 1.6")
        with pytest.raises(ManifestError, match="2\\^L"):
            load_manifest(_write(tmp_path, text))
        ok = load_manifest(_write(
            tmp_path, text.replace("[solver]\n", "[solver]\nL = 1\n"),
            "ok.ini"))
        assert ok.cfg.L == 1

    def test_overrides_win(self, tmp_path):
        m = load_manifest(_write(tmp_path, BASE),
                          {"solver.alpha": "1.0", "grid.n_v": "4"})
        assert m.cfg.alpha == 1.0
        assert m.vgrid.n_v == 4

    def test_unknown_override_rejected(self, tmp_path):
        with pytest.raises(ManifestError, match="override"):
            load_manifest(_write(tmp_path, BASE), {"solver.bogus": "1"})

    def test_two_bumps_and_length_mismatch(self, tmp_path):
        bumps = BASE.replace(
            "type = maxwellian\ntemperature = 0.5\namplitude = 0.8",
            "type = two_bumps\ncenters = 0.8,0,0; -0.8,0,0\n"
            "widths = 0.3; 0.3\namplitudes = 0.5; 0.5")
        m = load_manifest(_write(tmp_path, bumps))
        # bump centers fall between nodes on this coarse grid
        assert m.f0.linf() > 0.1
        bad = bumps.replace("widths = 0.3; 0.3", "widths = 0.3")
        with pytest.raises(ManifestError, match="length mismatch"):
            load_manifest(_write(tmp_path, bad, "bad.ini"))

    def test_study_section(self, tmp_path):
        text = BASE + ("\n[study]\nmode = alpha_sweep\n"
                       "alphas = 1.0, 0.5\n")
        m = load_manifest(_write(tmp_path, text))
        assert m.mode == "alpha_sweep"
        assert m.alphas == [1.0, 0.5]
        with pytest.raises(ManifestError, match="mode"):
            load_manifest(_write(tmp_path,
                                 BASE + "\n[study]\nmode = bogus\n", "m.ini"))

    def test_lebedev_quad_selection(self, tmp_path):
        text = BASE.replace("[solver]\n", "[solver]\nquad = lebedev26\n")
        m = load_manifest(_write(tmp_path, text))
        assert len(m.cfg.quad) == 26

    def test_initial_from_snapshot_file(self, tmp_path):
        vg = VelocityGrid(2.0, 6)
        tg = TorusGrid(1)
        f = field_from_function(
            lambda vx, vy, vz: 0.3 * np.ones_like(vx), vg, tg)
        snap = emit_snapshot(f, 0.0, tmp_path / "init.bnkf")
        text = BASE.replace(
            "type = maxwellian\ntemperature = 0.5\namplitude = 0.8",
            f"type = file\npath = {snap}")
        m = load_manifest(_write(tmp_path, text))
        assert np.array_equal(m.f0.values, f.values)
        # grid mismatch rejected
        bad = text.replace("n_v = 6", "n_v = 4")
        with pytest.raises(ManifestError, match="snapshot grid"):
            load_manifest(_write(tmp_path, bad, "bad.ini"))


class TestTimeseries:
    def _history(self):
        return [{"time": 0.0, "mass": 1.0, "px": 0.0, "py": 0.0, "pz": 0.0,
                 "energy": 2.0, "entropy": 0.5, "linf": 0.25,
                 "window_n": 1, "fp_iters": 3, "projection_norm": 1e-12},
                {"time": 1e-3, "mass": 1.0, "px": 1e-17, "py": 0.0, "pz": 0.0,
                 "energy": 2.0, "entropy": 0.5001, "linf": 0.24,
                 "window_n": 1, "fp_iters": 4, "projection_norm": 2e-12}]

    def test_header_and_precision(self, tmp_path):
        p = emit_timeseries(self._history(), tmp_path / "ts.csv")
        lines = p.read_text().splitlines()
        assert lines[0] == CSV_HEADER
        assert len(lines) == 3
        assert "0.0001" not in lines[1]
        # 17 significant digits round-trip float64 exactly
        assert float(lines[2].split(",")[6]) == 0.5001

    def test_deterministic_bytes(self, tmp_path):
        a = emit_timeseries(self._history(), tmp_path / "a.csv")
        b = emit_timeseries(self._history(), tmp_path / "b.csv")
        assert a.read_bytes() == b.read_bytes()

    def test_empty_history_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            emit_timeseries([], tmp_path / "ts.csv")


class TestSnapshot:
    def test_bitwise_roundtrip(self, tmp_path):
        rng = np.random.default_rng(11)
        vg = VelocityGrid(1.5, 4)
        tg = TorusGrid(2)
        f = DistributionField(rng.random((2, 2, 2, 4, 4, 4)), vg, tg)
        p = emit_snapshot(f, 0.375, tmp_path / "f.bnkf")
        g = load_snapshot(p)
        assert np.array_equal(g.values, f.values)
        assert g.time == 0.375
        assert g.vgrid.v_max == 1.5 and g.tgrid.n_x == 2

    def test_corrupt_snapshots_rejected(self, tmp_path):
        vg = VelocityGrid(1.0, 2)
        tg = TorusGrid(1)
        f = DistributionField(np.zeros((1, 1, 1, 2, 2, 2)), vg, tg)
        p = emit_snapshot(f, 0.0, tmp_path / "f.bnkf")
        raw = p.read_bytes()
        (tmp_path / "trunc.bnkf").write_bytes(raw[:10])
        with pytest.raises(ManifestError, match="truncated"):
            load_snapshot(tmp_path / "trunc.bnkf")
        (tmp_path / "magic.bnkf").write_bytes(b"XXXX" + raw[4:])
        with pytest.raises(ManifestError, match="magic"):
            load_snapshot(tmp_path / "magic.bnkf")
        (tmp_path / "short.bnkf").write_bytes(raw[:-8])
        with pytest.raises(ManifestError, match="expected"):
            load_snapshot(tmp_path / "short.bnkf")
        bad = bytearray(raw)
        bad[-8:] = np.array([-1.0]).tobytes()
        (tmp_path / "neg.bnkf").write_bytes(bytes(bad))
        with pytest.raises(ManifestError, match="negative"):
            load_snapshot(tmp_path / "neg.bnkf")


class TestPerturbedCopy:
    def test_bump_added(self, tmp_path):
        text = BASE + ("\n[study]\nmode = stability_pair\n"
                       "perturbation = 0.01\nperturb_width = 0.4\n")
        m = load_manifest(_write(tmp_path, text))
        g = perturbed_copy(m)
        diff = g.values - m.f0.values
        # peak sits at the node closest to the bump center
        vg = m.vgrid
        d2 = vg.speed_sq.min()
        assert diff.max() == pytest.approx(0.01 * np.exp(-d2 / 0.32), rel=1e-9)
        assert np.all(diff >= 0.0)


class TestCli:
    def _manifest(self, tmp_path, extra="", base=None):
        text = (base or BASE) + f"\n[output]\ndirectory = {tmp_path/'out'}\n" + extra
        return _write(tmp_path, text)

    def test_run_exit_ok_and_outputs(self, tmp_path, capsys):
        rc = main(["run", str(self._manifest(tmp_path))])
        assert rc == 0
        out = capsys.readouterr().out
        assert "status: ok" in out
        assert (tmp_path / "out" / "timeseries.csv").is_file()

    def test_run_reproducible_csv(self, tmp_path):
        man = self._manifest(tmp_path)
        assert main(["run", str(man)]) == 0
        first = (tmp_path / "out" / "timeseries.csv").read_bytes()
        assert main(["run", str(man)]) == 0
        second = (tmp_path / "out" / "timeseries.csv").read_bytes()
        assert first == second

    def test_validation_exit_code(self, tmp_path, capsys):
        bad = _write(tmp_path, BASE.replace("v_max = 2.0", "v_max = 1.0"))
        rc = main(["run", str(bad)])
        assert rc == 2
        assert "validation error" in capsys.readouterr().err

    def test_blowup_exit_code_and_snapshot(self, tmp_path, capsys):
        vg = VelocityGrid(2.0, 5)
        tg = TorusGrid(1)
        f = field_from_function(
            lambda vx, vy, vz: np.where(vx ** 2 + vy ** 2 + vz ** 2 <= 1.44,
                                        3.9, 0.0), vg, tg)
        snap = emit_snapshot(f, 0.0, tmp_path / "init.bnkf")
        text = f"""
[grid]
n_v = 5
v_max = 2.0

[kernel]
b0 = 2.0
gamma = 0.1

[solver]
alpha = 0.0
dt = 1e-4
t_end = 2.0
L = 2
blowup_ceiling = 20.0
max_halvings = 4

[initial]
type = file
path = {snap}

[output]
directory = {tmp_path / 'out'}
cadence = 20
"""
        rc = main(["run", str(_write(tmp_path, text))])
        assert rc == 3
        out = capsys.readouterr().out
        assert "blow-up report" in out
        assert (tmp_path / "out" / "final.bnkf").is_file()
        assert (tmp_path / "out" / "thresholds.csv").is_file()
        final = load_snapshot(tmp_path / "out" / "final.bnkf")
        assert final.linf() > 20.0

    def test_numfail_exit_code(self, tmp_path, capsys):
        base = BASE.replace("[solver]\n",
                            "[solver]\nfp_tol = 1e-300\nfp_max_iter = 2\n"
                            "max_halvings = 0\n")
        rc = main(["run", str(self._manifest(tmp_path, base=base))])
        assert rc == 4

    def test_theory_subcommand(self, tmp_path, capsys):
        rc = main(["theory", str(self._manifest(tmp_path))])
        assert rc == 0
        out = capsys.readouterr().out
        assert "guaranteed windows" in out and "T_uniform" in out

    def test_sweep_alpha_subcommand(self, tmp_path, capsys):
        extra = "\n[study]\nmode = alpha_sweep\nalphas = 1.0, 0.5\n"
        rc = main(["sweep-alpha", str(self._manifest(tmp_path, extra))])
        assert rc == 0
        assert "fitted C" in capsys.readouterr().out
        assert (tmp_path / "out" / "alpha_cauchy.csv").is_file()

    def test_stability_subcommand(self, tmp_path, capsys):
        extra = ("\n[study]\nmode = stability_pair\nperturbation = 0.01\n"
                 "perturb_width = 0.4\n")
        rc = main(["stability", str(self._manifest(tmp_path, extra))])
        assert rc == 0
        assert "within envelope" in capsys.readouterr().out
        assert (tmp_path / "out" / "stability.csv").is_file()

    def test_verify_subcommand(self, tmp_path, capsys):
        vg = VelocityGrid(1.0, 4)
        tg = TorusGrid(1)
        f = field_from_function(
            lambda vx, vy, vz: 0.5 * np.ones_like(vx), vg, tg)
        snap = emit_snapshot(f, 1.25, tmp_path / "s.bnkf")
        rc = main(["verify", str(snap)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "nonnegative: pass" in out

    def test_cli_flag_overrides(self, tmp_path, capsys):
        rc = main(["run", str(self._manifest(tmp_path)), "--t-end", "2e-3",
                   "--set", "solver.fp_tol=1e-9"])
        assert rc == 0
        lines = (tmp_path / "out" / "timeseries.csv").read_text().splitlines()
        assert float(lines[-1].split(",")[0]) == pytest.approx(2e-3)
