import json

import numpy as np

from phaselab.cli import main
from phaselab.field import dump_csv, field_from_function, load_csv, sup_distance
from phaselab.foliation import build_family
from phaselab.heteroclinic import logistic_profile

RELAX_CONFIG = """
[experiment]
seed = 7

[grid]
n = 1
kind = box
lo = -10
hi = 10
m = 20

[integrand]
name = allen-cahn

[initial]
kind = ramp

[relax]
max_iterations = 80000
gradient_tolerance = 5e-4
initial_step = 1e-4
log_every = 500

[minimality]
trials = 30
max_radius = 2.0
"""

FOLIATE_CONFIG = """
[experiment]
seed = 3

[grid]
n = 2
kind = box, periodic
lo = -20
hi = 20
period = 1
m = 25, 4

[foliate]
direction = 1, 0
b_min = -2
b_max = 2
count = 7
envelope_steps = 60
envelope_sample = 3

[tolerances]
order = 1e-8
foliation = 1e-6
match = 1e-3
"""


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestRelaxCommand:
    def test_transition_layer_run(self, tmp_path):
        cfg = _write(tmp_path, "relax.ini", RELAX_CONFIG)
        out = tmp_path / "out"
        code = main(["relax", "--config", str(cfg), "--out", str(out)])
        assert code == 0
        field = load_csv(out / "field.csv")
        target = field_from_function(
            field.axes, lambda p: logistic_profile(p[..., 0])
        )
        assert sup_distance(field, target) < 5e-4
        log = (out / "iterations.csv").read_text().splitlines()
        assert log[0] == "iteration,energy,grad_norm,step"
        energies = [float(line.split(",")[1]) for line in log[1:]]
        assert all(b <= a + 1e-15 for a, b in zip(energies, energies[1:]))
        report = json.loads((out / "relax_report.json").read_text())
        assert report["passed"] is True
        minim = json.loads((out / "minimality.json").read_text())
        assert minim["passed"] is True

    def test_critical_start_needs_zero_iterations(self, tmp_path):
        cfg_text = RELAX_CONFIG.replace("kind = ramp", "kind = constant\nvalue = 0")
        cfg = _write(tmp_path, "relax0.ini", cfg_text)
        out = tmp_path / "out0"
        code = main(["relax", "--config", str(cfg), "--out", str(out)])
        assert code == 0
        report = json.loads((out / "relax_report.json").read_text())
        assert report["iterations"] == 0

    def test_byte_identical_reruns(self, tmp_path):
        cfg = _write(tmp_path, "relax.ini", RELAX_CONFIG)
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["relax", "--config", str(cfg), "--out", str(out)]) == 0
            outs.append(
                {
                    f.name: f.read_bytes()
                    for f in sorted(out.iterdir())
                    if f.is_file()
                }
            )
        assert outs[0] == outs[1]

    def test_malformed_spacing_exits_one(self, tmp_path, capsys):
        cfg = _write(tmp_path, "bad.ini", RELAX_CONFIG.replace("m = 20", "h = 0.013"))
        code = main(["relax", "--config", str(cfg), "--out", str(tmp_path / "x")])
        assert code == 1
        assert "error" in capsys.readouterr().err

    def test_missing_config_exits_one(self, tmp_path, capsys):
        code = main(["relax", "--config", str(tmp_path / "nope.ini")])
        assert code == 1


class TestClassifyCommand:
    def test_family_member_classifies_depth_two(self, tmp_path):
        fam = build_family((1, 0), -2.0, 2.0, 3, _family_axes())
        member_csv = tmp_path / "member.csv"
        dump_csv(fam.member_at(0.4), member_csv)
        cfg = _write(tmp_path, "cls.ini", FOLIATE_CONFIG)
        out = tmp_path / "out"
        code = main(
            ["classify", "--config", str(cfg), "--field", str(member_csv), "--out", str(out)]
        )
        assert code == 0
        inv = json.loads((out / "invariants.json").read_text())
        assert inv["t"] == 2
        assert inv["a"][1] == [-1.0, 0.0, 0.0]
        assert inv["gamma_bases"][2] == [[0, 1, 0]]
        assert inv["admissible"] is True

    def test_constant_classifies_depth_one(self, tmp_path):
        from phaselab.field import constant_field

        const_csv = tmp_path / "const.csv"
        dump_csv(constant_field(_family_axes(), 0.25), const_csv)
        cfg = _write(tmp_path, "cls.ini", FOLIATE_CONFIG)
        out = tmp_path / "out"
        code = main(
            ["classify", "--config", str(cfg), "--field", str(const_csv), "--out", str(out)]
        )
        assert code == 0
        inv = json.loads((out / "invariants.json").read_text())
        assert inv["t"] == 1

    def test_crossing_field_exits_two_with_witnesses(self, tmp_path):
        from phaselab.field import PeriodicAxis

        axes = (PeriodicAxis(2, 8), PeriodicAxis(2, 8))
        osc = field_from_function(
            axes,
            lambda p: 0.5
            + 0.2 * np.sin(np.pi * p[..., 0]) * np.sin(np.pi * p[..., 1] + np.pi / 4),
        )
        osc_csv = tmp_path / "osc.csv"
        dump_csv(osc, osc_csv)
        cfg = _write(tmp_path, "cls.ini", FOLIATE_CONFIG)
        out = tmp_path / "out"
        code = main(
            ["classify", "--config", str(cfg), "--field", str(osc_csv), "--out", str(out)]
        )
        assert code == 2
        wits = json.loads((out / "witnesses.json").read_text())
        assert wits["witnesses"]


class TestFoliateCommand:
    def test_family_passes(self, tmp_path):
        cfg = _write(tmp_path, "fol.ini", FOLIATE_CONFIG)
        out = tmp_path / "out"
        code = main(["foliate", "--config", str(cfg), "--out", str(out)])
        assert code == 0
        report = json.loads((out / "foliation_report.json").read_text())
        assert report["passed"] is True
        assert report["foliation"]["disjointness_passed"] is True
        assert report["envelope_identity"]["passed"] is True
        assert report["total_order"]["passed"] is True
        manifest = json.loads((out / "family_manifest.json").read_text())
        assert manifest["direction"] == [1, 0]
        assert len(manifest["b_grid"]) == 7

    def test_injected_crossing_member_exits_two(self, tmp_path):
        fam = build_family((1, 0), -2.0, 2.0, 7, _family_axes())
        member = fam.member_at(0.0)
        wavy = member.with_values(
            member.values
            + 0.05 * np.sin(2 * np.pi * np.arange(member.shape[1]) / member.shape[1])
        )
        bad_csv = tmp_path / "wavy.csv"
        dump_csv(wavy, bad_csv)
        cfg = _write(
            tmp_path,
            "fol.ini",
            FOLIATE_CONFIG.replace(
                "envelope_sample = 3",
                f"envelope_sample = 3\nextra_member_csv = {bad_csv}",
            ),
        )
        out = tmp_path / "out"
        code = main(["foliate", "--config", str(cfg), "--out", str(out)])
        assert code == 2
        report = json.loads((out / "foliation_report.json").read_text())
        assert report["total_order"]["violations"]


class TestRigidityCommand:
    def test_member_matches(self, tmp_path):
        member_csv = tmp_path / "member.csv"
        fam = build_family((1, 0), -2.0, 2.0, 7, _family_axes())
        dump_csv(fam.member_at(0.6), member_csv)
        cfg = _write(tmp_path, "rig.ini", FOLIATE_CONFIG)
        out = tmp_path / "out"
        code = main(
            ["rigidity", "--config", str(cfg), "--field", str(member_csv), "--out", str(out)]
        )
        assert code == 0
        report = json.loads((out / "rigidity_report.json").read_text())
        assert abs(report["b0"] - 0.6) < 1e-9

    def test_outsider_fails(self, tmp_path):
        from phaselab.field import constant_field

        csv = tmp_path / "high.csv"
        dump_csv(constant_field(_family_axes(), 1.5), csv)
        cfg = _write(tmp_path, "rig.ini", FOLIATE_CONFIG)
        code = main(
            ["rigidity", "--config", str(cfg), "--field", str(csv), "--out", str(tmp_path / "o")]
        )
        assert code == 2


class TestAsymptoteCommand:
    def test_member_flows_to_upper_phase(self, tmp_path):
        member_csv = tmp_path / "member.csv"
        fam = build_family((1, 0), -2.0, 2.0, 7, _family_axes())
        dump_csv(fam.member_at(0.0), member_csv)
        cfg = _write(
            tmp_path,
            "asy.ini",
            FOLIATE_CONFIG + "\n[asymptote]\ndirection = -1, 0, 0\nsteps = 80\n",
        )
        out = tmp_path / "out"
        code = main(
            ["asymptote", "--config", str(cfg), "--field", str(member_csv), "--out", str(out)]
        )
        assert code == 0
        report = json.loads((out / "asymptote_report.json").read_text())
        assert report["classification"] == "upper"


class TestReportCommand:
    def test_aggregates_pass_fail(self, tmp_path, capsys):
        out = tmp_path / "out"
        out.mkdir()
        (out / "a_report.json").write_text(json.dumps({"kind": "relax", "passed": True}))
        assert main(["report", "--out", str(out)]) == 0
        (out / "b_report.json").write_text(json.dumps({"kind": "foliate", "passed": False}))
        assert main(["report", "--out", str(out)]) == 2
        empty = tmp_path / "empty"
        empty.mkdir()
        assert main(["report", "--out", str(empty)]) == 1


def _family_axes():
    from phaselab.field import BoxAxis, PeriodicAxis

    return (BoxAxis(-20, 20, 25), PeriodicAxis(1, 4))
