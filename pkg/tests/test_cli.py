"""Command-line interface: exit codes, outputs, determinism."""

import json
import subprocess
import sys
from pathlib import Path

import pytest

from zphase_audit.cli import EXIT_EMPTY_CONSENSUS, EXIT_ERROR, EXIT_OK, main

E2E = Path(__file__).parent / "data" / "e2e"


def audit_argv(out_dir, *extra):
    return [
        "audit",
        "--annotations", str(E2E / "annotations"),
        "--manifest", str(E2E / "manifest.json"),
        "--detections", f"recon_5mm={E2E / 'detections_recon_5mm.csv'}",
        "--seed", "7",
        "--out", str(out_dir),
        *extra,
    ]


def read_tree(out_dir):
    return {p.name: p.read_bytes() for p in Path(out_dir).iterdir() if p.is_file()}


class TestAudit:
    def test_success_prints_written_paths(self, tmp_path, capsys):
        assert main(audit_argv(tmp_path, "--no-figures")) == EXIT_OK
        printed = capsys.readouterr().out.strip().splitlines()
        assert sorted(Path(line).name for line in printed) == [
            "condition_summary.csv",
            "phase_table.csv",
            "ratio_table.csv",
            "risk_list_recon_5mm.csv",
            "run_metadata.json",
        ]
        for line in printed:
            assert Path(line).is_file()

    def test_rerun_is_byte_identical(self, tmp_path):
        out = tmp_path / "out"
        assert main(audit_argv(out, "--no-figures")) == EXIT_OK
        first = read_tree(out)
        assert main(audit_argv(out, "--no-figures")) == EXIT_OK
        assert read_tree(out) == first

    def test_figures_written_by_default(self, tmp_path):
        assert main(audit_argv(tmp_path)) == EXIT_OK
        assert (tmp_path / "zphase_sensitivity.png").stat().st_size > 1000
        assert (tmp_path / "ratio_strata.png").stat().st_size > 1000

    def test_json_format(self, tmp_path):
        assert main(audit_argv(tmp_path, "--no-figures", "--format", "json")) == EXIT_OK
        rows = json.loads((tmp_path / "condition_summary.json").read_text())
        assert rows[0]["condition"] == "recon_5mm"
        assert (rows[0]["detected"], rows[0]["total"]) == (3, 5)

    def test_missing_input_exits_1_and_names_path(self, tmp_path, capsys):
        argv = audit_argv(tmp_path, "--no-figures")
        argv[argv.index("--manifest") + 1] = str(tmp_path / "absent.json")
        assert main(argv) == EXIT_ERROR
        assert "absent.json" in capsys.readouterr().err

    def test_empty_consensus_exits_2_and_names_threshold(self, tmp_path, capsys):
        argv = audit_argv(tmp_path, "--no-figures", "--min-readers", "5")
        assert main(argv) == EXIT_EMPTY_CONSENSUS
        assert "min_readers=5" in capsys.readouterr().err

    def test_unknown_condition_label(self, tmp_path, capsys):
        argv = [
            "audit",
            "--annotations", str(E2E / "annotations"),
            "--manifest", str(E2E / "manifest.json"),
            "--detections", f"recon_7mm={E2E / 'detections_recon_5mm.csv'}",
            "--seed", "7",
            "--out", str(tmp_path),
        ]
        assert main(argv) == EXIT_ERROR
        err = capsys.readouterr().err
        assert "recon_7mm" in err
        assert "baseline_1mm" in err and "recon_5mm" in err

    def test_duplicate_detections_flag(self, tmp_path, capsys):
        argv = audit_argv(
            tmp_path, "--detections", f"recon_5mm={E2E / 'detections_recon_5mm.csv'}"
        )
        assert main(argv) == EXIT_ERROR
        assert "duplicate" in capsys.readouterr().err

    def test_malformed_detections_flag(self, tmp_path, capsys):
        argv = [
            "audit",
            "--annotations", str(E2E / "annotations"),
            "--manifest", str(E2E / "manifest.json"),
            "--detections", "recon_5mm",
            "--seed", "7",
            "--out", str(tmp_path),
        ]
        assert main(argv) == EXIT_ERROR
        assert "condition=file" in capsys.readouterr().err

    def test_invalid_choice_is_an_argparse_error(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(audit_argv(tmp_path, "--format", "tsv"))
        assert excinfo.value.code == 2
        assert "--format" in capsys.readouterr().err


class TestPhase:
    def test_listing(self, tmp_path, capsys):
        nodules = tmp_path / "nodules.csv"
        nodules.write_text("series_id,z_mm,diameter_mm\ne2e-b,-308.875,2.0\n")
        argv = [
            "phase",
            "--manifest", str(E2E / "manifest.json"),
            "--nodules", str(nodules),
            "--out", str(tmp_path / "out"),
        ]
        assert main(argv) == EXIT_OK
        out_lines = capsys.readouterr().out.strip().splitlines()
        assert [Path(line).name for line in out_lines] == ["phase_list.csv"]
        content = (tmp_path / "out" / "phase_list.csv").read_text()
        assert content.splitlines()[0] == (
            "series_id,z_mm,zphase,bin_center,diameter_mm,ratio,risk_flag"
        )
        assert "e2e-b,-308.8750,0.4500,0.45,2.0000,1.2500,true" in content

    def test_missing_nodule_list(self, tmp_path, capsys):
        argv = [
            "phase",
            "--manifest", str(E2E / "manifest.json"),
            "--nodules", str(tmp_path / "absent.csv"),
            "--out", str(tmp_path / "out"),
        ]
        assert main(argv) == EXIT_ERROR
        assert "absent.csv" in capsys.readouterr().err


class TestSimulate:
    def simulate_argv(self, out_dir, *extra):
        return [
            "simulate",
            "--ratios", "0.5,1.2",
            "--phase-steps", "3",
            "--n-per-cell", "50",
            "--resamples", "100",
            "--seed", "3",
            "--out", str(out_dir),
            *extra,
        ]

    def test_smoke_and_determinism(self, tmp_path):
        assert main(self.simulate_argv(tmp_path / "a", "--no-figures")) == EXIT_OK
        assert main(self.simulate_argv(tmp_path / "b", "--no-figures")) == EXIT_OK
        table_a = (tmp_path / "a" / "sweep_table.csv").read_bytes()
        table_b = (tmp_path / "b" / "sweep_table.csv").read_bytes()
        assert table_a == table_b
        rows = table_a.decode().strip().splitlines()
        assert rows[0] == "ratio,phase,detected,total,sensitivity,ci_low,ci_high"
        assert len(rows) == 1 + 2 * 3
        metadata = json.loads((tmp_path / "a" / "run_metadata.json").read_text())
        assert metadata["seed"] == 3
        assert metadata["config"]["ratios"] == [0.5, 1.2]

    def test_figure_rendered_by_default(self, tmp_path):
        assert main(self.simulate_argv(tmp_path)) == EXIT_OK
        assert (tmp_path / "sweep_sensitivity.png").stat().st_size > 1000

    def test_invalid_phase_steps(self, tmp_path, capsys):
        assert main(self.simulate_argv(tmp_path, "--phase-steps", "0")) == EXIT_ERROR
        assert "phase-steps" in capsys.readouterr().err

    def test_single_phase_step_runs(self, tmp_path):
        assert main(self.simulate_argv(tmp_path, "--phase-steps", "1", "--no-figures")) == EXIT_OK
        rows = (tmp_path / "sweep_table.csv").read_text().strip().splitlines()
        assert len(rows) == 1 + 2  # header + one phase per ratio

    def test_bad_ratio_list(self, tmp_path, capsys):
        with pytest.raises(SystemExit):
            main(self.simulate_argv(tmp_path, "--ratios", "a,b"))
        assert "comma-separated" in capsys.readouterr().err


class TestFixtures:
    def test_emits_reference_dataset(self, tmp_path, capsys):
        assert main(["fixtures", "--out", str(tmp_path)]) == EXIT_OK
        printed = capsys.readouterr().out.strip().splitlines()
        assert len(printed) == 5  # annotations dir, manifest, three detection files
        annotations = Path(printed[0])
        assert annotations.is_dir()
        assert len(list(annotations.glob("*.xml"))) > 0
        for line in printed[1:]:
            assert Path(line).is_file()

    def test_fixture_feeds_audit(self, tmp_path):
        assert main(["fixtures", "--out", str(tmp_path / "data")]) == EXIT_OK
        argv = [
            "audit",
            "--annotations", str(tmp_path / "data" / "annotations"),
            "--manifest", str(tmp_path / "data" / "manifest.json"),
            "--detections",
            f"recon_5mm={tmp_path / 'data' / 'detections_recon_5mm.csv'}",
            "--seed", "0",
            "--resamples", "50",
            "--no-figures",
            "--out", str(tmp_path / "out"),
        ]
        assert main(argv) == EXIT_OK
        summary = (tmp_path / "out" / "condition_summary.csv").read_text().splitlines()
        assert summary[1].startswith("recon_5mm,292,408,")


class TestEntryPoint:
    def test_module_is_executable(self):
        result = subprocess.run(
            [sys.executable, "-m", "zphase_audit.cli", "--version"],
            capture_output=True,
            text=True,
            check=True,
        )
        assert "zphase-audit" in result.stdout
