import json

import pytest

from panconv.cli import main


def run_cli(argv):
    return main(argv)


def base_train_args(dataset, out):
    return [
        "train", "--dataset", str(dataset), "--method", "5", "--L", "2",
        "--k", "0,0.5,0.5", "--epochs", "8", "--patience", "8",
        "--dropout", "0.3", "--weight-decay", "0.001", "--hidden", "8",
        "--out", str(out),
    ]


class TestTrainCommand:
    def test_writes_manifest_and_curves(self, toy_clusters_path, tmp_path, capsys):
        code = run_cli(base_train_args(toy_clusters_path, tmp_path / "runs"))
        assert code == 0
        out = capsys.readouterr().out
        assert "test_acc mean" in out
        run_dirs = list((tmp_path / "runs").iterdir())
        assert len(run_dirs) == 1
        files = {p.name for p in run_dirs[0].iterdir()}
        assert "manifest.json" in files
        assert "curves.csv" in files
        assert "trial-0.ckpt" in files
        manifest = json.loads((run_dirs[0] / "manifest.json").read_text())
        assert manifest["config"]["method"] == 5
        assert manifest["dataset"]["sha256"]

    def test_missing_dataset_flag_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            run_cli(["train", "--method", "5", "--L", "2", "--k", "0,1"])
        assert exc.value.code == 2

    def test_invalid_method_is_usage_error(self, toy_clusters_path):
        with pytest.raises(SystemExit) as exc:
            run_cli(["train", "--dataset", str(toy_clusters_path),
                     "--method", "99", "--L", "2", "--k", "0,0.5,0.5"])
        assert exc.value.code == 2

    def test_k_length_mismatch_is_usage_error(self, toy_clusters_path, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run_cli(["train", "--dataset", str(toy_clusters_path), "--method", "5",
                     "--L", "2", "--k", "0,1", "--out", str(tmp_path)])
        assert exc.value.code == 2

    def test_k_and_train_k_conflict(self, toy_clusters_path, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run_cli(["train", "--dataset", str(toy_clusters_path), "--method", "5",
                     "--L", "2", "--k", "0,0.5,0.5", "--train-k",
                     "--out", str(tmp_path)])
        assert exc.value.code == 2

    def test_missing_file_is_runtime_error(self, tmp_path, capsys):
        code = run_cli(["train", "--dataset", str(tmp_path / "nope.pands"),
                        "--method", "5", "--L", "2", "--k", "0,0.5,0.5"])
        assert code == 1
        assert "error" in capsys.readouterr().err

    def test_existing_run_dir_refused_without_force(self, toy_clusters_path, tmp_path):
        args = base_train_args(toy_clusters_path, tmp_path / "runs")
        assert run_cli(args) == 0
        assert run_cli(args) == 1  # append-never
        assert run_cli(args + ["--force"]) == 0

    def test_train_k_mode(self, toy_clusters_path, tmp_path, capsys):
        code = run_cli([
            "train", "--dataset", str(toy_clusters_path), "--method", "3",
            "--L", "2", "--train-k", "--epochs", "6", "--dropout", "0.3",
            "--hidden", "8", "--out", str(tmp_path / "runs"),
        ])
        assert code == 0
        run_dir = next((tmp_path / "runs").iterdir())
        manifest = json.loads((run_dir / "manifest.json").read_text())
        assert manifest["config"]["fixed_k"] is None

    def test_dataset_resolved_from_env_dir(self, toy_clusters_path, tmp_path,
                                           monkeypatch):
        monkeypatch.setenv("PAN_DATA_DIR", str(toy_clusters_path.parent))
        code = run_cli([
            "train", "--dataset", "toy_clusters.pands", "--method", "5", "--L", "2",
            "--k", "0,0.5,0.5", "--epochs", "4", "--hidden", "4",
            "--out", str(tmp_path / "runs"),
        ])
        assert code == 0


class TestDeterminism:
    def test_manifests_identical_across_jobs(self, toy_clusters_path, tmp_path):
        a1 = base_train_args(toy_clusters_path, tmp_path / "r1") + [
            "--trials", "3", "--jobs", "1"]
        a2 = base_train_args(toy_clusters_path, tmp_path / "r2") + [
            "--trials", "3", "--jobs", "3"]
        assert run_cli(a1) == 0
        assert run_cli(a2) == 0
        m1 = next((tmp_path / "r1").iterdir()) / "manifest.json"
        m2 = next((tmp_path / "r2").iterdir()) / "manifest.json"
        assert m1.read_bytes() == m2.read_bytes()
        c1 = next((tmp_path / "r1").iterdir()) / "curves.csv"
        c2 = next((tmp_path / "r2").iterdir()) / "curves.csv"
        assert c1.read_bytes() == c2.read_bytes()


class TestGridCommand:
    def test_step_one_gives_three_rows(self, toy_clusters_path, tmp_path, capsys):
        code = run_cli([
            "grid", "--dataset", str(toy_clusters_path), "--method", "5", "--L", "2",
            "--grid-step", "1", "--epochs", "5", "--hidden", "4",
            "--out", str(tmp_path / "runs"),
        ])
        assert code == 0
        assert "winner k=" in capsys.readouterr().out
        run_dir = next((tmp_path / "runs").iterdir())
        lines = (run_dir / "grid.csv").read_text().strip().split("\n")
        assert lines[0] == "k0,k1,k2,mean_val_acc,std,mean_test_acc"
        assert len(lines) == 4

    def test_invalid_step_is_usage_error(self, toy_clusters_path, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run_cli(["grid", "--dataset", str(toy_clusters_path), "--method", "5",
                     "--L", "2", "--grid-step", "0", "--out", str(tmp_path)])
        assert exc.value.code == 2


class TestInspectCommand:
    def test_k3_method1_row_sums(self, toy_k3_path, capsys):
        code = run_cli(["inspect", "--dataset", str(toy_k3_path), "--method", "1",
                        "--L", "2", "--k", "1,1,1"])
        assert code == 0
        info = json.loads(capsys.readouterr().out)
        assert info["assembled"]["row_sum_min"] == pytest.approx(1.0, abs=1e-12)
        assert info["assembled"]["row_sum_max"] == pytest.approx(1.0, abs=1e-12)
        assert info["assembled"]["density"] == 1.0

    def test_method5_symmetry_residual(self, toy_k3_path, capsys):
        code = run_cli(["inspect", "--dataset", str(toy_k3_path), "--method", "5",
                        "--L", "2", "--k", "0,0.5,0.5"])
        assert code == 0
        info = json.loads(capsys.readouterr().out)
        assert info["assembled"]["symmetry_residual"] <= 1e-12

    def test_invalid_method_is_usage_error(self, toy_k3_path):
        with pytest.raises(SystemExit) as exc:
            run_cli(["inspect", "--dataset", str(toy_k3_path), "--method", "99",
                     "--L", "2", "--k", "1,1,1"])
        assert exc.value.code == 2


class TestEvalCommand:
    def test_checkpoint_evaluates(self, toy_clusters_path, tmp_path, capsys):
        assert run_cli(base_train_args(toy_clusters_path, tmp_path / "runs")) == 0
        run_dir = next((tmp_path / "runs").iterdir())
        capsys.readouterr()
        code = run_cli(["eval", "--dataset", str(toy_clusters_path),
                        "--checkpoint", str(run_dir / "trial-0.ckpt"),
                        "--split", "test"])
        assert code == 0
        assert "test_acc" in capsys.readouterr().out


class TestValidateCommand:
    def test_valid_dataset_exits_zero(self, toy_clusters_path, capsys):
        assert run_cli(["validate", "--dataset", str(toy_clusters_path)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["passed"] is True
        assert report["stats"]["mask_sizes"] == {"train": 4, "val": 8, "test": 12}
