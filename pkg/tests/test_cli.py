import io
import os
from pathlib import Path

import pandas as pd
import pytest

import commands.train as train_command
from app import EXIT_NUMERIC, EXIT_OK, EXIT_VALIDATION, main
from ehr.codes import LabFlag
from ehr.trajectory import Trajectory, parse_trajectory_file, write_trajectory_file
from ehr.vocab import Vocabulary
from model.checkpoint import load_checkpoint
from utils.errors import NumericError

SAMPLE_DATA = Path(__file__).resolve().parent.parent / "sample_data"

SMALL_MODEL = [
    "--set", "d_model=8",
    "--set", "n_heads=2",
    "--set", "n_layers=1",
    "--set", "d_ff=16",
    "--set", "m_decay=3",
    "--set", "max_len=16",
    "--set", "epochs=2",
    "--set", "batch_size=16",
]


def generate(path, seed=3, patients=30):
    return main(["generate", "--out", str(path), "--seed", str(seed), "--set", f"n_patients={patients}"])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Generated data plus a full and a w/o D checkpoint, shared by the module"""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data.jsonl"
    assert generate(data) == EXIT_OK
    history = root / "history.jsonl"
    history.write_text(data.read_text(encoding="utf-8").splitlines()[0] + "\n", encoding="utf-8")

    full = root / "full.ckpt"
    no_decay = root / "no_decay.ckpt"
    assert main(["train", "--data", str(data), "--out-checkpoint", str(full), *SMALL_MODEL]) == EXIT_OK
    assert main(
        ["train", "--data", str(data), "--out-checkpoint", str(no_decay), "--ablate", "d", *SMALL_MODEL]
    ) == EXIT_OK
    return {"root": root, "data": data, "history": history, "full": full, "no_decay": no_decay}


class TestGenerate:
    def test_deterministic(self, tmp_path, capsys):
        assert generate(tmp_path / "a.jsonl") == EXIT_OK
        first_out = capsys.readouterr().out
        assert generate(tmp_path / "b.jsonl") == EXIT_OK
        second_out = capsys.readouterr().out
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
        assert first_out == second_out
        assert first_out.startswith("trajectories=30 ")

    def test_one_line_per_trajectory(self, tmp_path):
        assert generate(tmp_path / "a.jsonl", patients=12) == EXIT_OK
        assert len((tmp_path / "a.jsonl").read_text(encoding="utf-8").splitlines()) == 12

    def test_csv_summary(self, tmp_path, capsys):
        main(["generate", "--out", str(tmp_path / "a.jsonl"), "--set", "n_patients=5", "--format", "csv"])
        header = capsys.readouterr().out.splitlines()[0]
        assert header.startswith("label,marginal,trajectories")


class TestTrain:
    def test_outputs(self, workspace):
        assert workspace["full"].exists()
        log = pd.read_csv(f"{workspace['full']}.log.csv", comment="#")
        assert list(log.columns) == ["epoch", "train_loss", "val_pr_auc", "z_norm_total"]
        assert list(log["epoch"]) == [1, 2]
        header = open(f"{workspace['full']}.log.csv", encoding="utf-8").readline()
        assert header.startswith("# ")

    def test_disabled_gate_keeps_constant_norm(self, workspace, tmp_path):
        ckpt = tmp_path / "dpm.ckpt"
        argv = ["train", "--data", str(workspace["data"]), "--out-checkpoint", str(ckpt), "--ablate", "dpm"]
        assert main(argv + SMALL_MODEL) == EXIT_OK
        log = pd.read_csv(f"{ckpt}.log.csv", comment="#")
        assert log["z_norm_total"].nunique() == 1
        assert log["z_norm_total"].iloc[0] == pytest.approx(17.0)

    def test_vocabulary_files_match_checkpoint(self, workspace):
        directory = f"{workspace['full']}.vocab"
        assert os.path.isfile(os.path.join(directory, "tokens.tsv"))
        assert os.path.isfile(os.path.join(directory, "labels.tsv"))
        stored = load_checkpoint(str(workspace["full"])).vocab
        loaded = Vocabulary.load(directory, stored.label_mode)
        assert loaded.id_to_token == stored.id_to_token
        assert loaded.id_to_label == stored.id_to_label

    def test_smoke_dataset_with_bundled_config(self, tmp_path, capsys):
        ckpt = tmp_path / "smoke.ckpt"
        argv = ["train", "--data", str(SAMPLE_DATA / "smoke.jsonl"), "--config", str(SAMPLE_DATA / "smoke.conf")]
        assert main(argv + ["--out-checkpoint", str(ckpt)]) == EXIT_OK
        assert ckpt.exists()
        assert load_checkpoint(str(ckpt)).config.d_model == 16
        assert "pr_auc=" in capsys.readouterr().out

    def test_report_file_holds_config(self, workspace, tmp_path):
        report = tmp_path / "report.txt"
        argv = ["train", "--data", str(workspace["data"]), "--out-checkpoint", str(tmp_path / "m.ckpt")]
        assert main(argv + ["--report", str(report)] + SMALL_MODEL) == EXIT_OK
        text = report.read_text(encoding="utf-8")
        assert "pr_auc=" in text
        assert "config.d_model=8" in text

    def test_eval_on_test_split_reproduces_train_report(self, tmp_path, capsys):
        data = tmp_path / "data.jsonl"
        generate(data, seed=4)
        ckpt = tmp_path / "m.ckpt"
        capsys.readouterr()
        assert main(["train", "--data", str(data), "--out-checkpoint", str(ckpt), *SMALL_MODEL]) == EXIT_OK
        train_out = capsys.readouterr().out
        assert main(["eval", "--checkpoint", str(ckpt), "--data", str(data), "--split", "test"]) == EXIT_OK
        eval_out = capsys.readouterr().out
        assert train_out == eval_out
        assert "variant=full" in eval_out
        assert "pred " in eval_out.splitlines()[-1]

    def test_empty_data_file(self, tmp_path):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("", encoding="utf-8")
        argv = ["train", "--data", str(empty), "--out-checkpoint", str(tmp_path / "m.ckpt")]
        assert main(argv) == EXIT_VALIDATION

    def test_bad_config(self, workspace, tmp_path):
        argv = ["train", "--data", str(workspace["data"]), "--out-checkpoint", str(tmp_path / "m.ckpt")]
        assert main(argv + ["--set", "d_model=10", "--set", "n_heads=4"]) == EXIT_VALIDATION
        assert not (tmp_path / "m.ckpt").exists()

    def test_missing_data_file(self, tmp_path):
        argv = ["train", "--data", str(tmp_path / "absent.jsonl"), "--out-checkpoint", str(tmp_path / "m.ckpt")]
        assert main(argv) == EXIT_VALIDATION

    def test_numeric_failure(self, workspace, tmp_path, monkeypatch):
        def diverge(*args, **kwargs):
            raise NumericError("non-finite loss at step 1", step=1, block="loss")

        monkeypatch.setattr(train_command, "train", diverge)
        argv = ["train", "--data", str(workspace["data"]), "--out-checkpoint", str(tmp_path / "m.ckpt")]
        assert main(argv + SMALL_MODEL) == EXIT_NUMERIC

    def test_unknown_command(self):
        with pytest.raises(SystemExit) as exc:
            main(["serve"])
        assert exc.value.code == 2


class TestNowcast:
    def _nowcast(self, capsys, ckpt, history, *extra):
        capsys.readouterr()
        code = main(["nowcast", "--checkpoint", str(ckpt), "--history-file", str(history), *extra])
        return code, capsys.readouterr().out

    def test_deterministic_ranked_output(self, workspace, capsys):
        first = self._nowcast(capsys, workspace["full"], workspace["history"], "--top-k", "3")
        second = self._nowcast(capsys, workspace["full"], workspace["history"], "--top-k", "3")
        assert first == second
        code, out = first
        assert code == EXIT_OK
        lines = out.strip().splitlines()
        assert lines[0].split() == ["rank", "label", "probability"]
        assert len(lines) == 4

    def test_csv_probabilities_descend(self, workspace, capsys):
        code, out = self._nowcast(capsys, workspace["full"], workspace["history"], "--format", "csv")
        assert code == EXIT_OK
        frame = pd.read_csv(io.StringIO(out))
        assert list(frame["rank"]) == list(range(1, len(frame) + 1))
        assert frame["probability"].is_monotonic_decreasing

    def test_no_decay_model_repeats_daily(self, workspace, capsys):
        last = float(pd.read_json(workspace["history"], lines=True)["events"][0][-1]["t"])
        _, at_t = self._nowcast(capsys, workspace["no_decay"], workspace["history"], "--at-time", str(last + 3.0))
        _, at_t_plus_day = self._nowcast(
            capsys, workspace["no_decay"], workspace["history"], "--at-time", str(last + 27.0)
        )
        assert at_t == at_t_plus_day

    def test_vocabulary_files_are_cross_checked(self, workspace, tmp_path, capsys):
        ckpt = tmp_path / "copy.ckpt"
        ckpt.write_bytes(workspace["full"].read_bytes())
        Vocabulary(["DX99"], ["LAB99:high"]).save(f"{ckpt}.vocab")
        code, _ = self._nowcast(capsys, ckpt, workspace["history"])
        assert code == EXIT_VALIDATION

    def test_explicit_vocabulary_directory(self, workspace, tmp_path, capsys):
        ckpt = tmp_path / "copy.ckpt"
        ckpt.write_bytes(workspace["full"].read_bytes())
        expected = self._nowcast(capsys, workspace["full"], workspace["history"])
        moved = self._nowcast(capsys, ckpt, workspace["history"], "--vocab-dir", f"{workspace['full']}.vocab")
        assert moved == expected
        code, _ = self._nowcast(capsys, ckpt, workspace["history"], "--vocab-dir", str(tmp_path / "absent"))
        assert code == EXIT_VALIDATION

    def test_time_before_history(self, workspace, capsys):
        code, _ = self._nowcast(capsys, workspace["full"], workspace["history"], "--at-time", "-1")
        assert code == EXIT_VALIDATION

    def test_history_with_several_trajectories(self, workspace, capsys):
        code, _ = self._nowcast(capsys, workspace["full"], workspace["data"])
        assert code == EXIT_VALIDATION


@pytest.mark.slow
class TestNowcastRecovery:
    """With certain recurrence, an abnormal lab in the last panel comes back with the same flag"""

    RULES = ["--set", "p_r=1", "--set", "medication_effect=0", "--set", "stat_prob=0"]

    def _final_panel_cut(self, trajectory):
        """(history trajectory, time of the held-out panel)"""
        final_time = trajectory.lab_times()[-1]
        history = [e for e in trajectory.events if e.t < final_time]
        return Trajectory.from_events(trajectory.patient_id, trajectory.visit_id, history), final_time

    def test_planted_retest_lab_is_ranked_high(self, tmp_path, capsys):
        data = tmp_path / "train.jsonl"
        fresh = tmp_path / "fresh.jsonl"
        generate_argv = ["generate", "--set", "n_patients=120", *self.RULES]
        assert main([*generate_argv, "--out", str(data), "--seed", "21"]) == EXIT_OK
        assert main([*generate_argv, "--out", str(fresh), "--seed", "22"]) == EXIT_OK

        ckpt = tmp_path / "m.ckpt"
        settings = [
            "d_model=16", "n_heads=2", "n_layers=1", "m_decay=4", "max_len=32",
            "epochs=15", "batch_size=16", "learning_rate=0.003", "patience=15", "all_panels=true",
        ]
        overrides = [arg for setting in settings for arg in ("--set", setting)]
        assert main(["train", "--data", str(data), "--out-checkpoint", str(ckpt), *overrides]) == EXIT_OK

        checked = 0
        for trajectory in parse_trajectory_file(str(fresh)):
            history, final_time = self._final_panel_cut(trajectory)
            lab_times = history.lab_times()
            if not lab_times:
                continue
            last_panel = [e for e in history.events if e.is_lab and e.t == lab_times[-1]]
            abnormal = [e for e in last_panel if e.flag is not LabFlag.NORMAL]
            if not abnormal:
                continue

            history_file = tmp_path / "history.jsonl"
            write_trajectory_file(str(history_file), [history])
            capsys.readouterr()
            argv = ["nowcast", "--checkpoint", str(ckpt), "--history-file", str(history_file)]
            argv += ["--at-time", str(final_time), "--top-k", str(len(last_panel)), "--format", "csv"]
            assert main(argv) == EXIT_OK
            ranked = set(pd.read_csv(io.StringIO(capsys.readouterr().out))["label"])
            assert abnormal[0].label_token() in ranked, trajectory.patient_id

            checked += 1
            if checked == 5:
                break
        assert checked == 5


if __name__ == "__main__":
    pytest.main([__file__])
