import numpy as np
import pytest

import sje.harness as harness
from sje.embeddings import InputEmbeddingSet, OutputEmbeddingTable, save_feature_matrix, save_output_table, save_split
from sje.errors import ParseError, ValidationError, ZeroShotLeakError
from sje.harness import (
    ExperimentConfig,
    Report,
    cross_validate_eta,
    emit_report,
    format_report,
    parse_report,
    read_report,
    run_experiment,
    run_zero_shot,
)
from sje.model import TrainConfig
from sje.synth import generate_planted_task, noise_table


@pytest.fixture(scope="module")
def noisy():
    return generate_planted_task(seed=1, noise=0.5)


def trainval(task):
    return task.data.select(task.split.train | task.split.val)


class TestConfig:
    def test_cmb_needs_two_tables(self):
        with pytest.raises(ValidationError, match="two"):
            ExperimentConfig(mode="cmb", tables=("a",))

    def test_empty_grid(self):
        with pytest.raises(ValidationError, match="empty"):
            ExperimentConfig(eta_grid=())

    def test_split_sources_exclusive(self):
        with pytest.raises(ValidationError):
            ExperimentConfig(split="s.txt", split_counts=(1, 1, 1))

    def test_unknown_mode(self):
        with pytest.raises(ValidationError):
            ExperimentConfig(mode="sum")


class TestCrossValidateEta:
    def test_singleton(self, planted):
        sel = cross_validate_eta(trainval(planted), planted.table, planted.split, [1e-2])
        assert sel.eta == 1e-2 and len(sel.scores) == 1

    def test_selected_is_max(self, noisy):
        sel = cross_validate_eta(trainval(noisy), noisy.table, noisy.split, [1e-3, 1e-2, 1e-1])
        assert all(sel.val_accuracy >= acc for _, acc in sel.scores)
        assert (sel.eta, sel.val_accuracy) in sel.scores

    def test_tie_goes_to_smaller(self, noisy):
        data = trainval(noisy)
        # both grid points train the same way except eta; equal scores must keep the smaller one
        sel = cross_validate_eta(data, noisy.table, noisy.split, [0.5, 0.5, 0.05])
        accs = dict(sel.scores)
        if accs[0.05] >= accs[0.5]:
            assert sel.eta == 0.05
        dup = cross_validate_eta(data, noisy.table, noisy.split, [0.1, 0.1])
        assert dup.eta == 0.1 and dup.scores[0] == dup.scores[1]

    def test_base_config_respected(self, planted):
        sel = cross_validate_eta(trainval(planted), planted.table, planted.split, [0.1], TrainConfig(max_epochs=1, patience=1))
        assert sel.model.epochs_run == 1

    def test_empty_grid(self, planted):
        with pytest.raises(ValidationError):
            cross_validate_eta(trainval(planted), planted.table, planted.split, [])


class TestRunExperiment:
    def test_single_recovers_noiseless_task(self, planted):
        r = run_experiment(planted.data, [planted.table], planted.split, ExperimentConfig())
        assert r.test_accuracy >= 0.99
        assert sum(n for _, n, _ in r.per_class) == 200
        assert {name for name, _, _ in r.per_class} == {planted.table.class_names[c] for c in planted.split.test}
        assert dict(r.provenance) == {"eta": "val-cv", "epoch": "val-early-stopping"}

    def test_cmb_with_identical_copies(self, noisy):
        single = run_experiment(noisy.data, [noisy.table], noisy.split, ExperimentConfig())
        cmb = run_experiment(noisy.data, [noisy.table, noisy.table], noisy.split, ExperimentConfig(mode="cmb"))
        assert cmb.test_accuracy == single.test_accuracy
        assert dict(cmb.provenance)["alpha"] == "val-grid"

    def test_cmb_dominates_members(self, noisy):
        r = run_experiment(noisy.data, [noisy.table, noise_table(noisy)], noisy.split, ExperimentConfig(mode="cmb"))
        assert r.val_accuracy >= max(r.member_val_accuracy)
        assert len(r.eta) == 2 and len(r.alpha) == 2

    def test_fixed_alpha(self, noisy):
        cfg = ExperimentConfig(mode="cmb", alpha=(0.5, 0.5))
        r = run_experiment(noisy.data, [noisy.table, noise_table(noisy)], noisy.split, cfg)
        assert r.alpha == (0.5, 0.5) and dict(r.provenance)["alpha"] == "fixed"

    def test_cnc(self, noisy):
        r = run_experiment(noisy.data, [noisy.table, noise_table(noisy)], noisy.split, ExperimentConfig(mode="cnc"))
        assert r.alpha is None and 0 <= r.test_accuracy <= 1

    def test_no_test_sample_reaches_training(self, noisy, monkeypatch):
        seen_labels, updates = set(), []
        real_train = harness.train

        def spy(data, *args, **kwargs):
            seen_labels.update(np.unique(data.labels).tolist())
            return real_train(data, *args, **kwargs)

        monkeypatch.setattr(harness, "train", spy)
        run_experiment(noisy.data, [noisy.table, noise_table(noisy)], noisy.split, ExperimentConfig(mode="cmb"),
                       on_update=lambda i, t, v: updates.append((t, v)))
        assert updates
        assert not seen_labels & noisy.split.test
        assert {c for pair in updates for c in pair} <= noisy.split.train

    def test_cmb_with_one_table(self, planted):
        with pytest.raises(ValidationError, match="two"):
            run_experiment(planted.data, [planted.table], planted.split, ExperimentConfig(mode="cmb"))

    def test_separate_test_file_with_leak(self, planted):
        with pytest.raises(ZeroShotLeakError):
            run_experiment(planted.data, [planted.table], planted.split, ExperimentConfig(), test_data=planted.data)

    def test_separate_test_file(self, planted):
        clean = planted.data.select(planted.split.train | planted.split.val)
        r = run_experiment(clean, [planted.table], planted.split, ExperimentConfig(), test_data=planted.data)
        assert r.test_accuracy >= 0.99

    def test_table_order_does_not_matter(self, noisy):
        shuffled = noisy.table.reindex(noisy.table.class_names[::-1])
        a = run_experiment(noisy.data, [noisy.table], noisy.split, ExperimentConfig())
        b = run_experiment(noisy.data, [shuffled], noisy.split, ExperimentConfig())
        assert a == b


class TestReport:
    def test_round_trip(self, noisy):
        r = run_experiment(noisy.data, [noisy.table, noise_table(noisy)], noisy.split, ExperimentConfig(mode="cmb"))
        assert parse_report(format_report(r)) == r

    def test_file_round_trip(self, tmp_path, planted):
        r = run_experiment(planted.data, [planted.table], planted.split, ExperimentConfig())
        emit_report(r, tmp_path / "r.txt")
        assert read_report(tmp_path / "r.txt") == r
        assert "[per_class]\nclass,n,correct,accuracy\n" in (tmp_path / "r.txt").read_text()

    def test_accuracy_range_enforced(self):
        with pytest.raises(ValidationError, match="outside"):
            format_report(Report(mode="single", seed=0, test_accuracy=1.5))

    def test_deterministic(self, noisy):
        cfg = ExperimentConfig(mode="cmb", seed=3)
        tables = [noisy.table, noise_table(noisy)]
        a = format_report(run_experiment(noisy.data, tables, noisy.split, cfg))
        b = format_report(run_experiment(noisy.data, tables, noisy.split, cfg))
        assert a == b

    def test_malformed(self):
        with pytest.raises(ParseError):
            parse_report("mode=single\nseed=zero\n")
        with pytest.raises(ParseError, match="key=value"):
            parse_report("mode=single\nnonsense\n")


class TestRunZeroShot:
    def test_from_files(self, tmp_path, planted):
        save_feature_matrix(planted.data, tmp_path / "f.txt")
        save_output_table(planted.table, tmp_path / "t.txt")
        save_split(planted.split, planted.table.class_names, tmp_path / "s.txt")
        cfg = ExperimentConfig(features=str(tmp_path / "f.txt"), tables=(str(tmp_path / "t.txt"),),
                               split=str(tmp_path / "s.txt"), report=str(tmp_path / "r.txt"))
        r = run_zero_shot(cfg)
        assert r.test_accuracy >= 0.99
        assert read_report(tmp_path / "r.txt") == r

    def test_missing_split(self, tmp_path, planted):
        save_feature_matrix(planted.data, tmp_path / "f.txt")
        save_output_table(planted.table, tmp_path / "t.txt")
        cfg = ExperimentConfig(features=str(tmp_path / "f.txt"), tables=(str(tmp_path / "t.txt"),))
        with pytest.raises(ValidationError, match="split"):
            run_zero_shot(cfg)

    def test_split_counts(self, tmp_path, planted):
        save_feature_matrix(planted.data, tmp_path / "f.txt")
        save_output_table(planted.table, tmp_path / "t.txt")
        cfg = ExperimentConfig(features=str(tmp_path / "f.txt"), tables=(str(tmp_path / "t.txt"),),
                               split_counts=(12, 4, 4), seed=0)
        assert run_zero_shot(cfg).classes == (12, 4, 4)
