import math

import pytest
import torch

from common.config import PRESETS, SynthConfig, TrainConfig
from common.errors import ConfigError
from data_prep.scene_io import DatasetManifest
from data_prep.synthetic import generate_synthetic
from graph.schema import AnchorCentredGraph, AnchorScores
from training.checkpoint import load_checkpoint, save_checkpoint
from training.trainer import evaluate_anpm, graph_micro_f1, make_optimizer, train
from tests.factories import make_model, make_scene, tiny_config


def tiny_train_config(**overrides) -> TrainConfig:
    values = {**PRESETS["tiny"], "iterations": 4, "batch_size": 2, "checkpoint_every": 2, "log_every": 2,
              "learning_rate": 1e-2, "seed": 5}
    return TrainConfig.model_validate({**values, **overrides})


def tiny_dataset(n_scenes=4, refs=3, seed=0) -> DatasetManifest:
    config = tiny_config()
    return generate_synthetic(SynthConfig(
        n_scenes=n_scenes, objects_per_scene=3, tokens_per_scene=3, refs_per_scene=refs,
        d_app=config.d_app, d_ft=config.d_ft, d_phoc=config.d_phoc, max_objects=3, max_tokens=3,
    ), seed)


def _same_state(a, b):
    sa, sb = a.state_dict(), b.state_dict()
    return sa.keys() == sb.keys() and all(torch.equal(sa[k], sb[k]) for k in sa)


def test_adamax_matches_its_closed_form():
    x = torch.nn.Parameter(torch.tensor([1.5], dtype=torch.float64))
    module = torch.nn.Module()
    module.x = x
    optimizer = make_optimizer(module, learning_rate=0.1)

    value, m, u = 1.5, 0.0, 0.0
    for t in range(1, 4):
        optimizer.zero_grad()
        (x ** 2).sum().backward()
        optimizer.step()
        g = 2 * value
        m = 0.9 * m + 0.1 * g
        u = max(0.999 * u, abs(g) + 1e-8)
        value -= 0.1 / (1 - 0.9 ** t) * m / u
        assert math.isclose(float(x), value, rel_tol=1e-12)


def test_training_is_deterministic():
    dataset, config = tiny_dataset(), tiny_train_config()
    model_a, report_a = train(dataset, config)
    model_b, report_b = train(dataset, config)
    assert _same_state(model_a, model_b)
    assert report_a.history == report_b.history
    assert len(report_a.history) == config.iterations


def test_training_writes_checkpoints_and_report(tmp_path):
    _, report = train(tiny_dataset(), tiny_train_config(), tmp_path)
    assert report.checkpoint_path == str(tmp_path / "model.pt")
    assert (tmp_path / "checkpoint-000002.pt").is_file()
    assert (tmp_path / "train_report.json").is_file()
    assert 0.0 <= report.anchor_accuracy <= 1.0
    assert 0.0 <= report.graph_f1 <= 1.0
    assert 0.0 <= report.caption_token_accuracy <= 1.0


def test_zero_learning_rate_keeps_the_loss_constant():
    dataset = tiny_dataset(n_scenes=1, refs=1)
    _, report = train(dataset, tiny_train_config(learning_rate=0.0, batch_size=1, iterations=5))
    totals = [r.total for r in report.history]
    assert len(set(totals)) == 1


def test_resumed_run_follows_the_same_trajectory(tmp_path):
    dataset, config = tiny_dataset(), tiny_train_config()
    full_model, full_report = train(dataset, config, tmp_path / "full")
    resumed_model, resumed_report = train(dataset, config, tmp_path / "resumed",
                                          resume_from=tmp_path / "full" / "checkpoint-000002.pt")
    assert _same_state(full_model, resumed_model)
    assert resumed_report.history == full_report.history


def test_checkpoint_round_trip_is_exact(tmp_path):
    model, _ = train(tiny_dataset(), tiny_train_config(iterations=2))
    path = save_checkpoint(tmp_path / "ckpt.pt", model)
    loaded, payload = load_checkpoint(path)
    assert _same_state(model, loaded)
    assert loaded.vocab == model.vocab
    assert loaded.config == model.config
    assert payload["version"] == 1


def test_missing_checkpoint_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "nope.pt")


def test_dataset_without_minable_anchor_is_rejected():
    config = tiny_config()
    scene = make_scene(config, texts=("stop",), refs=("a sign",))
    with pytest.raises(ConfigError):
        train(DatasetManifest(scenes=[scene]), tiny_train_config())


def test_micro_f1_hand_computed_case():
    assert graph_micro_f1([{0, 1}], [{1, 2}]) == 0.5


def test_micro_f1_extremes():
    assert graph_micro_f1([{0, 2}, {1}], [{0, 2}, {1}]) == 1.0
    assert graph_micro_f1([{0}], [{1}]) == 0.0
    assert graph_micro_f1([], []) == 1.0


def test_evaluate_anpm_reports_fractions():
    dataset = tiny_dataset()
    model, report = train(dataset, tiny_train_config(iterations=2))
    accuracy, f1 = evaluate_anpm(model, dataset)
    assert (accuracy, f1) == (report.anchor_accuracy, report.graph_f1)
    assert 0.0 <= accuracy <= 1.0 and 0.0 <= f1 <= 1.0


def _forced_anpm(monkeypatch, model, anchor, members):
    def predict_anchor_scores(T, pad_mask):
        s = torch.zeros(len(pad_mask), dtype=torch.float64)
        s[anchor] = 1.0
        return AnchorScores(s_anchor=s, logits=s, pad_mask=pad_mask)

    def build_acg(T, pad_mask, anchor_idx, confidence):
        return AnchorCentredGraph(anchor_idx=anchor_idx, member_idxs=list(members))

    monkeypatch.setattr(model.anpm, "predict_anchor_scores", predict_anchor_scores)
    monkeypatch.setattr(model.anpm, "build_acg", build_acg)


@pytest.fixture
def anchored_scene():
    config = tiny_config()
    scene = make_scene(config, texts=("stop", "ahead", "exit"), refs=("a stop sign ahead", "stop here"))
    return scene, make_model(config, [scene])


def test_evaluate_anpm_perfect_predictions(monkeypatch, anchored_scene):
    scene, model = anchored_scene
    _forced_anpm(monkeypatch, model, anchor=0, members=[1])
    assert evaluate_anpm(model, DatasetManifest(scenes=[scene])) == (1.0, 1.0)


def test_evaluate_anpm_wrong_anchor(monkeypatch, anchored_scene):
    scene, model = anchored_scene
    _forced_anpm(monkeypatch, model, anchor=2, members=[])
    accuracy, f1 = evaluate_anpm(model, DatasetManifest(scenes=[scene]))
    assert accuracy == 0.0
    assert f1 == 0.0


def test_evaluate_anpm_partial_graph(monkeypatch, anchored_scene):
    scene, model = anchored_scene
    _forced_anpm(monkeypatch, model, anchor=0, members=[2])
    assert evaluate_anpm(model, DatasetManifest(scenes=[scene])) == (1.0, 0.5)
