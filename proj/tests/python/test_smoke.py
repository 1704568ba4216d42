import math

import numpy as np
import pytest

import cvar

TINY = {
    "data.classes": "4",
    "data.clips_per_class": "3",
    "data.val_clips_per_class": "2",
    "data.frames": "4",
    "data.size": "16",
    "data.seed": "5",
    "epochs": "2",
    "embed_epochs": "1",
    "embed_layers": "1",
    "model.size": "16",
    "model.patch": "8",
    "model.dim": "16",
    "model.layers": "2",
    "model.heads": "2",
    "layers": "1,2",
}


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    info = cvar.generate_dataset(root, TINY, force=True)
    return root, info


def test_dataset_is_balanced_and_reproducible(dataset, tmp_path):
    _, info = dataset
    assert info["splits"]["train"]["per_class"] == [3, 3, 3, 3]
    assert info["splits"]["val"]["paired"]
    again = cvar.generate_dataset(tmp_path / "ds", TINY)
    assert again["manifest_sha256"] == info["manifest_sha256"]


def test_train_then_evaluate(dataset, tmp_path):
    root, _ = dataset
    epochs = cvar.train(root, tmp_path / "run", TINY)
    assert [e["epoch"] for e in epochs] == [1, 2]
    assert all(math.isfinite(e["total"]) for e in epochs)
    assert (tmp_path / "run" / "metrics.csv").exists()
    report = cvar.evaluate(root, tmp_path / "run", remark2_clips=4)
    assert report["ego"]["samples"] == 8
    assert 0.0 <= report["ego"]["top1"] <= 1.0
    assert report["remark2"]["clips"] <= 4


def test_seeded_training_is_deterministic(dataset, tmp_path):
    root, _ = dataset
    a = cvar.train(root, tmp_path / "a", TINY)
    b = cvar.train(root, tmp_path / "b", TINY)
    assert a == b
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_config_errors_are_value_errors():
    with pytest.raises(cvar.ConfigError):
        cvar.config_text({"no_such_key": "1"})
    with pytest.raises(ValueError):
        cvar.config_text({"alpha": "-1"})
    assert "alpha = 0.5" in cvar.config_text({"alpha": "0.5"})
    assert cvar.fingerprint({"alpha": "0.5"}) != cvar.fingerprint()


def test_divergence_hand_value():
    assert cvar.d_a([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.125 * math.log(3), abs=1e-7)
    assert cvar.d_a([0.3, 0.7], [0.3, 0.7]) == pytest.approx(0.0, abs=1e-12)
    assert cvar.d_a([1.0, 0.0], [0.0, 1.0], beta=0.5) == 0.5
    assert cvar.d_x_pixel([0.0, 1.0], [1.0, 1.0]) == pytest.approx(0.5)


def test_ranking_metrics():
    labels = [0, 1, 2, 1]
    perfect = np.eye(3)[labels]
    assert cvar.topk_accuracy(perfect, labels, 1) == 1.0
    m, per_class = cvar.mean_average_precision(perfect, perfect)
    assert m == 1.0
    assert per_class == [1.0, 1.0, 1.0]
    with pytest.raises(cvar.ShapeError):
        cvar.topk_accuracy(perfect, [0, 1, 5, 1], 1)


def test_gradient_check():
    assert cvar.gradcheck(coords_per_tensor=2) < 1e-4
