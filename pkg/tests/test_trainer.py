import csv
import warnings

import numpy as np
import pytest

from lipids.exceptions import ConfigurationError, DatasetError
from lipids.lightspace import LightBinGrid, bin_sample, sample_bin_lights
from lipids.render import RenderedSample, SceneSpec, render_dataset
from lipids.scenarios import make_scenes
from lipids.trainer import (Checkpoint, IlluminationPlanner, TrainConfig, column_impurity, column_overlap,
                            evolution_report, fit, selection_penalty, write_evolution_csv)
from lipids import tensor as T

pytestmark = pytest.mark.filterwarnings("ignore::lipids.exceptions.DuplicateSelectionWarning")

SMALL = dict(n_extract=2, n_head=2, width=16, batch_size=4, pixels_per_item=32)


@pytest.fixture(scope="module")
def scenes():
    return make_scenes(LightBinGrid(2, 2), 3, seed=0, size=16)


def test_paper_recipe_defaults():
    cfg = TrainConfig()
    assert (cfg.epochs, cfg.lr, cfg.batch_size, cfg.beta) == (30, 1e-4, 32, 10.0)
    assert (cfg.early_stop_epoch, cfg.width, cfg.n_extract, cfg.n_head) == (10, 64, 7, 4)
    assert TrainConfig(early_stop=True).last_epoch == 10


@pytest.mark.parametrize("kw", [{"n_select": 0}, {"epochs": 0}, {"batch_size": 0}, {"steps_per_epoch": 0}])
def test_config_validation(kw):
    with pytest.raises(ConfigurationError):
        TrainConfig(**kw)


def test_m_larger_than_k(scenes):
    with pytest.raises(ConfigurationError):
        fit(scenes, TrainConfig(n_select=5, epochs=1, **SMALL))


def test_inconsistent_bins(scenes):
    short = RenderedSample(scenes[0].images[:3], scenes[0].lights[:3], scenes[0].normals,
                           scenes[0].mask, bin_ids=scenes[0].bin_ids[:3], name="short")
    with pytest.raises(DatasetError, match="short"):
        fit([scenes[1], short], TrainConfig(n_select=2, epochs=1, **SMALL))
    raw = RenderedSample(scenes[0].images, scenes[0].lights, scenes[0].normals, scenes[0].mask)
    with pytest.raises(DatasetError):
        fit([raw], TrainConfig(n_select=2, epochs=1, **SMALL))


def test_same_seed_same_checkpoints(scenes):
    cfg = TrainConfig(n_select=2, epochs=3, steps_per_epoch=3, seed=5, **SMALL)
    a = fit(scenes, cfg)
    b = fit(scenes, cfg)
    for ca, cb in zip(a.checkpoints, b.checkpoints):
        assert ca.loss == cb.loss
        assert np.array_equal(ca.weights, cb.weights)
        for x, y in zip(ca.net_state, cb.net_state):
            assert np.array_equal(x, y)


def test_checkpoints_and_alpha(scenes):
    seen = []
    res = fit(scenes, TrainConfig(n_select=2, epochs=4, steps_per_epoch=2, **SMALL), callback=seen.append)
    assert [c.epoch for c in res.checkpoints] == [1, 2, 3, 4]
    assert [c.alpha for c in res.checkpoints] == [10.0, 40.0, 90.0, 160.0]
    assert seen == res.checkpoints
    assert res.bins_at(4) == res.bin_indices


def test_early_stop(scenes):
    res = fit(scenes, TrainConfig(n_select=2, epochs=30, early_stop=True, early_stop_epoch=2,
                                  steps_per_epoch=1, **SMALL))
    assert len(res.checkpoints) == 2


def test_dark_bins_are_avoided():
    """Two of four bins are never lit; the single selected bin must be a lit one."""
    grid = LightBinGrid(2, 2)
    samples = []
    for i in range(4):
        spec = SceneSpec(height=16, width=16, albedo=0.8, seed=i)
        lights = sample_bin_lights(grid, i, jitter=0.3)
        s = bin_sample(render_dataset(spec, lights), grid)
        s.images[[1, 2]] = 0.0
        samples.append(s)
    cfg = TrainConfig(n_select=1, epochs=12, steps_per_epoch=15, lr=1e-3, n_extract=2, n_head=2,
                      width=16, batch_size=4, pixels_per_item=64, seed=0)
    res = fit(samples, cfg)
    assert res.bin_indices[0] in (0, 3)


def test_penalties():
    one_hot = T.Tensor(np.eye(4)[:, :3])
    assert float(column_impurity(one_hot).value) == 0.0
    assert float(column_overlap(one_hot).value) == 0.0
    same = T.Tensor(np.tile(np.eye(4)[:, :1], (1, 3)))
    assert float(column_impurity(same).value) == 0.0
    assert float(column_overlap(same).value) == pytest.approx(1.0)
    uniform = T.Tensor(np.full((4, 2), 0.25))
    assert float(column_impurity(uniform).value) == pytest.approx(0.75)
    assert float(selection_penalty(uniform).value) == pytest.approx(0.75 + 0.25)
    assert float(column_overlap(T.Tensor(np.ones((4, 1)) / 4)).value) == 0.0


def _ck(epoch, W):
    return Checkpoint(epoch, 10.0 * epoch**2, W, [], 0.0, list(np.argmax(W, axis=0)))


def test_evolution_report(tmp_path):
    rows = evolution_report([_ck(1, np.ones((12, 3)))], bin_ids=np.arange(12) * 2)
    assert [r[:3] for r in rows] == [(1, 0, 0), (1, 1, 0), (1, 2, 0)]
    for r in rows:
        assert r[3] == pytest.approx(1 / 12)

    W = np.random.default_rng(0).normal(size=(12, 3)) * 0.01
    frozen = [_ck(e, W) for e in range(1, 31)]
    rows = evolution_report(frozen)
    for col in range(3):
        w = [r[3] for r in rows if r[1] == col]
        assert all(b >= a for a, b in zip(w, w[1:]))
    write_evolution_csv(rows, tmp_path / "evo.csv")
    with open(tmp_path / "evo.csv") as fh:
        data = list(csv.reader(fh))
    assert data[0] == ["epoch", "column", "argmax_bin", "max_softmax_weight"]
    assert len(data) == 91


def test_estimator_api(scenes):
    est = IlluminationPlanner(n_lights=2, n_azimuth=2, n_elevation=2, epochs=2, steps_per_epoch=2,
                              batch_size=4, pixels_per_item=32)
    params = est.get_params()
    assert params["n_lights"] == 2 and params["beta"] == 10.0 and "sharpen" in params
    with pytest.raises(Exception):
        est.transform(scenes)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est.fit(scenes)
    assert len(est.bin_indices_) == 2
    out = est.transform(scenes)
    assert out[0].n_lights == len(set(est.bin_indices_))
    maps = est.predict(scenes[:1])
    assert maps[0].shape == scenes[0].normals.shape
    if len(set(est.bin_indices_)) >= 3:
        assert est.score(scenes) <= 0
    assert est.configuration_.to_dict()["M"] == 2
