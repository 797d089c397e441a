import json
import math

import numpy as np
import pytest

import gatsy


@pytest.fixture(scope="module")
def small():
    ds = gatsy.generate_synthetic(blocks=2, nodes_per_block=20, p_in=0.3, p_out=0.02,
                                  feature_dim=6, seed=1)
    split = gatsy.split_dataset(ds.graph.num_nodes, seed=0)
    return ds, split


def small_config(dim):
    cfg = gatsy.model_preset("gatsy", dim)
    cfg.hidden_dim = 16
    return cfg


def test_dataset_shapes(small):
    ds, split = small
    n = ds.graph.num_nodes
    assert ds.features.shape == (n, 6)
    assert ds.features.dtype == np.float64
    assert sorted(split.train + split.validation + split.test) == list(range(n))
    assert ds.vocabulary == ["block_0", "block_1"]
    stats = gatsy.compute_stats(ds.graph)
    assert stats.total_connections == ds.graph.num_edges


def test_parameter_counts():
    assert gatsy.build_model(gatsy.model_preset("fc", 2613)).num_parameters == 800768
    assert gatsy.build_model(gatsy.model_preset("gatsy", 2613)).num_parameters == 935424


def test_ndcg_known_value():
    # Hits at ranks 1 and 3 out of two relevant items.
    expected = (1 + 1 / math.log2(4)) / (1 + 1 / math.log2(3))
    assert gatsy.ndcg_at_k([True, False, True], 2, 3) == pytest.approx(expected, abs=1e-15)


def test_forward_embed_and_errors(small):
    ds, _ = small
    params = gatsy.build_model(small_config(6), seed=3)
    z = gatsy.forward_embed(params, ds.features, ds.graph)
    assert z.shape == (ds.graph.num_nodes, 16)
    assert np.array_equal(z, gatsy.forward_embed(params, ds.features, ds.graph))
    with pytest.raises(gatsy.DimensionError):
        gatsy.forward_embed(params, ds.features[:, :5], ds.graph)


def test_train_checkpoint_and_serve(small, tmp_path):
    ds, split = small
    tc = gatsy.unsupervised_defaults()
    tc.epochs = 2
    tc.batch_size = 16
    tc.seed = 4
    run = gatsy.train(ds, split, small_config(6), tc)
    assert not run.diverged
    assert len(run.log) == 2
    assert [json.loads(line)["epoch"] for line in run.log] == [0, 1]
    score = gatsy.evaluate_embedding(run.params, ds, split.train, split.test, 10)
    assert 0.0 <= score["mean"] <= 1.0

    ds.save(tmp_path / "data")
    gatsy.Checkpoint(run.params, seed=4).save(tmp_path / "model.ckpt")
    assert gatsy.load_checkpoint(tmp_path / "model.ckpt").params.num_parameters == run.params.num_parameters

    svc = gatsy.load_service(tmp_path / "model.ckpt", tmp_path / "data")
    assert svc.size == ds.graph.num_nodes
    assert len(svc.provenance) == 64
    recs = svc.recommend(0, 5)
    assert len(recs) == 5
    assert [r["distance"] for r in recs] == sorted(r["distance"] for r in recs)
    mix = svc.recommend_fictitious([0, 1], 5)
    assert {r["index"] for r in mix}.isdisjoint({0, 1})
    assert svc.projection().shape == (svc.size, 2)
    with pytest.raises(gatsy.QueryError):
        svc.resolve("no such artist anywhere")

    api = gatsy.ApiService(svc)
    status, body = api.handle("POST", "/api/fictitious", {}, json.dumps({"members": [0, 1], "k": 5}))
    assert status == 200
    assert [r["index"] for r in json.loads(body)["items"]] == [r["index"] for r in mix]
    assert api.handle("GET", "/api/recommend/0", {"k": "0"})[0] == 400
