import math
import os
import subprocess

import pytest

import fairtensor as ft

SMALL = {"N": 40, "M": 16, "K": 3, "true_rank": 3, "target_sparsity": 0.08, "bias_strength": 0.3, "seed": 5}


def small_split():
    pos, groups, _, _ = ft.synth_generate(SMALL)
    obs = ft.negative_sample(pos, 0.05, 1)
    train, test = ft.split(obs, 0.7, 1)
    return groups, train, test


def test_tensor_roundtrip():
    t = ft.ObservationTensor((2, 2, 1), [(1, 0, 0, 1.0), (0, 1, 0, 0.0)])
    assert len(t) == 2
    assert t.dims == (2, 2, 1)
    assert t.entries() == [(0, 1, 0, 0.0), (1, 0, 0, 1.0)]
    assert t.sparsity() == 0.5
    with pytest.raises(ValueError):
        ft.ObservationTensor((2, 2, 1), [(0, 0, 0, 1.0), (0, 0, 0, 1.0)])


def test_synth_and_split():
    pos, groups, g0, g1 = ft.synth_generate(SMALL)
    assert len(pos) == round(0.08 * 40 * 16 * 3)
    assert g0 + g1 == len(pos)
    assert sorted(set(groups)) == [0, 1]
    train, test = ft.split(pos, 0.7, 3)
    assert len(train) == math.floor(0.7 * len(pos))
    assert len(train) + len(test) == len(pos)
    with pytest.raises(ft.SplitError):
        ft.split(ft.ObservationTensor((1, 1, 1), [(0, 0, 0, 1.0)]), 0.7, 1)


def test_metrics():
    assert ft.ks([0, 0], [1, 1], 50) == pytest.approx(0.98)
    assert ft.ks([0, 1], [1, 1], 50) == pytest.approx(0.49)
    assert ft.mad([1, 2, 3], [2, 3, 4]) == 1.0
    assert ft.f1_at_k(0.0958, 0.4384) == pytest.approx(0.1572, abs=5e-4)
    assert ft.precision_at_k([[0, 1], [0, 1]], [[0, 1], [1]], 2) == 0.75
    with pytest.raises(ft.UndefinedMetricError):
        ft.recall_at_k([[0]], [[]], 1)


def test_train_predict_checkpoint(tmp_path):
    groups, train, test = small_split()
    cfg = {"rank": 5, "max_iters": 50, "seed": 2}
    for kind in ft.MODELS:
        model = ft.train_model(kind, train, groups if kind not in ("OTC", "OMC") else None, cfg)
        assert model.kind == kind
        path = tmp_path / f"{kind}.json"
        ft.save_checkpoint(model, path)
        back = ft.load_checkpoint(path)
        for i, j, k, _ in test.entries()[:50]:
            assert back.predict(i, j, k) == model.predict(i, j, k)
        ranked = model.top_k(0, 0, 3)
        assert len(ranked) == 3
    with pytest.raises(ft.ConfigError):
        ft.train_model("FT", train, None, cfg)
    with pytest.raises(ft.ConfigError):
        ft.train_model("XX", train)


def test_ft_narrows_group_gap():
    groups, train, test = small_split()
    otc = ft.train_model("OTC", train, None, {"rank": 5, "max_iters": 100})
    fair = ft.train_model("FT", train, groups, {"rank": 5, "max_iters": 100})

    def spread(model):
        s = [[], []]
        for i, j, k, _ in test.entries():
            s[groups[j]].append(model.predict(i, j, k))
        return ft.mad(*s)

    assert spread(fair) < spread(otc)


def test_oracles_and_experiment():
    assert all(c["passed"] for c in ft.run_oracles())
    csv_text, report = ft.run_experiment(
        {"synth": SMALL, "repeats": 1, "models": ["OTC", "FT"], "k": 5, "train": {"rank": 4, "max_iters": 30}}
    )
    assert csv_text.splitlines()[0] == "model,run,seed,p_at_k,r_at_k,f1_at_k,mad,ks"
    assert [r["model"] for r in report["rows"]] == ["FT", "OTC"]
    assert all("error" not in r for r in report["rows"])


@pytest.mark.skipif("FAIRTENSOR_CLI" not in os.environ, reason="CLI path not provided")
def test_cli_oracle():
    assert subprocess.run([os.environ["FAIRTENSOR_CLI"], "oracle"], capture_output=True).returncode == 0
