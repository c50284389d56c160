import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from biqual.corruption import CorruptionSpec
from biqual.data import BiqualityDataset, concat
from biqual.harness.datasets import make_blobs
from biqual.harness.grid import synthesize_cell
from biqual.learner import TrainConfig, evaluate, fit
from biqual.transfer import BoostEnsemble, MtlConfig, mtl_fit, mtl_loss, tradaboost_fit


def test_mtl_loss_examples():
    assert mtl_loss(2.0, 4.0, 1.0) == 2.0
    assert mtl_loss(2.0, 4.0, 0.0) == 4.0
    assert mtl_loss(2.0, 4.0, 0.5) == 3.0
    with pytest.raises(ValueError):
        mtl_loss(1.0, 1.0, 1.5)
    with pytest.raises(ValueError):
        MtlConfig(-0.1)


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(0, 1), st.floats(0, 1))
def test_mtl_loss_linear_in_lambda(lt, lu, a, b):
    mid = mtl_loss(lt, lu, (a + b) / 2)
    assert mid == pytest.approx((mtl_loss(lt, lu, a) + mtl_loss(lt, lu, b)) / 2, abs=1e-9)


@pytest.fixture(scope="module")
def noisy_cell():
    clean = make_blobs(1500, 2, 3, 3.0, seed=21)
    return synthesize_cell(clean, 0.1, CorruptionSpec.parse("CAR(0.3)"), 21)


def test_mtl_boundaries(noisy_cell):
    ds, _ = noisy_cell
    cfg = TrainConfig()
    np.testing.assert_allclose(mtl_fit(ds, MtlConfig(1.0), cfg).params, fit(ds.trusted, cfg).params, atol=1e-8)
    np.testing.assert_allclose(mtl_fit(ds, MtlConfig(0.0), cfg).params, fit(ds.untrusted, cfg).params, atol=1e-8)


@pytest.mark.parametrize("lam", [0.25, 0.5, 0.75])
def test_mtl_clean_matches_union(lam):
    clean = make_blobs(3000, 2, 2, 4.0, seed=22)
    ds, test = synthesize_cell(clean, 0.25, CorruptionSpec.parse("CAR(0)"), 22)
    cfg = TrainConfig()
    a = evaluate(mtl_fit(ds, MtlConfig(lam), cfg), test).accuracy
    b = evaluate(fit(concat(ds.trusted, ds.untrusted), cfg), test).accuracy
    assert abs(a - b) <= 0.01


def test_tradaboost_identical_sets():
    s = make_blobs(600, 2, 2, 3.0, seed=23)
    test = make_blobs(2000, 2, 2, 3.0, seed=24)
    ens = tradaboost_fit(BiqualityDataset(s, s), 10, TrainConfig())
    assert abs(evaluate(ens, test).accuracy - evaluate(fit(s, TrainConfig()), test).accuracy) <= 0.02


def test_tradaboost_two_rounds_single_voter(noisy_cell):
    ens = tradaboost_fit(noisy_cell[0], 2, TrainConfig())
    assert ens.rounds == 2
    assert len(ens.voters) == 1 and ens.voters[0] is ens.members[-1]


def test_tradaboost_flipped_mass_shrinks():
    wins = 0
    for seed in range(10):
        clean = make_blobs(2000, 2, 10, 3.0, seed=1000 + seed)
        ds, _ = synthesize_cell(clean, 0.05, CorruptionSpec.parse("CAR(0.4)"), seed)
        ens = tradaboost_fit(ds, 10, TrainConfig())
        n_u = len(ds.untrusted)
        after_first, final = ens.weight_history[1][:n_u], ens.weight_history[-1][:n_u]
        wins += final[ds.flip_mask].sum() < after_first[ds.flip_mask].sum()
    assert wins >= 9


def test_tradaboost_update_rule(noisy_cell):
    ds, _ = noisy_cell
    rounds = 6
    ens = tradaboost_fit(ds, rounds, TrainConfig())
    n_u = len(ds.untrusted)
    union = concat(ds.untrusted, ds.trusted)
    beta_u = 1 / (1 + math.sqrt(2 * math.log(n_u) / rounds))
    hist = ens.weight_history
    for r, (h, _) in enumerate(ens.members):
        miss = h.predict(union.features) != union.labels
        ratio = hist[r + 1] / hist[r]
        assert np.all(np.isfinite(hist[r + 1])) and np.all(hist[r + 1] > 0)
        u_miss, u_hit = miss[:n_u], ~miss[:n_u]
        scale = ratio[:n_u][u_hit]
        np.testing.assert_allclose(scale, scale[0], rtol=1e-9)
        np.testing.assert_allclose(ratio[:n_u][u_miss], beta_u * scale[0], rtol=1e-9)
        # trusted mistakes are upweighted by 1 / beta_t relative to hits
        err = ens.errors[r]
        t_miss = miss[n_u:]
        if t_miss.any():
            np.testing.assert_allclose(ratio[n_u:][t_miss], scale[0] * (1 - err) / err, rtol=1e-9)


def test_tradaboost_rejects_multiclass():
    s = make_blobs(90, 3, 2, seed=0)
    with pytest.raises(ValueError, match="binary"):
        tradaboost_fit(BiqualityDataset(s, s), 4, TrainConfig())


def test_tradaboost_rejects_single_round(noisy_cell):
    with pytest.raises(ValueError):
        tradaboost_fit(noisy_cell[0], 1, TrainConfig())


def test_tradaboost_perfect_trusted_fit_floors_error():
    s = make_blobs(200, 2, 2, 20.0, seed=25)
    ens = tradaboost_fit(BiqualityDataset(s, s), 4, TrainConfig())
    assert min(ens.errors) == pytest.approx(1e-10)
    assert all(np.isfinite(v) and v > 0 for _, v in ens.members)


def test_ensemble_json_roundtrip(noisy_cell):
    ds, test = noisy_cell
    ens = tradaboost_fit(ds, 4, TrainConfig())
    back = BoostEnsemble.from_json(ens.to_json())
    np.testing.assert_array_equal(back.predict_proba(test.features), ens.predict_proba(test.features))
    assert back.half_point == ens.half_point
