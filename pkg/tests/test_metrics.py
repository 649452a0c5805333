import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from o2rnav.metrics import (LossWeights, fmt, joint_loss, photometric_loss, spl, spl_term, ssim, ssim_loss,
                            ssim_map, success_rate, summarize, task_terms)

from oracles import ssim_reference


def test_spl_unit_values():
    assert spl_term(True, 4.0, 4.0) == 1.0
    assert spl_term(False, 4.0, 4.0) == 0.0
    assert spl_term(True, 8.0, 4.0) == 0.5
    # a path shorter than the optimum is clamped to 1
    assert spl_term(True, 3.0, 4.0) == 1.0
    with pytest.raises(ValueError):
        spl_term(True, 1.0, 0.0)


def test_empty_batch_is_undefined():
    assert success_rate([]) is None and spl([]) is None
    assert fmt(None) == "n/a"
    assert summarize([])["sr"] is None


episodes = st.lists(st.tuples(st.booleans(), st.floats(0.1, 100), st.floats(0.1, 50)), max_size=30)


@settings(max_examples=60, deadline=None)
@given(episodes)
def test_spl_never_exceeds_sr(eps):
    if not eps:
        return
    assert spl(eps) <= success_rate(eps) + 1e-12
    assert 0.0 <= spl(eps) <= 1.0


def test_ssim_identity_is_exact():
    a = np.random.default_rng(0).random((20, 30))
    assert ssim(a, a) == 1.0
    assert (ssim_map(a, a) == 1.0).all()


@pytest.mark.parametrize("seed", range(3))
def test_ssim_matches_loop_reference(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((12, 9)), rng.random((12, 9))
    assert ssim(a, b) == pytest.approx(ssim_reference(a, b), abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_ssim_symmetric(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((10, 10)), rng.random((10, 10))
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-15)


def test_photometric_loss():
    a = np.random.default_rng(1).random((8, 8))
    assert photometric_loss(a, a, 1.0) == 0.0
    assert photometric_loss(a, a + 0.5, 2.0) == pytest.approx(0.25 + math.log(2.0))
    with pytest.raises(ValueError):
        photometric_loss(a, a, 0.0)
    with pytest.raises(ValueError):
        photometric_loss(a, a, 1.0, mask=np.zeros_like(a, bool))


def test_photometric_sigma_minimizer_is_mean_residual():
    rng = np.random.default_rng(2)
    pred, gt = rng.random((16, 16)), rng.random((16, 16))
    resid = np.abs(pred - gt).mean()
    log_sigmas = np.linspace(math.log(0.2 * resid), math.log(5 * resid), 2001)
    losses = [photometric_loss(pred, gt, math.exp(s)) for s in log_sigmas]
    assert math.exp(log_sigmas[int(np.argmin(losses))]) == pytest.approx(resid, rel=0.01)
    # r / sigma + log sigma is convex in log sigma (in sigma itself only below 2r)
    assert (np.diff(losses, 2) >= -1e-12).all()


def test_ssim_loss_zero_for_identical_maps():
    a = np.random.default_rng(3).random((10, 10))
    assert ssim_loss(a, a, 1.0) == 0.0


def _maps(seed):
    rng = np.random.default_rng(seed)
    gt = {"o": rng.random((12, 12)), "a": rng.random((12, 12)), "r": rng.uniform(-1, 1, (12, 12))}
    pred = {k: np.clip(v + rng.normal(0, 0.1, v.shape), -1 if k == "r" else 0, 1) for k, v in gt.items()}
    return pred, gt


def test_joint_loss_is_sum_of_terms():
    pred, gt = _maps(0)
    w = LossWeights((0.1, -0.2, 0.3), (0.0, 0.5, -0.4))
    mask = np.random.default_rng(9).random((12, 12)) < 0.4
    terms = task_terms(pred, gt, w, mask)
    assert len(terms) == 6
    assert abs(joint_loss(pred, gt, w, mask) - math.fsum(terms.values())) <= 1e-12


def test_joint_loss_invariant_to_task_order():
    pred, gt = _maps(1)
    flipped_p = dict(reversed(list(pred.items())))
    flipped_g = dict(reversed(list(gt.items())))
    assert joint_loss(pred, gt) == joint_loss(flipped_p, flipped_g)


def test_joint_loss_perfect_prediction_unit_sigma_is_zero():
    _, gt = _maps(2)
    assert joint_loss(gt, gt) == 0.0


def test_task_terms_need_all_tasks():
    pred, gt = _maps(3)
    del pred["r"]
    with pytest.raises(ValueError):
        task_terms(pred, gt)


def test_loss_weights_validation():
    with pytest.raises(ValueError):
        LossWeights((0.0, 0.0), (0.0, 0.0, 0.0))
    w = LossWeights.from_sigmas((1.0, 2.0, 0.5), (1.0, 1.0, 1.0))
    assert w.sigma_p("a") == pytest.approx(2.0)
