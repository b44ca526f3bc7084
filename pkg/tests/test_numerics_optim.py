"""AdamW semantics and the cosine schedule, verified against hand math."""

import numpy as np
import pytest

from parq.numerics import AdamW, Tensor, clip_grad_norm, cosine_lr


def manual_adamw(p, g, lr, b1, b2, eps, wd, steps):
    """Independent reference implementation on plain scalars."""
    m = v = 0.0
    for t in range(1, steps + 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        p = p - lr * (mhat / (np.sqrt(vhat) + eps) + wd * p)
    return p


@pytest.mark.parametrize("wd", [0.0, 0.1])
@pytest.mark.parametrize("steps", [1, 3])
def test_adamw_matches_reference(wd, steps):
    t = Tensor(np.array([1.0]), requires_grad=True)
    opt = AdamW([("p", t)], lr=0.1, betas=(0.9, 0.999), eps=1e-8, weight_decay=wd)
    for _ in range(steps):
        t.grad = np.array([0.5])
        opt.step()
    expected = manual_adamw(1.0, 0.5, 0.1, 0.9, 0.999, 1e-8, wd, steps)
    np.testing.assert_allclose(t.data, [expected], rtol=1e-12)


def test_weight_decay_is_decoupled_from_moments():
    # Moment estimates must be identical with and without decay.
    t1 = Tensor(np.array([2.0]), requires_grad=True)
    t2 = Tensor(np.array([2.0]), requires_grad=True)
    opt1 = AdamW([("p", t1)], lr=0.05, weight_decay=0.0)
    opt2 = AdamW([("p", t2)], lr=0.05, weight_decay=0.5)
    for opt, t in ((opt1, t1), (opt2, t2)):
        t.grad = np.array([1.0])
        opt.step()
    np.testing.assert_array_equal(opt1._m["p"], opt2._m["p"])
    np.testing.assert_array_equal(opt1._v["p"], opt2._v["p"])
    # The parameter difference is exactly the decoupled decay term.
    np.testing.assert_allclose(t1.data - t2.data, [0.05 * 0.5 * 2.0], rtol=1e-12)


def test_adamw_skips_missing_grads():
    t = Tensor(np.array([1.0]), requires_grad=True)
    opt = AdamW([("p", t)], lr=0.1)
    opt.step()
    np.testing.assert_array_equal(t.data, [1.0])


def test_zero_grad():
    t = Tensor(np.array([1.0]), requires_grad=True)
    t.grad = np.array([1.0])
    AdamW([("p", t)]).zero_grad()
    assert t.grad is None


def test_state_roundtrip():
    rng = np.random.default_rng(0)
    t = Tensor(rng.standard_normal(4), requires_grad=True)
    opt = AdamW([("p", t)], lr=0.01)
    for _ in range(3):
        t.grad = rng.standard_normal(4)
        opt.step()
    state = {k: v.copy() for k, v in opt.state_arrays().items()}

    t2 = Tensor(t.data.copy(), requires_grad=True)
    opt2 = AdamW([("p", t2)], lr=0.01)
    opt2.load_state_arrays(state)
    g = rng.standard_normal(4)
    t.grad = g.copy()
    t2.grad = g.copy()
    opt.step()
    opt2.step()
    np.testing.assert_array_equal(t.data, t2.data)
    assert opt2.step_count == opt.step_count


def test_cosine_schedule_endpoints_and_midpoint():
    base = 3e-4
    assert cosine_lr(0, 100, base) == pytest.approx(base)
    assert cosine_lr(100, 100, base) == pytest.approx(0.0, abs=1e-18)
    assert cosine_lr(50, 100, base) == pytest.approx(base / 2)
    assert cosine_lr(200, 100, base) == pytest.approx(0.0, abs=1e-18)  # clamped past horizon
    values = [cosine_lr(s, 100, base) for s in range(101)]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_cosine_schedule_rejects_bad_horizon():
    with pytest.raises(ValueError):
        cosine_lr(0, 0, 1e-4)


def test_clip_grad_norm():
    a = Tensor(np.zeros(3), requires_grad=True)
    b = Tensor(np.zeros(4), requires_grad=True)
    a.grad = np.array([3.0, 0.0, 0.0])
    b.grad = np.array([0.0, 4.0, 0.0, 0.0])
    norm = clip_grad_norm([a, b], max_norm=1.0)
    assert norm == pytest.approx(5.0)
    total = np.sqrt((a.grad**2).sum() + (b.grad**2).sum())
    assert total == pytest.approx(1.0)
    # Below the limit nothing changes.
    a.grad = np.array([0.1, 0.0, 0.0])
    b.grad = np.zeros(4)
    clip_grad_norm([a, b], max_norm=1.0)
    np.testing.assert_allclose(a.grad, [0.1, 0.0, 0.0])
