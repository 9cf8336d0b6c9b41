import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from trapforge import losszoo as lz
from trapforge.losszoo import (BarlowConfig, ContrastiveConfig, DinoConfig, MomentumState,
                               SupervisedConfig)

E = np.eye(4)
TAU1 = ContrastiveConfig(temperature=1.0)


def rng(seed=0):
    return np.random.default_rng(seed)


# -- NT-Xent family --------------------------------------------------------------

def test_nt_xent_single_pair_is_zero():
    assert lz.nt_xent(E[:1], E[1:2]).value == 0.0


def test_nt_xent_uniform_batch_ln3():
    z = np.ones((2, 3))
    assert abs(lz.nt_xent(z, z).value - math.log(3)) <= 1e-9


def test_nt_xent_orthogonal_pairs():
    z = E[:2, :3]
    assert lz.nt_xent(z, z, TAU1).value == pytest.approx(-math.log(math.e / (math.e + 2)), abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_nt_xent_matches_oracle(seed):
    zA, zB = rng(seed).standard_normal((2, 5, 6))
    assert lz.nt_xent(zA, zB).value == pytest.approx(oracles.nt_xent(zA, zB, 0.1), abs=1e-10)


def test_nt_xent_rejects_shape_mismatch_and_zero_rows():
    with pytest.raises(ValueError):
        lz.nt_xent(np.ones((2, 3)), np.ones((3, 3)))
    with pytest.raises(ValueError):
        lz.nt_xent(np.zeros((2, 3)), np.ones((2, 3)))


def test_queue_examples():
    e = np.eye(3)
    empty = np.zeros((0, 3))
    assert lz.nt_xent_queue(e[:2], e[:2], empty).value == 0.0
    out = lz.nt_xent_queue(e[:1], e[:1], e[1:2], TAU1)
    assert out.value == pytest.approx(-math.log(math.e / (math.e + 1)), abs=1e-12)
    assert not out.grads["k_pos"].any() and not out.grads["queue"].any()


def test_queue_accepts_momentum_state_and_rejects_dim_mismatch():
    q = rng().standard_normal((3, 4))
    state = MomentumState(queue=rng(1).standard_normal((5, 4)))
    assert lz.nt_xent_queue(q, q, state).value == lz.nt_xent_queue(q, q, state.queue).value
    with pytest.raises(ValueError):
        lz.nt_xent_queue(q, q, np.ones((2, 5)))


# -- DCL / DCLW --------------------------------------------------------------------

def test_vmf_weights_uniform_when_similarities_equal():
    assert np.allclose(lz.vmf_weights(np.full(5, 0.3), 0.5), 1.0)


def test_dclw_large_sigma_reduces_to_dcl():
    zA, zB = rng(3).standard_normal((2, 6, 5))
    w = lz.dclw(zA, zB, ContrastiveConfig(0.1, 1e9)).value
    assert w == pytest.approx(lz.dcl(zA, zB).value, abs=1e-6)
    assert lz.dcl(zA, zB).value == pytest.approx(oracles.dclw(zA, zB, 0.1, 0.5, weighted=False), abs=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_dclw_n2_matches_oracle(seed):
    zA, zB = rng(seed).standard_normal((2, 2, 4))
    assert lz.dclw(zA, zB).value == pytest.approx(oracles.dclw(zA, zB, 0.1, 0.5), abs=1e-10)


def test_dclw_needs_negatives():
    with pytest.raises(ValueError):
        lz.dclw(E[:1], E[:1])


# -- Barlow Twins ------------------------------------------------------------------

def test_barlow_identity_correlation_is_zero():
    z = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)
    assert abs(lz.barlow_twins(z, z).value) <= 1e-9


def test_barlow_zero_correlation_equals_dim():
    h1, h2, h3 = np.array([[1, 1, -1, -1], [1, -1, 1, -1], [1, -1, -1, 1]], dtype=float)
    zA, zB = np.column_stack([h1, h2]), np.column_stack([h3, h3])
    assert lz.barlow_twins(zA, zB).value == pytest.approx(2.0, abs=1e-12)


def test_barlow_matches_oracle():
    zA, zB = rng(5).standard_normal((2, 4, 3))
    assert lz.barlow_twins(zA, zB).value == pytest.approx(oracles.barlow(zA, zB, 5e-3), abs=1e-10)


def test_barlow_needs_two_rows():
    with pytest.raises(ValueError):
        lz.barlow_twins(np.ones((1, 3)), np.ones((1, 3)))


def test_barlow_constant_column_is_finite():
    z = rng().standard_normal((5, 3))
    z[:, 1] = 2.0
    assert math.isfinite(lz.barlow_twins(z, z).value)


# -- negative cosine, BYOL, FastSiam ------------------------------------------------

def test_negative_cosine_examples():
    p = rng().standard_normal((3, 4))
    assert lz.negative_cosine(p, p).value == pytest.approx(-1.0)
    assert lz.negative_cosine(E[:2], E[2:]).value == 0.0
    assert lz.negative_cosine(p, -p).value == pytest.approx(1.0)


def test_byol_examples():
    p = rng().standard_normal((3, 4))
    assert lz.byol(p, p, p, p).value == pytest.approx(-2.0)
    assert lz.byol(E[:2], E[2:], E[:2], E[2:]).value == 0.0
    pA, zB, pB, zA = rng(2).standard_normal((4, 3, 4))
    expected = lz.negative_cosine(pA, zB).value + lz.negative_cosine(pB, zA).value
    assert lz.byol(pA, zB, pB, zA).value == expected


def test_fastsiam_examples():
    p = rng().standard_normal((3, 4))
    assert lz.fastsiam(p, [p]).value == pytest.approx(-1.0)
    out = lz.fastsiam(p, rng(1).standard_normal((3, 3, 4)))
    assert not out.grads["targets"].any()
    with pytest.raises(ValueError):
        lz.fastsiam(p, [])


@pytest.mark.parametrize("half", [0.1, 0.5, 1.0])
def test_fastsiam_symmetric_targets(half):
    p = np.array([[1.0, 0.0]])
    t1 = np.array([[math.cos(half), math.sin(half)]])
    t2 = np.array([[math.cos(half), -math.sin(half)]])
    # the mean of the two targets points along p
    assert lz.fastsiam(p, [t1, t2]).value == pytest.approx(-1.0, abs=1e-12)
    q = np.array([[math.cos(0.3), math.sin(0.3)]])
    assert lz.fastsiam(q, [t1, t2]).value == pytest.approx(-math.cos(0.3), abs=1e-12)


# -- DINO --------------------------------------------------------------------------

def test_dino_uniform_ln_k():
    v = np.zeros((3, 4))
    out, _ = lz.dino([v, v], [v, v], DinoConfig(student_temp=0.1, teacher_temp=0.1))
    assert abs(out.value - math.log(4)) <= 1e-9


def test_dino_center_momentum_one_is_fixpoint():
    c = rng().standard_normal(4)
    s = rng(1).standard_normal((2, 3, 4))
    _, new = lz.dino(list(s), list(s), DinoConfig(center=c, center_momentum=1.0))
    assert np.array_equal(new, c)


def test_dino_center_update():
    c = rng().standard_normal(4)
    t = rng(1).standard_normal((2, 3, 4))
    _, new = lz.dino(list(t), list(t), DinoConfig(center=c))
    assert np.allclose(new, 0.9 * c + 0.1 * t.reshape(-1, 4).mean(axis=0))


def test_dino_multicrop_matches_oracle():
    r = rng(4)
    students = r.standard_normal((4, 3, 5))
    teachers = r.standard_normal((2, 3, 5))
    center = 0.1 * r.standard_normal(5)
    out, _ = lz.dino(list(students), list(teachers), DinoConfig(center=center))
    expected, count = oracles.dino(students, teachers, center, 0.1, 0.04)
    assert count == 6
    assert out.value == pytest.approx(expected, abs=1e-10)


def test_dino_errors():
    v = np.zeros((2, 4))
    with pytest.raises(ValueError):
        lz.dino([v], [v], DinoConfig(center=np.zeros(3)))
    with pytest.raises(ValueError):
        lz.dino([v], [])


@given(st.integers(0, 10_000))
def test_dino_bounded_below_by_teacher_entropy(seed):
    r = rng(seed)
    teacher, student = r.standard_normal((2, 4, 6))
    # two views with one teacher: the only valid pair is (teacher 0, student 1)
    out, _ = lz.dino([teacher, student], [teacher])
    P = np.exp(teacher / 0.04 - np.max(teacher / 0.04, axis=1, keepdims=True))
    P /= P.sum(axis=1, keepdims=True)
    entropy = float(np.mean(-np.sum(P * np.log(np.maximum(P, 1e-300)), axis=1)))
    assert out.value >= entropy - 1e-12


# -- momentum machinery ---------------------------------------------------------------

def test_ema_examples():
    t, o = rng().standard_normal((2, 7))
    assert np.array_equal(lz.ema_update(t, o, 1.0), t)
    assert np.array_equal(lz.ema_update(t, o, 0.0), o)
    assert lz.ema_update(np.zeros(1), np.ones(1), 0.99)[0] == pytest.approx(0.01)
    with pytest.raises(ValueError):
        lz.ema_update(np.zeros(2), np.zeros(3), 0.5)


def test_queue_push_examples():
    s = MomentumState(max_size=4, queue=np.zeros((0, 2)))
    s2 = lz.queue_push(s, np.ones((2, 2)))
    assert len(s2) == 2 and len(s) == 0
    rows = np.arange(12.0).reshape(6, 2)
    s3 = lz.queue_push(lz.queue_push(s, rows[:3]), rows[3:])
    assert np.array_equal(s3.queue, rows[2:])
    s4 = lz.queue_push(s, np.arange(10.0).reshape(5, 2))
    assert np.array_equal(s4.queue, np.arange(2.0, 10.0).reshape(4, 2))
    with pytest.raises(ValueError):
        lz.queue_push(s3, np.ones((1, 3)))


# -- supervised baselines ---------------------------------------------------------------

def test_arcface_single_class_zero():
    z = rng().standard_normal((3, 4))
    assert lz.arcface(z, np.zeros(3, int), rng(1).standard_normal((1, 4))).value == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_arcface_margin_zero_is_scaled_cosine_ce(seed):
    r = rng(seed)
    z, c = r.standard_normal((5, 6)), r.standard_normal((3, 6))
    y = r.integers(0, 3, 5)
    cfg = SupervisedConfig(arcface_scale=16, arcface_margin=0.0)
    assert abs(lz.arcface(z, y, c, cfg).value - lz.scaled_cosine_ce(z, y, c, 16)) <= 1e-10


def test_arcface_two_class_example():
    cfg = SupervisedConfig(arcface_scale=2, arcface_margin=0.0)
    v = lz.arcface(E[:1], np.array([0]), E[:2], cfg).value
    assert v == pytest.approx(0.126928, abs=1e-6)
    # cos = 1 is clipped to 1 - 1e-7 before arccos, shifting the target logit by s * 1e-7
    assert v == pytest.approx(-math.log(math.e ** 2 / (math.e ** 2 + 1)), abs=3 * 1e-7)


@pytest.mark.parametrize("seed", range(3))
def test_arcface_matches_oracle(seed):
    r = rng(seed)
    z, c = r.standard_normal((4, 5)), r.standard_normal((3, 5))
    y = r.integers(0, 3, 4)
    cfg = SupervisedConfig(arcface_scale=8, arcface_margin=0.5)
    assert lz.arcface(z, y, c, cfg).value == pytest.approx(oracles.arcface(z, y, c, 8, 0.5), abs=1e-10)


def test_arcface_rejects_bad_label():
    with pytest.raises(ValueError):
        lz.arcface(E[:1], np.array([2]), E[:2])


def test_triplet_examples():
    assert lz.triplet(E[:1], E[:1], -E[:1]).value == 0.0
    assert lz.triplet(E[:1], E[1:2], E[1:2]).value == pytest.approx(0.2)
    assert lz.triplet(E[:1], E[1:2], -E[:1]).value == 0.0


def test_supcon_examples():
    z = np.ones((3, 4))
    assert abs(lz.supcon(z, np.zeros(3, int)).value - math.log(2)) <= 1e-9
    z2 = np.vstack([E[0], E[0], E[1], E[1]])
    assert lz.supcon(z2, np.array([0, 0, 1, 1]), TAU1).value == pytest.approx(
        -math.log(math.e / (math.e + 2)), abs=1e-12)
    with pytest.raises(ValueError, match="2"):
        lz.supcon(rng().standard_normal((3, 4)), np.array([0, 0, 2]))


@pytest.mark.parametrize("seed", range(3))
def test_supcon_matches_oracle(seed):
    r = rng(seed)
    z = r.standard_normal((6, 4))
    y = np.array([0, 1, 0, 1, 2, 2])
    assert lz.supcon(z, y).value == pytest.approx(oracles.supcon(z, y, 0.1), abs=1e-10)


# -- invariants --------------------------------------------------------------------------

def _two_view_losses():
    return {"ntxent": lambda a, b: lz.nt_xent(a, b).value,
            "dclw": lambda a, b: lz.dclw(a, b).value,
            "barlow": lambda a, b: lz.barlow_twins(a, b).value,
            "byol": lambda a, b: lz.byol(a, b, b, a).value,
            "triplet": lambda a, b: lz.triplet(a, b, np.roll(b, 1, axis=0)).value}


@given(st.integers(0, 10_000))
def test_losses_invariant_to_row_permutation(seed):
    r = rng(seed)
    a, b = r.standard_normal((2, 5, 4))
    perm = r.permutation(5)
    for name, f in _two_view_losses().items():
        if name == "triplet":
            continue  # the negative pairing is itself order-dependent
        assert f(a[perm], b[perm]) == pytest.approx(f(a, b), abs=1e-12), name
    y = np.array([0, 0, 1, 1, 1])
    assert lz.supcon(a[perm], y[perm]).value == pytest.approx(lz.supcon(a, y).value, abs=1e-12)
    c = r.standard_normal((2, 4))
    assert lz.arcface(a[perm], y[perm], c).value == pytest.approx(lz.arcface(a, y, c).value, abs=1e-12)


@given(st.integers(0, 10_000), st.floats(0.01, 100))
def test_cosine_losses_scale_invariant(seed, c):
    r = rng(seed)
    a, b = r.standard_normal((2, 5, 4))
    row = r.integers(0, 5)
    a2 = a.copy()
    a2[row] *= c
    for name, f in _two_view_losses().items():
        if name == "barlow":
            continue  # not a cosine loss
        assert f(a2, b) == pytest.approx(f(a, b), abs=1e-9), name


@given(st.integers(0, 10_000))
def test_loss_ranges(seed):
    r = rng(seed)
    a, b = r.standard_normal((2, 4, 3))
    assert lz.nt_xent(a, b).value >= 0
    assert lz.dclw(a, b).value >= -1 / 0.1 * 2  # weights can reach 2 with cos up to 1
    assert -1 <= lz.negative_cosine(a, b).value <= 1
    assert -2 <= lz.byol(a, b, b, a).value <= 2
    assert lz.triplet(a, b, -b).value >= 0
    assert lz.supcon(np.vstack([a, b]), np.array([0, 1, 2, 3] * 2)).value >= 0
    assert lz.arcface(a, np.array([0, 1, 0, 1]), b[:2]).value >= 0
    out, _ = lz.dino([a, b], [b, a])
    assert out.value >= 0


# -- gradients ----------------------------------------------------------------------------

@pytest.mark.parametrize("method", sorted(lz.CASES))
def test_gradcheck_every_loss(method):
    res = lz.check_method(method, trials=20, seed=11)
    assert res.stop_gradient_ok
    assert res.max_rel_error <= 1e-4, (res.worst_input, res.worst_index)


def test_gradcheck_nt_xent_example():
    zA, zB = rng(1).standard_normal((2, 4, 8))
    res = lz.grad_check(lambda zA, zB: lz.nt_xent(zA, zB), {"zA": zA, "zB": zB}, eps=1e-5)
    assert res.max_rel_error <= 1e-4


def test_gradcheck_barlow_example():
    zA, zB = rng(2).standard_normal((2, 6, 4))
    res = lz.grad_check(lambda zA, zB: lz.barlow_twins(zA, zB), {"zA": zA, "zB": zB})
    assert res.max_rel_error <= 1e-4


def test_negative_cosine_target_gradient_exactly_zero():
    p, z = rng().standard_normal((2, 3, 4))
    assert np.all(lz.negative_cosine(p, z).grads["z_target"] == 0.0)


def test_gradcheck_default_arcface_and_dino_configs():
    # defaults saturate on random points, so check at a moderate-margin point
    r = rng(5)
    c = r.standard_normal((3, 6))
    z = c[[0, 1, 2, 0]] + 0.8 * r.standard_normal((4, 6))
    res = lz.grad_check(lambda z, class_centers: lz.arcface(z, np.array([0, 1, 2, 0]), class_centers,
                                                          SupervisedConfig(arcface_scale=64)),
                        {"z": z, "class_centers": c})
    assert res.max_rel_error <= 1e-3
    res = lz.grad_check(lambda student_views, teacher_views: lz.dino(student_views, teacher_views),
                        {"student_views": 0.05 * r.standard_normal((3, 2, 4)),
                         "teacher_views": 0.05 * r.standard_normal((2, 2, 4))},
                        stop_gradient=("teacher_views",))
    assert res.checked == 24 and res.stop_gradient_ok
    assert res.max_rel_error <= 1e-4


def test_gradcheck_eps_range():
    with pytest.raises(ValueError):
        lz.grad_check(lambda p: lz.negative_cosine(p, p), {"p": np.ones((1, 2))}, eps=1e-3)


def test_gradcheck_reports_wrong_gradient():
    def bad(p, z_target):
        out = lz.negative_cosine(p, z_target)
        return lz.LossOutput(out.value, {"p": 2 * out.grads["p"], "z_target": out.grads["z_target"]})
    p, z = rng().standard_normal((2, 3, 4))
    res = lz.grad_check(bad, {"p": p, "z_target": z}, stop_gradient=("z_target",))
    assert res.max_rel_error > 0.4 and res.worst_input == "p"


def test_gradcheck_detects_leaking_stop_gradient():
    def leaky(p, z_target):
        out = lz.negative_cosine(p, z_target)
        return lz.LossOutput(out.value, {"p": out.grads["p"], "z_target": np.ones_like(z_target)})
    p, z = rng().standard_normal((2, 3, 4))
    assert not lz.grad_check(leaky, {"p": p, "z_target": z}, stop_gradient=("z_target",)).stop_gradient_ok


def test_triplet_kink_coordinates_skipped():
    a = E[:1].copy()
    res = lz.grad_check(lambda anchor, positive, negative: lz.triplet(anchor, positive, negative),
                        {"anchor": a, "positive": E[1:2], "negative": E[1:2]},
                        kink=lambda anchor, positive, negative: lz.triplet_hinge(
                            anchor, positive, negative) - 0.2)
    assert res.skipped > 0


def test_non_finite_loss_raises():
    with pytest.raises(FloatingPointError):
        lz.LossOutput(float("nan"))


def test_config_invariants():
    for bad in (lambda: ContrastiveConfig(temperature=0), lambda: ContrastiveConfig(vmf_sigma=-1),
                lambda: BarlowConfig(lambda_offdiag=-1), lambda: SupervisedConfig(arcface_margin=2.0),
                lambda: DinoConfig(teacher_temp=0), lambda: MomentumState(momentum=1.5)):
        with pytest.raises(ValueError):
            bad()
