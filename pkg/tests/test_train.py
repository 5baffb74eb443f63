"""Seed derivation, optimizers, and the multi-restart fitting loop."""
import math

import numpy as np
import pytest

from orbitfit.datasets import GeneratorSpec, generate
from orbitfit.fields import BumpSpec, FieldFamily, spectral_norm
from orbitfit.flows import FlowConfig, FlowDivergenceError
from orbitfit.model import Dataset, empirical_risk
from orbitfit.train import (
    EncoderSpec,
    TrainConfig,
    _Stepper,
    derive_seed,
    evaluate,
    fit,
    init_trainable,
    splitmix64,
)

GOLDEN = 0x9E3779B97F4A7C15
MASK = (1 << 64) - 1


# ---------------------------------------------------------------------------
# seed derivation
# ---------------------------------------------------------------------------

def test_splitmix64_reference_stream():
    """First outputs of the reference generator seeded with 0."""
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert splitmix64(GOLDEN) == 0x6E789E6AA1B965F4
    assert splitmix64((2 * GOLDEN) & MASK) == 0x06C45D188009454F


def test_splitmix64_matches_an_independent_reimplementation():
    def reference(seed, count):
        out, state = [], seed & MASK
        for _ in range(count):
            state = (state + 0x9E3779B97F4A7C15) & MASK
            z = state
            z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
            z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
            out.append((z ^ (z >> 31)) & MASK)
        return out
    stream = reference(0, 5)
    for k, expect in enumerate(stream):
        assert splitmix64((k * GOLDEN) & MASK) == expect


def test_derived_seeds_are_distinct_and_in_range():
    seeds = {derive_seed(7, k) for k in range(200)}
    assert len(seeds) == 200
    assert all(0 <= s <= MASK for s in seeds)
    assert derive_seed(7, 3) == (7 ^ splitmix64(3)) & MASK


# ---------------------------------------------------------------------------
# configuration and steppers
# ---------------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(optimizer="lbfgs")
    with pytest.raises(ValueError):
        TrainConfig(field_init="zeros")
    with pytest.raises(ValueError):
        EncoderSpec(kind="cnn").build(np.random.default_rng(0), 2, (-1, 1))


def test_plain_gradient_step_with_decay():
    cfg = TrainConfig(optimizer="gd", learning_rate=0.5, lr_decay=0.1)
    stepper = _Stepper(cfg, 2)
    theta = np.array([1.0, 2.0])
    g = np.array([1.0, -1.0])
    theta = stepper.step(theta, g)
    np.testing.assert_allclose(theta, [0.5, 2.5])
    theta = stepper.step(theta, g)  # second step uses lr * decay
    np.testing.assert_allclose(theta, [0.45, 2.55])


def test_momentum_step_accumulates():
    cfg = TrainConfig(optimizer="momentum", learning_rate=0.1, momentum=0.5)
    stepper = _Stepper(cfg, 1)
    theta = np.array([0.0])
    g = np.array([1.0])
    theta = stepper.step(theta, g)          # buffer = 1
    np.testing.assert_allclose(theta, [-0.1])
    theta = stepper.step(theta, g)          # buffer = 0.5 + 1 = 1.5
    np.testing.assert_allclose(theta, [-0.25])


def test_adaptive_moment_first_step_is_sign_scaled():
    cfg = TrainConfig(optimizer="adaptive_moment", learning_rate=0.05,
                      epsilon=1e-8)
    stepper = _Stepper(cfg, 3)
    theta = np.zeros(3)
    g = np.array([10.0, -0.01, 0.0])
    out = stepper.step(theta, g)
    # bias-corrected first step moves by lr * g / (|g| + eps) per coordinate
    np.testing.assert_allclose(out[:2], [-0.05 * 10 / (10 + 1e-8),
                                         0.05 * 0.01 / (0.01 + 1e-8)])
    assert out[2] == 0.0


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def _toy_setup(kind="constant", n=12, seed=50):
    rng = np.random.default_rng(seed)
    data = Dataset(rng.uniform(-1, 1, size=(n, 2)))
    bump = BumpSpec(3.0, 6.0) if kind == "affine" else None
    family = FieldFamily(kind=kind, dim=2, v_max=2.0, bump=bump)
    return data, family, rng


def test_init_trainable_draws_anchors_from_the_data():
    data, family, rng = _toy_setup(n=12)
    cfg = TrainConfig(anchor_count=5)
    tr = init_trainable(data, family, EncoderSpec(kind="affine"), 2, (-1.0, 1.0),
                        cfg, FlowConfig(step_size_max=0.25), rng)
    assert tr.anchors.shape == (5, 2)
    rows = {tuple(r) for r in data.points}
    assert all(tuple(a) in rows for a in tr.anchors)
    np.testing.assert_array_equal(tr.logits, np.zeros(5))
    assert len(tr.parts) == 2 and len(tr.fields) == 2
    # anchor count saturates at the dataset size
    tr_all = init_trainable(data, family, EncoderSpec(kind="affine"), 1,
                            (-1.0, 1.0), TrainConfig(anchor_count=64),
                            FlowConfig(step_size_max=0.25), rng)
    assert tr_all.anchors.shape == (12, 2)


def test_affine_fields_initialize_near_rotations():
    data, family, rng = _toy_setup(kind="affine")
    cfg = TrainConfig(field_init="auto")
    tr = init_trainable(data, family, EncoderSpec(kind="affine"), 1, (-1.0, 1.0),
                        cfg, FlowConfig(step_size_max=0.25), rng)
    A = tr.fields[0].A
    assert spectral_norm(A) <= 1.0 + 1e-9
    # dominated by the skew part: the symmetric part is the 0.05-scale noise
    sym = 0.5 * (A + A.T)
    assert np.linalg.norm(sym, 2) < 0.25
    cfg = TrainConfig(field_init="family")
    tr = init_trainable(data, family, EncoderSpec(kind="affine"), 1, (-1.0, 1.0),
                        cfg, FlowConfig(step_size_max=0.25), rng)
    assert np.abs(tr.fields[0].A).max() <= 1.0 / math.sqrt(2.0) + 1e-12


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

def _quick_fit(seed=0, restarts=2, max_iters=40):
    data = generate(GeneratorSpec(shape="segment", dim=2, n=16))
    family = FieldFamily(kind="constant", dim=2, v_max=5.0)
    cfg = TrainConfig(optimizer="adaptive_moment", learning_rate=3e-2,
                      max_iters=max_iters, restarts=restarts, seed=seed)
    report = fit(data, family, EncoderSpec(kind="mlp", hidden=4), 1,
                 (-1.0, 1.0), cfg, FlowConfig(step_size_max=0.2))
    return data, report


def test_fit_is_deterministic_in_the_seed():
    data, rep1 = _quick_fit(seed=3)
    _, rep2 = _quick_fit(seed=3)
    assert rep1.final_risk == rep2.final_risk
    assert rep1.restart_risks == rep2.restart_risks
    x = data.points[:4]
    np.testing.assert_array_equal(rep1.model.reconstruct(x),
                                  rep2.model.reconstruct(x))
    _, rep3 = _quick_fit(seed=4)
    assert rep3.final_risk != rep1.final_risk


def test_fit_report_is_internally_consistent():
    data, rep = _quick_fit(restarts=3)
    assert len(rep.restart_risks) == 3
    assert rep.final_risk == min(rep.restart_risks)
    assert rep.aborted_restarts == 0
    assert rep.seed == 0
    assert rep.final_risk == pytest.approx(empirical_risk(rep.model, data),
                                           rel=1e-9)
    assert evaluate(rep.model, data) == empirical_risk(rep.model, data)
    risks = [r for r, _ in rep.history]
    gnorms = [g for _, g in rep.history]
    assert all(np.isfinite(risks)) and all(np.isfinite(gnorms))
    assert 2 <= len(rep.history) <= 41
    assert min(risks) == pytest.approx(rep.final_risk, rel=1e-12)


def test_fit_makes_progress():
    data, rep = _quick_fit(max_iters=120)
    first_risk = rep.history[0][0]
    assert rep.final_risk < 0.25 * first_risk


def test_fit_rejects_zero_layers():
    data = generate(GeneratorSpec(shape="segment", dim=2, n=4))
    with pytest.raises(ValueError):
        fit(data, FieldFamily("constant", 2), EncoderSpec(), 0, (-1.0, 1.0))


def test_diverging_restarts_are_recorded_and_total_divergence_raises():
    data = generate(GeneratorSpec(shape="segment", dim=2, n=6))
    family = FieldFamily(kind="constant", dim=2, v_max=100.0)
    cfg = TrainConfig(optimizer="gd", learning_rate=0.0, max_iters=1,
                      restarts=2, seed=0, field_init="family")
    tight = FlowConfig(step_size_max=0.05, safety_radius=1e-3)
    with pytest.raises(FlowDivergenceError):
        fit(data, family, EncoderSpec(kind="affine"), 1, (-1.0, 1.0), cfg, tight)
