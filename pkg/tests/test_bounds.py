"""Covering-number certificates, the entropy integral, and Rademacher estimates."""
import math

import numpy as np
import pytest

from orbitfit.bounds import (
    STABLE_FORM_CALIBRATION,
    ClassSpec,
    FamilyCoveringSpec,
    InnerOptConfig,
    ambient_radius_for,
    class_spec_for,
    covering_log_ball,
    default_comparison,
    dudley_bound,
    encoder_covering_spec,
    excess_risk_certificate,
    field_covering_spec,
    rademacher_estimate,
    solve_component_radius,
    stable_closed_form,
)
from orbitfit.datasets import GeneratorSpec, generate
from orbitfit.encoders import Encoder, ProductEncoder
from orbitfit.fields import BumpSpec, ComparisonFn, FieldFamily, VectorField
from orbitfit.flows import FlowConfig
from orbitfit.model import ReconstructionMap
from orbitfit.train import EncoderSpec, TrainConfig, init_trainable


def _stable_spec(dim=3, m=1, rate=1.0, support=1.0):
    family = FieldFamily(kind="affine", dim=dim,
                         bump=BumpSpec(2.0 * math.e, 4.0 * math.e))
    cf = ComparisonFn.exp_stable(rate, (0.0, 1.0))
    return class_spec_for(family, "affine", m, (0.0, 1.0), support,
                          comparison=cf)


# ---------------------------------------------------------------------------
# covering logs
# ---------------------------------------------------------------------------

def test_covering_log_ball_hand_values():
    assert covering_log_ball(1.0, 3, 2.0) == pytest.approx(3 * math.log(2.0),
                                                           rel=1e-15)
    assert covering_log_ball(2.0, 4, 0.5) == pytest.approx(4 * math.log(9.0),
                                                           rel=1e-15)
    assert covering_log_ball(0.0, 7, 0.5) == 0.0
    # shrinking the covering radius can only add balls
    assert covering_log_ball(1.0, 3, 0.1) > covering_log_ball(1.0, 3, 0.2)
    with pytest.raises(ValueError):
        covering_log_ball(1.0, 3, 0.0)
    with pytest.raises(ValueError):
        covering_log_ball(-1.0, 3, 0.5)


def test_family_covering_spec_grid_entropy():
    cov = FamilyCoveringSpec(param_count=4, param_diameter=3.0,
                             param_lipschitz=0.5)
    assert cov.covering_constant == 1.5
    assert cov.covering_log(1.0) == pytest.approx(4 * math.log(4.0), rel=1e-15)
    vec = cov.covering_log(np.array([1.0, 3.0]))
    assert vec == pytest.approx([4 * math.log(4.0), 4 * math.log(2.0)],
                                rel=1e-15)
    with pytest.raises(ValueError):
        cov.covering_log(0.0)
    assert cov.to_dict() == {"param_count": 4, "param_diameter": 3.0,
                             "param_lipschitz": 0.5}


# ---------------------------------------------------------------------------
# component net radii
# ---------------------------------------------------------------------------

def test_component_radius_pure_growth_closed_form():
    cf = ComparisonFn.worst_case(1.0, math.inf, (0.0, 1.0))
    assert cf.has_closed_rho
    k = math.e
    m, fb, gain, delta = 2, 2.0, 3.0, 1.0
    rho_i = solve_component_radius(cf, m, fb, gain, delta, "initial")
    assert rho_i == pytest.approx(delta / k ** 2, rel=1e-12)
    # plug-back: the defining equation is beta_iter(rho, m) = delta
    assert cf.beta_iter(rho_i, m) == pytest.approx(delta, rel=1e-12)
    geom = k + 1.0
    rho_t = solve_component_radius(cf, m, fb, gain, delta, "times")
    assert rho_t == pytest.approx(delta / (fb * gain * geom), rel=1e-12)
    # two perturbed layers contribute the argument and one envelope image
    arg = fb * gain * rho_t
    assert arg + cf.beta_max(arg) == pytest.approx(delta, rel=1e-12)
    rho_f = solve_component_radius(cf, m, fb, gain, delta, "fields")
    assert rho_f == pytest.approx(delta / (gain * geom), rel=1e-12)
    arr = solve_component_radius(cf, m, fb, gain, np.array([1.0, 2.0]), "times")
    assert arr == pytest.approx([rho_t, 2.0 * rho_t], rel=1e-12)


def test_component_radius_stable_closed_form():
    cf = ComparisonFn.exp_stable(2.0, (0.5, 1.5))
    gain = cf.perturbation_gain()
    assert gain == pytest.approx(0.5, rel=1e-15)
    k = math.exp(-2.0 * 0.5)
    m, fb, delta = 3, 1.5, 0.25
    rho_i = solve_component_radius(cf, m, fb, gain, delta, "initial")
    assert rho_i == pytest.approx(delta / k ** 3, rel=1e-12)
    assert cf.beta_iter(rho_i, m) == pytest.approx(delta, rel=1e-12)
    geom = 1.0 + k + k ** 2
    rho_f = solve_component_radius(cf, m, fb, gain, delta, "fields")
    assert rho_f == pytest.approx(delta / (gain * geom), rel=1e-12)
    rho_t = solve_component_radius(cf, m, fb, gain, delta, "times")
    assert rho_t == pytest.approx(delta / (fb * gain * geom), rel=1e-12)
    # contraction means per-component budgets exceed the class budget
    assert rho_i > delta


def test_component_radius_bisection_saturates_the_budget():
    cf = ComparisonFn.worst_case(1.0, 2.0, (0.0, 1.0))
    assert not cf.has_closed_rho
    m, fb, gain, delta = 3, 1.5, 2.0, 0.7
    rho_t = solve_component_radius(cf, m, fb, gain, delta, "times")
    arg = fb * gain * rho_t
    total = arg + cf.beta_max(arg) + cf.beta_max(cf.beta_max(arg))
    assert total == pytest.approx(delta, rel=1e-9)
    rho_f = solve_component_radius(cf, m, fb, gain, delta, "fields")
    arg = gain * rho_f
    total = arg + cf.beta_max(arg) + cf.beta_max(cf.beta_max(arg))
    assert total == pytest.approx(delta, rel=1e-9)
    rho_i = solve_component_radius(cf, m, fb, gain, delta, "initial")
    assert cf.beta_iter(rho_i, m) == pytest.approx(delta, rel=1e-9)
    # tighter budgets shrink every component radius
    assert solve_component_radius(cf, m, fb, gain, 0.1, "times") < rho_t
    assert solve_component_radius(cf, m, fb, gain, 0.1, "initial") < rho_i


def test_component_radius_edge_cases():
    cf = ComparisonFn.worst_case(1.0, math.inf, (0.0, 1.0))
    # a zero gain means field perturbations never move the trajectory
    assert solve_component_radius(cf, 2, 1.0, 0.0, 1.0, "fields") == math.inf
    assert solve_component_radius(cf, 2, 0.0, 0.0, 1.0, "times") == math.inf
    assert solve_component_radius(cf, 2, 1.0, 1.0, 0.0, "times") == 0.0
    cf2 = ComparisonFn.worst_case(1.0, 2.0, (0.0, 1.0))
    assert solve_component_radius(cf2, 2, 1.0, 1.0, 0.0, "times") == 0.0
    with pytest.raises(ValueError):
        solve_component_radius(cf, 2, 1.0, 1.0, 1.0, "speeds")
    with pytest.raises(ValueError):
        solve_component_radius(cf, 0, 1.0, 1.0, 1.0, "times")
    with pytest.raises(ValueError):
        solve_component_radius(cf, 2, 1.0, 1.0, -1.0, "times")


# ---------------------------------------------------------------------------
# the entropy integral
# ---------------------------------------------------------------------------

def test_dudley_scales_exactly_as_inverse_sqrt_n():
    spec = _stable_spec()
    r1 = dudley_bound(spec, 100, gamma_resolution=8)
    r2 = dudley_bound(spec, 200, gamma_resolution=8)
    assert abs(r2.value / r1.value - 1.0 / math.sqrt(2.0)) <= 1e-12


def test_dudley_report_structure_and_closed_form_wiring():
    spec = _stable_spec()
    rep = dudley_bound(spec, 400, gamma_resolution=8)
    assert rep.n == 400
    assert rep.value > 0.0
    g1, g2, g3 = rep.gamma
    assert g1 > 0 and g2 > 0 and g3 > 0
    assert g1 + g2 + g3 == pytest.approx(1.0, abs=1e-12)
    assert rep.gain == pytest.approx(1.0, rel=1e-15)  # 1 / rate
    assert len(rep.rho_samples) == 5
    D = spec.diameter
    fracs = [s["delta"] / D for s in rep.rho_samples]
    assert fracs == pytest.approx([rep.eps_cut, 0.25, 0.5, 0.75, 1.0])
    for sample in rep.rho_samples:
        assert set(sample) == {"delta", "times", "fields", "initial"}
        assert min(sample.values()) > 0.0
    closed = stable_closed_form(spec, 400)
    assert rep.closed_form_value == pytest.approx(closed, rel=1e-15)
    want_match = abs(rep.value / (STABLE_FORM_CALIBRATION * closed) - 1.0)
    assert rep.closed_form_match == pytest.approx(want_match, abs=1e-15)
    doc = rep.to_dict()
    assert doc["value"] == rep.value
    assert doc["gamma"] == [g1, g2, g3]
    assert "closed_form_match" in doc
    assert "certificate" not in doc  # unset optionals stay out of the report


def test_dudley_zero_diameter_short_circuit():
    cov = FamilyCoveringSpec(param_count=1, param_diameter=0.0,
                             param_lipschitz=0.0)
    cf = ComparisonFn.exp_stable(1.0, (0.0, 1.0))
    spec = ClassSpec(m=1, dim=2, interval=(0.0, 1.0), comparison=cf,
                     field_bound=0.0, encoder_cov=cov, field_cov=cov,
                     support_radius=0.0, ambient_radius=0.0)
    rep = dudley_bound(spec, 50)
    assert rep.value == 0.0
    assert rep.rho_samples == []
    assert rep.gamma == (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)


def test_dudley_validates_sample_count():
    with pytest.raises(ValueError):
        dudley_bound(_stable_spec(), 0)


def test_stable_closed_form_hand_value():
    enc = FamilyCoveringSpec(param_count=4, param_diameter=2.0,
                             param_lipschitz=0.25)
    fld = FamilyCoveringSpec(param_count=9, param_diameter=4.0,
                             param_lipschitz=0.5)
    cf = ComparisonFn.exp_stable(0.5, (0.0, 2.0))
    spec = ClassSpec(m=4, dim=3, interval=(0.0, 2.0), comparison=cf,
                     field_bound=1.5, encoder_cov=enc, field_cov=fld,
                     support_radius=2.0, ambient_radius=9.0)
    want = (4.0 ** 1.5 / 0.5
            * (enc.covering_constant * 1.5 * math.sqrt(4.0)
               + fld.covering_constant * math.sqrt(9.0))
            + 2.0 * math.sqrt(3.0)) / math.sqrt(25.0)
    assert stable_closed_form(spec, 25) == pytest.approx(want, rel=1e-15)
    wc = ComparisonFn.worst_case(1.0, 1.0, (0.0, 2.0))
    spec_wc = ClassSpec(m=4, dim=3, interval=(0.0, 2.0), comparison=wc,
                        field_bound=1.5, encoder_cov=enc, field_cov=fld,
                        support_radius=2.0, ambient_radius=9.0)
    with pytest.raises(ValueError):
        stable_closed_form(spec_wc, 25)


# ---------------------------------------------------------------------------
# the generalization certificate
# ---------------------------------------------------------------------------

def test_certificate_hand_value_and_validation():
    val = excess_risk_certificate(2.0, 50, 0.1, 0.3)
    want = 4.0 * 0.3 + 2.0 * math.sqrt(2.0 * math.log(1.0 / 0.1) / 50)
    assert val == want
    for bad in (0.0, 1.0, -0.5, 1.5):
        with pytest.raises(ValueError):
            excess_risk_certificate(1.0, 10, bad, 0.0)
    with pytest.raises(ValueError):
        excess_risk_certificate(1.0, 0, 0.5, 0.0)


def test_certificate_concentration_term_halves_on_quadrupled_samples():
    assert (excess_risk_certificate(2.0, 200, 0.1, 0.0)
            == excess_risk_certificate(2.0, 50, 0.1, 0.0) / 2.0)


# ---------------------------------------------------------------------------
# Monte-Carlo Rademacher estimates
# ---------------------------------------------------------------------------

def _point_map(center):
    """Degenerate reconstruction: every input lands on `center`."""
    center = np.asarray(center, dtype=float)
    enc = ProductEncoder((Encoder.affine(np.zeros(center.size), 0.0,
                                         (-1.0, 1.0)),))
    return ReconstructionMap(encoder=enc,
                             fields=(VectorField.constant(np.zeros(center.size)),),
                             xi=center)


def test_rademacher_finite_class_matches_direct_enumeration():
    data = generate(GeneratorSpec(shape="circle", dim=2, n=16,
                                  sampling="grid", seed=0))
    centers = [np.array([0.3, -0.2]), np.array([-1.0, 0.5]), np.zeros(2)]
    mean, stderr = rademacher_estimate([_point_map(c) for c in centers],
                                       data, n_draws=32, seed=5)
    errs = np.stack([np.linalg.norm(data.points - c, axis=1) for c in centers])
    rng = np.random.default_rng(5)
    vals = []
    for _ in range(32):
        eps = rng.choice([-1.0, 1.0], size=data.n)
        vals.append(float(np.max(errs @ eps) / data.n))
    vals = np.asarray(vals)
    assert mean == float(np.mean(vals))
    assert stderr == float(np.std(vals, ddof=1) / math.sqrt(32))


def test_rademacher_single_draw_and_empty_class():
    data = generate(GeneratorSpec(shape="segment", dim=2, n=8,
                                  sampling="grid", seed=0))
    mean, stderr = rademacher_estimate([_point_map(np.zeros(2))], data,
                                       n_draws=1, seed=0)
    assert math.isfinite(mean)
    assert math.isinf(stderr)
    with pytest.raises(ValueError):
        rademacher_estimate([], data)


def test_rademacher_sampled_mode_seeded_and_refinable():
    data = generate(GeneratorSpec(shape="segment", dim=2, n=20,
                                  sampling="grid", seed=0))
    family = FieldFamily(kind="constant", dim=2, v_max=2.0)
    enc_spec = EncoderSpec(kind="affine", init_scale=0.3)
    cfg = TrainConfig(seed=0)
    flow_cfg = FlowConfig(step_size_max=0.25)

    def source(rng):
        return init_trainable(data, family, enc_spec, 1, (-1.0, 1.0), cfg,
                              flow_cfg, rng)

    inner = InnerOptConfig(restarts=2, iters=0)
    a = rademacher_estimate(source, data, n_draws=4, seed=3, inner=inner)
    b = rademacher_estimate(source, data, n_draws=4, seed=3, inner=inner)
    c = rademacher_estimate(source, data, n_draws=4, seed=4, inner=inner)
    assert a == b
    assert a != c
    assert math.isfinite(a[0]) and math.isfinite(a[1])
    # ascent refinement keeps the per-draw maxima, so the mean cannot drop
    refined = rademacher_estimate(
        source, data, n_draws=4, seed=3,
        inner=InnerOptConfig(restarts=2, iters=3, learning_rate=1e-2))
    assert refined[0] >= a[0] - 1e-12


# ---------------------------------------------------------------------------
# class spec assembly
# ---------------------------------------------------------------------------

def test_ambient_radius_hand_values():
    const = FieldFamily(kind="constant", dim=2, v_max=3.0)
    assert ambient_radius_for(const, 1.5, 2, (-1.0, 2.0)) == 13.5
    aff = FieldFamily(kind="affine", dim=2, bump=BumpSpec(1.0, 2.0))
    assert ambient_radius_for(aff, 0.5, 1, (0.0, 1.0)) == pytest.approx(
        1.5 * math.e, rel=1e-15)
    rec = FieldFamily(kind="recurrent", dim=3)
    assert ambient_radius_for(rec, 2.0, 3, (-1.0, 0.5)) == 5.0


def test_default_comparison_matches_family_kind():
    const = FieldFamily(kind="constant", dim=2, v_max=3.0)
    cf = default_comparison(const, (-1.0, 1.0))
    assert (cf.kind, cf.L, cf.L0) == ("worst_case", 0.0, 3.0)
    aff = FieldFamily(kind="affine", dim=2, bump=BumpSpec(4.0, 8.0))
    cf = default_comparison(aff, (0.0, 1.0))
    assert (cf.kind, cf.L, cf.L0) == ("worst_case", 1.0, 9.0)
    rec = FieldFamily(kind="recurrent", dim=2)
    cf = default_comparison(rec, (0.0, 2.0))
    assert (cf.kind, cf.L, cf.L0) == ("worst_case", 1.0, 1.0)
    assert cf.interval == (0.0, 2.0)


def test_encoder_covering_hand_values():
    cov = encoder_covering_spec("affine", 3, (0.0, 2.0), 10.0, 2.0)
    assert cov.param_count == 4
    assert cov.param_diameter == 20.0
    assert cov.param_lipschitz == pytest.approx(0.5 * math.sqrt(5.0),
                                                rel=1e-15)
    cov = encoder_covering_spec("mlp", 2, (-1.0, 1.0), 5.0, 1.0, hidden=4)
    assert cov.param_count == 17
    assert cov.param_diameter == 10.0
    assert cov.param_lipschitz == pytest.approx(
        0.5 * math.sqrt(4.0 + 1.0 + 25.0 * 2.0), rel=1e-15)
    with pytest.raises(ValueError):
        encoder_covering_spec("fourier", 2, (-1.0, 1.0), 5.0, 1.0)


def test_field_covering_and_class_spec_wiring():
    fam = FieldFamily(kind="affine", dim=2, bump=BumpSpec(4.0, 8.0))
    cov = field_covering_spec(fam, 7.0)
    assert cov.param_count == fam.n_params == 6
    assert cov.param_diameter == fam.param_diameter()
    assert cov.param_lipschitz == fam.param_lipschitz(7.0)

    spec = class_spec_for(fam, "mlp", 2, (0.0, 1.0), 1.5, weight_radius=8.0,
                          hidden=4)
    assert spec.m == 2
    assert spec.dim == 2
    assert spec.interval == (0.0, 1.0)
    assert spec.support_radius == 1.5
    assert spec.ambient_radius == ambient_radius_for(fam, 1.5, 2, (0.0, 1.0))
    assert spec.diameter == 2.0 * spec.ambient_radius
    assert spec.field_bound == fam.constants()[0] == 9.0
    assert (spec.comparison.kind, spec.comparison.L0) == ("worst_case", 9.0)
    assert spec.encoder_cov == encoder_covering_spec("mlp", 2, (0.0, 1.0),
                                                     8.0, 1.5, hidden=4)
    assert spec.field_cov == field_covering_spec(fam, spec.ambient_radius)

    override = ComparisonFn.exp_stable(1.0, (0.0, 1.0))
    spec2 = class_spec_for(fam, "mlp", 2, (0.0, 1.0), 1.5,
                           comparison=override)
    assert spec2.comparison.kind == "exp_stable"

    doc = spec.to_dict()
    assert doc["ambient_radius"] == spec.ambient_radius
    assert doc["comparison"]["kind"] == "worst_case"
    assert doc["encoder_cov"]["param_count"] == 17
