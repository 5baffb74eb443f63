"""Covering-number risk certificates for flow reconstruction classes.

The chain: component covering radii (encoder tuples, field tuples, base
points) are converted into a net radius for the whole reconstruction class
through comparison-function envelopes; inverting that relation feeds the
class entropy into a Dudley-type integral, which bounds the Rademacher
complexity up to an absolute constant; the complexity plus a concentration
term certifies the generalization gap of empirical risk minimizers.

All reported bounds set the suppressed absolute constant to 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import ComparisonFn, FieldFamily
from .model import Dataset, TrainableReconstruction

__all__ = [
    "FamilyCoveringSpec", "ClassSpec", "BoundReport", "InnerOptConfig",
    "covering_log_ball", "solve_component_radius", "dudley_bound",
    "stable_closed_form", "excess_risk_certificate", "rademacher_estimate",
    "encoder_covering_spec", "field_covering_spec", "ambient_radius_for",
    "default_comparison", "class_spec_for",
]

BISECT_TOL = 1e-12
EPS_CUT = 1e-6
GAMMA_RESOLUTION = 50

COMPONENTS = ("times", "fields", "initial")

# Absolute constant relating the numerical entropy integral to the
# exponential-stability closed form (which, like the analytic derivation it
# mirrors, is stated only up to a universal constant).  Calibrated once as
# the geometric mean of entropy-integral / closed-form ratios over the
# reference settings d in {3, 4, 6}, m=1, rate=1, support radius 1,
# interval [0, 1], affine encoders; the integral then matches
# calibration * closed form to about 1% across those settings.
STABLE_FORM_CALIBRATION = 0.3448


def covering_log_ball(radius: float, dim: int, delta: float) -> float:
    """Log covering number of a Euclidean ball: dim * log(1 + 2 radius / delta)."""
    if delta <= 0:
        raise ValueError("covering radius must be positive")
    if radius < 0:
        raise ValueError("ball radius must be nonnegative")
    return dim * math.log1p(2.0 * radius / delta)


@dataclass(frozen=True)
class FamilyCoveringSpec:
    """Parametric family descriptor: count, parameter diameter, parameter Lipschitz."""

    param_count: int
    param_diameter: float
    param_lipschitz: float

    @property
    def covering_constant(self) -> float:
        return self.param_diameter * self.param_lipschitz

    def covering_log(self, delta):
        """Log covering number in sup norm via the parameter grid."""
        delta = np.asarray(delta, dtype=float)
        if np.any(delta <= 0):
            raise ValueError("covering radius must be positive")
        out = self.param_count * np.log1p(2.0 * self.covering_constant / delta)
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        return {"param_count": self.param_count,
                "param_diameter": self.param_diameter,
                "param_lipschitz": self.param_lipschitz}


@dataclass(frozen=True)
class ClassSpec:
    """Everything the entropy integral needs to know about a model class."""

    m: int
    dim: int
    interval: tuple[float, float]
    comparison: ComparisonFn
    field_bound: float                # uniform magnitude bound L0 of the family
    encoder_cov: FamilyCoveringSpec
    field_cov: FamilyCoveringSpec
    support_radius: float             # data lives in the ball of this radius
    ambient_radius: float             # trajectories stay in the ball of this radius

    @property
    def diameter(self) -> float:
        return 2.0 * self.ambient_radius

    def to_dict(self) -> dict:
        return {"m": self.m, "dim": self.dim, "interval": list(self.interval),
                "comparison": self.comparison.to_dict(),
                "field_bound": self.field_bound,
                "encoder_cov": self.encoder_cov.to_dict(),
                "field_cov": self.field_cov.to_dict(),
                "support_radius": self.support_radius,
                "ambient_radius": self.ambient_radius}


# ---------------------------------------------------------------------------
# component net radii
# ---------------------------------------------------------------------------

def _iter_sum(cf: ComparisonFn, m: int, arg: np.ndarray) -> np.ndarray:
    # sum_{j=0}^{m-1} of the j-fold iterated envelope at arg
    acc = np.array(arg, dtype=float)
    cur = acc.copy()
    for _ in range(1, m):
        cur = np.asarray(cf.beta_max(cur))
        acc = acc + cur
    return acc


def _largest_solution(g, target, tol: float = BISECT_TOL):
    """Largest s >= 0 with g(s) <= target, for vectorized nondecreasing g."""
    target = np.asarray(target, dtype=float)
    scalar = target.ndim == 0
    t = np.atleast_1d(target).astype(float)
    if np.any(t < 0):
        raise ValueError("target must be nonnegative")
    lo = np.zeros_like(t)
    hi = np.maximum(t, 1.0)
    for _ in range(120):
        feasible = np.asarray(g(hi)) <= t
        if not feasible.any() or np.all(hi >= 1e30):
            break
        lo = np.where(feasible, hi, lo)
        hi = np.where(feasible, hi * 2.0, hi)
    for _ in range(400):
        gap = hi - lo
        if np.all(gap <= tol * np.maximum(1.0, lo)):
            break
        mid = 0.5 * (lo + hi)
        feasible = np.asarray(g(mid)) <= t
        lo = np.where(feasible, mid, lo)
        hi = np.where(feasible, hi, mid)
    return float(lo[0]) if scalar else lo


def solve_component_radius(cf: ComparisonFn, m: int, field_bound: float,
                           gain: float, delta, component: str,
                           tol: float = BISECT_TOL):
    """Largest per-component net radius keeping the class net radius <= delta.

    Components: "times" solves delta >= sum_j iter_j(field_bound * gain * s);
    "fields" the same with gain * s; "initial" solves delta >= iter_m(s).
    Exponentially stable and pure-Gronwall envelopes use closed forms;
    otherwise the monotone relation is inverted by bisection.
    """
    if component not in COMPONENTS:
        raise ValueError(f"component must be one of {COMPONENTS}")
    if m < 1:
        raise ValueError("m must be >= 1")
    delta_arr = np.asarray(delta, dtype=float)
    if np.any(delta_arr < 0):
        raise ValueError("delta must be nonnegative")
    scale = field_bound * gain if component == "times" else gain

    if cf.has_closed_rho:
        if cf.kind == "exp_stable":
            k = math.exp(-cf.rate * cf.interval[0])
        else:
            k = math.exp(cf.L * cf.t_bar)
        if component == "initial":
            out = delta_arr / k ** m
        else:
            geom = float(m) if k == 1.0 else (k ** m - 1.0) / (k - 1.0)
            out = delta_arr / (scale * geom) if scale > 0 else np.full_like(
                delta_arr, math.inf)
        return float(out) if out.ndim == 0 else out

    if component == "initial":
        g = lambda s: cf.beta_iter(s, m)
    elif scale > 0:
        g = lambda s: _iter_sum(cf, m, scale * np.asarray(s, dtype=float))
    else:
        out = np.full_like(delta_arr, math.inf)
        return float(out) if out.ndim == 0 else out
    return _largest_solution(g, delta_arr, tol=tol)


# ---------------------------------------------------------------------------
# the entropy integral
# ---------------------------------------------------------------------------

def _entropy_components(spec: ClassSpec, u: np.ndarray):
    """Per-component entropy terms evaluated at net radius arguments u."""
    cf = spec.comparison
    gain = cf.perturbation_gain()
    rho_t = solve_component_radius(cf, spec.m, spec.field_bound, gain, u, "times")
    rho_f = solve_component_radius(cf, spec.m, spec.field_bound, gain, u, "fields")
    rho_i = solve_component_radius(cf, spec.m, spec.field_bound, gain, u, "initial")
    h_t = spec.m * _soft_covering_log(spec.encoder_cov, rho_t)
    h_f = spec.m * _soft_covering_log(spec.field_cov, rho_f)
    h_i = _ball_covering_log_arr(spec.support_radius, spec.dim, rho_i)
    return h_t, h_f, h_i


def _soft_covering_log(cov: FamilyCoveringSpec, rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    pos = rho > 0
    out[pos] = cov.param_count * np.log1p(2.0 * cov.covering_constant / rho[pos])
    out[~pos] = math.inf if cov.covering_constant > 0 else 0.0
    if cov.covering_constant == 0:
        out[:] = 0.0
    return out

def _ball_covering_log_arr(radius: float, dim: int, rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    pos = rho > 0
    out[pos] = dim * np.log1p(2.0 * radius / rho[pos])
    out[~pos] = math.inf if radius > 0 else 0.0
    return out


def _simplex_grid(resolution: int):
    """Positive rational splits (i, j, k)/resolution with i + j + k = resolution."""
    triples = []
    for i in range(1, resolution - 1):
        for j in range(1, resolution - i):
            k = resolution - i - j
            if k >= 1:
                triples.append((i / resolution, j / resolution, k / resolution))
    return triples


def _adaptive_simpson(f, a: float, b: float, tol: float, max_depth: int = 48) -> float:
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def rec(a, b, fa, fm, fb, whole, tol, depth):
        mid = 0.5 * (a + b)
        lm, rm = 0.5 * (a + mid), 0.5 * (mid + b)
        flm, frm = f(lm), f(rm)
        left = (mid - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - mid) / 6.0 * (fm + 4.0 * frm + fb)
        err = left + right - whole
        if depth <= 0 or abs(err) <= 15.0 * tol:
            return left + right + err / 15.0
        return (rec(a, mid, fa, flm, fm, left, 0.5 * tol, depth - 1) +
                rec(mid, b, fm, frm, fb, right, 0.5 * tol, depth - 1))

    return rec(a, b, fa, fm, fb, whole, tol, max_depth)


@dataclass
class BoundReport:
    value: float
    n: int
    gamma: tuple[float, float, float]
    gain: float
    rho_samples: list[dict]
    spec: ClassSpec
    eps_cut: float = EPS_CUT
    gamma_resolution: int = GAMMA_RESOLUTION
    bisect_tol: float = BISECT_TOL
    quad_tol: float = 1e-9
    constant_convention: str = "suppressed absolute constant set to 1"
    closed_form_value: float | None = None
    closed_form_match: float | None = None
    certificate: float | None = None
    confidence: float | None = None
    complexity_used: float | None = None

    def to_dict(self) -> dict:
        d = {"value": self.value, "n": self.n, "gamma": list(self.gamma),
             "gain": self.gain, "rho_samples": self.rho_samples,
             "spec": self.spec.to_dict(), "eps_cut": self.eps_cut,
             "gamma_resolution": self.gamma_resolution,
             "bisect_tol": self.bisect_tol, "quad_tol": self.quad_tol,
             "constant_convention": self.constant_convention}
        for key in ("closed_form_value", "closed_form_match", "certificate",
                    "confidence", "complexity_used"):
            val = getattr(self, key)
            if val is not None:
                d[key] = val
        return d


def dudley_bound(spec: ClassSpec, n: int,
                 gamma_resolution: int = GAMMA_RESOLUTION,
                 eps_cut: float = EPS_CUT, quad_tol: float = 1e-9) -> BoundReport:
    """Entropy integral bound on the Rademacher complexity, divided by sqrt(n).

    The class entropy at scale delta splits into encoder, field, and base
    point terms via a positive budget (gamma1, gamma2, gamma3); the split is
    chosen on a simplex grid to minimize the integral.  The integral runs
    over [eps_cut * D, D] with a crude cap eps_cut * D * integrand(eps_cut * D)
    for the head, where D is the class diameter.  The value scales exactly
    as 1/sqrt(n).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    D = spec.diameter
    if D == 0.0:
        return BoundReport(value=0.0, n=n, gamma=(1 / 3, 1 / 3, 1 / 3),
                           gain=spec.comparison.perturbation_gain(),
                           rho_samples=[], spec=spec, eps_cut=eps_cut,
                           gamma_resolution=gamma_resolution, quad_tol=quad_tol)

    a = eps_cut * D
    # shared Simpson grid for screening every simplex split
    n_panels = 1024
    nodes = np.linspace(a, D, 2 * n_panels + 1)
    weights = np.empty(nodes.size)
    h = (D - a) / (2 * n_panels)
    weights[0] = weights[-1] = h / 3.0
    weights[1:-1:2] = 4.0 * h / 3.0
    weights[2:-1:2] = 2.0 * h / 3.0

    gammas = np.arange(1, gamma_resolution) / gamma_resolution
    flat = np.outer(gammas, nodes).ravel()
    h_t, h_f, h_i = _entropy_components(spec, flat)
    H_t = h_t.reshape(gammas.size, nodes.size)
    H_f = h_f.reshape(gammas.size, nodes.size)
    H_i = h_i.reshape(gammas.size, nodes.size)

    best_val, best_gamma = math.inf, None
    for g1, g2, g3 in _simplex_grid(gamma_resolution):
        i1 = round(g1 * gamma_resolution) - 1
        i2 = round(g2 * gamma_resolution) - 1
        i3 = round(g3 * gamma_resolution) - 1
        integrand = np.sqrt(H_t[i1] + H_f[i2] + H_i[i3])
        total = float(weights @ integrand) + a * float(integrand[0])
        if total < best_val:
            best_val, best_gamma = total, (g1, g2, g3)

    g1, g2, g3 = best_gamma

    def integrand_best(delta: float) -> float:
        ht, hf, hi = _entropy_components(spec, np.asarray([g1 * delta,
                                                           g2 * delta,
                                                           g3 * delta]))
        return math.sqrt(ht[0] + hf[1] + hi[2])

    tol_abs = max(quad_tol * best_val, 1e-300)
    integral = _adaptive_simpson(integrand_best, a, D, tol_abs)
    head = a * integrand_best(a)
    value = (integral + head) / math.sqrt(n)

    cf = spec.comparison
    gain = cf.perturbation_gain()
    rho_samples = []
    for frac in (eps_cut, 0.25, 0.5, 0.75, 1.0):
        delta = frac * D
        rho_samples.append({
            "delta": delta,
            "times": solve_component_radius(cf, spec.m, spec.field_bound, gain,
                                            g1 * delta, "times"),
            "fields": solve_component_radius(cf, spec.m, spec.field_bound, gain,
                                             g2 * delta, "fields"),
            "initial": solve_component_radius(cf, spec.m, spec.field_bound, gain,
                                              g3 * delta, "initial"),
        })

    report = BoundReport(value=value, n=n, gamma=best_gamma, gain=gain,
                         rho_samples=rho_samples, spec=spec, eps_cut=eps_cut,
                         gamma_resolution=gamma_resolution, quad_tol=quad_tol)
    if cf.kind == "exp_stable":
        closed = stable_closed_form(spec, n)
        report.closed_form_value = closed
        if closed > 0:
            report.closed_form_match = abs(
                value / (STABLE_FORM_CALIBRATION * closed) - 1.0)
    return report


def stable_closed_form(spec: ClassSpec, n: int) -> float:
    """Closed-form bound for uniformly exponentially stable classes.

    (1/sqrt(n)) * (m^(3/2)/rate * (C_enc * L0 * sqrt(p) + C_fld * sqrt(q))
    + C_K * sqrt(d)), up to the suppressed absolute constant.
    """
    cf = spec.comparison
    if cf.kind != "exp_stable":
        raise ValueError("closed form applies to exponentially stable envelopes")
    m, rate = spec.m, cf.rate
    term = m ** 1.5 / rate * (
        spec.encoder_cov.covering_constant * spec.field_bound
        * math.sqrt(spec.encoder_cov.param_count)
        + spec.field_cov.covering_constant * math.sqrt(spec.field_cov.param_count))
    term += spec.support_radius * math.sqrt(spec.dim)
    return term / math.sqrt(n)


def excess_risk_certificate(diameter: float, n: int, confidence: float,
                            complexity: float) -> float:
    """High-probability bound on risk(ERM) - best in class.

    4 * complexity + diameter * sqrt(2 log(1/confidence) / n); holds with
    probability at least 1 - confidence when `complexity` upper-bounds the
    expected Rademacher complexity of the loss class.
    """
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must be in (0, 1)")
    if n < 1:
        raise ValueError("n must be >= 1")
    return 4.0 * complexity + diameter * math.sqrt(2.0 * math.log(1.0 / confidence) / n)


# ---------------------------------------------------------------------------
# Monte-Carlo Rademacher complexity (lower estimate)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InnerOptConfig:
    restarts: int = 8
    iters: int = 0
    learning_rate: float = 1e-2


def rademacher_estimate(class_source, data: Dataset, n_draws: int = 64,
                        seed: int = 0, inner: InnerOptConfig | None = None
                        ) -> tuple[float, float]:
    """Monte-Carlo estimate of the empirical Rademacher complexity.

    class_source is either a finite sequence of reconstruction maps (the
    inner supremum is exact) or a callable rng -> TrainableReconstruction
    (the supremum is approximated by sampled restarts, optionally refined by
    sign-weighted gradient ascent).  The sampled variant under-approximates
    the supremum, so the result is a lower estimate.  Returns (mean,
    standard error) over the sign draws.
    """
    rng = np.random.default_rng(seed)
    n = data.n
    if callable(class_source):
        inner = inner or InnerOptConfig()
        vals = []
        for _ in range(n_draws):
            eps = rng.choice([-1.0, 1.0], size=n)
            best = -math.inf
            for _ in range(inner.restarts):
                trainable = class_source(rng)
                best = max(best, _maximize_signed(trainable, data, eps, inner))
            vals.append(best)
    else:
        models = list(class_source)
        if not models:
            raise ValueError("need at least one model")
        errs = np.stack([np.linalg.norm(data.points - g.reconstruct(data.points),
                                        axis=1) for g in models])
        vals = []
        for _ in range(n_draws):
            eps = rng.choice([-1.0, 1.0], size=n)
            vals.append(float(np.max(errs @ eps) / n))
    vals = np.asarray(vals)
    mean = float(np.mean(vals))
    stderr = float(np.std(vals, ddof=1) / math.sqrt(n_draws)) if n_draws > 1 else math.inf
    return mean, stderr


def _maximize_signed(trainable: TrainableReconstruction, data: Dataset,
                     eps: np.ndarray, inner: InnerOptConfig) -> float:
    from .train import TrainConfig, _Stepper  # local import to avoid a cycle

    value, grad = trainable.risk_and_gradient(data, weights=eps)
    if inner.iters == 0:
        return value
    cfg = TrainConfig(optimizer="adaptive_moment", learning_rate=inner.learning_rate)
    stepper = _Stepper(cfg, trainable.param_vector().size)
    best = value
    for _ in range(inner.iters):
        params = stepper.step(trainable.param_vector(), -grad)  # ascent
        trainable.set_param_vector(params)
        trainable.project()
        value, grad = trainable.risk_and_gradient(data, weights=eps)
        best = max(best, value)
    return best


# ---------------------------------------------------------------------------
# class spec construction helpers
# ---------------------------------------------------------------------------

def ambient_radius_for(family: FieldFamily, support_radius: float, m: int,
                       interval) -> float:
    """Radius of a ball containing every decoder trajectory from the data ball."""
    t_bar = max(abs(interval[0]), abs(interval[1]))
    if family.kind == "constant":
        return support_radius + m * family.v_max * t_bar
    if family.kind == "affine":
        return (support_radius + 1.0) * math.exp(m * t_bar)
    return support_radius + m * t_bar


def default_comparison(family: FieldFamily, interval) -> ComparisonFn:
    """Envelope certified for the family on its containment region."""
    if family.kind == "constant":
        return ComparisonFn.worst_case(0.0, family.v_max, interval)
    if family.kind == "affine":
        L0 = family.bump.outer_radius + 1.0
        return ComparisonFn.worst_case(1.0, L0, interval)
    return ComparisonFn.worst_case(1.0, 1.0, interval)


def encoder_covering_spec(kind: str, dim: int, interval, weight_radius: float,
                          support_radius: float, hidden: int = 16
                          ) -> FamilyCoveringSpec:
    """Covering descriptor for the squashed encoder family with bounded weights."""
    span = interval[1] - interval[0]
    if kind == "affine":
        count = dim + 1
        lip = span / 4.0 * math.sqrt(support_radius ** 2 + 1.0)
    elif kind == "mlp":
        count = hidden * (dim + 2) + 1
        lip = span / 4.0 * math.sqrt(
            hidden + 1.0 + weight_radius ** 2 * (support_radius ** 2 + 1.0))
    else:
        raise ValueError(f"unknown encoder kind {kind!r}")
    return FamilyCoveringSpec(param_count=count, param_diameter=2.0 * weight_radius,
                              param_lipschitz=lip)


def field_covering_spec(family: FieldFamily, ambient_radius: float
                        ) -> FamilyCoveringSpec:
    return FamilyCoveringSpec(param_count=family.n_params,
                              param_diameter=family.param_diameter(),
                              param_lipschitz=family.param_lipschitz(ambient_radius))


def class_spec_for(family: FieldFamily, encoder_kind: str, m: int, interval,
                   support_radius: float, weight_radius: float = 10.0,
                   hidden: int = 16, comparison: ComparisonFn | None = None
                   ) -> ClassSpec:
    """Assemble the class descriptor for a family/encoder/depth combination."""
    ambient = ambient_radius_for(family, support_radius, m, interval)
    cf = comparison or default_comparison(family, interval)
    L0, _ = family.constants()
    return ClassSpec(
        m=m, dim=family.dim, interval=(float(interval[0]), float(interval[1])),
        comparison=cf, field_bound=L0,
        encoder_cov=encoder_covering_spec(encoder_kind, family.dim, interval,
                                          weight_radius, support_radius,
                                          hidden=hidden),
        field_cov=field_covering_spec(family, ambient),
        support_radius=support_radius, ambient_radius=ambient)
