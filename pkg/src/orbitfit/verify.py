"""Simulation checks for the perturbation envelopes and net-radius guarantee.

Each checker integrates randomized flow pairs to high accuracy and compares
the observed divergence against the claimed envelope; a violation is an
observed left side exceeding the right side plus the tolerance.  Field
perturbation sizes are measured in the sup norm over the containment ball:
exactly for affine fields (trust-region style eigenvalue computation), by
dense sampling for saturating fields (with a 10x densification retry before
declaring a violation).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import ComparisonFn, VectorField, spectral_norm

__all__ = [
    "CheckReport", "max_affine_on_ball", "c0_distance_fields",
    "check_single_flow_perturbation", "check_initial_condition",
    "check_tuple_perturbation", "check_net_radius", "run_all_checks",
]

DEFAULT_TOL = 1e-6


@dataclass
class CheckReport:
    name: str
    trials: int
    violations: int
    max_gap: float          # max over trials of (observed - allowed); <= 0 when clean
    tolerance: float
    details: dict

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {"name": self.name, "trials": self.trials,
                "violations": self.violations, "max_gap": self.max_gap,
                "tolerance": self.tolerance, "passed": self.passed,
                "details": self.details}


# ---------------------------------------------------------------------------
# exact sup of an affine map on a ball
# ---------------------------------------------------------------------------

def max_affine_on_ball(M: np.ndarray, b: np.ndarray, radius: float) -> float:
    """Exact max of |M x + b| over |x| <= radius.

    The square is a trust-region style problem: maximize x^T M^T M x + 2 b^T M x
    + |b|^2 on the ball.  With the eigendecomposition M^T M = V diag(lam) V^T
    and c = V^T M^T b, the maximizer lies on the boundary and solves a secular
    equation in the multiplier; the degenerate (hard) case is handled by
    placing the residual mass in the top eigenspace.
    """
    M = np.asarray(M, dtype=float)
    b = np.asarray(b, dtype=float)
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    if radius == 0:
        return float(np.linalg.norm(b))
    lam, V = np.linalg.eigh(M.T @ M)
    c = V.T @ (M.T @ b)
    lam_max = lam[-1]
    top = lam >= lam_max - 1e-12 * max(lam_max, 1.0)

    def norm2(mu):  # |x(mu)|^2 for mu > lam_max
        return float(np.sum((c / (mu - lam)) ** 2))

    if np.all(np.abs(c[top]) <= 1e-14 * max(1.0, float(np.linalg.norm(b)))):
        # hard case: mu = lam_max, free mass in the top eigenspace
        rest = ~top
        denom = lam_max - lam[rest]
        y = np.zeros_like(c)
        y[rest] = c[rest] / denom
        interior = float(np.sum(y ** 2))
        if interior <= radius ** 2:
            extra = math.sqrt(max(radius ** 2 - interior, 0.0))
            y[np.argmax(lam)] = extra
            x = V @ y
            return float(np.linalg.norm(M @ x + b))
        # fall through: secular equation still has a root above lam_max
    lo = lam_max
    hi = lam_max + max(float(np.linalg.norm(c)) / radius, 1.0)
    while norm2(hi) > radius ** 2:
        hi = lam_max + 2.0 * (hi - lam_max)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lam_max:
            mid = np.nextafter(lam_max, math.inf)
        if norm2(mid) > radius ** 2:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    mu = hi
    y = c / (mu - lam)
    nrm = float(np.linalg.norm(y))
    if nrm > 0:
        y *= radius / nrm
    x = V @ y
    cand = float(np.linalg.norm(M @ x + b))
    return max(cand, float(np.linalg.norm(b)))


def c0_distance_fields(f: VectorField, g: VectorField, radius: float,
                       n_samples: int = 10000, rng=None) -> float:
    """Sup-norm distance between two fields over the ball of given radius.

    Exact for a pair of affine or constant fields; sampled otherwise.
    """
    if f.dim != g.dim:
        raise ValueError("field dimensions differ")
    if f.kind == g.kind == "constant":
        return float(np.linalg.norm(f.v - g.v))
    if f.kind == g.kind == "affine":
        return max_affine_on_ball(f.A - g.A, f.u - g.u, radius)
    rng = np.random.default_rng(0) if rng is None else rng
    pts = _ball_samples(rng, n_samples, f.dim, radius)
    gaps = np.linalg.norm(f.evaluate(pts) - g.evaluate(pts), axis=1)
    return float(np.max(gaps))


def _ball_samples(rng, count: int, dim: int, radius: float) -> np.ndarray:
    x = rng.standard_normal((count, dim))
    x /= np.maximum(np.linalg.norm(x, axis=1, keepdims=True), 1e-300)
    r = radius * rng.random(count) ** (1.0 / dim)
    return x * r[:, None]


# ---------------------------------------------------------------------------
# batched per-trial integration
# ---------------------------------------------------------------------------

def _batch_rhs(kind: str, A, u, v, X):
    if kind == "constant":
        return np.broadcast_to(v, X.shape)
    z = np.einsum("bij,bj->bi", A, X) + u
    if kind == "affine":
        return z
    return np.tanh(z) / math.sqrt(X.shape[1])


def _flow_trials(kind: str, A, u, v, X0: np.ndarray, t: np.ndarray,
                 steps: int) -> tuple[np.ndarray, float]:
    """Integrate one flow per batch row; returns endpoints and the max norm seen."""
    X = np.array(X0, dtype=float)
    h = (np.asarray(t, dtype=float) / steps)[:, None]
    max_norm = float(np.max(np.linalg.norm(X, axis=1)))
    for _ in range(steps):
        k1 = _batch_rhs(kind, A, u, v, X)
        k2 = _batch_rhs(kind, A, u, v, X + 0.5 * h * k1)
        k3 = _batch_rhs(kind, A, u, v, X + 0.5 * h * k2)
        k4 = _batch_rhs(kind, A, u, v, X + h * k3)
        X = X + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        max_norm = max(max_norm, float(np.max(np.linalg.norm(X, axis=1))))
    return X, max_norm


def _sample_field_stack(rng, kind: str, trials: int, dim: int, v_max: float):
    if kind == "constant":
        v = _ball_samples(rng, trials, dim, v_max)
        return None, None, v
    A = rng.uniform(-1.0, 1.0, size=(trials, dim, dim)) / math.sqrt(dim)
    for i in range(trials):
        s = spectral_norm(A[i])
        if s > 1.0:
            A[i] /= s
    u = _ball_samples(rng, trials, dim, 1.0)
    return A, u, None


def _comparison_for(kind: str, interval, v_max: float) -> ComparisonFn:
    # constant: flows translate, deviations are preserved exactly.
    # affine: unit-Lipschitz but unbounded, so only the growth branch applies.
    # recurrent: unit-Lipschitz and bounded by 1 in norm.
    if kind == "constant":
        return ComparisonFn.worst_case(0.0, v_max, interval)
    if kind == "affine":
        return ComparisonFn.worst_case(1.0, math.inf, interval)
    return ComparisonFn.worst_case(1.0, 1.0, interval)


def _pair_c0(kind: str, A1, u1, v1, A2, u2, v2, trials: int, radius: float,
             rng, n_samples: int):
    if kind == "constant":
        return np.linalg.norm(v1 - v2, axis=1)
    if kind == "affine":
        return np.array([max_affine_on_ball(A1[i] - A2[i], u1[i] - u2[i], radius)
                         for i in range(trials)])
    pts = _ball_samples(rng, n_samples, A1.shape[2], radius)
    dists = np.empty(trials)
    scale = math.sqrt(A1.shape[2])
    chunk = max(1, 200000 // max(n_samples, 1))
    for start in range(0, trials, chunk):
        end = min(trials, start + chunk)
        z1 = np.einsum("bij,pj->bpi", A1[start:end], pts) + u1[start:end, None, :]
        z2 = np.einsum("bij,pj->bpi", A2[start:end], pts) + u2[start:end, None, :]
        gap = np.linalg.norm(np.tanh(z1) - np.tanh(z2), axis=2) / scale
        dists[start:end] = gap.max(axis=1)
    return dists


def _steps_for(interval, step: float = 0.005) -> int:
    t_bar = max(abs(interval[0]), abs(interval[1]))
    return max(1, math.ceil(t_bar / step))


# ---------------------------------------------------------------------------
# the three envelope checks
# ---------------------------------------------------------------------------

def check_single_flow_perturbation(kind: str = "affine", dim: int = 3,
                                   interval=(-1.0, 1.0), trials: int = 200,
                                   start_radius: float = 1.0, v_max: float = 1.0,
                                   tol: float = DEFAULT_TOL, seed: int = 0,
                                   n_samples: int = 4000) -> CheckReport:
    """Flowing one field versus a perturbed one from the same start point.

    Observed |flow_f(t, x) - flow_g(t, x)| must stay within
    gain * sup-distance(f, g) + tol, where the sup runs over the containment
    ball and the gain is the envelope's accumulated perturbation factor.
    """
    rng = np.random.default_rng(seed)
    cf = _comparison_for(kind, interval, v_max)
    gain = cf.perturbation_gain()
    contain = _containment_radius(kind, start_radius, 1, interval, v_max)

    A1, u1, v1 = _sample_field_stack(rng, kind, trials, dim, v_max)
    A2, u2, v2 = _sample_field_stack(rng, kind, trials, dim, v_max)
    X0 = _ball_samples(rng, trials, dim, start_radius)
    t = rng.uniform(interval[0], interval[1], size=trials)
    steps = _steps_for(interval)

    Xa, norm_a = _flow_trials(kind, A1, u1, v1, X0, t, steps)
    Xb, norm_b = _flow_trials(kind, A2, u2, v2, X0, t, steps)
    if max(norm_a, norm_b) > contain + 1e-9:
        raise RuntimeError("containment radius violated; envelope premise broken")

    lhs = np.linalg.norm(Xa - Xb, axis=1)
    dists = _pair_c0(kind, A1, u1, v1, A2, u2, v2, trials, contain, rng, n_samples)
    allowed = gain * dists + tol
    gaps = lhs - allowed
    violations = int(np.sum(gaps > 0))
    densified = False
    if violations and kind == "recurrent":
        densified = True
        bad = np.where(gaps > 0)[0]
        dense = _pair_c0(kind, A1[bad], u1[bad], v1, A2[bad], u2[bad], v2,
                         bad.size, contain, rng, 10 * n_samples)
        allowed_bad = gain * dense + tol
        gaps[bad] = lhs[bad] - allowed_bad
        violations = int(np.sum(gaps > 0))
    return CheckReport(name="single_flow_perturbation", trials=trials,
                       violations=violations, max_gap=float(np.max(gaps)),
                       tolerance=tol,
                       details={"kind": kind, "dim": dim, "gain": gain,
                                "containment_radius": contain,
                                "densified": densified})


def check_initial_condition(kind: str = "affine", dim: int = 3, m: int = 3,
                            interval=(-1.0, 1.0), trials: int = 200,
                            start_radius: float = 1.0, v_max: float = 1.0,
                            tol: float = DEFAULT_TOL, seed: int = 0) -> CheckReport:
    """Two start points flowed through the same field tuple.

    Observed divergence must stay within the m-fold iterated envelope of the
    initial separation, plus tol.
    """
    rng = np.random.default_rng(seed)
    cf = _comparison_for(kind, interval, v_max)
    X0 = _ball_samples(rng, trials, dim, start_radius)
    X1 = _ball_samples(rng, trials, dim, start_radius)
    r0 = np.linalg.norm(X0 - X1, axis=1)
    steps = _steps_for(interval)

    Xa, Xb = X0, X1
    for _ in range(m):
        A, u, v = _sample_field_stack(rng, kind, trials, dim, v_max)
        t = rng.uniform(interval[0], interval[1], size=trials)
        Xa, _ = _flow_trials(kind, A, u, v, Xa, t, steps)
        Xb, _ = _flow_trials(kind, A, u, v, Xb, t, steps)

    lhs = np.linalg.norm(Xa - Xb, axis=1)
    allowed = cf.beta_iter(r0, m) + tol
    gaps = lhs - allowed
    return CheckReport(name="initial_condition", trials=trials,
                       violations=int(np.sum(gaps > 0)),
                       max_gap=float(np.max(gaps)), tolerance=tol,
                       details={"kind": kind, "dim": dim, "m": m})


def check_tuple_perturbation(kind: str = "affine", dim: int = 3, m: int = 3,
                             interval=(-1.0, 1.0), trials: int = 100,
                             start_radius: float = 1.0, v_max: float = 1.0,
                             tol: float = DEFAULT_TOL, seed: int = 0,
                             n_samples: int = 4000) -> CheckReport:
    """One start point flowed through two field tuples differing layer by layer.

    Observed divergence must stay within
    sum_j iter_(m-1-j)(gain * dist_j) + tol with dist_j the sup-norm gap of
    layer j over the containment ball.
    """
    rng = np.random.default_rng(seed)
    cf = _comparison_for(kind, interval, v_max)
    gain = cf.perturbation_gain()
    contain = _containment_radius(kind, start_radius, m, interval, v_max)
    steps = _steps_for(interval)

    X0 = _ball_samples(rng, trials, dim, start_radius)
    Xa = X0.copy()
    Xb = X0.copy()
    allowed = np.full(trials, tol)
    max_norm = 0.0
    for j in range(m):
        A1, u1, v1 = _sample_field_stack(rng, kind, trials, dim, v_max)
        A2, u2, v2 = _sample_field_stack(rng, kind, trials, dim, v_max)
        t = rng.uniform(interval[0], interval[1], size=trials)
        Xa, na = _flow_trials(kind, A1, u1, v1, Xa, t, steps)
        Xb, nb = _flow_trials(kind, A2, u2, v2, Xb, t, steps)
        max_norm = max(max_norm, na, nb)
        dists = _pair_c0(kind, A1, u1, v1, A2, u2, v2, trials, contain, rng,
                         n_samples)
        allowed = allowed + cf.beta_iter(gain * dists, m - 1 - j)
    if max_norm > contain + 1e-9:
        raise RuntimeError("containment radius violated; envelope premise broken")

    lhs = np.linalg.norm(Xa - Xb, axis=1)
    gaps = lhs - allowed
    return CheckReport(name="tuple_perturbation", trials=trials,
                       violations=int(np.sum(gaps > 0)),
                       max_gap=float(np.max(gaps)), tolerance=tol,
                       details={"kind": kind, "dim": dim, "m": m, "gain": gain,
                                "containment_radius": contain})


def _containment_radius(kind: str, start_radius: float, m: int, interval,
                        v_max: float) -> float:
    t_bar = max(abs(interval[0]), abs(interval[1]))
    if kind == "constant":
        return start_radius + m * v_max * t_bar
    if kind == "affine":
        return (start_radius + 1.0) * math.exp(m * t_bar)
    return start_radius + m * t_bar


# ---------------------------------------------------------------------------
# net radius on an enumerable toy class
# ---------------------------------------------------------------------------

def check_net_radius(dim: int = 2, m: int = 2, interval=(-1.0, 1.0),
                     grid: int = 5, trials: int = 200, support_radius: float = 1.0,
                     n_points: int = 400, tol: float = DEFAULT_TOL,
                     seed: int = 0) -> CheckReport:
    """Coordinate-grid net over a constant-field reconstruction class.

    Encoder weights, field vectors, and base points are gridded per
    coordinate; every sampled map must sit within the predicted sup-norm
    radius of its per-component nearest net element.  The predicted radius is
    m * L0 * gain * d_times + m * gain * d_fields + d_initial where gain is
    the envelope's perturbation factor and the d's are the component net
    radii induced by the grids.
    """
    if abs(interval[1]) < 1.0 and abs(interval[0]) < 1.0:
        raise ValueError("interval must reach unit time for the coupling step")
    rng = np.random.default_rng(seed)
    t_bar = max(abs(interval[0]), abs(interval[1]))
    span = interval[1] - interval[0]
    v_max = math.sqrt(dim)  # fields drawn from the unit box

    # per-coordinate grids
    w_grid = np.linspace(-1.0, 1.0, grid)
    spacing = w_grid[1] - w_grid[0]
    half_diag_enc = 0.5 * spacing * math.sqrt(dim + 1)
    half_diag_fld = 0.5 * spacing * math.sqrt(dim)
    enc_lip = span / 4.0 * math.sqrt(support_radius ** 2 + 1.0)
    d_times = enc_lip * half_diag_enc
    d_fields = half_diag_fld
    d_initial = half_diag_fld

    gain = t_bar  # envelope r -> r, accumulated factor for zero-Lipschitz fields
    radius_bound = m * v_max * gain * d_times + m * gain * d_fields + d_initial

    pts = _ball_samples(rng, n_points, dim, support_radius)
    ones = np.hstack([pts, np.ones((n_points, 1))])

    def encode(theta):  # theta (m, dim+1) -> times (n_points, m)
        s = ones @ theta.T
        return interval[0] + span / (1.0 + np.exp(-s))

    def snap(values):
        idx = np.clip(np.round((values + 1.0) / spacing), 0, grid - 1)
        return -1.0 + idx * spacing

    worst = -math.inf
    violations = 0
    for _ in range(trials):
        theta = rng.uniform(-1.0, 1.0, size=(m, dim + 1))
        fields = rng.uniform(-1.0, 1.0, size=(m, dim))
        base = rng.uniform(-1.0, 1.0, size=dim)
        theta_n, fields_n, base_n = snap(theta), snap(fields), snap(base)
        times = encode(theta)
        times_n = encode(theta_n)
        # constant-field decoder: base + sum_j t_j * v_j
        out = base + times @ fields
        out_n = base_n + times_n @ fields_n
        dist = float(np.max(np.linalg.norm(out - out_n, axis=1)))
        gap = dist - (radius_bound + tol)
        worst = max(worst, gap)
        if gap > 0:
            violations += 1
    return CheckReport(name="net_radius", trials=trials, violations=violations,
                       max_gap=worst, tolerance=tol,
                       details={"dim": dim, "m": m, "grid": grid,
                                "radius_bound": radius_bound,
                                "d_times": d_times, "d_fields": d_fields,
                                "d_initial": d_initial})


def run_all_checks(kinds=("constant", "affine", "recurrent"), trials: int = 200,
                   seed: int = 0, tol: float = DEFAULT_TOL) -> list[CheckReport]:
    """Run every envelope check across field kinds plus the net-radius check."""
    reports = []
    for k, kind in enumerate(kinds):
        reports.append(check_single_flow_perturbation(
            kind=kind, trials=trials, seed=seed + 11 * k, tol=tol))
        reports.append(check_initial_condition(
            kind=kind, trials=trials, seed=seed + 11 * k + 1, tol=tol))
        reports.append(check_tuple_perturbation(
            kind=kind, trials=max(20, trials // 2), seed=seed + 11 * k + 2,
            tol=tol))
    reports.append(check_net_radius(trials=trials, seed=seed + 97, tol=tol))
    return reports
