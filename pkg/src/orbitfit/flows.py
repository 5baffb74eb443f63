"""Fixed-step RK4 flows of vector fields, compositions, and sensitivities."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import VectorField

__all__ = ["FlowConfig", "FlowDivergenceError", "flow", "flow_batch",
           "compose_flows", "flow_with_sensitivity"]


class FlowDivergenceError(RuntimeError):
    """Raised when integration produces non-finite state or escapes the safety radius."""


@dataclass(frozen=True)
class FlowConfig:
    step_size_max: float = 1e-2
    method: str = "rk4"
    min_steps: int = 1
    safety_radius: float | None = None  # None: 10x bump outer radius, else unbounded

    def __post_init__(self):
        if self.step_size_max <= 0:
            raise ValueError("step_size_max must be positive")
        if self.method != "rk4":
            raise ValueError(f"unsupported method {self.method!r}")
        if self.min_steps < 1:
            raise ValueError("min_steps must be >= 1")

    def num_steps(self, t: float) -> int:
        return max(self.min_steps, int(math.ceil(abs(t) / self.step_size_max)))

    def steps_for_interval(self, interval) -> int:
        """Step count covering every duration in the interval.

        Using one count for all durations keeps the integrated map smooth in
        t (the step size t/n varies continuously; a per-duration count would
        jump at multiples of step_size_max).
        """
        t_bar = max(abs(interval[0]), abs(interval[1]))
        return self.num_steps(t_bar)


DEFAULT_FLOW_CONFIG = FlowConfig()


def _resolve_safety(field: VectorField, cfg: FlowConfig) -> float:
    if cfg.safety_radius is not None:
        return cfg.safety_radius
    if field.bump is not None:
        return 10.0 * field.bump.outer_radius
    return math.inf


def _check_state(x: np.ndarray, safety: float) -> None:
    if not np.all(np.isfinite(x)):
        raise FlowDivergenceError("non-finite state during flow integration")
    if safety != math.inf and np.any(np.linalg.norm(x, axis=-1) > safety):
        raise FlowDivergenceError(f"trajectory escaped safety radius {safety:g}")


def _rk4_state(field: VectorField, x: np.ndarray, h: np.ndarray,
               n_steps: int, safety: float) -> np.ndarray:
    f = field.evaluate
    for _ in range(n_steps):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _check_state(x, safety)
    return x


def flow(field: VectorField, xi, t: float,
         cfg: FlowConfig = DEFAULT_FLOW_CONFIG) -> np.ndarray:
    """Integrate x' = f(x) from xi for (signed) duration t.

    xi may be a single point (d,) or a batch (n, d) sharing the duration.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != field.dim:
        raise ValueError("point dimension does not match the field")
    _check_state(xi, _resolve_safety(field, cfg))
    if t == 0.0:
        return xi.copy()
    n_steps = cfg.num_steps(t)
    h = t / n_steps
    return _rk4_state(field, xi, h, n_steps, _resolve_safety(field, cfg))


def flow_batch(field: VectorField, xi: np.ndarray, t: np.ndarray,
               cfg: FlowConfig = DEFAULT_FLOW_CONFIG,
               n_steps: int | None = None) -> np.ndarray:
    """Batched flow with one duration per row of xi."""
    xi = np.asarray(xi, dtype=float)
    t = np.asarray(t, dtype=float)
    if xi.ndim != 2 or t.shape != (xi.shape[0],):
        raise ValueError("xi must be (n, d) and t (n,)")
    safety = _resolve_safety(field, cfg)
    _check_state(xi, safety)
    if n_steps is None:
        n_steps = max(cfg.num_steps(tt) for tt in t) if t.size else cfg.min_steps
    h = (t / n_steps)[:, None]
    return _rk4_state(field, xi, h, n_steps, safety)


def compose_flows(fields, times, xi,
                  cfg: FlowConfig = DEFAULT_FLOW_CONFIG) -> np.ndarray:
    """Apply the flow of each field in order, for the matching duration."""
    times = np.asarray(times, dtype=float)
    if len(fields) != times.shape[-1]:
        raise ValueError("need one duration per field")
    x = np.asarray(xi, dtype=float)
    for f, t in zip(fields, times):
        x = flow(f, x, float(t), cfg)
    return x


def _rk4_augmented(field: VectorField, x: np.ndarray, h: np.ndarray,
                   n_steps: int, safety: float, with_jac: bool,
                   with_params: bool):
    """RK4 on state plus variational blocks, on the shared step grid.

    Y' = J_f(x) Y tracks sensitivity to the initial point (Y0 = I);
    S' = J_f(x) S + df/dparams tracks field-parameter sensitivity (S0 = 0).
    """
    n, d = x.shape
    Y = np.broadcast_to(np.eye(d), (n, d, d)).copy() if with_jac else None
    S = np.zeros((n, d, field.n_params)) if with_params else None
    hY = h[..., None] if with_jac or with_params else None

    def rhs(xs, Ys, Ss):
        fx, J, P = field.value_and_jacobians(
            xs, with_jac=with_jac or with_params, with_params=with_params)
        kY = np.einsum("nij,njk->nik", J, Ys) if with_jac else None
        kS = None
        if with_params:
            kS = np.einsum("nij,njk->nik", J, Ss) + P
        return fx, kY, kS

    for _ in range(n_steps):
        f1, Y1, S1 = rhs(x, Y, S)
        f2, Y2, S2 = rhs(x + 0.5 * h * f1,
                         Y + 0.5 * hY * Y1 if with_jac else None,
                         S + 0.5 * hY * S1 if with_params else None)
        f3, Y3, S3 = rhs(x + 0.5 * h * f2,
                         Y + 0.5 * hY * Y2 if with_jac else None,
                         S + 0.5 * hY * S2 if with_params else None)
        f4, Y4, S4 = rhs(x + h * f3,
                         Y + hY * Y3 if with_jac else None,
                         S + hY * S3 if with_params else None)
        x = x + (h / 6.0) * (f1 + 2.0 * f2 + 2.0 * f3 + f4)
        if with_jac:
            Y = Y + (hY / 6.0) * (Y1 + 2.0 * Y2 + 2.0 * Y3 + Y4)
        if with_params:
            S = S + (hY / 6.0) * (S1 + 2.0 * S2 + 2.0 * S3 + S4)
        _check_state(x, safety)
    return x, Y, S


def flow_layers(field: VectorField, xi: np.ndarray, t: np.ndarray,
                cfg: FlowConfig, n_steps: int,
                with_jac: bool = True, with_params: bool = True):
    """Batched flow returning endpoint plus variational blocks (model internals)."""
    xi = np.asarray(xi, dtype=float)
    t = np.asarray(t, dtype=float)
    safety = _resolve_safety(field, cfg)
    _check_state(xi, safety)
    h = (t / n_steps)[:, None]
    return _rk4_augmented(field, xi, h, n_steps, safety, with_jac, with_params)


def flow_with_sensitivity(field: VectorField, xi, t: float,
                          cfg: FlowConfig = DEFAULT_FLOW_CONFIG,
                          wrt: str = "initial_point"):
    """Flow endpoint together with its derivative.

    wrt = "time": returns (endpoint, f(endpoint)), the exact t-derivative of
    the flow map.  wrt = "initial_point": (endpoint, Y) with Y (d, d) from
    the variational equation.  wrt = "field_params": (endpoint, S) with S
    (d, n_params).
    """
    xi = np.asarray(xi, dtype=float)
    if xi.ndim != 1:
        raise ValueError("flow_with_sensitivity expects a single point")
    if wrt == "time":
        end = flow(field, xi, t, cfg)
        return end, field.evaluate(end)
    if wrt not in ("initial_point", "field_params"):
        raise ValueError(f"unknown sensitivity target {wrt!r}")
    with_jac = wrt == "initial_point"
    n_steps = cfg.num_steps(t)
    if t == 0.0:
        if with_jac:
            return xi.copy(), np.eye(field.dim)
        return xi.copy(), np.zeros((field.dim, field.n_params))
    x, Y, S = flow_layers(field, xi[None], np.asarray([t]), cfg, n_steps,
                          with_jac=with_jac, with_params=not with_jac)
    return x[0], (Y[0] if with_jac else S[0])
