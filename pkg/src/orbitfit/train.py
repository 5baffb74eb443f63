"""Empirical risk minimization with restarts, projection, and seeded determinism."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .encoders import Encoder
from .fields import FieldFamily, VectorField, spectral_norm
from .flows import DEFAULT_FLOW_CONFIG, FlowConfig, FlowDivergenceError
from .model import Dataset, ReconstructionMap, TrainableReconstruction, empirical_risk

__all__ = ["TrainConfig", "EncoderSpec", "FitReport", "fit", "evaluate",
           "splitmix64", "derive_seed"]

_MASK64 = (1 << 64) - 1


def splitmix64(k: int) -> int:
    """SplitMix64 output for index k; used to derive independent stream seeds."""
    z = (k + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, k: int) -> int:
    return (seed ^ splitmix64(k)) & _MASK64


@dataclass(frozen=True)
class EncoderSpec:
    kind: str = "mlp"
    hidden: int = 16
    init_scale: float = 0.1

    def build(self, rng: np.random.Generator, dim: int, interval) -> Encoder:
        if self.kind == "affine":
            return Encoder.new_affine(rng, dim, interval, scale=self.init_scale)
        if self.kind == "mlp":
            return Encoder.new_mlp(rng, dim, interval, hidden=self.hidden,
                                   scale=self.init_scale)
        raise ValueError(f"unknown encoder kind {self.kind!r}")


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adaptive_moment"
    learning_rate: float = 1e-2
    max_iters: int = 2000
    restarts: int = 5
    seed: int = 0
    grad_tolerance: float = 1e-8
    anchor_count: int = 64
    weight_radius: float = 10.0
    lr_decay: float = 1.0
    field_init: str = "auto"
    momentum: float = 0.9
    second_moment: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.optimizer not in ("gd", "momentum", "adaptive_moment"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.field_init not in ("auto", "family"):
            raise ValueError(f"unknown field_init {self.field_init!r}")


@dataclass
class FitReport:
    model: ReconstructionMap
    final_risk: float
    restart_risks: list[float]
    history: list[tuple[float, float]]  # (risk, gradient norm) per iteration
    seed: int
    aborted_restarts: int


class _Stepper:
    """First-order update rule on a flat parameter vector."""

    def __init__(self, cfg: TrainConfig, n_params: int):
        self.cfg = cfg
        self.mom = np.zeros(n_params)
        self.sec = np.zeros(n_params)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        self.t += 1
        lr = cfg.learning_rate * cfg.lr_decay ** (self.t - 1)
        if cfg.optimizer == "gd":
            return params - lr * grad
        if cfg.optimizer == "momentum":
            self.mom = cfg.momentum * self.mom + grad
            return params - lr * self.mom
        self.mom = cfg.momentum * self.mom + (1 - cfg.momentum) * grad
        self.sec = cfg.second_moment * self.sec + (1 - cfg.second_moment) * grad * grad
        mhat = self.mom / (1 - cfg.momentum ** self.t)
        shat = self.sec / (1 - cfg.second_moment ** self.t)
        return params - lr * mhat / (np.sqrt(shat) + cfg.epsilon)


def _init_field(family: FieldFamily, cfg: TrainConfig,
                rng: np.random.Generator) -> VectorField:
    if cfg.field_init == "family" or family.kind != "affine":
        return family.sample(rng)
    # norm-preserving initialization: affine flows start as unit-speed
    # rotations (skew-symmetric generator) plus small noise, which avoids the
    # early collapse or blow-up of generic draws
    d = family.dim
    raw = rng.standard_normal((d, d))
    skew = 0.5 * (raw - raw.T)
    nrm = spectral_norm(skew)
    if nrm > 0:
        skew /= nrm
    A = skew + 0.05 * rng.standard_normal((d, d))
    u = 0.02 * rng.standard_normal(d)
    return VectorField.affine(A, u, bump=family.bump)


def init_trainable(data: Dataset, family: FieldFamily, enc_spec: EncoderSpec,
                   m: int, interval, cfg: TrainConfig,
                   flow_cfg: FlowConfig, rng: np.random.Generator
                   ) -> TrainableReconstruction:
    d = data.dim
    parts = [enc_spec.build(rng, d, interval) for _ in range(m)]
    fields = [_init_field(family, cfg, rng) for _ in range(m)]
    k = min(data.n, cfg.anchor_count)
    idx = rng.choice(data.n, size=k, replace=False)
    anchors = data.points[np.sort(idx)].copy()
    return TrainableReconstruction(parts=parts, fields=fields, anchors=anchors,
                                   logits=np.zeros(k), family=family,
                                   flow_cfg=flow_cfg, weight_radius=cfg.weight_radius)


def _run_restart(trainable: TrainableReconstruction, data: Dataset,
                 cfg: TrainConfig) -> tuple[float, np.ndarray, list[float]]:
    params = trainable.param_vector()
    stepper = _Stepper(cfg, params.size)
    best_risk = math.inf
    best_params = params.copy()
    history: list[tuple[float, float]] = []
    for _ in range(cfg.max_iters):
        risk, grad = trainable.risk_and_gradient(data)
        gnorm = float(np.linalg.norm(grad))
        history.append((risk, gnorm))
        if risk < best_risk:
            best_risk = risk
            best_params = trainable.param_vector()
        if gnorm < cfg.grad_tolerance:
            break
        params = stepper.step(trainable.param_vector(), grad)
        trainable.set_param_vector(params)
        trainable.project()
    risk, grad = trainable.risk_and_gradient(data)
    history.append((risk, float(np.linalg.norm(grad))))
    if risk < best_risk:
        best_risk = risk
        best_params = trainable.param_vector()
    return best_risk, best_params, history


def fit(data: Dataset, family: FieldFamily, enc_spec: EncoderSpec, m: int,
        interval, cfg: TrainConfig = TrainConfig(),
        flow_cfg: FlowConfig = DEFAULT_FLOW_CONFIG) -> FitReport:
    """Multi-restart first-order ERM over the reconstruction class.

    Restart k draws its initialization from a generator seeded with
    seed XOR splitmix64(k), so reports are reproducible bit-for-bit and
    restarts are independent of execution order.  A restart whose flow
    blows up is abandoned and recorded; at least one restart must survive.
    """
    if m < 1:
        raise ValueError("need at least one layer")
    best: tuple[float, TrainableReconstruction, np.ndarray] | None = None
    best_history: list[tuple[float, float]] = []
    restart_risks: list[float] = []
    aborted = 0
    for k in range(cfg.restarts):
        rng = np.random.default_rng(derive_seed(cfg.seed, k))
        trainable = init_trainable(data, family, enc_spec, m, interval, cfg,
                                   flow_cfg, rng)
        try:
            risk, params, history = _run_restart(trainable, data, cfg)
        except FlowDivergenceError:
            aborted += 1
            restart_risks.append(math.inf)
            continue
        restart_risks.append(risk)
        if best is None or risk < best[0]:
            best = (risk, trainable, params)
            best_history = history
    if best is None:
        raise FlowDivergenceError("every restart diverged")
    risk, trainable, params = best
    trainable.set_param_vector(params)
    trainable.project()
    return FitReport(model=trainable.model, final_risk=risk,
                     restart_risks=restart_risks, history=best_history,
                     seed=cfg.seed, aborted_restarts=aborted)


def evaluate(model: ReconstructionMap, data: Dataset) -> float:
    """Empirical risk of a fitted map on held-out data."""
    return empirical_risk(model, data)
