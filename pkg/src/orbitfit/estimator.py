"""Scikit-learn style estimator facade over the flow reconstruction trainer."""
from __future__ import annotations

import numbers

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .fields import BumpSpec, FieldFamily
from .flows import FlowConfig
from .model import Dataset, empirical_risk
from .train import EncoderSpec, TrainConfig, fit as _fit

__all__ = ["FlowAutoencoder"]


class FlowAutoencoder(TransformerMixin, BaseEstimator):
    """Autoencoder whose decoder is a sequence of learned vector-field flows.

    Each input point is encoded into a tuple of flow durations; decoding
    starts from a learned base point and follows each learned field for the
    corresponding duration.  Fitting minimizes the mean Euclidean
    reconstruction error (unsquared) by projected gradient descent with
    random restarts.

    Parameters mirror the underlying trainer: `n_flows` is the number of
    flow layers, `field_kind` one of "constant" / "affine" / "recurrent",
    `encoder_kind` "affine" or "mlp".  `interval` is the (closed) duration
    range, containing 0.  `bump_inner`/`bump_outer` control the smooth
    cutoff required for affine fields (defaults are chosen from the data
    radius at fit time when left as None).
    """

    def __init__(self, n_flows: int = 2, field_kind: str = "affine",
                 encoder_kind: str = "mlp", hidden: int = 16,
                 interval: tuple[float, float] = (-1.0, 1.0),
                 v_max: float = 1.0, bump_inner: float | None = None,
                 bump_outer: float | None = None,
                 step_size_max: float = 0.05, optimizer: str = "adaptive_moment",
                 learning_rate: float = 1e-2, max_iters: int = 300,
                 restarts: int = 3, anchor_count: int = 64,
                 weight_radius: float = 10.0, init_scale: float = 0.1,
                 random_state: int = 0):
        self.n_flows = n_flows
        self.field_kind = field_kind
        self.encoder_kind = encoder_kind
        self.hidden = hidden
        self.interval = interval
        self.v_max = v_max
        self.bump_inner = bump_inner
        self.bump_outer = bump_outer
        self.step_size_max = step_size_max
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.max_iters = max_iters
        self.restarts = restarts
        self.anchor_count = anchor_count
        self.weight_radius = weight_radius
        self.init_scale = init_scale
        self.random_state = random_state

    # ------------------------------------------------------------------
    def _family(self, X: np.ndarray) -> FieldFamily:
        dim = X.shape[1]
        bump = None
        if self.field_kind == "affine" or self.bump_inner is not None:
            radius = float(np.max(np.linalg.norm(X, axis=1)))
            t_bar = max(abs(self.interval[0]), abs(self.interval[1]))
            inner = (self.bump_inner if self.bump_inner is not None
                     else (radius + 1.0) * float(np.exp(self.n_flows * t_bar)))
            outer = (self.bump_outer if self.bump_outer is not None
                     else 2.0 * inner)
            bump = BumpSpec(inner_radius=inner, outer_radius=outer)
        if self.field_kind == "constant":
            return FieldFamily(kind="constant", dim=dim, v_max=self.v_max,
                               bump=bump)
        if self.field_kind == "affine":
            return FieldFamily(kind="affine", dim=dim, bump=bump)
        if self.field_kind == "recurrent":
            return FieldFamily(kind="recurrent", dim=dim)
        raise ValueError(f"unknown field_kind {self.field_kind!r}")

    def _as_array(self, X, fitted: bool) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise ValueError("X must be a 2d array")
        if fitted and X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X

    # ------------------------------------------------------------------
    def fit(self, X, y=None):
        """Learn encoder, fields, and base point from unlabeled points."""
        X = self._as_array(X, fitted=False)
        if not isinstance(self.random_state, numbers.Integral):
            raise ValueError("random_state must be an integer seed")
        data = Dataset(points=X)
        family = self._family(X)
        enc_spec = EncoderSpec(kind=self.encoder_kind, hidden=self.hidden,
                               init_scale=self.init_scale)
        cfg = TrainConfig(optimizer=self.optimizer,
                          learning_rate=self.learning_rate,
                          max_iters=self.max_iters, restarts=self.restarts,
                          seed=int(self.random_state),
                          anchor_count=self.anchor_count,
                          weight_radius=self.weight_radius)
        flow_cfg = FlowConfig(step_size_max=self.step_size_max)
        report = _fit(data, family, enc_spec, m=self.n_flows,
                      interval=self.interval, cfg=cfg, flow_cfg=flow_cfg)
        self.model_ = report.model
        self.fit_report_ = report
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X) -> np.ndarray:
        """Encode points into their flow-duration tuples, shape (n, n_flows)."""
        check_is_fitted(self, "model_")
        X = self._as_array(X, fitted=True)
        return self.model_.encode(X)

    def inverse_transform(self, T) -> np.ndarray:
        """Decode duration tuples back into ambient points."""
        check_is_fitted(self, "model_")
        T = np.asarray(T, dtype=float)
        if T.ndim != 2 or T.shape[1] != self.model_.m:
            raise ValueError(f"T must have shape (n, {self.model_.m})")
        return self.model_.decode(T)

    def predict(self, X) -> np.ndarray:
        """Reconstruct points: decode(encode(X))."""
        check_is_fitted(self, "model_")
        X = self._as_array(X, fitted=True)
        return self.model_.reconstruct(X)

    def score(self, X, y=None) -> float:
        """Negative mean reconstruction error (higher is better)."""
        check_is_fitted(self, "model_")
        X = self._as_array(X, fitted=True)
        return -empirical_risk(self.model_, Dataset(points=X))
