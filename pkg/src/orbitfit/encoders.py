"""Encoders mapping points to flow durations inside a fixed time interval.

Both kinds squash a real score through the logistic function, so outputs
always land strictly inside [T0, T1] and the maps are Lipschitz with a
constant computable from the weights.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

__all__ = ["Encoder", "ProductEncoder", "encoder_c0_distance"]


@dataclass(frozen=True, eq=False)
class Encoder:
    """Scalar encoder: affine score or one-hidden-layer tanh MLP score."""

    kind: str
    dim: int
    interval: tuple[float, float]
    w: np.ndarray | None = None      # affine: (d,)
    b: float = 0.0
    W1: np.ndarray | None = None     # mlp: (hidden, d)
    b1: np.ndarray | None = None
    w2: np.ndarray | None = None
    b2: float = 0.0

    def __post_init__(self):
        T0, T1 = self.interval
        if not (T0 <= 0.0 <= T1) or T0 >= T1:
            raise ValueError("interval must satisfy T0 <= 0 <= T1 and T0 < T1")

    @classmethod
    def affine(cls, w, b: float, interval) -> "Encoder":
        w = np.asarray(w, dtype=float)
        return cls(kind="affine", dim=w.shape[0],
                   interval=(float(interval[0]), float(interval[1])),
                   w=w, b=float(b))

    @classmethod
    def mlp(cls, W1, b1, w2, b2: float, interval) -> "Encoder":
        W1 = np.asarray(W1, dtype=float)
        b1 = np.asarray(b1, dtype=float)
        w2 = np.asarray(w2, dtype=float)
        if W1.ndim != 2 or b1.shape != (W1.shape[0],) or w2.shape != (W1.shape[0],):
            raise ValueError("inconsistent MLP weight shapes")
        return cls(kind="mlp", dim=W1.shape[1],
                   interval=(float(interval[0]), float(interval[1])),
                   W1=W1, b1=b1, w2=w2, b2=float(b2))

    @classmethod
    def new_affine(cls, rng: np.random.Generator, dim: int, interval,
                   scale: float = 0.1) -> "Encoder":
        return cls.affine(rng.uniform(-scale, scale, size=dim),
                          rng.uniform(-scale, scale), interval)

    @classmethod
    def new_mlp(cls, rng: np.random.Generator, dim: int, interval,
                hidden: int = 16, scale: float = 0.1) -> "Encoder":
        return cls.mlp(rng.uniform(-scale, scale, size=(hidden, dim)),
                       rng.uniform(-scale, scale, size=hidden),
                       rng.uniform(-scale, scale, size=hidden),
                       rng.uniform(-scale, scale), interval)

    def _score(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "affine":
            return x @ self.w + self.b
        return np.tanh(x @ self.W1.T + self.b1) @ self.w2 + self.b2

    def encode(self, x) -> np.ndarray:
        """Duration for each point: T0 + (T1 - T0) * logistic(score)."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError("point dimension does not match the encoder")
        T0, T1 = self.interval
        return T0 + (T1 - T0) * expit(self._score(x))

    def param_grad(self, x: np.ndarray) -> np.ndarray:
        """d encode / d params, shape (n, n_params); batch input required."""
        x = np.asarray(x, dtype=float)
        T0, T1 = self.interval
        if self.kind == "affine":
            s = expit(x @ self.w + self.b)
            gate = (T1 - T0) * s * (1.0 - s)
            return np.concatenate([gate[:, None] * x, gate[:, None]], axis=1)
        z1 = x @ self.W1.T + self.b1
        a1 = np.tanh(z1)
        s = expit(a1 @ self.w2 + self.b2)
        gate = (T1 - T0) * s * (1.0 - s)
        hid = gate[:, None] * self.w2 * (1.0 - a1 * a1)     # (n, hidden)
        gW1 = hid[:, :, None] * x[:, None, :]               # (n, hidden, d)
        n = x.shape[0]
        return np.concatenate([gW1.reshape(n, -1), hid,
                               gate[:, None] * a1, gate[:, None]], axis=1)

    @property
    def n_params(self) -> int:
        if self.kind == "affine":
            return self.dim + 1
        hidden = self.W1.shape[0]
        return hidden * self.dim + hidden + hidden + 1

    def param_vector(self) -> np.ndarray:
        if self.kind == "affine":
            return np.concatenate([self.w, [self.b]])
        return np.concatenate([self.W1.ravel(), self.b1, self.w2, [self.b2]])

    def with_params(self, vec: np.ndarray) -> "Encoder":
        vec = np.asarray(vec, dtype=float)
        if self.kind == "affine":
            return Encoder.affine(vec[:-1].copy(), vec[-1], self.interval)
        hidden = self.W1.shape[0]
        d = self.dim
        i = hidden * d
        return Encoder.mlp(vec[:i].reshape(hidden, d).copy(),
                           vec[i:i + hidden].copy(),
                           vec[i + hidden:i + 2 * hidden].copy(),
                           vec[-1], self.interval)

    def lipschitz_bound(self) -> float:
        """Certified Lipschitz constant: layer norms x max logistic slope x width."""
        T0, T1 = self.interval
        span = (T1 - T0) / 4.0
        if self.kind == "affine":
            return span * float(np.linalg.norm(self.w))
        return span * float(np.linalg.norm(self.w2)) * \
            float(np.linalg.norm(self.W1, ord=2))

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind, "interval": list(self.interval)}
        if self.kind == "affine":
            d["w"] = self.w.tolist()
            d["b"] = self.b
        else:
            d["W1"] = self.W1.ravel().tolist()
            d["b1"] = self.b1.tolist()
            d["w2"] = self.w2.tolist()
            d["b2"] = self.b2
            d["hidden"] = self.W1.shape[0]
            d["dim"] = self.dim
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Encoder":
        if d["kind"] == "affine":
            return cls.affine(d["w"], d["b"], d["interval"])
        hidden, dim = int(d["hidden"]), int(d["dim"])
        W1 = np.asarray(d["W1"], dtype=float).reshape(hidden, dim)
        return cls.mlp(W1, d["b1"], d["w2"], d["b2"], d["interval"])


@dataclass(frozen=True, eq=False)
class ProductEncoder:
    """One scalar encoder per flow layer; encodes points to duration tuples."""

    parts: tuple[Encoder, ...]

    def __post_init__(self):
        if not self.parts:
            raise ValueError("need at least one encoder")
        dims = {e.dim for e in self.parts}
        if len(dims) != 1:
            raise ValueError("all component encoders must share the input dimension")

    @property
    def m(self) -> int:
        return len(self.parts)

    @property
    def dim(self) -> int:
        return self.parts[0].dim

    @property
    def interval(self) -> tuple[float, float]:
        return self.parts[0].interval

    def encode(self, x) -> np.ndarray:
        """Duration tuples, shape (n, m) for batch input or (m,) for one point."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xb = x[None] if single else x
        out = np.stack([e.encode(xb) for e in self.parts], axis=1)
        return out[0] if single else out

    def to_dict(self) -> list:
        return [e.to_dict() for e in self.parts]

    @classmethod
    def from_dict(cls, items) -> "ProductEncoder":
        return cls(parts=tuple(Encoder.from_dict(d) for d in items))


def encoder_c0_distance(a: Encoder | ProductEncoder, b: Encoder | ProductEncoder,
                        points: np.ndarray) -> float:
    """Max absolute output gap over sample points (sup over tuples for products)."""
    points = np.asarray(points, dtype=float)
    if isinstance(a, ProductEncoder) != isinstance(b, ProductEncoder):
        raise ValueError("cannot compare a product with a scalar encoder")
    if isinstance(a, ProductEncoder):
        if a.m != b.m:
            raise ValueError("products must have the same number of parts")
        return max(encoder_c0_distance(ea, eb, points)
                   for ea, eb in zip(a.parts, b.parts))
    return float(np.max(np.abs(a.encode(points) - b.encode(points))))
