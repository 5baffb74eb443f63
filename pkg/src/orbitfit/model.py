"""Reconstruction maps (encode to durations, decode by composed flows) and risks."""
from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .encoders import Encoder, ProductEncoder
from .fields import FieldFamily, VectorField
from .flows import DEFAULT_FLOW_CONFIG, FlowConfig, flow_batch, flow_layers

__all__ = ["Dataset", "ReconstructionMap", "TrainableReconstruction",
           "empirical_risk", "expected_risk_mc", "risk_gradient",
           "save_model", "load_model"]


@dataclass(frozen=True, eq=False)
class Dataset:
    """An (n, d) sample with a cached support radius."""

    points: np.ndarray
    name: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("points must be a nonempty (n, d) array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def support_radius(self) -> float:
        return float(np.max(np.linalg.norm(self.points, axis=1)))

    def to_csv(self, path: str) -> None:
        header = ",".join(f"x{i}" for i in range(self.dim))
        # %.17g round-trips IEEE doubles exactly
        body = "\n".join(",".join("%.17g" % v for v in row) for row in self.points)
        _atomic_write(path, header + "\n" + body + "\n")

    @classmethod
    def from_csv(cls, path: str, name: str = "") -> "Dataset":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip()
            rows = np.loadtxt(fh, delimiter=",", ndmin=2)
        cols = header.split(",")
        expected = [f"x{i}" for i in range(len(cols))]
        if cols != expected:
            raise ValueError(f"bad CSV header {header!r}")
        if rows.shape[1] != len(cols):
            raise ValueError("row width does not match header")
        return cls(points=rows, name=name or os.path.basename(path))


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-orbitfit-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass(frozen=True, eq=False)
class ReconstructionMap:
    """G(x): encode x to durations, then flow xi through each field in turn."""

    encoder: ProductEncoder
    fields: tuple[VectorField, ...]
    xi: np.ndarray
    flow_cfg: FlowConfig = DEFAULT_FLOW_CONFIG

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "fields", tuple(self.fields))
        if len(self.fields) != self.encoder.m:
            raise ValueError("need one field per encoder component")
        dims = {f.dim for f in self.fields} | {self.encoder.dim, xi.shape[0]}
        if len(dims) != 1:
            raise ValueError("field, encoder, and xi dimensions must agree")

    @property
    def m(self) -> int:
        return len(self.fields)

    @property
    def dim(self) -> int:
        return self.xi.shape[0]

    @property
    def layer_steps(self) -> int:
        return self.flow_cfg.steps_for_interval(self.encoder.interval)

    def encode(self, x) -> np.ndarray:
        return self.encoder.encode(x)

    def reconstruct(self, x) -> np.ndarray:
        """G(x) for a single point (d,) or batch (n, d)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xb = x[None] if single else x
        out = self.decode(self.encoder.encode(xb))
        return out[0] if single else out

    def decode(self, times) -> np.ndarray:
        """Apply the flow stack to xi for given duration tuples (n, m)."""
        times = np.asarray(times, dtype=float)
        single = times.ndim == 1
        tb = times[None] if single else times
        if tb.shape[1] != self.m:
            raise ValueError("need one duration per layer")
        cur = np.broadcast_to(self.xi, (tb.shape[0], self.dim)).copy()
        steps = self.layer_steps
        for j, f in enumerate(self.fields):
            cur = flow_batch(f, cur, tb[:, j], self.flow_cfg, n_steps=steps)
        return cur[0] if single else cur

    def to_dict(self) -> dict:
        cfg = self.flow_cfg
        return {
            "m": self.m,
            "interval": list(self.encoder.interval),
            "xi": self.xi.tolist(),
            "encoder": self.encoder.to_dict(),
            "fields": [f.to_dict() for f in self.fields],
            "flow": {"step_size_max": cfg.step_size_max, "method": cfg.method,
                     "min_steps": cfg.min_steps, "safety_radius": cfg.safety_radius},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReconstructionMap":
        flow_d = d.get("flow", {})
        cfg = FlowConfig(step_size_max=float(flow_d.get("step_size_max", 1e-2)),
                         method=flow_d.get("method", "rk4"),
                         min_steps=int(flow_d.get("min_steps", 1)),
                         safety_radius=flow_d.get("safety_radius"))
        enc = ProductEncoder.from_dict(d["encoder"])
        fields = tuple(VectorField.from_dict(fd) for fd in d["fields"])
        if int(d["m"]) != len(fields):
            raise ValueError("m does not match the number of fields")
        return cls(encoder=enc, fields=fields,
                   xi=np.asarray(d["xi"], dtype=float), flow_cfg=cfg)


def save_model(model: ReconstructionMap, path: str) -> None:
    _atomic_write(path, json.dumps(model.to_dict(), sort_keys=True, indent=2) + "\n")


def load_model(path: str) -> ReconstructionMap:
    with open(path, "r", encoding="utf-8") as fh:
        return ReconstructionMap.from_dict(json.load(fh))


def empirical_risk(model: ReconstructionMap, data: Dataset | np.ndarray) -> float:
    """Mean unsquared Euclidean reconstruction error, in index order."""
    pts = data.points if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    errs = np.linalg.norm(pts - model.reconstruct(pts), axis=1)
    return float(np.mean(errs))


def expected_risk_mc(model: ReconstructionMap, sampler, n_mc: int,
                     seed: int = 0) -> tuple[float, float]:
    """Monte-Carlo risk under a sampler(n, rng) -> (n, d); returns (mean, stderr)."""
    rng = np.random.default_rng(seed)
    pts = np.asarray(sampler(n_mc, rng), dtype=float)
    errs = np.linalg.norm(pts - model.reconstruct(pts), axis=1)
    mean = float(np.mean(errs))
    stderr = float(np.std(errs, ddof=1) / math.sqrt(n_mc)) if n_mc > 1 else math.inf
    return mean, stderr


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - np.max(z))
    return e / np.sum(e)


@dataclass(eq=False)
class TrainableReconstruction:
    """A reconstruction map with a flat parameter vector and its risk gradient.

    The base point is a softmax-weighted combination of anchor points, so it
    stays inside the convex hull of the anchors while its weights are
    unconstrained.  Parameter layout: encoder parts, then field parameters
    per layer, then the anchor logits.
    """

    parts: list[Encoder]
    fields: list[VectorField]
    anchors: np.ndarray
    logits: np.ndarray
    family: FieldFamily
    flow_cfg: FlowConfig = DEFAULT_FLOW_CONFIG
    weight_radius: float = 10.0

    @property
    def m(self) -> int:
        return len(self.parts)

    @property
    def dim(self) -> int:
        return self.anchors.shape[1]

    @property
    def xi(self) -> np.ndarray:
        return _softmax(self.logits) @ self.anchors

    @property
    def model(self) -> ReconstructionMap:
        return ReconstructionMap(encoder=ProductEncoder(tuple(self.parts)),
                                 fields=tuple(self.fields), xi=self.xi,
                                 flow_cfg=self.flow_cfg)

    def param_vector(self) -> np.ndarray:
        blocks = [e.param_vector() for e in self.parts]
        blocks += [f.param_vector() for f in self.fields]
        blocks.append(self.logits.copy())
        return np.concatenate(blocks)

    def set_param_vector(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=float)
        i = 0
        for k, e in enumerate(self.parts):
            p = e.n_params
            self.parts[k] = e.with_params(vec[i:i + p])
            i += p
        for k, f in enumerate(self.fields):
            q = f.n_params
            self.fields[k] = f.with_params(vec[i:i + q], rescale=True)
            i += q
        self.logits = vec[i:].copy()
        if self.logits.shape != (self.anchors.shape[0],):
            raise ValueError("parameter vector length mismatch")

    def project(self) -> None:
        """Project every constrained block onto its feasible set."""
        for k, e in enumerate(self.parts):
            w = e.param_vector()
            norm = np.linalg.norm(w)
            if norm > self.weight_radius:
                self.parts[k] = e.with_params(w * (self.weight_radius / norm))
        for k, f in enumerate(self.fields):
            if f.kind == "constant":
                norm = np.linalg.norm(f.v)
                if norm > self.family.v_max:
                    self.fields[k] = VectorField.constant(
                        f.v * (self.family.v_max / norm), bump=f.bump)
            else:
                # the affine/recurrent constructors clip A and u
                self.fields[k] = f.with_params(f.param_vector(), rescale=True)

    def risk_and_gradient(self, data: Dataset | np.ndarray,
                          weights: np.ndarray | None = None
                          ) -> tuple[float, np.ndarray]:
        """Weighted mean reconstruction error and its parameter gradient.

        With weights omitted this is the empirical risk.  Signed weights
        support the sign-weighted suprema used by complexity estimates.
        """
        X = data.points if isinstance(data, Dataset) else np.asarray(data, dtype=float)
        n = X.shape[0]
        w_pts = np.ones(n) if weights is None else np.asarray(weights, dtype=float)

        times = np.stack([e.encode(X) for e in self.parts], axis=1)
        steps = self.flow_cfg.steps_for_interval(self.parts[0].interval)
        xi = self.xi
        cur = np.broadcast_to(xi, (n, self.dim)).copy()
        layer_ends, layer_Y, layer_S, layer_F = [], [], [], []
        for j, f in enumerate(self.fields):
            cur, Y, S = flow_layers(f, cur, times[:, j], self.flow_cfg, steps,
                                    with_jac=True, with_params=True)
            layer_ends.append(cur)
            layer_Y.append(Y)
            layer_S.append(S)
            layer_F.append(f.evaluate(cur))

        resid = X - cur
        norms = np.linalg.norm(resid, axis=1)
        risk = float(np.mean(w_pts * norms))
        safe = np.where(norms > 0, norms, 1.0)
        units = resid / safe[:, None]
        units[norms == 0] = 0.0
        wvec = -(w_pts / n)[:, None] * units  # d risk / d G(x_i)

        grad_parts: list[np.ndarray] = [np.empty(0)] * self.m
        grad_fields: list[np.ndarray] = [np.empty(0)] * self.m
        for j in range(self.m - 1, -1, -1):
            g_t = np.einsum("nd,nd->n", wvec, layer_F[j])
            grad_parts[j] = np.einsum("np,n->p", self.parts[j].param_grad(X), g_t)
            grad_fields[j] = np.einsum("ndq,nd->q", layer_S[j], wvec)
            wvec = np.einsum("nij,ni->nj", layer_Y[j], wvec)
        grad_xi = wvec.sum(axis=0)
        s = _softmax(self.logits)
        grad_logits = s * (self.anchors @ grad_xi - float(xi @ grad_xi))
        return risk, np.concatenate(grad_parts + grad_fields + [grad_logits])


def risk_gradient(model: TrainableReconstruction, data: Dataset | np.ndarray,
                  weights: np.ndarray | None = None) -> np.ndarray:
    return model.risk_and_gradient(data, weights=weights)[1]
