"""Synthetic low-dimensional shape datasets for reconstruction experiments.

Shapes are classical one- and two-dimensional sets (segment, circle, helix,
spherical cap, swiss roll) sampled either on a deterministic grid or
uniformly in the shape parameters, optionally perturbed by truncated
isotropic noise and embedded into a higher-dimensional space by a random
orthogonal map.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Dataset

__all__ = ["GeneratorSpec", "generate", "split", "SHAPES"]

SHAPES = ("segment", "circle", "helix", "sphere_cap", "swiss_roll")

_MIN_DIM = {"segment": 1, "circle": 2, "helix": 3, "sphere_cap": 3,
            "swiss_roll": 3}


@dataclass(frozen=True)
class GeneratorSpec:
    """Recipe for a synthetic dataset.

    shape: one of SHAPES.  dim: ambient dimension (>= the shape's intrinsic
    embedding dimension); when larger, coordinates are padded with zeros and,
    if embed_seed is set, rotated by a seeded random orthogonal map.
    sampling: "grid" for deterministic parameter grids, "uniform" for
    uniform random parameters.  noise_sigma: isotropic Gaussian noise with
    radius clipped to 3 sigma.  scale: overall size multiplier.
    """

    shape: str = "circle"
    dim: int = 2
    n: int = 200
    sampling: str = "grid"
    noise_sigma: float = 0.0
    scale: float = 1.0
    seed: int = 0
    embed_seed: int | None = None

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"shape must be one of {SHAPES}")
        if self.dim < _MIN_DIM[self.shape]:
            raise ValueError(
                f"{self.shape} needs dim >= {_MIN_DIM[self.shape]}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.sampling not in ("grid", "uniform"):
            raise ValueError("sampling must be 'grid' or 'uniform'")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def to_dict(self) -> dict:
        d = {"shape": self.shape, "dim": self.dim, "n": self.n,
             "sampling": self.sampling, "noise_sigma": self.noise_sigma,
             "scale": self.scale, "seed": self.seed}
        if self.embed_seed is not None:
            d["embed_seed"] = self.embed_seed
        return d

    @staticmethod
    def from_dict(d: dict) -> "GeneratorSpec":
        return GeneratorSpec(**d)


def _params(spec: GeneratorSpec, rng, count: int, ranges):
    """Parameter tuples: grid = product-free linspace per axis, matched to n."""
    k = len(ranges)
    if spec.sampling == "uniform":
        cols = [rng.uniform(lo, hi, size=count) for lo, hi, _ in ranges]
        return np.stack(cols, axis=1)
    if k == 1:
        lo, hi, periodic = ranges[0]
        pts = (np.linspace(lo, hi, count, endpoint=not periodic)
               if count > 1 or periodic else np.array([(lo + hi) / 2.0]))
        return pts[:, None]
    # two parameters: near-square grid covering exactly n points row by row
    rows = max(1, int(math.sqrt(count)))
    cols = math.ceil(count / rows)
    lo0, hi0, per0 = ranges[0]
    lo1, hi1, per1 = ranges[1]
    a = np.linspace(lo0, hi0, rows, endpoint=not per0)
    b = np.linspace(lo1, hi1, cols, endpoint=not per1)
    grid = np.stack(np.meshgrid(a, b, indexing="ij"), axis=-1).reshape(-1, 2)
    return grid[:count]


def _shape_points(spec: GeneratorSpec, rng) -> np.ndarray:
    s = spec.scale
    if spec.shape == "segment":
        t = _params(spec, rng, spec.n, [(0.0, 1.0, False)])[:, 0]
        base = (s * t)[:, None]
    elif spec.shape == "circle":
        t = _params(spec, rng, spec.n, [(0.0, 2.0 * math.pi, True)])[:, 0]
        base = s * np.stack([np.cos(t), np.sin(t)], axis=1)
    elif spec.shape == "helix":
        t = _params(spec, rng, spec.n, [(0.0, 4.0 * math.pi, False)])[:, 0]
        base = s * np.stack([np.cos(t), np.sin(t), t / (4.0 * math.pi) * 2.0 - 1.0],
                            axis=1)
    elif spec.shape == "sphere_cap":
        uv = _params(spec, rng, spec.n,
                     [(0.0, math.pi / 3.0, False), (0.0, 2.0 * math.pi, True)])
        phi, theta = uv[:, 0], uv[:, 1]
        base = s * np.stack([np.sin(phi) * np.cos(theta),
                             np.sin(phi) * np.sin(theta),
                             np.cos(phi)], axis=1)
    else:  # swiss_roll
        uv = _params(spec, rng, spec.n,
                     [(1.5 * math.pi, 4.5 * math.pi, False), (-1.0, 1.0, False)])
        t, h = uv[:, 0], uv[:, 1]
        base = s * np.stack([t * np.cos(t) / (4.5 * math.pi),
                             h,
                             t * np.sin(t) / (4.5 * math.pi)], axis=1)
    return base


def generate(spec: GeneratorSpec) -> Dataset:
    """Materialize the dataset that ``spec`` describes (deterministic in it)."""
    rng = np.random.default_rng(spec.seed)
    base = _shape_points(spec, rng)
    pts = np.zeros((spec.n, spec.dim))
    pts[:, :base.shape[1]] = base
    if spec.noise_sigma > 0:
        noise = rng.standard_normal(pts.shape) * spec.noise_sigma
        radii = np.linalg.norm(noise, axis=1, keepdims=True)
        cap = 3.0 * spec.noise_sigma
        factor = np.minimum(1.0, cap / np.maximum(radii, 1e-300))
        pts = pts + noise * factor
    if spec.embed_seed is not None and spec.dim > 1:
        q_rng = np.random.default_rng(spec.embed_seed)
        raw = q_rng.standard_normal((spec.dim, spec.dim))
        q, r = np.linalg.qr(raw)
        q *= np.sign(np.diag(r))  # fix the sign convention for determinism
        pts = pts @ q.T
    name = f"{spec.shape}-{spec.n}"
    return Dataset(points=pts, name=name)


def split(data: Dataset, train_fraction: float = 0.8, seed: int = 0
          ) -> tuple[Dataset, Dataset]:
    """Seeded permutation split into train and test subsets."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(data.n)
    cut = int(round(train_fraction * data.n))
    cut = min(max(cut, 1), data.n - 1)
    tr = data.points[np.sort(perm[:cut])]
    te = data.points[np.sort(perm[cut:])]
    return (Dataset(points=tr, name=data.name + "-train"),
            Dataset(points=te, name=data.name + "-test"))
