"""Shared builders for randomized test instances."""
import numpy as np

from orbitfit.fields import VectorField


def clipped_pair(rng, d):
    """(A, u) with spectral norm of A and |u| each at most 1."""
    A = rng.standard_normal((d, d))
    s = np.linalg.norm(A, 2)
    if s > 1.0:
        A /= s * (1.0 + 1e-12)
    u = rng.standard_normal(d)
    n = np.linalg.norm(u)
    if n > 1.0:
        u /= n * (1.0 + 1e-12)
    return A, u


def interior_field(kind, d, rng, bump=None, margin=0.8):
    """A field strictly inside its family's constraint set.

    Finite-difference probes of the risk need instances where small
    parameter bumps stay feasible, so nothing gets projected.
    """
    if kind == "constant":
        v = rng.standard_normal(d)
        v *= margin * rng.uniform(0.2, 1.0) / np.linalg.norm(v)
        return VectorField.constant(v, bump=bump)
    A = rng.standard_normal((d, d))
    A *= margin / np.linalg.norm(A, 2)
    u = rng.standard_normal(d)
    u *= margin * rng.uniform(0.2, 1.0) / np.linalg.norm(u)
    ctor = VectorField.affine if kind == "affine" else VectorField.recurrent
    return ctor(A, u, rescale=False, bump=bump)


def boundary_field(kind, d, rng, bump=None):
    """A field sampled up to the constraint boundary (clip-normalized)."""
    if kind == "constant":
        v = rng.standard_normal(d)
        n = np.linalg.norm(v)
        if n > 1.0:
            v /= n * (1.0 + 1e-12)
        return VectorField.constant(v, bump=bump)
    A, u = clipped_pair(rng, d)
    ctor = VectorField.affine if kind == "affine" else VectorField.recurrent
    return ctor(A, u, rescale=False, bump=bump)
