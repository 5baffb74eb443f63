"""Parametric vector fields with uniform magnitude and Lipschitz constants.

Three field kinds are supported: constant fields, affine fields ``A x + u``
with a spectral-norm constraint on ``A``, and recurrent fields
``sigma(A x + u)`` with a bounded 1-Lipschitz nonlinearity.  Fields can be
clipped to compact support by a radial polynomial bump.  Families of fields
carry certified constants ``(L0, L)`` with ``|f| <= L0`` and ``Lip(f) <= L``
uniformly over the family.

The module also provides comparison functions: monotone envelopes
``beta(r, t)`` bounding how far two trajectories started ``r`` apart can
drift after flowing for time ``t``, their iterated time-maximized values,
and the gain from a sup-norm field perturbation to trajectory deviation.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

__all__ = [
    "BumpSpec",
    "Nonlinearity",
    "VectorField",
    "FieldFamily",
    "ComparisonFn",
    "spectral_norm",
    "check_exponential_stability",
]

SPECTRAL_NORM_TOL = 1e-10
SPECTRAL_NORM_MAX_ITER = 500

NONLINEARITY_NAMES = ("tanh_componentwise", "scaled_sigmoid")


def spectral_norm(A: np.ndarray, tol: float = SPECTRAL_NORM_TOL,
                  max_iter: int = SPECTRAL_NORM_MAX_ITER) -> float:
    """Largest singular value of A, by power iteration on A^T A."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError("spectral_norm expects a matrix")
    n = A.shape[1]
    v = np.full(n, 1.0 / math.sqrt(n))
    if np.linalg.norm(A.T @ (A @ v)) == 0.0:
        # start vector in the kernel; sweep canonical directions
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1.0
            if np.linalg.norm(A.T @ (A @ e)) > 0.0:
                v = e
                break
        else:
            return 0.0
    sigma = 0.0
    for _ in range(max_iter):
        w = A.T @ (A @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        new_sigma = float(np.linalg.norm(A @ v))
        if abs(new_sigma - sigma) <= tol * max(1.0, new_sigma):
            return new_sigma
        sigma = new_sigma
    return sigma


def _smoothstep_coeffs(n: int) -> np.ndarray:
    # S_n(s) = sum_k (-1)^k C(n+k,k) C(2n+1,n-k) s^(n+k+1); S_n(0)=0, S_n(1)=1,
    # derivatives 1..n vanish at both ends.  Coefficients are exact integers.
    coeffs = np.zeros(2 * n + 2)
    for k in range(n + 1):
        c = (-1) ** k * math.comb(n + k, k) * math.comb(2 * n + 1, n - k)
        coeffs[n + k + 1] = c
    return coeffs


def _smoothstep_max_slope(n: int) -> float:
    # S_n'(s) = c [s(1-s)]^n peaks at s = 1/2 with value (2n+1)! / (n!)^2 / 4^n.
    return math.factorial(2 * n + 1) / (math.factorial(n) ** 2) / 4.0 ** n


@dataclass(frozen=True)
class BumpSpec:
    """Radial cutoff: 1 inside `inner_radius`, 0 outside `outer_radius`.

    The transition is a polynomial smoothstep of degree ``2*profile - 1``
    (profile 3 gives the quintic), making the bump C^(profile-1).
    """

    inner_radius: float
    outer_radius: float
    profile: int = 3

    def __post_init__(self):
        if not (0 < self.inner_radius < self.outer_radius):
            raise ValueError("need 0 < inner_radius < outer_radius")
        if int(self.profile) != self.profile or self.profile < 2:
            raise ValueError("profile must be an integer >= 2")

    @property
    def _coeffs(self) -> np.ndarray:
        return _smoothstep_coeffs(self.profile - 1)

    @property
    def max_slope(self) -> float:
        """Exact bound on |d bump / d x| over all of R^d."""
        width = self.outer_radius - self.inner_radius
        return _smoothstep_max_slope(self.profile - 1) / width

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        width = self.outer_radius - self.inner_radius
        s = np.clip((self.outer_radius - r) / width, 0.0, 1.0)
        return np.polynomial.polynomial.polyval(s, self._coeffs)

    def value_and_gradient(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        width = self.outer_radius - self.inner_radius
        s = np.clip((self.outer_radius - r) / width, 0.0, 1.0)
        val = np.polynomial.polynomial.polyval(s, self._coeffs)
        dcoeffs = np.polynomial.polynomial.polyder(self._coeffs)
        inside = (r > self.inner_radius) & (r < self.outer_radius)
        slope = np.where(inside, np.polynomial.polynomial.polyval(s, dcoeffs), 0.0)
        # d bump/dx = S'(s) * (-1/width) * x/|x|; |x| > inner_radius > 0 here
        safe_r = np.where(r > 0, r, 1.0)
        grad = (-slope / (width * safe_r))[..., None] * x
        return val, grad

    def to_dict(self) -> dict:
        return {"inner_radius": self.inner_radius,
                "outer_radius": self.outer_radius,
                "profile": self.profile}

    @classmethod
    def from_dict(cls, d: dict) -> "BumpSpec":
        return cls(inner_radius=float(d["inner_radius"]),
                   outer_radius=float(d["outer_radius"]),
                   profile=int(d.get("profile", 3)))


@dataclass(frozen=True)
class Nonlinearity:
    """Componentwise squashing normalized so |sigma(z)|_2 <= 1 and Lip <= 1."""

    name: str = "tanh_componentwise"

    def __post_init__(self):
        if self.name not in NONLINEARITY_NAMES:
            raise ValueError(f"unknown nonlinearity {self.name!r}")

    def value(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        root_d = math.sqrt(z.shape[-1])
        if self.name == "tanh_componentwise":
            return np.tanh(z) / root_d
        return np.tanh(z / 2.0) / root_d  # == (2 logistic(z) - 1)/sqrt(d)

    def derivative(self, z: np.ndarray) -> np.ndarray:
        """Componentwise derivative (diagonal of the Jacobian)."""
        z = np.asarray(z, dtype=float)
        root_d = math.sqrt(z.shape[-1])
        if self.name == "tanh_componentwise":
            t = np.tanh(z)
            return (1.0 - t * t) / root_d
        t = np.tanh(z / 2.0)
        return (1.0 - t * t) / (2.0 * root_d)


def _clip_to_unit_spectral(A: np.ndarray) -> np.ndarray:
    s = spectral_norm(A)
    if s > 1.0:
        return A / s
    return A


def _clip_to_unit_ball(u: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(u)
    if n > 1.0:
        return u / n
    return u


@dataclass(frozen=True, eq=False)
class VectorField:
    """A single vector field of one of the supported kinds.

    Use the `constant`, `affine`, `recurrent` constructors; they enforce the
    family constraints (spectral clipping of A, unit ball for u).
    """

    kind: str
    dim: int
    v: np.ndarray | None = None
    A: np.ndarray | None = None
    u: np.ndarray | None = None
    sigma: Nonlinearity | None = None
    bump: BumpSpec | None = None

    @classmethod
    def constant(cls, v, bump: BumpSpec | None = None) -> "VectorField":
        v = np.asarray(v, dtype=float)
        if v.ndim != 1:
            raise ValueError("v must be a vector")
        return cls(kind="constant", dim=v.shape[0], v=v, bump=bump)

    @classmethod
    def affine(cls, A, u, bump: BumpSpec | None = None,
               rescale: bool = True) -> "VectorField":
        A = np.asarray(A, dtype=float)
        u = np.asarray(u, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or u.shape != (A.shape[0],):
            raise ValueError("A must be square and u a matching vector")
        if rescale:
            A, u = _clip_to_unit_spectral(A), _clip_to_unit_ball(u)
        elif spectral_norm(A) > 1.0 + 1e-12 or np.linalg.norm(u) > 1.0 + 1e-12:
            raise ValueError("affine field violates |A|<=1, |u|<=1")
        return cls(kind="affine", dim=A.shape[0], A=A, u=u, bump=bump)

    @classmethod
    def recurrent(cls, A, u, sigma: Nonlinearity | None = None,
                  bump: BumpSpec | None = None, rescale: bool = True) -> "VectorField":
        A = np.asarray(A, dtype=float)
        u = np.asarray(u, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or u.shape != (A.shape[0],):
            raise ValueError("A must be square and u a matching vector")
        if rescale:
            A, u = _clip_to_unit_spectral(A), _clip_to_unit_ball(u)
        elif spectral_norm(A) > 1.0 + 1e-12 or np.linalg.norm(u) > 1.0 + 1e-12:
            raise ValueError("recurrent field violates |A|<=1, |u|<=1")
        return cls(kind="recurrent", dim=A.shape[0], A=A, u=u,
                   sigma=sigma or Nonlinearity(), bump=bump)

    # -- evaluation ---------------------------------------------------------

    def _check_x(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"point dimension {x.shape[-1]} != field dim {self.dim}")
        return x

    def _raw(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "constant":
            return np.broadcast_to(self.v, x.shape).copy()
        z = x @ self.A.T + self.u
        if self.kind == "affine":
            return z
        return self.sigma.value(z)

    def evaluate(self, x) -> np.ndarray:
        """Field value at x; x may be a single point (d,) or a batch (n, d)."""
        x = self._check_x(x)
        raw = self._raw(x)
        if self.bump is None:
            return raw
        return raw * self.bump.value(x)[..., None]

    def jacobian(self, x) -> np.ndarray:
        """State Jacobian df/dx at x, shape (..., d, d)."""
        x = self._check_x(x)
        if self.kind == "constant":
            jac_raw = np.zeros(x.shape + (self.dim,))
        elif self.kind == "affine":
            jac_raw = np.broadcast_to(self.A, x.shape + (self.dim,)).copy()
        else:
            z = x @ self.A.T + self.u
            jac_raw = self.sigma.derivative(z)[..., None] * self.A
        if self.bump is None:
            return jac_raw
        val, grad = self.bump.value_and_gradient(x)
        raw = self._raw(x)
        return val[..., None, None] * jac_raw + raw[..., :, None] * grad[..., None, :]

    @property
    def n_params(self) -> int:
        if self.kind == "constant":
            return self.dim
        return self.dim * self.dim + self.dim

    def params_jacobian(self, x) -> np.ndarray:
        """df/dparams at x, shape (..., d, n_params).

        Parameter order: v for constant fields; A row-major then u otherwise.
        The bump is a fixed multiplier and carries no parameters.
        """
        x = self._check_x(x)
        d = self.dim
        batch = x.shape[:-1]
        rho = 1.0 if self.bump is None else self.bump.value(x)[..., None, None]
        if self.kind == "constant":
            out = np.broadcast_to(np.eye(d), batch + (d, d)).copy()
            return out * rho
        if self.kind == "affine":
            gate = np.ones(batch + (d,))
        else:
            z = x @ self.A.T + self.u
            gate = self.sigma.derivative(z)
        out = np.zeros(batch + (d, d * d + d))
        # dA block: df_i/dA_ik = gate_i * x_k on the row-major slot i*d + k
        eye = np.eye(d)
        block = np.einsum("...i,ij,...k->...ijk", gate, eye, x)
        out[..., : d * d] = block.reshape(batch + (d, d * d))
        out[..., d * d:] = gate[..., :, None] * eye
        return out * rho

    def value_and_jacobians(self, x, with_jac: bool = True,
                            with_params: bool = True):
        """Field value plus state and parameter Jacobians in one pass.

        Returns ``(f, J, P)`` equal to `evaluate`, `jacobian`, and
        `params_jacobian` respectively; ``J`` / ``P`` are None when not
        requested.  The pre-activation, squashing derivative, and bump
        value/gradient are each computed once and shared, which matters in
        integrator inner loops that need all three per stage.
        """
        x = self._check_x(x)
        d = self.dim
        batch = x.shape[:-1]
        gate = None
        if self.kind == "constant":
            raw = np.broadcast_to(self.v, x.shape).copy()
        else:
            z = x @ self.A.T + self.u
            raw = z if self.kind == "affine" else self.sigma.value(z)
            if self.kind == "recurrent" and (with_jac or with_params):
                gate = self.sigma.derivative(z)

        if self.bump is None:
            val = grad = None
            f = raw
        else:
            val, grad = self.bump.value_and_gradient(x)
            f = raw * val[..., None]

        J = None
        if with_jac:
            if self.kind == "constant":
                jac_raw = np.zeros(x.shape + (d,))
            elif self.kind == "affine":
                jac_raw = np.broadcast_to(self.A, x.shape + (d,)).copy()
            else:
                jac_raw = gate[..., None] * self.A
            if self.bump is None:
                J = jac_raw
            else:
                J = (val[..., None, None] * jac_raw
                     + raw[..., :, None] * grad[..., None, :])

        P = None
        if with_params:
            rho = 1.0 if self.bump is None else val[..., None, None]
            if self.kind == "constant":
                out = np.broadcast_to(np.eye(d), batch + (d, d)).copy()
                P = out * rho
            else:
                g = np.ones(batch + (d,)) if self.kind == "affine" else gate
                eye = np.eye(d)
                out = np.zeros(batch + (d, d * d + d))
                block = np.einsum("...i,ij,...k->...ijk", g, eye, x)
                out[..., : d * d] = block.reshape(batch + (d, d * d))
                out[..., d * d:] = g[..., :, None] * eye
                P = out * rho
        return f, J, P

    def param_vector(self) -> np.ndarray:
        if self.kind == "constant":
            return self.v.copy()
        return np.concatenate([self.A.ravel(), self.u])

    def with_params(self, vec: np.ndarray, rescale: bool = False) -> "VectorField":
        vec = np.asarray(vec, dtype=float)
        d = self.dim
        if self.kind == "constant":
            return VectorField.constant(vec.copy(), bump=self.bump)
        A = vec[: d * d].reshape(d, d).copy()
        u = vec[d * d:].copy()
        if self.kind == "affine":
            return VectorField.affine(A, u, bump=self.bump, rescale=rescale)
        return VectorField.recurrent(A, u, sigma=self.sigma, bump=self.bump,
                                     rescale=rescale)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind, "dim": self.dim}
        if self.v is not None:
            d["v"] = self.v.tolist()
        if self.A is not None:
            d["A"] = self.A.ravel().tolist()  # row-major
        if self.u is not None:
            d["u"] = self.u.tolist()
        if self.sigma is not None:
            d["sigma"] = self.sigma.name
        if self.bump is not None:
            d["bump"] = self.bump.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "VectorField":
        kind = d["kind"]
        dim = int(d["dim"])
        bump = BumpSpec.from_dict(d["bump"]) if d.get("bump") else None
        if kind == "constant":
            v = np.asarray(d["v"], dtype=float)
            if v.shape != (dim,):
                raise ValueError("bad v length")
            return cls.constant(v, bump=bump)
        A = np.asarray(d["A"], dtype=float).reshape(dim, dim)
        u = np.asarray(d["u"], dtype=float)
        if kind == "affine":
            return cls.affine(A, u, bump=bump, rescale=False)
        if kind == "recurrent":
            return cls.recurrent(A, u, sigma=Nonlinearity(d.get("sigma", "tanh_componentwise")),
                                 bump=bump, rescale=False)
        raise ValueError(f"unknown field kind {kind!r}")


def _uniform_ball(rng: np.random.Generator, dim: int, radius: float) -> np.ndarray:
    z = rng.standard_normal(dim)
    n = np.linalg.norm(z)
    if n == 0:
        return np.zeros(dim)
    return z / n * radius * rng.uniform() ** (1.0 / dim)


@dataclass(frozen=True)
class FieldFamily:
    """A constrained family of fields sharing uniform constants.

    Constant families bound |v| <= v_max.  Affine and recurrent families
    constrain the spectral norm of A and |u| to 1.  Affine families must
    carry a bump: without compact support they have no uniform magnitude
    bound.
    """

    kind: str
    dim: int
    v_max: float = 1.0
    sigma: Nonlinearity = dc_field(default_factory=Nonlinearity)
    bump: BumpSpec | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "affine", "recurrent"):
            raise ValueError(f"unknown family kind {self.kind!r}")
        if self.kind == "affine" and self.bump is None:
            raise ValueError("affine families need a bump for uniform constants")
        if self.kind == "constant" and self.v_max <= 0:
            raise ValueError("v_max must be positive")

    def constants(self) -> tuple[float, float]:
        """Certified (L0, L): uniform magnitude and Lipschitz bounds.

        Bumped fields use the product rule: `Lip(rho * f) <= Lip(f) +
        sup|f| * max_slope(rho)`, with sup taken over the bump support.
        """
        if self.kind == "constant":
            if self.bump is None:
                return self.v_max, 0.0
            return self.v_max, self.v_max * self.bump.max_slope
        if self.kind == "affine":
            mag = self.bump.outer_radius + 1.0
            return mag, 1.0 + mag * self.bump.max_slope
        # recurrent: |sigma| <= 1 and sigma o (affine with |A| <= 1) is 1-Lipschitz
        if self.bump is None:
            return 1.0, 1.0
        return 1.0, 1.0 + self.bump.max_slope

    def sample(self, rng: np.random.Generator) -> VectorField:
        if self.kind == "constant":
            return VectorField.constant(_uniform_ball(rng, self.dim, self.v_max),
                                        bump=self.bump)
        scale = 1.0 / math.sqrt(self.dim)
        A = rng.uniform(-scale, scale, size=(self.dim, self.dim))
        u = _uniform_ball(rng, self.dim, 1.0)
        if self.kind == "affine":
            return VectorField.affine(A, u, bump=self.bump)
        return VectorField.recurrent(A, u, sigma=self.sigma, bump=self.bump)

    @property
    def n_params(self) -> int:
        return self.dim if self.kind == "constant" else self.dim ** 2 + self.dim

    def param_diameter(self) -> float:
        """Euclidean diameter of the parameter set."""
        if self.kind == "constant":
            return 2.0 * self.v_max
        # {|A|_2 <= 1} has Frobenius diameter 2 sqrt(d); the u ball has 2
        return 2.0 * math.sqrt(self.dim + 1.0)

    def param_lipschitz(self, ambient_radius: float) -> float:
        """Bound on sup_{|x| <= ambient_radius} |f_p(x) - f_q(x)| / |p - q|."""
        if self.kind == "constant":
            return 1.0
        lip = math.sqrt(ambient_radius ** 2 + 1.0)
        if self.kind == "recurrent":
            # componentwise squash is (1/sqrt(d))- or (1/(2 sqrt(d)))-Lipschitz
            lip = lip / math.sqrt(self.dim)
        return lip

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind, "dim": self.dim}
        if self.kind == "constant":
            d["v_max"] = self.v_max
        if self.kind == "recurrent":
            d["sigma"] = self.sigma.name
        if self.bump is not None:
            d["bump"] = self.bump.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FieldFamily":
        return cls(kind=d["kind"], dim=int(d["dim"]),
                   v_max=float(d.get("v_max", 1.0)),
                   sigma=Nonlinearity(d.get("sigma", "tanh_componentwise")),
                   bump=BumpSpec.from_dict(d["bump"]) if d.get("bump") else None)


def check_exponential_stability(A: np.ndarray, rate: float) -> bool:
    """Check max eig of the symmetric part of A is <= -rate; warn if not.

    This is the standard sufficient condition for trajectories of x' = A x
    to contract at rate `rate`.  Uses shifted power iteration.
    """
    A = np.asarray(A, dtype=float)
    sym = 0.5 * (A + A.T)
    shift = float(np.linalg.norm(sym, ord="fro")) + 1.0
    top = spectral_norm_symmetric_shifted(sym, shift)
    ok = top - shift <= -rate + 1e-12
    if not ok:
        warnings.warn(
            f"matrix is not certifiably contracting at rate {rate}: "
            f"max symmetric eigenvalue ~ {top - shift:.6g}", stacklevel=2)
    return ok


def spectral_norm_symmetric_shifted(sym: np.ndarray, shift: float,
                                    tol: float = SPECTRAL_NORM_TOL,
                                    max_iter: int = SPECTRAL_NORM_MAX_ITER) -> float:
    """Largest eigenvalue of sym + shift*I (assumed PSD) by power iteration."""
    n = sym.shape[0]
    B = sym + shift * np.eye(n)
    v = np.full(n, 1.0 / math.sqrt(n))
    lam = 0.0
    for _ in range(max_iter):
        w = B @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        new_lam = float(v @ (B @ v))
        if abs(new_lam - lam) <= tol * max(1.0, new_lam):
            return new_lam
        lam = new_lam
    return lam


# ---------------------------------------------------------------------------
# comparison functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ComparisonFn:
    """Monotone envelope beta(r, t) for trajectory divergence.

    `worst_case(L, L0)` is min(r e^(L|t|), r + 2 L0 |t|), valid for any
    family with Lipschitz constant L and magnitude bound L0; passing
    L0 = inf keeps only the Gronwall branch.  `exp_stable(lam)` is
    r e^(-lam t), restricted to nonnegative times.  `tabulated` interpolates
    a user-supplied table bilinearly, extending the last r-slope beyond the
    grid.

    Every instance is tied to a time interval; the iterated envelope and the
    perturbation gain maximize over it.
    """

    kind: str
    interval: tuple[float, float]
    L: float = 0.0
    L0: float = math.inf
    rate: float = 1.0
    r_grid: np.ndarray | None = None
    t_grid: np.ndarray | None = None
    table: np.ndarray | None = None

    @classmethod
    def worst_case(cls, L: float, L0: float, interval) -> "ComparisonFn":
        T0, T1 = float(interval[0]), float(interval[1])
        if L < 0 or L0 < 0:
            raise ValueError("constants must be nonnegative")
        return cls(kind="worst_case", interval=(T0, T1), L=float(L), L0=float(L0))

    @classmethod
    def exp_stable(cls, rate: float, interval) -> "ComparisonFn":
        T0, T1 = float(interval[0]), float(interval[1])
        if rate <= 0:
            raise ValueError("rate must be positive")
        if T0 < 0:
            raise ValueError("exp_stable comparison functions need nonnegative times")
        return cls(kind="exp_stable", interval=(T0, T1), rate=float(rate))

    @classmethod
    def tabulated(cls, r_grid, t_grid, table, interval) -> "ComparisonFn":
        r_grid = np.asarray(r_grid, dtype=float)
        t_grid = np.asarray(t_grid, dtype=float)
        table = np.asarray(table, dtype=float)
        if table.shape != (r_grid.size, t_grid.size):
            raise ValueError("table shape must be (len(r_grid), len(t_grid))")
        if r_grid[0] != 0.0 or np.any(np.diff(r_grid) <= 0):
            raise ValueError("r_grid must start at 0 and increase")
        if np.any(np.diff(t_grid) <= 0):
            raise ValueError("t_grid must increase")
        if np.any(np.abs(table[0]) > 0):
            raise ValueError("beta(0, t) must be 0")
        if np.any(np.diff(table, axis=0) < 0):
            raise ValueError("beta must be nondecreasing in r")
        T0, T1 = float(interval[0]), float(interval[1])
        if T0 < t_grid[0] or T1 > t_grid[-1]:
            raise ValueError("t_grid must cover the interval")
        j = np.searchsorted(t_grid, 0.0)
        if j < t_grid.size and t_grid[j] == 0.0:
            if not np.allclose(table[:, j], r_grid, atol=1e-9):
                raise ValueError("beta(r, 0) must equal r")
        return cls(kind="tabulated", interval=(T0, T1),
                   r_grid=r_grid, t_grid=t_grid, table=table)

    @property
    def t_bar(self) -> float:
        return max(abs(self.interval[0]), abs(self.interval[1]))

    # -- beta ----------------------------------------------------------------

    def beta(self, r, t):
        """Envelope value; broadcasts over r and t."""
        r = np.asarray(r, dtype=float)
        t = np.asarray(t, dtype=float)
        if self.kind == "worst_case":
            grow = r * np.exp(self.L * np.abs(t))
            if math.isinf(self.L0):
                out = grow
            else:
                out = np.minimum(grow, r + 2.0 * self.L0 * np.abs(t))
        elif self.kind == "exp_stable":
            if np.any(t < 0):
                raise ValueError("exp_stable envelope is defined for t >= 0 only")
            out = r * np.exp(-self.rate * t)
        else:
            out = self._interp_table(r, t)
        if out.ndim == 0:
            return float(out)
        return out

    def _interp_table(self, r, t):
        r, t = np.broadcast_arrays(np.asarray(r, dtype=float),
                                   np.asarray(t, dtype=float))
        shape = r.shape
        rf, tf = np.atleast_1d(r).ravel(), np.atleast_1d(t).ravel()
        tj = np.clip(np.searchsorted(self.t_grid, tf) - 1, 0, self.t_grid.size - 2)
        tw = (tf - self.t_grid[tj]) / (self.t_grid[tj + 1] - self.t_grid[tj])
        tw = np.clip(tw, 0.0, 1.0)
        out = self._col_interp(rf, tj) * (1.0 - tw) + self._col_interp(rf, tj + 1) * tw
        return out.reshape(shape)

    def _col_interp(self, r, tcol):
        # bilinear in r against the bracketing t-columns; beyond the last
        # r node, continue with the final interval's slope (keeps monotonicity)
        rg = self.r_grid
        ri = np.clip(np.searchsorted(rg, r) - 1, 0, rg.size - 2)
        rw = (r - rg[ri]) / (rg[ri + 1] - rg[ri])
        val = self.table[ri, tcol] + rw * (self.table[ri + 1, tcol] - self.table[ri, tcol])
        top = self.table[rg.size - 1, tcol]
        slope = (top - self.table[rg.size - 2, tcol]) / (rg[-1] - rg[-2])
        return np.where(r > rg[-1], top + slope * (r - rg[-1]), val)

    # -- iterated time-maximized envelope ------------------------------------

    def beta_max(self, r):
        """max over t in the interval of beta(r, t); broadcasts over r."""
        T0, T1 = self.interval
        if self.kind == "worst_case":
            return self.beta(r, self.t_bar)
        if self.kind == "exp_stable":
            return self.beta(r, T0)  # decreasing in t
        nodes = self.t_grid[(self.t_grid >= T0) & (self.t_grid <= T1)]
        cand = np.concatenate([nodes, [T0, T1]])
        r = np.asarray(r, dtype=float)
        vals = np.stack([np.asarray(self.beta(r, tc)) for tc in cand])
        out = vals.max(axis=0)
        return float(out) if out.ndim == 0 else out

    def beta_iter(self, r, j: int):
        """j-fold iterate of beta_max; j = 0 is the identity."""
        if j < 0 or int(j) != j:
            raise ValueError("j must be a nonnegative integer")
        r = np.asarray(r, dtype=float)
        out = r.astype(float)
        if j == 0:
            return float(out) if out.ndim == 0 else out
        if self.kind == "worst_case" and math.isinf(self.L0):
            out = r * math.exp(j * self.L * self.t_bar)
        elif self.kind == "exp_stable":
            out = r * math.exp(-j * self.rate * self.interval[0])
        else:
            for _ in range(int(j)):
                out = self.beta_max(out)
        out = np.asarray(out)
        return float(out) if out.ndim == 0 else out

    # -- perturbation gain ----------------------------------------------------

    def perturbation_gain(self) -> float:
        """max_t |int_0^t d_r beta(0+, t - s) ds|: C0 field error to deviation.

        Closed forms: (e^(L T) - 1)/L for the Gronwall branch (T at L = 0)
        and 1/rate for the exponentially stable envelope.  The zero-radius
        slope is nondecreasing, so the maximum sits at the interval end of
        larger magnitude.
        """
        if self.kind == "worst_case":
            T = self.t_bar
            if self.L == 0.0:
                return T
            return (math.exp(self.L * T) - 1.0) / self.L
        if self.kind == "exp_stable":
            return 1.0 / self.rate
        return self._numeric_gain()

    def _numeric_gain(self, nodes: int = 4097) -> float:
        T0, T1 = self.interval
        r1 = self.r_grid[1]
        best = 0.0
        for lo, hi in ((0.0, max(T1, 0.0)), (min(T0, 0.0), 0.0)):
            if hi <= lo:
                continue
            tau = np.linspace(lo, hi, nodes)
            slope = np.asarray(self.beta(r1, tau)) / r1
            best = max(best, abs(np.trapezoid(slope, tau)))
        return best

    @property
    def has_closed_rho(self) -> bool:
        """Whether component net radii admit closed-form solutions."""
        return self.kind == "exp_stable" or (
            self.kind == "worst_case" and math.isinf(self.L0))

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind, "interval": list(self.interval)}
        if self.kind == "worst_case":
            d["L"] = self.L
            d["L0"] = None if math.isinf(self.L0) else self.L0
        elif self.kind == "exp_stable":
            d["rate"] = self.rate
        else:
            d["r_grid"] = self.r_grid.tolist()
            d["t_grid"] = self.t_grid.tolist()
            d["table"] = self.table.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ComparisonFn":
        kind = d["kind"]
        if kind == "worst_case":
            L0 = d.get("L0")
            return cls.worst_case(d["L"], math.inf if L0 is None else L0,
                                  d["interval"])
        if kind == "exp_stable":
            return cls.exp_stable(d["rate"], d["interval"])
        return cls.tabulated(d["r_grid"], d["t_grid"], d["table"], d["interval"])
