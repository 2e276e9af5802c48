"""Residual-map model families with exact analytic Jacobians.

Parameters are always flat float64 vectors of length ``p``. Matrix-shaped
parameters use a documented flattening: the low-rank factor is stored
column-major (columns concatenated), hidden-layer weight matrices row by row.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

Array = np.ndarray


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Activation:
    """Scalar nonlinearity with certified derivative bounds.

    ``gamma <= dphi(z) <= big_gamma`` and ``|ddphi(z)| <= curvature_m`` must
    hold everywhere; the bounds are stored per instance and may be loose.
    """

    name: str
    phi: Callable[[Array], Array]
    dphi: Callable[[Array], Array]
    ddphi: Callable[[Array], Array]
    gamma: float
    big_gamma: float
    curvature_m: float


def identity_activation() -> Activation:
    return Activation(
        name="identity",
        phi=lambda z: z,
        dphi=lambda z: np.ones_like(z),
        ddphi=lambda z: np.zeros_like(z),
        gamma=1.0,
        big_gamma=1.0,
        curvature_m=0.0,
    )


def tanh_linear(c: float) -> Activation:
    """phi(z) = z + c*tanh(z) for 0 <= c < 1.

    Certified bounds: gamma = 1-c, big_gamma = 1+c, curvature_m = 0.8*c
    (the true max of |phi''| is c*4/(3*sqrt(3)) ~= 0.77*c; 0.8*c rounds up).
    """
    if not 0.0 <= c < 1.0:
        raise ValueError(f"tanh_linear needs 0 <= c < 1, got {c}")
    return Activation(
        name=f"tanh_linear({c:g})",
        phi=lambda z: z + c * np.tanh(z),
        dphi=lambda z: 1.0 + c * (1.0 - np.tanh(z) ** 2),
        ddphi=lambda z: -2.0 * c * np.tanh(z) * (1.0 - np.tanh(z) ** 2),
        gamma=1.0 - c,
        big_gamma=1.0 + c,
        curvature_m=0.8 * c,
    )


def softplus_linear(c: float) -> Activation:
    """phi(z) = (1-c)*log(1+exp(z)) + c*z, a softplus with a linear floor.

    Certified bounds: gamma = c, big_gamma = 1, curvature_m = (1-c)/4.
    """
    if not 0.0 < c <= 1.0:
        raise ValueError(f"softplus_linear needs 0 < c <= 1, got {c}")

    def _sigmoid(z: Array) -> Array:
        out = np.empty_like(z, dtype=float)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out

    return Activation(
        name=f"softplus_linear({c:g})",
        phi=lambda z: (1.0 - c) * np.logaddexp(0.0, z) + c * z,
        dphi=lambda z: (1.0 - c) * _sigmoid(np.asarray(z, dtype=float)) + c,
        ddphi=lambda z: (1.0 - c)
        * _sigmoid(np.asarray(z, dtype=float))
        * (1.0 - _sigmoid(np.asarray(z, dtype=float))),
        gamma=c,
        big_gamma=1.0,
        curvature_m=(1.0 - c) / 4.0,
    )


ACTIVATIONS: dict[str, Callable[..., Activation]] = {
    "identity": lambda c=0.0: identity_activation(),
    "tanh_linear": tanh_linear,
    "softplus_linear": softplus_linear,
}


# ---------------------------------------------------------------------------
# Model interface
# ---------------------------------------------------------------------------

def _as_param(theta: Array, p: int) -> Array:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (p,):
        raise ValueError(f"parameter vector has shape {theta.shape}, expected ({p},)")
    if not np.all(np.isfinite(theta)):
        raise ValueError("parameter vector contains non-finite entries")
    return theta


class Model:
    """Residual map f: R^p -> R^n with labels y and exact Jacobian.

    Subclasses implement ``predictions`` and ``jacobian``; everything else
    derives from those. Models are immutable after construction and safe to
    share across workers; all evaluations are pure functions of (model, theta).
    """

    n: int
    p: int
    y: Array

    def predictions(self, theta: Array) -> Array:
        raise NotImplementedError

    def jacobian(self, theta: Array) -> Array:
        raise NotImplementedError

    def residual(self, theta: Array) -> Array:
        """f(theta) - y, componentwise."""
        return self.predictions(_as_param(theta, self.p)) - self.y

    def misfit(self, theta: Array) -> float:
        """Euclidean norm of the residual."""
        return float(np.linalg.norm(self.residual(theta)))

    def loss(self, theta: Array) -> float:
        """0.5 * ||f(theta) - y||^2."""
        r = self.residual(theta)
        return 0.5 * float(r @ r)

    def gradient(self, theta: Array) -> Array:
        """J(theta)^T (f(theta) - y)."""
        theta = _as_param(theta, self.p)
        return self.jacobian(theta).T @ self.residual(theta)

    def jacobian_row(self, theta: Array, i: int) -> Array:
        """Row i of the Jacobian; subclasses override with a cheap path."""
        return self.jacobian(theta)[i]

    def per_sample_gradient(self, theta: Array, i: int) -> Array:
        """Gradient contribution of sample i: r_i(theta) * J_i(theta)^T.

        The average over all i equals gradient(theta)/n.
        """
        if not 0 <= i < self.n:
            raise IndexError(f"sample index {i} out of range [0, {self.n})")
        theta = _as_param(theta, self.p)
        r_i = float(self.residual(theta)[i])
        return r_i * self.jacobian_row(theta, i)

    def average_jacobian(self, theta_a: Array, theta_b: Array, nodes: int = 16) -> Array:
        """Line-averaged Jacobian along the segment from theta_b to theta_a.

        Satisfies f(a) - f(b) = average_jacobian(a, b) @ (a - b). The default
        is a 16-node Gauss-Legendre rule; subclasses with closed forms
        (constant, secant-diagonal, affine) override it exactly.
        """
        a = _as_param(theta_a, self.p)
        b = _as_param(theta_b, self.p)
        xs, ws = np.polynomial.legendre.leggauss(nodes)
        ts = 0.5 * (xs + 1.0)
        out = np.zeros((self.n, self.p))
        for t, w in zip(ts, ws):
            out += 0.5 * w * self.jacobian(b + t * (a - b))
        return out


class LinearModel(Model):
    """f(theta) = X theta; the Jacobian is X at every point."""

    def __init__(self, X: Array, y: Array):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError("X must be n x p with y of length n")
        self.X = X
        self.y = y
        self.n, self.p = X.shape

    def predictions(self, theta: Array) -> Array:
        return self.X @ _as_param(theta, self.p)

    def jacobian(self, theta: Array) -> Array:
        _as_param(theta, self.p)
        return self.X.copy()

    def jacobian_row(self, theta: Array, i: int) -> Array:
        return self.X[i].copy()

    def average_jacobian(self, theta_a: Array, theta_b: Array, nodes: int = 16) -> Array:
        _as_param(theta_a, self.p)
        _as_param(theta_b, self.p)
        return self.X.copy()


class GLMModel(Model):
    """f(theta) = phi(X theta) entrywise, for a strictly increasing phi."""

    def __init__(self, X: Array, y: Array, act: Activation):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError("X must be n x p with y of length n")
        self.X = X
        self.y = y
        self.act = act
        self.n, self.p = X.shape

    def predictions(self, theta: Array) -> Array:
        return self.act.phi(self.X @ _as_param(theta, self.p))

    def jacobian(self, theta: Array) -> Array:
        z = self.X @ _as_param(theta, self.p)
        return self.act.dphi(z)[:, None] * self.X

    def jacobian_row(self, theta: Array, i: int) -> Array:
        z_i = float(self.X[i] @ theta)
        return float(self.act.dphi(np.asarray(z_i))) * self.X[i]

    def average_jacobian(self, theta_a: Array, theta_b: Array, nodes: int = 16) -> Array:
        """Secant-slope diagonal times X; exact for any pair of points.

        Entries where (X a)_i == (X b)_i exactly use dphi there (the divided
        difference has a removable singularity).
        """
        a = _as_param(theta_a, self.p)
        b = _as_param(theta_b, self.p)
        za = self.X @ a
        zb = self.X @ b
        dz = za - zb
        same = dz == 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = (self.act.phi(za) - self.act.phi(zb)) / np.where(same, 1.0, dz)
        slope = np.where(same, self.act.dphi(za), slope)
        return slope[:, None] * self.X


class LowRankModel(Model):
    """Quadratic-form regression f_i = trace(Theta^T X_i Theta).

    The factor Theta in R^{d x r} is stored column-major in theta. The exact
    Jacobian row is vect((X_i + X_i^T) Theta)^T; with asymmetric feature
    matrices this differs from the symmetrized convention vect(X_i Theta)^T by
    up to a factor of two in the spectrum.
    """

    def __init__(self, Xs: Array, y: Array, d: int, r: int):
        Xs = np.asarray(Xs, dtype=float)
        y = np.asarray(y, dtype=float)
        if r > d:
            raise ValueError(f"need r <= d, got r={r}, d={d}")
        if Xs.shape != (y.shape[0], d, d):
            raise ValueError("Xs must be n x d x d with y of length n")
        self.Xs = Xs
        self.Xs_sym = Xs + np.transpose(Xs, (0, 2, 1))
        self.y = y
        self.d = d
        self.r = r
        self.n = y.shape[0]
        self.p = d * r

    def factor(self, theta: Array) -> Array:
        """Reshape the flat parameter into the d x r factor (column-major)."""
        return _as_param(theta, self.p).reshape((self.d, self.r), order="F")

    def flatten_factor(self, Theta: Array) -> Array:
        return np.asarray(Theta, dtype=float).reshape(-1, order="F")

    def predictions(self, theta: Array) -> Array:
        Theta = self.factor(theta)
        return np.einsum("dr,idr->i", Theta, self.Xs @ Theta)

    def jacobian(self, theta: Array) -> Array:
        Theta = self.factor(theta)
        G = self.Xs_sym @ Theta  # (n, d, r)
        return G.transpose(0, 2, 1).reshape(self.n, self.p)

    def jacobian_row(self, theta: Array, i: int) -> Array:
        Theta = self.factor(theta)
        return self.flatten_factor(self.Xs_sym[i] @ Theta)

    def gradient(self, theta: Array) -> Array:
        Theta = self.factor(theta)
        r = self.residual(theta)
        M = np.einsum("i,iab->ab", r, self.Xs)
        return self.flatten_factor((M + M.T) @ Theta)

    def average_jacobian(self, theta_a: Array, theta_b: Array, nodes: int = 16) -> Array:
        """Midpoint rule, exact because the Jacobian is affine in Theta."""
        a = _as_param(theta_a, self.p)
        b = _as_param(theta_b, self.p)
        return self.jacobian(0.5 * (a + b))


class ShallowNetModel(Model):
    """One-hidden-layer net x -> v^T phi(W x) with fixed unit output weights.

    Only the k x d input-to-hidden matrix W is trained; theta stores W row by
    row (w_1^T then w_2^T ...). The Jacobian is the column-block concatenation
    [v_1 J(w_1) ... v_k J(w_k)] with J(w) = diag(phi'(X w)) X.
    """

    def __init__(self, X: Array, y: Array, v: Array, act: Activation):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        v = np.asarray(v, dtype=float)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError("X must be n x d with y of length n")
        if v.ndim != 1:
            raise ValueError("v must be a vector")
        if abs(np.linalg.norm(v) - 1.0) > 1e-12:
            raise ValueError("output weights v must have unit Euclidean norm")
        self.X = X
        self.y = y
        self.v = v
        self.act = act
        self.n, self.d = X.shape
        self.k = v.shape[0]
        self.p = self.k * self.d

    def weights(self, theta: Array) -> Array:
        """Reshape the flat parameter into the k x d weight matrix."""
        return _as_param(theta, self.p).reshape((self.k, self.d))

    def flatten_weights(self, W: Array) -> Array:
        return np.asarray(W, dtype=float).reshape(-1)

    def predictions(self, theta: Array) -> Array:
        Z = self.X @ self.weights(theta).T  # (n, k)
        return self.act.phi(Z) @ self.v

    def jacobian(self, theta: Array) -> Array:
        Z = self.X @ self.weights(theta).T
        D = self.act.dphi(Z) * self.v[None, :]  # (n, k)
        return (D[:, :, None] * self.X[:, None, :]).reshape(self.n, self.p)

    def jacobian_row(self, theta: Array, i: int) -> Array:
        z = self.weights(theta) @ self.X[i]
        d = self.act.dphi(z) * self.v
        return (d[:, None] * self.X[i][None, :]).reshape(-1)

    def gradient(self, theta: Array) -> Array:
        W = self.weights(theta)
        Z = self.X @ W.T
        r = self.residual(theta)
        D = self.act.dphi(Z) * self.v[None, :]
        return self.flatten_weights((D * r[:, None]).T @ self.X)
