"""Structure-preserving orthonormal basis and the induced Normal-means problem.

Given a design ``(1, x, w)`` of full column rank, :func:`build_basis` returns an
orthonormal ``q = (q1, qx, qw, qr)`` with nested spans

    span(q1) = span(1),  span(q1, qx) = span(1, x),  span(q1, qx, qw) = span(1, x, w).

Rotating ``y`` by ``q`` (see :func:`transform`) gives independent Gaussian
coordinates whose means are ``mu_x + a mu_w``, ``mu_w`` and ``0``.

The module also implements the group ``G = R^m x O(m) x O(k) x O(s)`` acting
on canonical samples, parameters and actions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import ConditioningWarning, DimensionError, RankDeficiencyError

RANK_RTOL = 1e-10
SQRT_CLAMP = 1e-14


@dataclass(frozen=True, eq=False)
class CanonicalBasis:
    q1: np.ndarray
    qx: np.ndarray
    qw: np.ndarray
    qr: np.ndarray
    r_factor: np.ndarray

    @property
    def qperp(self) -> np.ndarray:
        """Orthonormal complement of ``(q1, qx)``: ``qw`` followed by ``qr``."""
        return np.hstack([self.qw, self.qr])

    @property
    def q(self) -> np.ndarray:
        return np.hstack([self.q1[:, None], self.qx, self.qw, self.qr])

    @property
    def n(self) -> int:
        return self.q1.shape[0]

    @property
    def m(self) -> int:
        return self.qx.shape[1]

    @property
    def k(self) -> int:
        return self.qw.shape[1]


@dataclass(frozen=True, eq=False)
class CanonicalForm:
    y_star_1: float
    y_star_x: np.ndarray
    y_star_w: np.ndarray
    y_star_r: np.ndarray
    a: np.ndarray
    qx_x: np.ndarray
    w_star_x: np.ndarray
    w_star_perp: np.ndarray

    @property
    def y_star_perp(self) -> np.ndarray:
        return np.concatenate([self.y_star_w, self.y_star_r])

    @property
    def qx_x_condition(self) -> float:
        return float(np.linalg.cond(self.qx_x))

    def beta_from_mu_x(self, mu_x_hat: np.ndarray) -> np.ndarray:
        """Map an estimate of ``mu_x = qx' x beta`` back to ``beta``."""
        return np.linalg.solve(self.qx_x, mu_x_hat)

    def two_step_beta(self, mu_w_hat: np.ndarray) -> np.ndarray:
        """``beta_hat = (qx' x)^-1 (Y*_x - a mu_w_hat)``.

        ``mu_w_hat = y_star_w`` reproduces long-regression least squares.
        """
        return self.beta_from_mu_x(self.y_star_x - self.a @ mu_w_hat)


def _numerical_rank(a: np.ndarray, threshold: float) -> int:
    if a.size == 0:
        return 0
    return int(np.sum(np.linalg.svd(a, compute_uv=False) > threshold))


def check_full_rank(x: np.ndarray, w: np.ndarray, rtol: float = RANK_RTOL) -> float:
    """Raise :class:`RankDeficiencyError` unless ``[1 | x | w]`` has full column rank.

    Returns the condition number of ``[1 | x | w]``.
    """
    n, m = x.shape
    k = w.shape[1]
    if n < 1 + m + k:
        raise RankDeficiencyError(f"need n >= 1 + m + k = {1 + m + k} observations, got {n}",
                                  block="x" if n < 1 + m else "w")
    design = np.hstack([np.ones((n, 1)), x, w])
    sv = np.linalg.svd(design, compute_uv=False)
    threshold = rtol * sv[0]
    xc = x - x.mean(axis=0)
    if _numerical_rank(xc, threshold) < m:
        raise RankDeficiencyError("treatment columns x are collinear with each other or the intercept",
                                  block="x")
    q, _ = np.linalg.qr(np.hstack([np.ones((n, 1)), x]))
    wr = w - q @ (q.T @ w)
    if _numerical_rank(wr, threshold) < k:
        raise RankDeficiencyError("control columns w are collinear with each other, x, or the intercept",
                                  block="w")
    return float(sv[0] / sv[-1])


def build_basis(x: np.ndarray, w: np.ndarray) -> CanonicalBasis:
    """Householder QR basis of ``[1 | x | w]`` completed to all of ``R^n``.

    Column signs are fixed so that the triangular factor has a non-negative
    diagonal, which makes ``q1 = +1/sqrt(n)`` and the basis deterministic.
    """
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if w.ndim == 1:
        w = w[:, None]
    if x.shape[0] != w.shape[0]:
        raise DimensionError(f"x has {x.shape[0]} rows but w has {w.shape[0]}")
    check_full_rank(x, w)
    n, m = x.shape
    k = w.shape[1]
    p = 1 + m + k
    design = np.hstack([np.ones((n, 1)), x, w])
    q, r = np.linalg.qr(design, mode="complete")
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    q[:, :p] *= signs
    r[:p] *= signs[:, None]
    return CanonicalBasis(
        q1=q[:, 0].copy(),
        qx=q[:, 1:1 + m].copy(),
        qw=q[:, 1 + m:p].copy(),
        qr=q[:, p:].copy(),
        r_factor=r[:p],
    )


def transform(y: np.ndarray, basis: CanonicalBasis, x: np.ndarray, w: np.ndarray) -> CanonicalForm:
    """Rotate ``y`` (and the designs) into canonical coordinates."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float).reshape(basis.n, basis.m)
    w = np.asarray(w, dtype=float).reshape(basis.n, basis.k)
    if y.shape != (basis.n,):
        raise DimensionError(f"y must have shape ({basis.n},), got {y.shape}")
    qw_w = basis.qw.T @ w
    qx_w = basis.qx.T @ w
    cond = np.linalg.cond(qw_w)
    if not np.isfinite(cond) or cond > 1 / np.finfo(float).eps:
        raise np.linalg.LinAlgError("qw' w is singular")
    # a (qw' w) = qx' w
    a = np.linalg.solve(qw_w.T, qx_w.T).T
    return CanonicalForm(
        y_star_1=float(basis.q1 @ y),
        y_star_x=basis.qx.T @ y,
        y_star_w=basis.qw.T @ y,
        y_star_r=basis.qr.T @ y,
        a=a,
        qx_x=basis.qx.T @ x,
        w_star_x=qx_w,
        w_star_perp=basis.qperp.T @ w,
    )


def canonicalize(y, x, w) -> tuple[CanonicalBasis, CanonicalForm]:
    basis = build_basis(x, w)
    return basis, transform(y, basis, x, w)


# --------------------------------------------------------------------------
# group actions


def sym_sqrt(sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric square root of an SPD matrix and its inverse."""
    sigma = np.asarray(sigma, dtype=float)
    vals, vecs = np.linalg.eigh((sigma + sigma.T) / 2)
    vals = np.maximum(vals, SQRT_CLAMP * vals.max())
    root = np.sqrt(vals)
    return (vecs * root) @ vecs.T, (vecs / root) @ vecs.T


def random_orthogonal(rng: np.random.Generator, d: int) -> np.ndarray:
    """Haar-distributed ``d x d`` orthogonal matrix."""
    if d == 0:
        return np.zeros((0, 0))
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def _check_orthogonal(name: str, g: np.ndarray, tol: float = 1e-12):
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {g.shape}")
    err = np.max(np.abs(g.T @ g - np.eye(g.shape[0])), initial=0.0)
    if err > tol:
        raise ValueError(f"{name} is not orthogonal (max |g'g - I| = {err:.3g})")


@dataclass(frozen=True, eq=False)
class GroupElement:
    """Element ``(g_mu, g_x, g_w, g_perp)`` of ``R^m x O(m) x O(k) x O(s)``."""

    g_mu: np.ndarray
    g_x: np.ndarray
    g_w: np.ndarray
    g_perp: np.ndarray

    def __post_init__(self):
        g_mu = np.atleast_1d(np.asarray(self.g_mu, dtype=float))
        object.__setattr__(self, "g_mu", g_mu)
        for name in ("g_x", "g_w", "g_perp"):
            g = np.asarray(getattr(self, name), dtype=float)
            _check_orthogonal(name, g)
            object.__setattr__(self, name, g)
        if self.g_x.shape[0] != g_mu.shape[0]:
            raise DimensionError("g_mu and g_x disagree on m")

    @classmethod
    def identity(cls, m: int, k: int, s: int) -> "GroupElement":
        return cls(np.zeros(m), np.eye(m), np.eye(k), np.eye(s))

    @classmethod
    def random(cls, rng: np.random.Generator, m: int, k: int, s: int) -> "GroupElement":
        return cls(rng.standard_normal(m), random_orthogonal(rng, m),
                   random_orthogonal(rng, k), random_orthogonal(rng, s))

    def then(self, other: "GroupElement") -> "GroupElement":
        """The element that acts as ``self`` followed by ``other``."""
        return GroupElement(
            other.g_x @ self.g_mu + other.g_mu,
            other.g_x @ self.g_x,
            other.g_w @ self.g_w,
            other.g_perp @ self.g_perp,
        )


class CanonicalSample(NamedTuple):
    """A point ``(y_x, y_perp, w_x, w_perp)`` of the canonical sample space."""

    y_x: np.ndarray
    y_perp: np.ndarray
    w_x: np.ndarray
    w_perp: np.ndarray


def control_map(g: GroupElement, sigma_w: np.ndarray) -> np.ndarray:
    """Right factor ``Sigma^-1/2 g_w' Sigma^1/2`` applied to rows of the controls."""
    root, inv_root = sym_sqrt(sigma_w)
    return inv_root @ g.g_w.T @ root


def apply_group_data(g: GroupElement, sample: CanonicalSample, sigma_w: np.ndarray) -> CanonicalSample:
    y_x, y_perp, w_x, w_perp = (np.asarray(v, dtype=float) for v in sample)
    m, k, s = g.g_x.shape[0], g.g_w.shape[0], g.g_perp.shape[0]
    if y_x.shape != (m,) or y_perp.shape != (s,) or w_x.shape != (m, k) or w_perp.shape != (s, k):
        raise DimensionError(
            f"sample shapes {y_x.shape}, {y_perp.shape}, {w_x.shape}, {w_perp.shape} "
            f"do not match group dimensions m={m}, k={k}, s={s}"
        )
    if np.shape(sigma_w) != (k, k):
        raise DimensionError(f"sigma_w must be {k}x{k}")
    t = control_map(g, sigma_w)
    return CanonicalSample(
        g.g_x @ y_x + g.g_mu,
        g.g_perp @ y_perp,
        g.g_x @ w_x @ t,
        g.g_perp @ w_perp @ t,
    )


def apply_group_params(g: GroupElement, theta: tuple[np.ndarray, np.ndarray],
                       sigma_w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu_x, gamma = (np.asarray(v, dtype=float) for v in theta)
    m, k = g.g_x.shape[0], g.g_w.shape[0]
    if mu_x.shape != (m,) or gamma.shape != (k,) or np.shape(sigma_w) != (k, k):
        raise DimensionError("theta or sigma_w does not match group dimensions")
    root, inv_root = sym_sqrt(sigma_w)
    return g.g_x @ mu_x + g.g_mu, inv_root @ g.g_w @ root @ gamma


def apply_group_action(g: GroupElement, a: np.ndarray) -> np.ndarray:
    return g.g_x @ np.asarray(a, dtype=float) + g.g_mu


def conditional_mean(theta: tuple[np.ndarray, np.ndarray], w_x: np.ndarray,
                     w_perp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean of ``(Y*_x, Y*_perp)`` given the canonical controls."""
    mu_x, gamma = theta
    return mu_x + w_x @ gamma, w_perp @ gamma


def split_sample(form: CanonicalForm) -> CanonicalSample:
    return CanonicalSample(form.y_star_x, form.y_star_perp, form.w_star_x, form.w_star_perp)


def warn_if_ill_conditioned(cond: float, what: str, threshold: float = 1e12):
    if cond >= threshold:
        warnings.warn(f"{what} has condition number {cond:.3g}", ConditioningWarning, stacklevel=3)
