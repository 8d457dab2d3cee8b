"""Probabilistic ordinal embedding (tSTE) and its bootstrap distance posterior.

The embedding M places every scene in a low-dimensional space so that
collected triplets (anchor, closer, farther) are satisfied with high
probability under a Student-t kernel. Bootstrap refits over resampled
triplets give per-pair Gaussian statistics of the inter-object distances,
which the query-selection entropy terms consume.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

logger = logging.getLogger(__name__)


def tste_kernel(d: np.ndarray | float, alpha: float) -> np.ndarray | float:
    """Student-t kernel on distances: (1 + d^2/alpha)^(-(alpha+1)/2)."""
    return (1.0 + np.square(d) / alpha) ** (-(alpha + 1.0) / 2.0)


def tste_prob(d_ap: float, d_an: float, alpha: float) -> float:
    """Probability that the positive (distance d_ap) beats the negative."""
    k_ap = tste_kernel(d_ap, alpha)
    k_an = tste_kernel(d_an, alpha)
    return float(k_ap / (k_ap + k_an))


@dataclass(frozen=True)
class TsteConfig:
    d_ord: int = 10
    alpha: float | None = None  # default: max(1, d_ord - 1)
    max_iter: int = 500
    restarts: int = 2
    tol: float = 1e-7
    init_scale: float = 1e-2
    seed: int = 0
    bootstrap: int = 10
    resample: bool = True  # disable to force identical bootstrap replicas

    def resolved_alpha(self) -> float:
        return self.alpha if self.alpha is not None else max(1.0, self.d_ord - 1.0)


def _triplet_array(triplets, N: int) -> np.ndarray:
    arr = np.asarray(triplets, dtype=int)
    if arr.size == 0:
        return arr.reshape(0, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise InvalidInputError(f"triplets must have shape (k, 3), got {arr.shape}")
    if arr.min() < 0 or arr.max() >= N:
        raise InvalidInputError("triplet ids out of range")
    return arr


def tste_log_likelihood(X: np.ndarray, triplets: np.ndarray, alpha: float) -> float:
    """Sum of log tste_prob over triplets; X has shape (N, d_ord)."""
    u = X[triplets[:, 0]] - X[triplets[:, 1]]
    v = X[triplets[:, 0]] - X[triplets[:, 2]]
    k_ap = (1.0 + (u * u).sum(axis=1) / alpha) ** (-(alpha + 1.0) / 2.0)
    k_an = (1.0 + (v * v).sum(axis=1) / alpha) ** (-(alpha + 1.0) / 2.0)
    return float(np.log(k_ap / (k_ap + k_an)).sum())


def tste_gradient(X: np.ndarray, triplets: np.ndarray, alpha: float) -> np.ndarray:
    """Gradient of the log-likelihood w.r.t. X."""
    a, p, n = triplets[:, 0], triplets[:, 1], triplets[:, 2]
    u = X[a] - X[p]
    v = X[a] - X[n]
    dap2 = (u * u).sum(axis=1)
    dan2 = (v * v).sum(axis=1)
    k_ap = (1.0 + dap2 / alpha) ** (-(alpha + 1.0) / 2.0)
    k_an = (1.0 + dan2 / alpha) ** (-(alpha + 1.0) / 2.0)
    q = k_an / (k_ap + k_an)  # 1 - p(triplet satisfied)
    phi_ap = -(alpha + 1.0) / (2.0 * (alpha + dap2))
    phi_an = -(alpha + 1.0) / (2.0 * (alpha + dan2))
    # d logp / d dap^2 = phi_ap * q ; d logp / d dan^2 = -phi_an * q
    cu = (2.0 * phi_ap * q)[:, None] * u
    cv = (-2.0 * phi_an * q)[:, None] * v
    grad = np.zeros_like(X)
    np.add.at(grad, a, cu + cv)
    np.add.at(grad, p, -cu)
    np.add.at(grad, n, -cv)
    return grad


def _fit_once(triplets: np.ndarray, N: int, cfg: TsteConfig, rng: np.random.Generator):
    alpha = cfg.resolved_alpha()
    X = rng.normal(0.0, cfg.init_scale, size=(N, cfg.d_ord))
    ll = tste_log_likelihood(X, triplets, alpha)
    eta = 1.0
    for _ in range(cfg.max_iter):
        grad = tste_gradient(X, triplets, alpha)
        # Backtracking line search keeps the log-likelihood non-decreasing.
        improved = False
        for _ in range(30):
            candidate = X + eta * grad
            cand_ll = tste_log_likelihood(candidate, triplets, alpha)
            if cand_ll >= ll:
                gain = cand_ll - ll
                X, ll = candidate, cand_ll
                improved = True
                eta *= 1.2
                break
            eta *= 0.5
        if not improved or gain < cfg.tol * max(1.0, abs(ll)):
            break
    return X, ll


def fit_tste(triplets, N: int, cfg: TsteConfig | None = None) -> np.ndarray:
    """Fit the ordinal embedding; returns M with shape (d_ord, N).

    Best of cfg.restarts seeded restarts by final log-likelihood.
    """
    cfg = cfg or TsteConfig()
    if cfg.d_ord < 1:
        raise InvalidInputError("d_ord must be >= 1")
    arr = _triplet_array(triplets, N)
    if len(arr) == 0:
        logger.warning("fit_tste called with no triplets; returning zero embedding")
        return np.zeros((cfg.d_ord, N))
    best_X, best_ll = None, -np.inf
    for r in range(cfg.restarts):
        rng = np.random.default_rng(cfg.seed + r)
        X, ll = _fit_once(arr, N, cfg, rng)
        if ll > best_ll:
            best_X, best_ll = X, ll
    return best_X.T


def pairwise_distances(M: np.ndarray) -> np.ndarray:
    """N x N Euclidean distance matrix from an embedding M (d_ord, N)."""
    X = M.T
    sq = (X * X).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * X @ X.T, 0.0)
    D = np.sqrt(d2)
    np.fill_diagonal(D, 0.0)
    return D


def normalize_scale(M: np.ndarray) -> np.ndarray:
    """Rescale the embedding to unit mean pairwise distance. Leaves the
    induced triplet ordering unchanged."""
    D = pairwise_distances(M)
    n = D.shape[0]
    if n < 2:
        return M
    mean = D[np.triu_indices(n, 1)].mean()
    if mean <= 0:
        return M
    return M / mean


@dataclass
class OrdinalPosterior:
    """tSTE embedding plus the Gaussian inter-object distance posterior."""

    M: np.ndarray  # (d_ord, N)
    K: np.ndarray  # similarity, M^T M
    D: np.ndarray  # pairwise distances
    dist_means: np.ndarray  # per-pair bootstrap mean distance
    dist_vars: np.ndarray  # per-pair bootstrap variance
    alpha: float

    @property
    def n_objects(self) -> int:
        return self.M.shape[1]

    def validate(self) -> None:
        if not np.allclose(self.K, self.K.T):
            raise InvalidInputError("K must be symmetric")
        if not np.allclose(self.D, self.D.T) or np.any(self.D < 0):
            raise InvalidInputError("D must be symmetric and non-negative")
        if np.any(self.dist_vars < 0):
            raise InvalidInputError("distance variance must be non-negative")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "n_objects": self.n_objects,
            "d_ord": self.M.shape[0],
            "mean_pairwise_distance": float(
                self.D[np.triu_indices(self.n_objects, 1)].mean()
            ) if self.n_objects > 1 else 0.0,
        }


def bootstrap_posterior(triplets, N: int, cfg: TsteConfig | None = None):
    """Per-pair (mean, variance) of normalized distances over cfg.bootstrap
    tSTE refits on resampled triplets."""
    cfg = cfg or TsteConfig()
    if cfg.bootstrap < 2:
        raise InvalidInputError("bootstrap replicas must be >= 2 (variance undefined)")
    arr = _triplet_array(triplets, N)
    rng = np.random.default_rng(cfg.seed)
    dists = []
    for b in range(cfg.bootstrap):
        if cfg.resample and len(arr) > 0:
            sample = arr[rng.integers(0, len(arr), size=len(arr))]
            rep_seed = cfg.seed + 1000 + b
        else:
            # Identical resamples and a fixed seed give identical replicas.
            sample = arr
            rep_seed = cfg.seed + 1000
        rep_cfg = TsteConfig(**{**vars(cfg), "seed": rep_seed, "restarts": 1})
        M = fit_tste(sample, N, rep_cfg)
        dists.append(pairwise_distances(normalize_scale(M)))
    stack = np.stack(dists)
    return stack.mean(axis=0), stack.var(axis=0)


def fit_posterior(triplets, N: int, cfg: TsteConfig | None = None) -> OrdinalPosterior:
    """Full posterior: main tSTE fit plus bootstrap distance statistics."""
    cfg = cfg or TsteConfig()
    M = normalize_scale(fit_tste(triplets, N, cfg))
    means, variances = bootstrap_posterior(triplets, N, cfg)
    return OrdinalPosterior(
        M=M,
        K=M.T @ M,
        D=pairwise_distances(M),
        dist_means=means,
        dist_vars=variances,
        alpha=cfg.resolved_alpha(),
    )


def posterior_from_embedding(emb: np.ndarray, alpha: float = 9.0, rel_std: float = 0.2) -> OrdinalPosterior:
    """Warm-start posterior from network embedding distances, used before any
    tSTE fit exists: distances normalized to unit mean, spherical relative
    uncertainty."""
    M = normalize_scale(emb.T)
    D = pairwise_distances(M)
    variances = np.square(rel_std * D)
    return OrdinalPosterior(
        M=M, K=M.T @ M, D=D, dist_means=D, dist_vars=variances, alpha=alpha
    )
