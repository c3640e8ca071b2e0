"""Gaussian-process surrogate: Matérn-5/2 kernel, constant mean, LML fitting.

Targets are normalized to zero mean / unit variance before fitting, making
the constant mean 0 in normalized units and rendering acquisition argmaxes
invariant under affine rescaling of the observations. Kernel hyper-parameters
(per-dim length-scales, signal variance, noise variance) maximize the log
marginal likelihood via a multi-start bounded derivative-free pattern search:
16 starts, up to 200 LML evaluations each, advanced in lockstep so every
round is one batched Cholesky over all starts.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

SQRT5 = math.sqrt(5.0)

LENGTHSCALE_BOUNDS = (1e-2, 10.0)
SIGNAL_VAR_BOUNDS = (1e-3, 10.0)
NOISE_VAR_BOUNDS = (1e-8, 1e-1)
N_STARTS = 16
MAX_EVALS_PER_START = 200


class DegenerateData(UserWarning):
    """All observations identical: surrogate falls back to constant mean."""


def matern52(r: np.ndarray) -> np.ndarray:
    """Matérn-5/2 correlation as a function of scaled distance r."""
    sr = SQRT5 * r
    return (1.0 + sr + sr * sr / 3.0) * np.exp(-sr)


def _pairwise_sqdiffs(x: np.ndarray) -> np.ndarray:
    """(d, n, n) per-dimension squared differences of the training inputs."""
    return (x.T[:, :, None] - x.T[:, None, :]) ** 2


def _batched_lml(d2: np.ndarray, y: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    """Log marginal likelihood for a batch of hyper-parameter vectors.

    thetas rows are (l_1..l_d, signal_var, noise_var) in natural units.
    Returns -inf for rows whose kernel matrix fails to factor. The batch is
    evaluated in float32: selection among candidates only needs ranking
    precision; the chosen optimum is re-factored in float64 by the caller.
    """
    d, n, _ = d2.shape
    m = len(thetas)
    ls = thetas[:, :d]
    sf = thetas[:, d].astype(np.float32)
    sn = thetas[:, d + 1].astype(np.float32)
    d2f = d2 if d2.dtype == np.float32 else d2.astype(np.float32)
    inv_l2 = (1.0 / ls**2).astype(np.float32)
    sr = np.einsum("md,dij->mij", inv_l2, d2f)
    np.maximum(sr, 0.0, out=sr)
    np.sqrt(sr, out=sr)
    sr *= np.float32(SQRT5)
    poly = sr * sr
    poly *= np.float32(1.0 / 3.0)
    poly += sr
    poly += np.float32(1.0)
    np.negative(sr, out=sr)
    np.exp(sr, out=sr)
    k = poly
    k *= sr
    k *= sf[:, None, None]
    idx = np.arange(n)
    k[:, idx, idx] += sn[:, None] + np.float32(1e-6)
    out = np.full(m, -np.inf)
    try:
        chol = np.linalg.cholesky(k)
        good = np.ones(m, dtype=bool)
    except np.linalg.LinAlgError:
        chol = np.zeros_like(k)
        good = np.zeros(m, dtype=bool)
        for i in range(m):
            try:
                chol[i] = np.linalg.cholesky(k[i])
                good[i] = True
            except np.linalg.LinAlgError:
                pass
    if not good.any():
        return out
    from scipy.linalg.lapack import spotrs

    yf = y.astype(np.float32)
    quad = np.empty(m)
    with np.errstate(divide="ignore"):  # zeroed rows of failed factorizations
        logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=1, axis2=2)), axis=1)
    for i in np.flatnonzero(good):
        alpha, _ = spotrs(chol[i], yf, lower=1)
        quad[i] = float(yf @ alpha)
    out[good] = -0.5 * quad[good] - 0.5 * logdet[good] - 0.5 * n * math.log(2.0 * math.pi)
    return out


def _pattern_search(
    d2: np.ndarray,
    y: np.ndarray,
    starts: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    max_evals: int,
) -> tuple[np.ndarray, float, np.ndarray]:
    """Lockstep coordinate pattern search over log-hyper-parameters.

    Every start explores +/- step moves on each coordinate per round; a start
    that fails to improve halves its step. Stops when each start has spent
    its evaluation budget. Returns (best theta_log, best lml, per-start lml).
    """
    m, p = starts.shape
    centers = starts.copy()

    def evaluate(points: np.ndarray) -> np.ndarray:
        return _batched_lml(d2, y, np.exp(points))

    f_centers = evaluate(centers)
    steps = np.full(m, 0.5)
    used = 1
    stall = 0
    best_seen = float(np.max(f_centers))
    while used + 2 * p <= max_evals:
        active = np.flatnonzero(steps > 1e-2)  # converged starts stop spending budget
        if len(active) == 0:
            break
        na = len(active)
        cands = np.repeat(centers[active][:, None, :], 2 * p, axis=1)
        for j in range(p):
            cands[:, 2 * j, j] = np.clip(centers[active, j] + steps[active], lo[j], hi[j])
            cands[:, 2 * j + 1, j] = np.clip(centers[active, j] - steps[active], lo[j], hi[j])
        scores = evaluate(cands.reshape(-1, p)).reshape(na, 2 * p)
        best_idx = np.argmax(scores, axis=1)
        best_val = scores[np.arange(na), best_idx]
        improved = best_val > f_centers[active]
        moved = active[improved]
        centers[moved] = cands[np.arange(na), best_idx][improved]
        f_centers[moved] = best_val[improved]
        steps[active[~improved]] *= 0.5
        used += 2 * p
        # Converged before the budget: the best start has stopped moving.
        now_best = float(np.max(f_centers))
        if now_best > best_seen + 1e-4:
            best_seen = now_best
            stall = 0
        else:
            stall += 1
            if stall >= 3:
                break
    k = int(np.argmax(f_centers))
    return centers[k], float(f_centers[k]), f_centers


@dataclass
class GaussianProcess:
    """Fitted GP posterior over normalized targets."""

    x_train: np.ndarray
    y_norm: np.ndarray
    y_mean: float
    y_std: float
    lengthscales: np.ndarray
    signal_var: float
    noise_var: float
    lml: float = float("-inf")
    degenerate: bool = False
    _alpha: np.ndarray | None = field(default=None, repr=False)
    _cho: tuple | None = field(default=None, repr=False)

    def normalize(self, y: float | np.ndarray) -> np.ndarray:
        return (np.asarray(y, dtype=np.float64) - self.y_mean) / self.y_std

    def denormalize(self, y_norm: np.ndarray) -> np.ndarray:
        return np.asarray(y_norm) * self.y_std + self.y_mean

    def posterior(self, x_query: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and stddev of the latent function, normalized units."""
        xq = np.atleast_2d(np.asarray(x_query, dtype=np.float64))
        if self.degenerate:
            return np.zeros(len(xq)), np.full(len(xq), math.sqrt(self.signal_var))
        d2 = (xq.T[:, :, None] - self.x_train.T[:, None, :]) ** 2
        r = np.sqrt(np.maximum(np.tensordot(1.0 / self.lengthscales**2, d2, axes=1), 0.0))
        k_star = self.signal_var * matern52(r)  # (nq, n)
        mu = k_star @ self._alpha
        v = cho_solve(self._cho, k_star.T)
        var = self.signal_var - np.einsum("ij,ji->i", k_star, v)
        return mu, np.sqrt(np.maximum(var, 1e-12))

    def posterior_original(self, x_query: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior in original target units."""
        mu, sd = self.posterior(x_query)
        return self.denormalize(mu), sd * self.y_std


def log_marginal_likelihood(
    x: np.ndarray, y_norm: np.ndarray, lengthscales: np.ndarray, signal_var: float, noise_var: float
) -> float:
    """Exact (float64) LML of normalized targets under the given kernel."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y_norm, dtype=np.float64)
    n = len(y)
    d2 = _pairwise_sqdiffs(x)
    ls = np.asarray(lengthscales, dtype=np.float64)
    r = np.sqrt(np.maximum(np.tensordot(1.0 / ls**2, d2, axes=1), 0.0))
    k = signal_var * matern52(r)
    k[np.diag_indices_from(k)] += noise_var + 1e-12
    cho = cho_factor(k, lower=True)
    alpha = cho_solve(cho, y)
    logdet = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
    return float(-0.5 * y @ alpha - 0.5 * logdet - 0.5 * n * math.log(2.0 * math.pi))


def fit_gp(x: np.ndarray, y: np.ndarray, seed: int = 0) -> GaussianProcess:
    """Fit the GP, choosing kernel hyper-parameters by multi-start LML search.

    Bounds on normalized data: lengthscales in [1e-2, 10], signal variance in
    [1e-3, 10], noise variance in [1e-8, 1e-1]. Identical observations trigger
    the degenerate constant-mean path with floor variance (DegenerateData
    warning).
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    n, d = x.shape
    if n < 2:
        raise ValueError("need at least 2 observations to fit a surrogate")
    y_mean = float(y.mean())
    y_std = float(y.std())
    if y_std == 0.0:
        warnings.warn("all observations identical; constant-mean surrogate", DegenerateData)
        return GaussianProcess(
            x_train=x,
            y_norm=np.zeros(n),
            y_mean=y_mean,
            y_std=1.0,
            lengthscales=np.ones(d),
            signal_var=SIGNAL_VAR_BOUNDS[0],
            noise_var=NOISE_VAR_BOUNDS[0],
            degenerate=True,
        )
    y_norm = (y - y_mean) / y_std
    d2 = _pairwise_sqdiffs(x)

    lo = np.log(np.array([LENGTHSCALE_BOUNDS[0]] * d + [SIGNAL_VAR_BOUNDS[0], NOISE_VAR_BOUNDS[0]]))
    hi = np.log(np.array([LENGTHSCALE_BOUNDS[1]] * d + [SIGNAL_VAR_BOUNDS[1], NOISE_VAR_BOUNDS[1]]))
    rng = np.random.Generator(np.random.PCG64(seed))
    default = np.clip(np.log(np.array([1.0] * d + [1.0, 1e-4])), lo, hi)
    starts = np.vstack([default, lo + rng.random((N_STARTS - 1, d + 2)) * (hi - lo)])

    theta_log, best_lml, _ = _pattern_search(d2, y_norm, starts, lo, hi, MAX_EVALS_PER_START)
    theta = np.exp(theta_log)
    gp = GaussianProcess(
        x_train=x,
        y_norm=y_norm,
        y_mean=y_mean,
        y_std=y_std,
        lengthscales=theta[:d],
        signal_var=float(theta[d]),
        noise_var=float(theta[d + 1]),
        lml=best_lml,
    )
    r = np.sqrt(np.maximum(np.tensordot(1.0 / gp.lengthscales**2, d2, axes=1), 0.0))
    k = gp.signal_var * matern52(r)
    jitter = gp.noise_var + 1e-12
    while True:
        try:
            gp._cho = cho_factor(k + jitter * np.eye(n), lower=True)
            break
        except np.linalg.LinAlgError:
            jitter = jitter * 10.0
            if jitter > 1.0:
                raise
    gp._alpha = cho_solve(gp._cho, y_norm)
    return gp
