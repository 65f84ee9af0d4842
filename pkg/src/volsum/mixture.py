"""Fisher-Gaussian mixtures over (3-D position, unit surface normal) pairs.

Each component couples a multivariate Gaussian on positions with a von
Mises-Fisher density on the sphere, assumed independent within the
component: f_c(u, v) = N(u; mu_c, sigma_c) * vMF(v; eta_c, kappa_c). The
vMF normalizer on S^2 is C3(kappa) = kappa / (4 pi sinh kappa), handled in
the log domain with series fallbacks near kappa = 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator

from ._kmeans import kmeans
from .errors import EmptyComponent, InsufficientData, SingularCovariance

LOG_4PI = math.log(4.0 * math.pi)
KAPPA_MAX = 1e5
COV_REG = 1e-6  # m^2 added to covariance diagonals


@dataclass(frozen=True)
class FisherGaussianComponent:
    mu: np.ndarray      # (3,)
    sigma: np.ndarray   # (3, 3) SPD
    eta: np.ndarray     # (3,) unit
    kappa: float        # >= 0
    pi: float           # mixing weight


@dataclass(frozen=True)
class FisherGaussianMixture:
    components: tuple[FisherGaussianComponent, ...]
    log_likelihood: float
    n_obs: int

    @property
    def n_components(self) -> int:
        return len(self.components)

    def dominant(self) -> FisherGaussianComponent:
        return max(self.components, key=lambda c: c.pi)

    def to_json(self) -> str:
        payload = {
            "n_obs": self.n_obs,
            "log_likelihood": self.log_likelihood,
            "components": [
                {
                    "mu": c.mu.tolist(), "sigma": c.sigma.tolist(),
                    "eta": c.eta.tolist(), "kappa": c.kappa, "pi": c.pi,
                }
                for c in self.components
            ],
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FisherGaussianMixture":
        payload = json.loads(text)
        comps = tuple(
            FisherGaussianComponent(
                mu=np.array(c["mu"]), sigma=np.array(c["sigma"]),
                eta=np.array(c["eta"]), kappa=float(c["kappa"]), pi=float(c["pi"]),
            )
            for c in payload["components"]
        )
        return cls(components=comps, log_likelihood=payload["log_likelihood"],
                   n_obs=payload["n_obs"])


def _chol(sigma: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(f"covariance not SPD: {sigma.tolist()}") from exc


def gaussian_log_pdf(x, mu, sigma) -> float | np.ndarray:
    """log N(x; mu, sigma) for a single 3-vector or an (n, 3) batch."""
    x = np.asarray(x, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    chol = _chol(np.asarray(sigma, dtype=np.float64))
    if np.min(np.diag(chol)) ** 2 < 1e-18:
        raise SingularCovariance("covariance numerically singular")
    diff = np.atleast_2d(x) - mu
    z = np.linalg.solve(chol, diff.T).T
    quad = np.sum(z * z, axis=1)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    out = -0.5 * (3 * math.log(2.0 * math.pi) + logdet + quad)
    return float(out[0]) if x.ndim == 1 else out


def _log_sinhc(kappa: np.ndarray) -> np.ndarray:
    """log(sinh(k) / k), stable for k -> 0 and large k."""
    k = np.asarray(kappa, dtype=np.float64)
    out = np.empty_like(k)
    small = k < 1e-4
    mid = ~small & (k <= 20.0)
    big = k > 20.0
    out[small] = np.log1p(k[small] ** 2 / 6.0)
    out[mid] = np.log(np.sinh(k[mid]) / k[mid])
    out[big] = k[big] - math.log(2.0) - np.log(k[big]) + np.log1p(-np.exp(-2.0 * k[big]))
    return out


def vmf_log_normalizer(kappa) -> float | np.ndarray:
    """log C3(kappa) with C3 = kappa / (4 pi sinh kappa)."""
    k = np.asarray(kappa, dtype=np.float64)
    out = -LOG_4PI - _log_sinhc(k)
    return float(out) if np.isscalar(kappa) or out.ndim == 0 else out


def vmf_log_pdf(v, eta, kappa: float) -> float | np.ndarray:
    """log vMF(v; eta, kappa) on the unit sphere; kappa = 0 is uniform."""
    v = np.asarray(v, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    dot = np.atleast_2d(v) @ eta
    out = vmf_log_normalizer(kappa) + kappa * dot
    return float(out[0]) if v.ndim == 1 else out


def mean_resultant_length(kappa) -> float | np.ndarray:
    """A3(kappa) = coth(kappa) - 1/kappa, the expected resultant length."""
    k = np.asarray(kappa, dtype=np.float64)
    out = np.empty_like(k, dtype=np.float64)
    small = k < 1e-4
    big = k > 20.0
    mid = ~small & ~big
    ks = k[small]
    out[small] = ks / 3.0 - ks ** 3 / 45.0
    out[mid] = 1.0 / np.tanh(k[mid]) - 1.0 / k[mid]
    out[big] = 1.0 - 1.0 / k[big]
    return float(out) if out.ndim == 0 else out


def kl_gaussian(p: tuple, q: tuple) -> float:
    """Closed-form KL(N_p || N_q) for 3-D Gaussians."""
    mu_p, sigma_p = (np.asarray(a, dtype=np.float64) for a in p)
    mu_q, sigma_q = (np.asarray(a, dtype=np.float64) for a in q)
    chol_q = _chol(sigma_q)
    chol_p = _chol(sigma_p)
    solve = np.linalg.solve
    trace = float(np.trace(solve(sigma_q, sigma_p)))
    diff = mu_q - mu_p
    z = solve(chol_q, diff)
    quad = float(z @ z)
    logdet_q = 2.0 * float(np.sum(np.log(np.diag(chol_q))))
    logdet_p = 2.0 * float(np.sum(np.log(np.diag(chol_p))))
    return 0.5 * (trace + quad - 3.0 + logdet_q - logdet_p)


def kl_vmf(p: tuple, q: tuple) -> float:
    """Closed-form KL between vMF densities on S^2.

    KL = log C3(kp) - log C3(kq) + A3(kp) * (kp - kq * <eta_p, eta_q>).
    """
    eta_p, kappa_p = np.asarray(p[0], dtype=np.float64), float(p[1])
    eta_q, kappa_q = np.asarray(q[0], dtype=np.float64), float(q[1])
    dot = float(eta_p @ eta_q)
    return (
        vmf_log_normalizer(kappa_p)
        - vmf_log_normalizer(kappa_q)
        + mean_resultant_length(kappa_p) * (kappa_p - kappa_q * dot)
    )


def _banerjee_kappa(rbar: float) -> float:
    if rbar >= 1.0 - 1e-12:
        return KAPPA_MAX
    if rbar <= 0.0:
        return 0.0
    kappa = rbar * (3.0 - rbar ** 2) / (1.0 - rbar ** 2)
    return float(min(kappa, KAPPA_MAX))


def _m_step(positions, normals, resp):
    n = positions.shape[0]
    comps = []
    for c in range(resp.shape[1]):
        w = resp[:, c]
        total = float(w.sum())
        pi_c = total / n
        mu = (w @ positions) / total
        centered = positions - mu
        sigma = (centered * w[:, None]).T @ centered / total
        sigma = sigma + COV_REG * np.eye(3)
        resultant = w @ normals
        norm = float(np.linalg.norm(resultant))
        if norm > 0:
            eta = resultant / norm
            kappa = _banerjee_kappa(norm / total)
        else:
            eta = np.array([0.0, 0.0, 1.0])
            kappa = 0.0
        comps.append(FisherGaussianComponent(mu=mu, sigma=sigma, eta=eta,
                                             kappa=float(kappa), pi=pi_c))
    return comps


def _log_joint(positions, normals, comps):
    n = positions.shape[0]
    out = np.empty((n, len(comps)))
    for c, comp in enumerate(comps):
        out[:, c] = (
            math.log(max(comp.pi, 1e-300))
            + gaussian_log_pdf(positions, comp.mu, comp.sigma)
            + vmf_log_pdf(normals, comp.eta, comp.kappa)
        )
    return out


def fit_em(positions, normals, n_components: int = 1, seed: int = 0,
           max_iters: int = 200, tol: float = 1e-6):
    """Fit a Fisher-Gaussian mixture by EM.

    Initialization hard-assigns responsibilities from seeded k-means++ on
    positions. A component whose responsibility mass falls below 1e-8 drops
    the component count by one and restarts the fit once; a second
    occurrence raises ``EmptyComponent``. Returns the mixture plus the
    per-iteration log-likelihood path as ``(mixture, ll_path)``.
    """
    positions = np.asarray(positions, dtype=np.float64)
    normals = np.asarray(normals, dtype=np.float64)
    if positions.ndim != 2 or positions.shape[1] != 3:
        raise ValueError("positions must be (n, 3)")
    if positions.shape != normals.shape:
        raise ValueError("positions and normals must align")
    k = int(n_components)
    for attempt in range(2):
        n = positions.shape[0]
        if n < 4 * k:
            raise InsufficientData(f"{n} observations < 4K = {4 * k}")
        _, labels, _ = kmeans(positions, k, seed=seed)
        resp = np.zeros((n, k))
        resp[np.arange(n), labels] = 1.0
        # Guard hard-empty initial clusters (kmeans reseeds, so rare).
        resp[:, resp.sum(axis=0) == 0] = 1e-12
        comps = _m_step(positions, normals, resp)
        ll_path = []
        dropped = False
        prev = -np.inf
        for _ in range(max_iters):
            log_joint = _log_joint(positions, normals, comps)
            log_norm = logsumexp(log_joint, axis=1)
            ll = float(log_norm.sum())
            ll_path.append(ll)
            resp = np.exp(log_joint - log_norm[:, None])
            mass = resp.sum(axis=0)
            if np.any(mass < 1e-8):
                if attempt == 1 or k <= 1:
                    raise EmptyComponent(
                        f"component mass {mass.min():.3e} after restart")
                k -= 1
                dropped = True
                break
            comps = _m_step(positions, normals, resp)
            if ll - prev < tol and np.isfinite(prev):
                break
            prev = ll
        if dropped:
            continue
        log_joint = _log_joint(positions, normals, comps)
        final_ll = float(logsumexp(log_joint, axis=1).sum())
        ll_path.append(final_ll)
        mixture = FisherGaussianMixture(
            components=tuple(comps), log_likelihood=final_ll, n_obs=n)
        return mixture, ll_path
    raise EmptyComponent("restart failed to retain all components")


class FisherGaussianEM(BaseEstimator):
    """sklearn-style wrapper over :func:`fit_em`.

    ``fit`` accepts X of shape (n, 6): positions in the first three
    columns, unit normals in the last three.
    """

    def __init__(self, n_components: int = 1, seed: int = 0,
                 max_iters: int = 200, tol: float = 1e-6):
        self.n_components = n_components
        self.seed = seed
        self.max_iters = max_iters
        self.tol = tol

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != 6:
            raise ValueError("X must be (n, 6) = [positions | normals]")
        self.mixture_, self.ll_path_ = fit_em(
            X[:, :3], X[:, 3:], n_components=self.n_components,
            seed=self.seed, max_iters=self.max_iters, tol=self.tol)
        return self

    def score_samples(self, X):
        X = np.asarray(X, dtype=np.float64)
        log_joint = _log_joint(X[:, :3], X[:, 3:], self.mixture_.components)
        return logsumexp(log_joint, axis=1)


def mixture_kl_gaussian(p: FisherGaussianMixture, q: FisherGaussianMixture) -> float:
    """Matching-based KL bound between the Gaussian parts of two mixtures.

    Exact for single-component mixtures; for K > 1 uses the variational
    min-matching bound sum_c pi_c (min_j KL(p_c || q_j) + log(pi_c / pi_j)).
    """
    total = 0.0
    for cp in p.components:
        best = math.inf
        for cq in q.components:
            val = kl_gaussian((cp.mu, cp.sigma), (cq.mu, cq.sigma)) + math.log(
                max(cp.pi, 1e-300) / max(cq.pi, 1e-300))
            best = min(best, val)
        total += cp.pi * best
    return max(total, 0.0)


def mixture_kl_vmf(p: FisherGaussianMixture, q: FisherGaussianMixture) -> float:
    """Matching-based KL bound between the vMF parts of two mixtures."""
    total = 0.0
    for cp in p.components:
        best = math.inf
        for cq in q.components:
            val = kl_vmf((cp.eta, cp.kappa), (cq.eta, cq.kappa)) + math.log(
                max(cp.pi, 1e-300) / max(cq.pi, 1e-300))
            best = min(best, val)
        total += cp.pi * best
    return max(total, 0.0)
