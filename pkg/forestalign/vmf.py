"""
Mixture of von Mises-Fisher distributions on the unit sphere (d = 3).

Surface normals are clustered into K groups by soft EM; each group's
structural complexity is the mean negative log-likelihood of its members under
the fitted component (nats per point). Level 1 is always the most concentrated
component, i.e. the simplest structure.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from .errors import (CollapsedComponentError, EmptyGroupError, InsufficientDataError,
                     InvalidParameterError)
from .normals import NormalField

DIMENSION = 3
LOG_4PI = float(np.log(4.0 * np.pi))
LOG_2 = float(np.log(2.0))

KAPPA_MIN = 1e-3
KAPPA_MAX = 1e4
NEWTON_STEPS = 8
UNIT_TOLERANCE = 1e-6

MIN_POINTS_PER_COMPONENT = 10
COLLAPSE_FRACTION = 1e-3
MAX_EM_ITERATIONS = 200
EM_TOLERANCE = 1e-6
N_INIT = 5
MAX_RESTARTS = 5


@dataclass(frozen=True)
class VmfComponent:
    mu: np.ndarray
    kappa: float
    weight: float


@dataclass(frozen=True, eq=False)
class VmfMixture:
    components: Tuple[VmfComponent, ...]
    labels: np.ndarray  # 1..K per valid normal, 0 where the normal is invalid
    log_likelihood: float
    iterations: int = 0
    converged: bool = True
    history: Tuple[float, ...] = ()

    @property
    def k(self) -> int:
        return len(self.components)

    @property
    def mus(self) -> np.ndarray:
        return np.array([c.mu for c in self.components])

    @property
    def kappas(self) -> np.ndarray:
        return np.array([c.kappa for c in self.components])

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])


@dataclass(frozen=True, eq=False)
class ComplexityProfile:
    sc: np.ndarray
    group_sizes: np.ndarray

    @property
    def k(self) -> int:
        return len(self.sc)


def log_normalizer(kappa):
    """log c_3(kappa) = log(kappa / (4 pi sinh kappa)), stable from 0 to 1e4"""
    kappa = np.asarray(kappa, dtype=np.float64)
    small = kappa < 1e-6
    safe = np.where(small, 1.0, kappa)
    log_sinh = safe + np.log1p(-np.exp(-2.0 * safe)) - LOG_2
    return np.where(small, -LOG_4PI - kappa ** 2 / 6.0, np.log(safe) - LOG_4PI - log_sinh)


def vmf_log_pdf(x, mu, kappa: float):
    """log density of vMF(mu, kappa) at x; x may be a single vector or an N x 3 array"""
    x = np.asarray(x, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64).reshape(DIMENSION)
    if not np.isfinite(kappa) or kappa < 0:
        raise InvalidParameterError(f"kappa must be finite and >= 0, got {kappa}")
    if abs(np.linalg.norm(mu) - 1.0) > UNIT_TOLERANCE:
        raise InvalidParameterError("mu must be a unit vector")
    norms = np.linalg.norm(x.reshape(-1, DIMENSION), axis=1)
    if np.any(np.abs(norms - 1.0) > UNIT_TOLERANCE):
        raise InvalidParameterError("x must be unit vectors")
    values = log_normalizer(kappa) + kappa * (x @ mu)
    return float(values) if np.ndim(values) == 0 else values


def sample_vmf(mu, kappa: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """n draws from vMF(mu, kappa) in 3D by inversion of the cosine marginal"""
    mu = np.asarray(mu, dtype=np.float64)
    mu = mu / np.linalg.norm(mu)
    u = rng.uniform(size=n)
    if kappa < 1e-8:
        w = 2.0 * u - 1.0
    else:
        w = 1.0 + np.log(u + (1.0 - u) * np.exp(-2.0 * kappa)) / kappa
    w = np.clip(w, -1.0, 1.0)

    # orthonormal basis of the plane perpendicular to mu
    helper = np.eye(3)[np.argmin(np.abs(mu))]
    e1 = np.cross(mu, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(mu, e1)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
    radial = np.sqrt(1.0 - w ** 2)
    return (w[:, None] * mu + radial[:, None] * (np.cos(phi)[:, None] * e1
                                                 + np.sin(phi)[:, None] * e2))


def _banerjee_kappa(rbar: np.ndarray) -> np.ndarray:
    rbar = np.clip(rbar, 0.0, 1.0)
    with np.errstate(divide='ignore', invalid='ignore'):
        kappa = (rbar * DIMENSION - rbar ** 3) / (1.0 - rbar ** 2)
    kappa = np.where(rbar >= 1.0 - 1e-12, KAPPA_MAX, kappa)
    return np.clip(kappa, KAPPA_MIN, KAPPA_MAX)


def _mean_cosine(kappa: np.ndarray):
    """A(kappa) = coth(kappa) - 1/kappa and its derivative"""
    series = kappa < 1e-2
    safe = np.where(series, 1.0, kappa)
    with np.errstate(over='ignore'):
        a = 1.0 / np.tanh(safe) - 1.0 / safe
        da = 1.0 / safe ** 2 - 1.0 / np.sinh(safe) ** 2
    a = np.where(series, kappa / 3.0 - kappa ** 3 / 45.0, a)
    da = np.where(series, 1.0 / 3.0 - kappa ** 2 / 15.0, da)
    return a, da


def _kappa_mle(rbar: np.ndarray) -> np.ndarray:
    """Banerjee's closed form, then Newton steps on A(kappa) = rbar inside [KAPPA_MIN, KAPPA_MAX]"""
    rbar = np.clip(rbar, 0.0, 1.0)
    kappa = _banerjee_kappa(rbar)
    for _ in range(NEWTON_STEPS):
        a, da = _mean_cosine(kappa)
        step = np.where(da > 0, (a - rbar) / np.maximum(da, 1e-300), 0.0)
        kappa = np.clip(kappa - step, KAPPA_MIN, KAPPA_MAX)
    return kappa


def _log_joint(X: np.ndarray, mus: np.ndarray, kappas: np.ndarray,
               weights: np.ndarray) -> np.ndarray:
    with np.errstate(divide='ignore'):
        log_weights = np.log(weights)
    return log_weights + log_normalizer(kappas) + (X @ mus.T) * kappas


def _m_step(X: np.ndarray, resp: np.ndarray, previous_mus: np.ndarray):
    totals = resp.sum(axis=0)
    resultants = resp.T @ X
    lengths = np.linalg.norm(resultants, axis=1)
    mus = previous_mus.copy()
    alive = lengths > 0
    mus[alive] = resultants[alive] / lengths[alive, None]
    rbar = np.where(totals > 0, lengths / np.maximum(totals, 1e-300), 0.0)
    return mus, _kappa_mle(rbar), totals / len(X)


def run_em(X: np.ndarray, mus: np.ndarray, kappas: np.ndarray, weights: np.ndarray,
           max_iterations: int = MAX_EM_ITERATIONS, tolerance: float = EM_TOLERANCE):
    """
    Soft EM from the given parameters until the relative change of the
    observed-data log-likelihood drops below `tolerance`.
    Returns (mus, kappas, weights, responsibilities, history, converged).
    """
    mus = np.array(mus, dtype=np.float64)
    kappas = np.array(kappas, dtype=np.float64)
    weights = np.array(weights, dtype=np.float64)
    history: List[float] = []
    converged = False
    resp = None
    for iteration in range(max_iterations):
        joint = _log_joint(X, mus, kappas, weights)
        norm = logsumexp(joint, axis=1)
        resp = np.exp(joint - norm[:, None])
        log_likelihood = float(norm.sum())
        history.append(log_likelihood)
        logging.debug(f"vMF EM iteration {iteration}: log-likelihood {log_likelihood:.6f}")
        if len(history) > 1:
            change = abs(history[-1] - history[-2]) / max(abs(history[-2]), 1e-300)
            if change < tolerance:
                converged = True
                break
        mus, kappas, weights = _m_step(X, resp, mus)
    return mus, kappas, weights, resp, history, converged


def _spherical_kmeanspp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    centers = [X[rng.integers(n)]]
    for _ in range(1, k):
        distance = np.clip(1.0 - np.max(X @ np.array(centers).T, axis=1), 0.0, None)
        total = distance.sum()
        if total <= 0:
            pick = rng.integers(n)
        else:
            pick = rng.choice(n, p=distance / total)
        centers.append(X[pick])
    return np.array(centers)


def _initial_parameters(X: np.ndarray, k: int, rng: np.random.Generator):
    centers = _spherical_kmeanspp(X, k, rng)
    assignment = np.argmax(X @ centers.T, axis=1)
    resp = np.zeros((len(X), k))
    resp[np.arange(len(X)), assignment] = 1.0
    mus, kappas, weights = _m_step(X, resp, centers)
    weights = np.maximum(weights, 1.0 / len(X))
    return mus, kappas, weights / weights.sum()


def _as_unit_array(normals: Union[NormalField, np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(normals, NormalField):
        return normals.normals, normals.valid
    X = np.asarray(normals, dtype=np.float64).reshape(-1, DIMENSION)
    return X, np.ones(len(X), dtype=bool)


def fit_vmf_mixture(normals: Union[NormalField, np.ndarray], k: int, seed: int,
                    n_init: int = N_INIT, max_restarts: int = MAX_RESTARTS,
                    max_iterations: int = MAX_EM_ITERATIONS,
                    tolerance: float = EM_TOLERANCE) -> VmfMixture:
    """
    Fit K vMF components to the valid normals. Spherical k-means++ seeding,
    `n_init` runs keeping the best log-likelihood; a run where a component
    captures < 0.1 % of the points is replaced by a fresh seed up to
    `max_restarts` times.
    """
    if k < 1:
        raise InvalidParameterError(f"K must be >= 1, got {k}")
    all_normals, valid = _as_unit_array(normals)
    X = all_normals[valid]
    if len(X) < MIN_POINTS_PER_COMPONENT * k:
        raise InsufficientDataError(
            f"{len(X)} valid normals is too few for K={k} (need {MIN_POINTS_PER_COMPONENT * k})")

    rng = np.random.default_rng(seed)
    best = None
    accepted = 0
    restarts = 0
    while accepted < n_init:
        init = _initial_parameters(X, k, rng)
        mus, kappas, weights, resp, history, converged = run_em(
            X, *init, max_iterations=max_iterations, tolerance=tolerance)
        if np.min(resp.sum(axis=0)) < COLLAPSE_FRACTION * len(X):
            restarts += 1
            logging.warning(f"vMF fit: collapsed component (K={k}), restart {restarts}/{max_restarts}")
            if restarts > max_restarts:
                break
            continue
        accepted += 1
        if best is None or history[-1] > best[4][-1]:
            best = (mus, kappas, weights, resp, history, converged)

    if best is None:
        raise CollapsedComponentError(
            f"every vMF fit with K={k} left a component under {COLLAPSE_FRACTION:.1%} of the points")

    mus, kappas, weights, resp, history, converged = best
    order = np.argsort(-kappas, kind='stable')
    labels = np.zeros(len(all_normals), dtype=np.int64)
    labels[valid] = np.argmax(resp[:, order], axis=1) + 1
    components = tuple(VmfComponent(mus[i].copy(), float(kappas[i]), float(weights[i]))
                       for i in order)
    if not converged:
        logging.warning(f"vMF fit (K={k}) stopped at {max_iterations} iterations without converging")
    logging.info(f"vMF fit: K={k}, kappas={[round(c.kappa, 2) for c in components]}, "
                 f"log-likelihood={history[-1]:.3f}, iterations={len(history)}")
    return VmfMixture(components, labels, float(history[-1]), iterations=len(history),
                      converged=converged, history=tuple(history))


def structural_complexity(normals: Union[NormalField, np.ndarray],
                          mixture: VmfMixture) -> ComplexityProfile:
    """
    SC(k) = -(1/N_k) sum over members of log p(x | mu_k, kappa_k): the
    per-point cross-entropy of group k under its own component. Larger means
    more complex; normalising by N_k keeps scans of different density comparable.
    """
    X, _ = _as_unit_array(normals)
    if len(mixture.labels) != len(X):
        raise InvalidParameterError(
            f"mixture labels ({len(mixture.labels)}) do not match normals ({len(X)})")
    sc = np.empty(mixture.k)
    sizes = np.empty(mixture.k, dtype=np.int64)
    for level, component in enumerate(mixture.components, start=1):
        members = X[mixture.labels == level]
        if len(members) == 0:
            raise EmptyGroupError(f"complexity level {level} has no points")
        sc[level - 1] = -float(np.mean(log_normalizer(component.kappa)
                                       + component.kappa * (members @ component.mu)))
        sizes[level - 1] = len(members)
    return ComplexityProfile(sc, sizes)
