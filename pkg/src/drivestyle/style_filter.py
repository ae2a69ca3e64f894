"""Stage-2 filtering: kinematic features, robust per-style Gaussians and conformance scores."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from . import kernels
from .scenario import Trajectory

FEATURE_NAMES = ("v_mean", "v_std", "a_rms", "a_abs_max", "j_rms", "j_std")
DOF = len(FEATURE_NAMES)
DEFAULT_SUPPORT = 0.75
DEFAULT_THRESHOLD = 80.0
REG_EPS = 1e-9
# condition number above which the scatter matrix is treated as near-singular
COND_LIMIT = 1e12

N_TRIALS = 500
N_KEEP = 10
MAX_CSTEPS = 100
SUBSAMPLE = 1500


class DegenerateDataError(ValueError):
    pass


class InsufficientSamplesError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureVector:
    v_mean: float
    v_std: float
    a_rms: float
    a_abs_max: float
    j_rms: float
    j_std: float

    def __post_init__(self):
        vals = self.as_array()
        if not np.all(np.isfinite(vals)):
            raise ValueError("feature values must be finite")
        if np.any(vals[1:] < 0):
            raise ValueError("spread features must be non-negative")
        if self.a_abs_max < self.a_rms * (1 - 1e-12) - 1e-12:
            raise ValueError("max |a| cannot be below rms(a)")

    def as_array(self):
        return np.array([self.v_mean, self.v_std, self.a_rms, self.a_abs_max, self.j_rms, self.j_std], dtype=float)

    @classmethod
    def from_array(cls, arr):
        return cls(*(float(v) for v in arr))

    def as_dict(self):
        return dict(zip(FEATURE_NAMES, self.as_array().tolist()))


def feature_array(traj: Trajectory):
    if len(traj) < 4:
        raise ValueError("trajectory too short for features (need >= 4 states)")
    v, a = traj.v, traj.a
    j = np.diff(a) / traj.dt
    a_rms = math.sqrt(float(np.mean(a * a)))
    return np.array(
        [
            float(np.mean(v)),
            float(np.std(v)),
            a_rms,
            max(float(np.max(np.abs(a))), a_rms),  # guard last-ulp rounding
            math.sqrt(float(np.mean(j * j))),
            float(np.std(j)),
        ]
    )


def extract_features(traj: Trajectory) -> FeatureVector:
    """Per-trajectory kinematic summary: speed mean/std, acceleration rms/max, jerk rms/std."""
    return FeatureVector.from_array(feature_array(traj))


@dataclass(frozen=True, eq=False)
class StyleDistribution:
    style: str
    mu: np.ndarray
    sigma: np.ndarray
    support_fraction: float
    n_fit: int
    support: np.ndarray = field(default=None, repr=False)  # indices of the final h-subset

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float)
        sigma = np.array(self.sigma, dtype=float)
        if sigma.shape != (len(mu), len(mu)):
            raise ValueError("sigma shape does not match mu")
        if not np.allclose(sigma, sigma.T, rtol=0, atol=1e-12 * max(1.0, np.abs(sigma).max())):
            raise ValueError("sigma must be symmetric")
        sigma = 0.5 * (sigma + sigma.T)
        if np.linalg.eigvalsh(sigma)[0] <= 0:
            raise ValueError("sigma must be positive definite")
        mu.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "_inv", np.linalg.inv(sigma))

    @property
    def inv_sigma(self):
        return self._inv

    def to_dict(self):
        return {
            "style": self.style,
            "mu": self.mu.tolist(),
            "sigma": self.sigma.tolist(),
            "support_fraction": self.support_fraction,
            "n_fit": self.n_fit,
        }


# ---------------------------------------------------------------------------
# chi-square helpers
# ---------------------------------------------------------------------------

def chi2_cdf(x, dof=DOF):
    """Lower regularized incomplete gamma P(dof/2, x/2)."""
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    return special.gammainc(0.5 * dof, 0.5 * x)


def chi2_sf(x, dof=DOF):
    """Upper tail Q(dof/2, x/2), computed directly to keep precision in the tail."""
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    return special.gammaincc(0.5 * dof, 0.5 * x)


def consistency_factor(h, n, dof):
    """Scale making the raw MCD scatter consistent at the normal model."""
    alpha = h / n
    if alpha >= 1.0:
        return 1.0
    q = stats.chi2.ppf(alpha, dof)
    return alpha / stats.chi2.cdf(q, dof + 2)


# ---------------------------------------------------------------------------
# MCD
# ---------------------------------------------------------------------------

def _regularize(cov):
    d = cov.shape[0]
    tr = float(np.trace(cov))
    eig = np.linalg.eigvalsh(cov)
    if eig[0] <= 0 or eig[-1] / eig[0] > COND_LIMIT:
        cov = cov + REG_EPS * tr / d * np.eye(d)
    return cov


def _scatter(X):
    mu = X.mean(axis=0)
    diff = X - mu
    return mu, diff.T @ diff / len(X)


def _sq_dist(X, mu, cov):
    return kernels.sq_mahalanobis(X, mu, np.linalg.inv(cov))


def _logdet(cov):
    sign, ld = np.linalg.slogdet(cov)
    return ld if sign > 0 else -np.inf


def _csteps(X, h, mu, cov, max_steps):
    """Concentration steps from an initial estimate; returns (logdet, mu, cov, support)."""
    cov = _regularize(cov)
    prev = np.inf
    support = None
    for _ in range(max_steps):
        d2 = _sq_dist(X, mu, cov)
        support = np.sort(np.argsort(d2, kind="stable")[:h])
        mu, cov = _scatter(X[support])
        cov = _regularize(cov)
        ld = _logdet(cov)
        if ld >= prev - 1e-12:
            prev = min(prev, ld)
            break
        prev = ld
    return prev, mu, cov, support


def _initial_estimate(X, idx):
    """Mean/scatter of an index subset, grown until the scatter is non-singular."""
    n, d = X.shape
    sub = list(idx)
    taken = set(sub)
    extra = (i for i in range(n) if i not in taken)
    mu, cov = _scatter(X[sub])
    while np.linalg.matrix_rank(cov) < d and len(sub) < n:
        sub.append(next(extra))
        mu, cov = _scatter(X[sub])
    return mu, cov


def fit_mcd(features, support_fraction=None, seed=0, style="", n_trials=N_TRIALS):
    """FAST-MCD estimate of location and scatter.

    Random ``(d+1)``-subsets (drawn by index, so the search is affine
    equivariant for a fixed seed) seed two concentration steps each; the best
    ``N_KEEP`` are iterated to convergence on the full data. Above
    ``SUBSAMPLE`` points the initial search runs on a random subsample.
    """
    X = np.array([f.as_array() if isinstance(f, FeatureVector) else np.asarray(f, dtype=float) for f in features])
    if X.ndim != 2:
        raise InsufficientSamplesError("no samples")
    n, d = X.shape
    if n < 2 * (d + 1):
        raise InsufficientSamplesError(f"fit_mcd needs at least {2 * (d + 1)} samples, got {n}")
    if np.all(np.ptp(X, axis=0) == 0):
        raise DegenerateDataError("all samples identical (zero scatter)")
    sf = DEFAULT_SUPPORT if support_fraction is None else float(support_fraction)
    if not 0.5 < sf <= 1.0:
        raise ValueError("support_fraction must lie in (0.5, 1]")
    h = min(n, max(d + 1, int(round(sf * n))))

    rng = np.random.default_rng(seed)
    if h == n:
        mu, cov = _scatter(X)
        support = np.arange(n)
    else:
        if n > SUBSAMPLE:
            pool = np.sort(rng.choice(n, SUBSAMPLE, replace=False))
        else:
            pool = np.arange(n)
        Xs = X[pool]
        hs = min(len(pool), max(d + 1, int(round(sf * len(pool)))))
        trials = []
        for k in range(n_trials):
            idx = rng.choice(len(pool), d + 1, replace=False)
            mu0, cov0 = _initial_estimate(Xs, idx)
            ld, mu0, cov0, _ = _csteps(Xs, hs, mu0, cov0, 2)
            trials.append((ld, k, mu0, cov0))
        trials.sort(key=lambda r: (r[0], r[1]))
        best = None
        for ld0, k, mu0, cov0 in trials[:N_KEEP]:
            res = _csteps(X, h, mu0, cov0, MAX_CSTEPS)
            if best is None or res[0] < best[0] - 1e-12:
                best = res
        _, mu, cov, support = best
    if np.all(np.ptp(X[support], axis=0) == 0):
        raise DegenerateDataError("densest subset has zero scatter")
    cov = _regularize(cov * consistency_factor(h, n, d))
    return StyleDistribution(style, mu, cov, sf, n, np.asarray(support))


def mahalanobis(dist: StyleDistribution, f) -> float:
    x = f.as_array() if isinstance(f, FeatureVector) else np.asarray(f, dtype=float)
    return float(np.sqrt(max(kernels.sq_mahalanobis(x[None, :], dist.mu, dist.inv_sigma)[0], 0.0)))


def mahalanobis_many(dist: StyleDistribution, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.sqrt(np.maximum(kernels.sq_mahalanobis(X, dist.mu, dist.inv_sigma), 0.0))


def conformance_score(d_m, dof=DOF):
    """``100 * (1 - chi2_cdf(d_m**2))``; scalar in, float out."""
    d_m = np.asarray(d_m, dtype=float)
    if np.any(d_m < 0):
        raise ValueError("distance must be non-negative")
    s = 100.0 * chi2_sf(d_m * d_m, dof)
    return float(s) if s.ndim == 0 else s


@dataclass
class FilterResult:
    retained: list
    distributions: dict
    report: dict


def filter_instances(instances, seed=0, support_fraction=None, threshold=DEFAULT_THRESHOLD):
    """Fit one robust Gaussian per style and keep samples scoring strictly above ``threshold``.

    ``instances`` is a sequence of ``(style, Trajectory)``; retained entries are
    ``(index, style, score)`` in input order.
    """
    by_style = {}
    for i, (style, traj) in enumerate(instances):
        by_style.setdefault(style, []).append(i)
    feats = {}
    retained = []
    dists = {}
    report = {"threshold": threshold, "styles": {}}
    scores = {}
    for style in sorted(by_style):
        idx = by_style[style]
        X = np.array([feature_array(instances[i][1]) for i in idx])
        feats[style] = X
        entry = {"count_in": len(idx)}
        try:
            dist = fit_mcd(X, support_fraction, seed=seed, style=style)
        except (InsufficientSamplesError, DegenerateDataError) as exc:
            entry.update(count_retained=0, warning=str(exc))
            report["styles"][style] = entry
            continue
        dists[style] = dist
        s = conformance_score(mahalanobis_many(dist, X))
        s = np.atleast_1d(s)
        keep = s > threshold
        for i, sc in zip(np.asarray(idx)[keep], s[keep]):
            scores[int(i)] = (style, float(sc))
        entry.update(
            count_retained=int(keep.sum()),
            mean_features=dict(zip(FEATURE_NAMES, X[keep].mean(axis=0).tolist())) if keep.any() else None,
            mu=dist.mu.tolist(),
            sigma=dist.sigma.tolist(),
        )
        report["styles"][style] = entry
    retained = [(i, scores[i][0], scores[i][1]) for i in sorted(scores)]
    report["count_in"] = len(instances)
    report["count_retained"] = len(retained)
    return FilterResult(retained, dists, report)


def report_json(report) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
