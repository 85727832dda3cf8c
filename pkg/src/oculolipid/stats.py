"""Covariate-adjusted correlation inference.

Partial correlations are computed by residualising both variables on
``[1 | Z]`` and correlating the residuals.  Tests are two-sided with
``df = n - 2 - k``; confidence intervals use the Fisher z transform with
standard error ``1 / sqrt(n - 3 - k)``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform

from .errors import ConstantInput, InsufficientSamples, InvalidP, RankDeficient

TINY_P = np.finfo(np.float64).tiny
# residual norm relative to the centred input below which a variable is
# treated as fully explained by the covariates
_CONSTANT_RTOL = 1e-10


@dataclass(frozen=True)
class CorrelationResult:
    x_name: str
    y_name: str
    covariate_names: tuple
    r: float
    p: float
    ci_lower: float
    ci_upper: float
    n_used: int
    df: int


@dataclass
class AdjustedResultSet:
    results: list
    p_adjusted: np.ndarray
    significant: np.ndarray
    q: float = 0.05
    scope: str = "global"
    skipped: list = field(default_factory=list)

    def __len__(self):
        return len(self.results)

    def significant_results(self):
        return [(res, float(pa)) for res, pa, s in
                zip(self.results, self.p_adjusted, self.significant) if s]


@dataclass
class FeatureClusterTree:
    names: list
    linkage: np.ndarray
    labels: np.ndarray
    representatives: list
    cut_height: float

    @property
    def merges(self):
        """``((left, right), height)`` per merge, in merge order."""
        return [((int(a), int(b)), float(h)) for a, b, h, _ in self.linkage]

    def clusters(self):
        groups = {}
        for name, lab in zip(self.names, self.labels):
            groups.setdefault(int(lab), []).append(name)
        return [groups[k] for k in sorted(groups)]


# ---------------------------------------------------------------------------
# primitives


def two_sided_p(r, df):
    """p-value of the t test of a (partial) correlation, floored at TINY_P."""
    r = np.asarray(r, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.abs(r) * np.sqrt(df / (1.0 - r * r))
    p = 2.0 * sps.t.sf(t, df)
    p = np.where(np.abs(r) >= 1.0, 0.0, p)
    p = np.clip(p, TINY_P, 1.0)
    return p if p.ndim else float(p)


def fisher_ci(r, n, k=0, level=0.95):
    """Fisher-z confidence interval for a correlation with ``k`` covariates."""
    dof = n - 3 - k
    if dof < 1:
        raise InsufficientSamples(n, k + 4)
    r = float(r)
    if abs(r) >= 1.0:
        return r, r
    z = np.arctanh(r)
    half = sps.norm.ppf(0.5 + level / 2.0) / np.sqrt(dof)
    return float(np.tanh(z - half)), float(np.tanh(z + half))


def _fisher_ci_vec(r, n, k, level):
    r = np.asarray(r, dtype=np.float64)
    half = sps.norm.ppf(0.5 + level / 2.0) / np.sqrt(np.asarray(n, dtype=np.float64) - 3 - k)
    with np.errstate(divide="ignore"):
        z = np.arctanh(np.clip(r, -1.0, 1.0))
    return np.tanh(z - half), np.tanh(z + half)


def _design(Z, n):
    if Z is None:
        return np.ones((n, 1))
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[:, None]
    return np.column_stack([np.ones(n), Z])


def ols_residuals(y, Z=None):
    """Least-squares residuals of ``y`` on an intercept plus the columns of ``Z``."""
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    if Z is None or np.asarray(Z).size == 0:
        return y - y.mean()
    A = _design(Z, n)
    if n < A.shape[1] or np.linalg.matrix_rank(A) < A.shape[1]:
        raise RankDeficient(f"design matrix with {A.shape[1]} columns is rank deficient")
    Q, _ = np.linalg.qr(A)
    return y - Q @ (Q.T @ y)


def _corr(ex, ey):
    ex = ex - ex.mean()
    ey = ey - ey.mean()
    r = float(np.dot(ex, ey) / np.sqrt(np.dot(ex, ex) * np.dot(ey, ey)))
    return min(max(r, -1.0), 1.0)


def _complete_rows(*arrays):
    keep = np.ones(len(arrays[0]), dtype=bool)
    for a in arrays:
        if a is None:
            continue
        a = np.asarray(a, dtype=np.float64)
        keep &= ~np.isnan(a) if a.ndim == 1 else ~np.isnan(a).any(axis=1)
    return keep


def _covariate_matrix(Z, n):
    if Z is None:
        return None
    Z = np.asarray(Z, dtype=np.float64)
    if Z.size == 0:
        return None
    return Z[:, None] if Z.ndim == 1 else Z


def partial_correlation(x, y, Z=None, x_name="x", y_name="y", covariate_names=(), level=0.95):
    """Partial correlation of ``x`` and ``y`` controlling for ``Z``.

    Rows with a missing value in ``x``, ``y`` or any covariate are dropped
    for this test only.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    Z = _covariate_matrix(Z, len(x))
    k = 0 if Z is None else Z.shape[1]
    keep = _complete_rows(x, y, Z)
    x, y = x[keep], y[keep]
    n = len(x)
    if n < k + 4:
        raise InsufficientSamples(n, k + 4)
    for name, v in ((x_name, x), (y_name, y)):
        if np.ptp(v) == 0:
            raise ConstantInput(name)
    Zk = None if Z is None else Z[keep]
    ex = ols_residuals(x, Zk)
    ey = ols_residuals(y, Zk)
    for name, v, e in ((x_name, x, ex), (y_name, y, ey)):
        if k and np.linalg.norm(e) <= _CONSTANT_RTOL * np.linalg.norm(v - v.mean()):
            raise ConstantInput(name)
    r = _corr(ex, ey)
    df = n - 2 - k
    lo, hi = fisher_ci(r, n, k, level)
    return CorrelationResult(x_name, y_name, tuple(covariate_names), r,
                             two_sided_p(r, df), lo, hi, n, df)


def pearson(x, y, x_name="x", y_name="y", level=0.95):
    """Product-moment correlation with t-test p-value and Fisher CI."""
    return partial_correlation(x, y, None, x_name, y_name, (), level)


def bh_fdr(p_values, q=0.05):
    """Benjamini-Hochberg step-up adjustment.

    Returns ``(p_adjusted, significant)`` aligned with the input; ties in p
    are ordered by original index.
    """
    p = np.asarray(p_values, dtype=np.float64).ravel()
    bad = np.flatnonzero(~((p >= 0) & (p <= 1)))
    if bad.size:
        raise InvalidP(int(bad[0]))
    m = len(p)
    if m == 0:
        return np.array([]), np.array([], dtype=bool)
    order = np.argsort(p, kind="stable")
    ranks = np.arange(1, m + 1)
    # p * (m / rank) never rounds below p, so adjusted >= p holds exactly
    scaled = p[order] * (m / ranks)
    stepped = np.minimum.accumulate(scaled[::-1])[::-1]
    adjusted = np.empty(m)
    adjusted[order] = np.minimum(stepped, 1.0)
    return adjusted, adjusted < q


def adjust(results, q=0.05, scope="global", skipped=()):
    """Wrap a list of results with BH-adjusted p-values.

    ``scope="per_feature"`` adjusts within each ``x_name`` family.
    """
    p = np.array([res.p for res in results], dtype=np.float64)
    if scope == "global":
        padj, _ = bh_fdr(p, q)
    elif scope == "per_feature":
        padj = np.empty(len(results))
        families = {}
        for i, res in enumerate(results):
            families.setdefault(res.x_name, []).append(i)
        for idx in families.values():
            padj[idx] = bh_fdr(p[idx], q)[0]
    else:
        raise ValueError(f"unknown FDR scope {scope!r}")
    return AdjustedResultSet(list(results), padj, padj < q, q, scope, list(skipped))


def screen_features(results, p_adjusted, r_min=0.1, q=0.05, key="x_name"):
    """Names passing ``|r| >= r_min`` and adjusted p < q, in input order."""
    kept = []
    for res, pa in zip(results, p_adjusted):
        if abs(res.r) >= r_min and pa < q:
            kept.append(getattr(res, key))
    return kept


def correlation_matrix(frame, names):
    """Pairwise-complete Pearson correlation matrix as an ndarray."""
    return frame[list(names)].corr(method="pearson").to_numpy()


def cluster_features(corr, names, cut_height=0.5):
    """Average-linkage clustering on ``1 - |r|``.

    The representative of each cluster is the member with the highest mean
    |r| to the other members (first by name on ties; singletons represent
    themselves).
    """
    corr = np.asarray(corr, dtype=np.float64)
    names = list(names)
    if corr.shape != (len(names), len(names)):
        raise ValueError("correlation matrix does not match names")
    if len(names) == 1:
        return FeatureClusterTree(names, np.empty((0, 4)), np.array([1]), names[:], cut_height)
    dist = 1.0 - np.abs(corr)
    dist = (dist + dist.T) / 2.0
    np.fill_diagonal(dist, 0.0)
    dist = np.clip(dist, 0.0, None)
    link = linkage(squareform(dist, checks=False), method="average")
    labels = fcluster(link, t=cut_height, criterion="distance")
    reps = []
    for lab in sorted(set(labels)):
        members = [i for i in range(len(names)) if labels[i] == lab]
        if len(members) == 1:
            reps.append(names[members[0]])
            continue
        sub = np.abs(corr[np.ix_(members, members)])
        score = (sub.sum(axis=1) - 1.0) / (len(members) - 1)
        best = min(range(len(members)), key=lambda i: (-score[i], names[members[i]]))
        reps.append(names[members[best]])
    return FeatureClusterTree(names, link, labels, reps, cut_height)


# ---------------------------------------------------------------------------
# batched sweep


def residualize_columns(Y, A):
    """Residuals of every column of ``Y`` on design ``A`` (rows complete)."""
    if np.linalg.matrix_rank(A) < A.shape[1]:
        raise RankDeficient("covariate design is rank deficient")
    Q, _ = np.linalg.qr(A)
    return Y - Q @ (Q.T @ Y)
