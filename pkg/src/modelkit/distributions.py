"""Built-in model catalog.

Each constructor returns a Model with closed-form elements where standard
results provide them; anything omitted falls through to the default
strategies in the dispatch layer.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from .data import DataSet, ModelError, Params
from .model import Model

LOG_ROOT_2PI = 0.5 * math.log(2 * math.pi)


def _strict_positive(*vals) -> float:
    """Violation distance for a strict-positivity constraint."""
    worst = 0.0
    for v in vals:
        if v <= 0:
            worst = max(worst, 1e-8 - v)
    return worst


# ---------------------------------------------------------------------------
# Normal


def normal_model() -> Model:
    """Univariate Normal(mu, sigma); all four elements closed-form.

    The estimator uses the maximum-likelihood variance (divide by n, not
    n-1), reported as sigma = its square root.  Degenerate data gives
    sigma = 0, which the constraint flags rather than erroring.
    """

    def logl(rows, p):
        mu, sigma = p.scalar("mu"), p.scalar("sigma")
        if sigma <= 0:
            x = rows[:, 0]
            return np.where(x == mu, 0.0, -np.inf)
        z = (rows[:, 0] - mu) / sigma
        return -0.5 * z * z - math.log(sigma) - LOG_ROOT_2PI

    def est(d):
        w = d.weights / d.weights.sum()
        mu = float(w @ d.rows[:, 0])
        var = float(w @ (d.rows[:, 0] - mu) ** 2)
        return Params.scalars(mu=mu, sigma=math.sqrt(var))

    def rng(p, stream, n):
        return stream.normal(p.scalar("mu"), p.scalar("sigma"), size=(n, 1))

    def cdf(points, p):
        mu, sigma = p.scalar("mu"), p.scalar("sigma")
        if sigma <= 0:
            return (points[:, 0] >= mu).astype(float)
        return special.ndtr((points[:, 0] - mu) / sigma)

    return Model("normal", 1, Params.scalars(mu=0.0, sigma=1.0),
                 logl=logl, est=est, rng=rng, cdf=cdf,
                 constraint=lambda p: _strict_positive(p.scalar("sigma")))


def mvn_model(dim: int = 2) -> Model:
    """Multivariate Normal; mean block "mu", row-major covariance block "cov".

    CDF is left to the default empirical strategy.
    """
    if dim < 1:
        raise ModelError("mvn_model needs dim >= 1")

    def unpack(p):
        mu = p.block("mu")
        cov = p.block("cov").reshape(dim, dim)
        return mu, cov

    def logl(rows, p):
        mu, cov = unpack(p)
        sign, logdet = np.linalg.slogdet(cov)
        if sign <= 0:
            return np.full(rows.shape[0], -np.inf)
        diff = rows - mu
        sol = np.linalg.solve(cov, diff.T).T
        q = np.sum(diff * sol, axis=1)
        return -0.5 * (q + logdet + dim * math.log(2 * math.pi))

    def est(d):
        w = d.weights / d.weights.sum()
        mu = w @ d.rows
        diff = d.rows - mu
        cov = (diff * w[:, None]).T @ diff
        return Params([("mu", mu), ("cov", cov.ravel())])

    def rng(p, stream, n):
        mu, cov = unpack(p)
        return stream.gen.multivariate_normal(mu, cov, size=n,
                                              method="cholesky")

    def constraint(p):
        _, cov = unpack(p)
        cov = 0.5 * (cov + cov.T)
        lam_min = float(np.linalg.eigvalsh(cov)[0])
        return _strict_positive(lam_min)

    return Model("mvn", dim,
                 Params([("mu", np.zeros(dim)), ("cov", np.eye(dim).ravel())]),
                 logl=logl, est=est, rng=rng, constraint=constraint)


# ---------------------------------------------------------------------------
# PMF


def pmf_model(support: DataSet) -> Model:
    """A data set reinterpreted as a distribution.

    Parameters are the per-row weights (block "w"); the support rows live in
    settings["pmf_support"].  Likelihood is weight lookup, zero off-support;
    CDF sums weights of componentwise-dominated rows; the estimator
    re-normalizes observed frequencies over the support.
    """
    if len(support) == 0:
        raise ModelError("pmf_model needs a nonempty support")
    sup = support.sorted()
    w0 = sup.weights / sup.weights.sum()
    rows0 = sup.rows
    k, dim = rows0.shape

    def match_index(x):
        hit = np.all(np.abs(rows0 - x) <= 1e-12, axis=1)
        idx = np.flatnonzero(hit)
        return int(idx[0]) if idx.size else -1

    def logl(rows, p):
        w = p.block("w")
        out = np.full(rows.shape[0], -np.inf)
        for i in range(rows.shape[0]):
            j = match_index(rows[i])
            if j >= 0 and w[j] > 0:
                out[i] = math.log(w[j] / w.sum())
        return out

    def est(d):
        w = np.zeros(k)
        for i in range(len(d)):
            j = match_index(d.rows[i])
            if j >= 0:
                w[j] += d.weights[i]
        if w.sum() == 0:
            raise ModelError("pmf estimate: no data row lies on the support")
        return Params([("w", w / w.sum())])

    def rng(p, stream, n):
        w = p.block("w")
        idx = stream.choice(k, p=w / w.sum(), size=n)
        return rows0[idx]

    def cdf(points, p):
        w = p.block("w")
        w = w / w.sum()
        below = np.all(rows0[None, :, :] <= points[:, None, :] + 1e-12, axis=2)
        return below @ w

    def constraint(p):
        w = p.block("w")
        v = float(np.sum(np.clip(-w, 0, None))) + abs(float(w.sum()) - 1.0)
        return v if v > 1e-12 else 0.0

    return Model("pmf", dim, Params([("w", w0)]), logl=logl, est=est,
                 rng=rng, cdf=cdf, constraint=constraint, discrete=True,
                 settings={"pmf_support": sup})


# ---------------------------------------------------------------------------
# Ordinary least squares


def ols_model(data_names: list[str] | None = None, n_x: int | None = None) -> Model:
    """Linear regression as a model over rows (y, x1..xk).

    The estimator solves the normal equations with an implicit constant
    column; fitting captures the empirical X support, and the likelihood of
    a row whose X never appeared in estimation is zero.  The sampler draws
    X from the captured support and adds Normal(0, sigma) noise to beta.X.
    """
    if n_x is None:
        if data_names is None:
            raise ModelError("ols_model needs data_names or n_x")
        n_x = len(data_names) - 1
    if n_x < 1:
        raise ModelError("ols_model needs at least one regressor column")
    dim = 1 + n_x
    shape = Params([("beta", np.zeros(1 + n_x)), ("sigma", [1.0])])

    def design(xrows):
        return np.column_stack([np.ones(xrows.shape[0]), xrows])

    def logl(rows, p, _support=None):
        raise ModelError("ols likelihood needs the estimation X support; "
                         "call estimate() first")

    def make_logl(support: DataSet):
        sup_rows = support.rows

        def logl(rows, p):
            beta = p.block("beta")
            sigma = p.scalar("sigma")
            resid = rows[:, 0] - design(rows[:, 1:]) @ beta
            on = np.array([
                bool(np.any(np.all(np.abs(sup_rows - rows[i, 1:]) <= 1e-12, axis=1)))
                for i in range(rows.shape[0])])
            if sigma <= 0:
                return np.where(on & (resid == 0.0), 0.0, -np.inf)
            z = resid / sigma
            vals = -0.5 * z * z - math.log(sigma) - LOG_ROOT_2PI
            return np.where(on, vals, -np.inf)

        return logl

    def make_rng(support: DataSet):
        w = support.weights / support.weights.sum()

        def rng(p, stream, n):
            beta = p.block("beta")
            sigma = p.scalar("sigma")
            idx = stream.choice(len(support), p=w, size=n)
            x = support.rows[idx]
            y = design(x) @ beta + stream.normal(0.0, max(sigma, 0.0), size=n)
            return np.column_stack([y, x])

        return rng

    def est(d):
        X = design(d.rows[:, 1:])
        y = d.rows[:, 0]
        w = d.weights
        XtX = X.T @ (X * w[:, None])
        if np.linalg.cond(XtX) > 1e12:
            raise ModelError("collinear design")
        beta = np.linalg.solve(XtX, X.T @ (y * w))
        resid = y - X @ beta
        sigma = math.sqrt(float((w @ resid ** 2) / w.sum()))
        return Params([("beta", beta), ("sigma", [sigma])])

    def capture_fit(m, d):
        support = DataSet(d.rows[:, 1:], weights=d.weights)
        new = m.with_settings(x_support=support)
        new.logl = make_logl(support)
        new.rng = make_rng(support)
        return new

    return Model("ols", dim, shape, logl=logl, est=est,
                 constraint=lambda p: max(0.0, -p.scalar("sigma")),
                 settings={"capture_fit": capture_fit})


# ---------------------------------------------------------------------------
# Weibull


def weibull_model() -> Model:
    """Weibull(k, lam) on d > 0: log density ln(k/lam) + (k-1)ln(d/lam) - (d/lam)^k.

    No closed-form estimator; the constraint keeps the MLE search from
    driving either parameter to zero.
    """

    def logl(rows, p):
        k, lam = p.scalar("k"), p.scalar("lam")
        if k <= 0 or lam <= 0:
            return np.full(rows.shape[0], -np.inf)
        d = rows[:, 0]
        out = np.full(rows.shape[0], -np.inf)
        pos = d > 0
        r = d[pos] / lam
        out[pos] = math.log(k / lam) + (k - 1) * np.log(r) - r ** k
        return out

    def rng(p, stream, n):
        k, lam = p.scalar("k"), p.scalar("lam")
        u = stream.uniform(size=n)
        return (lam * (-np.log1p(-u)) ** (1.0 / k)).reshape(n, 1)

    def cdf(points, p):
        k, lam = p.scalar("k"), p.scalar("lam")
        d = np.clip(points[:, 0], 0.0, None)
        return 1.0 - np.exp(-((d / lam) ** k))

    return Model("weibull", 1, Params.scalars(k=1.0, lam=1.0),
                 logl=logl, rng=rng, cdf=cdf,
                 constraint=lambda p: _strict_positive(p.scalar("k"), p.scalar("lam")))


# ---------------------------------------------------------------------------
# Catalog dispatch


def exponential_model() -> Model:
    """Exponential parameterized by its MEAN: L(d; mu) = exp(-d/mu)/mu.

    Note this is the expected-value parameterization, not the rate; the
    estimator is the sample mean.
    """

    def logl(rows, p):
        mu = p.scalar("mu")
        if mu <= 0:
            return np.full(rows.shape[0], -np.inf)
        d = rows[:, 0]
        return np.where(d >= 0, -d / mu - math.log(mu), -np.inf)

    def est(d):
        w = d.weights / d.weights.sum()
        return Params.scalars(mu=float(w @ d.rows[:, 0]))

    def rng(p, stream, n):
        return stream.gen.exponential(p.scalar("mu"), size=(n, 1))

    def cdf(points, p):
        d = np.clip(points[:, 0], 0.0, None)
        return 1.0 - np.exp(-d / p.scalar("mu"))

    return Model("exponential", 1, Params.scalars(mu=1.0),
                 logl=logl, est=est, rng=rng, cdf=cdf,
                 constraint=lambda p: _strict_positive(p.scalar("mu")))


def poisson_model() -> Model:
    def logl(rows, p):
        lam = p.scalar("lam")
        if lam <= 0:
            return np.full(rows.shape[0], -np.inf)
        k = rows[:, 0]
        ok = (k >= 0) & (np.abs(k - np.round(k)) <= 1e-9)
        out = np.full(rows.shape[0], -np.inf)
        kk = np.round(k[ok])
        out[ok] = kk * math.log(lam) - lam - special.gammaln(kk + 1)
        return out

    def est(d):
        w = d.weights / d.weights.sum()
        return Params.scalars(lam=float(w @ d.rows[:, 0]))

    def rng(p, stream, n):
        return stream.gen.poisson(p.scalar("lam"), size=(n, 1)).astype(float)

    def cdf(points, p):
        lam = p.scalar("lam")
        k = np.floor(points[:, 0])
        out = np.where(k >= 0, special.pdtr(np.clip(k, 0, None), lam), 0.0)
        return out

    return Model("poisson", 1, Params.scalars(lam=1.0), logl=logl, est=est,
                 rng=rng, cdf=cdf, discrete=True,
                 constraint=lambda p: _strict_positive(p.scalar("lam")))


def beta_model() -> Model:
    """Beta(alpha, beta) on (0,1); estimator falls through to MLE."""

    def logl(rows, p):
        a, b = p.scalar("alpha"), p.scalar("beta")
        if a <= 0 or b <= 0:
            return np.full(rows.shape[0], -np.inf)
        x = rows[:, 0]
        out = np.full(rows.shape[0], -np.inf)
        ok = (x > 0) & (x < 1)
        out[ok] = ((a - 1) * np.log(x[ok]) + (b - 1) * np.log1p(-x[ok])
                   - special.betaln(a, b))
        return out

    def rng(p, stream, n):
        return stream.gen.beta(p.scalar("alpha"), p.scalar("beta"), size=(n, 1))

    def cdf(points, p):
        x = np.clip(points[:, 0], 0.0, 1.0)
        return special.betainc(p.scalar("alpha"), p.scalar("beta"), x)

    return Model("beta", 1, Params.scalars(alpha=1.0, beta=1.0),
                 logl=logl, rng=rng, cdf=cdf,
                 constraint=lambda p: _strict_positive(p.scalar("alpha"),
                                                       p.scalar("beta")))


def uniform_model() -> Model:
    def logl(rows, p):
        a, b = p.scalar("a"), p.scalar("b")
        if b <= a:
            return np.full(rows.shape[0], -np.inf)
        x = rows[:, 0]
        return np.where((x >= a) & (x <= b), -math.log(b - a), -np.inf)

    def est(d):
        x = d.rows[d.weights > 0, 0]
        return Params.scalars(a=float(x.min()), b=float(x.max()))

    def rng(p, stream, n):
        return stream.uniform(p.scalar("a"), p.scalar("b"), size=(n, 1))

    def cdf(points, p):
        a, b = p.scalar("a"), p.scalar("b")
        return np.clip((points[:, 0] - a) / (b - a), 0.0, 1.0)

    return Model("uniform", 1, Params.scalars(a=0.0, b=1.0),
                 logl=logl, est=est, rng=rng, cdf=cdf,
                 constraint=lambda p: _strict_positive(p.scalar("b") - p.scalar("a")))


_CATALOG = {
    "normal": normal_model,
    "exponential": exponential_model,
    "poisson": poisson_model,
    "beta": beta_model,
    "uniform": uniform_model,
    "weibull": weibull_model,
    "multivariate_normal": mvn_model,
}


def builtin(name: str, **kw) -> Model:
    """Construct a catalog model by name."""
    try:
        ctor = _CATALOG[name]
    except KeyError:
        raise ModelError(f"unknown distribution {name!r}; "
                         f"choose from {sorted(_CATALOG)}") from None
    return ctor(**kw)
