"""Soft-margin RBF support vector machine with Platt-calibrated probabilities.

Labels follow the detection convention: +1 is fake (positive), -1 natural.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TAU = 1e-12


@dataclass(frozen=True)
class SvmConfig:
    c: float = 1.0
    g: float = 0.5
    tolerance: float = 1e-3
    # solver cap: at most max_passes * n_samples pair updates
    max_passes: int = 1000
    threshold: float = 0.5
    platt_cv: bool = False

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"cost c must be positive, got {self.c!r}")
        if not self.g > 0:
            raise ValueError(f"gamma g must be positive, got {self.g!r}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must lie in [0, 1], got {self.threshold!r}")


@dataclass
class SmoResult:
    alpha: np.ndarray
    bias: float
    gradient: np.ndarray
    iterations: int
    converged: bool

    def dual_objective(self, q: np.ndarray) -> float:
        return float(self.alpha.sum() - 0.5 * self.alpha @ q @ self.alpha)


@dataclass
class SvmModel:
    support_vectors: np.ndarray
    dual_coef: np.ndarray
    bias: float
    gamma: float
    scale_min: np.ndarray
    scale_range: np.ndarray
    platt_a: float
    platt_b: float
    threshold: float
    c: float = 1.0
    info: dict = field(default_factory=dict, compare=False)

    @property
    def n_features(self) -> int:
        return len(self.scale_min)

    def _check(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.n_features:
            raise ValueError(f"feature dimension {x.shape[1]} does not match model dimension {self.n_features}")
        return x, single

    def scale(self, x: np.ndarray) -> np.ndarray:
        return (x - self.scale_min) / self.scale_range

    def decision_function(self, x):
        x, single = self._check(x)
        k = rbf_kernel_matrix(self.scale(x), self.support_vectors, self.gamma)
        out = np.sum(k * self.dual_coef, axis=1) + self.bias
        return float(out[0]) if single else out

    def predict_probability(self, x):
        return platt_probability(self.decision_function(x), self.platt_a, self.platt_b)

    def classify(self, x, threshold: float | None = None):
        t = self.threshold if threshold is None else threshold
        p = self.predict_probability(x)
        return np.where(np.asarray(p) >= t, 1, -1) if np.ndim(p) else (1 if p >= t else -1)


def rbf_kernel(x, y, g: float) -> float:
    """``exp(-g * ||x - y||^2)``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return float(np.exp(-g * np.sum((x - y) ** 2)))


def rbf_kernel_matrix(a: np.ndarray, b: np.ndarray, g: float, chunk: int = 64) -> np.ndarray:
    # explicit differences instead of the expanded quadratic: each row is then
    # computed the same way whatever the batch size, so single and batched
    # predictions agree bit for bit
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    out = np.empty((len(a), len(b)))
    for s in range(0, len(a), chunk):
        diff = a[s:s + chunk, None, :] - b[None, :, :]
        out[s:s + chunk] = np.exp(-g * np.sum(diff * diff, axis=2))
    return out


def kkt_violation(alpha: np.ndarray, grad: np.ndarray, y: np.ndarray, c: float) -> float:
    """Gap ``m(alpha) - M(alpha)`` between the most violating up/low indices."""
    up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < c))
    score = -y * grad
    if not up.any() or not low.any():
        return 0.0
    return float(score[up].max() - score[low].min())


def smo_solve(k: np.ndarray, y: np.ndarray, c: float, tol: float = 1e-3, max_iter: int = 100000) -> SmoResult:
    """Solve ``min 1/2 a'Qa - e'a`` s.t. ``y'a = 0``, ``0 <= a <= c``.

    Working pairs are chosen as the maximal KKT-violating pair; the pair
    subproblem is solved analytically and clipped to the box.
    """
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    q = (y[:, None] * y[None, :]) * k
    qd = np.diag(q).copy()
    alpha = np.zeros(n)
    grad = -np.ones(n)
    it = 0
    converged = False
    while it < max_iter:
        up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < c))
        score = -y * grad
        if not up.any() or not low.any():
            converged = True
            break
        i = int(np.flatnonzero(up)[np.argmax(score[up])])
        j = int(np.flatnonzero(low)[np.argmin(score[low])])
        if score[i] - score[j] < tol:
            converged = True
            break
        it += 1

        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = qd[i] + qd[j] + 2.0 * q[i, j]
            quad = quad if quad > 0 else TAU
            delta = (-grad[i] - grad[j]) / quad
            diff = ai - aj
            ni, nj = ai + delta, aj + delta
            if diff > 0:
                if nj < 0:
                    nj, ni = 0.0, diff
            elif ni < 0:
                ni, nj = 0.0, -diff
            if diff > 0:
                if ni > c:
                    ni, nj = c, c - diff
            elif nj > c:
                nj, ni = c, c + diff
        else:
            quad = qd[i] + qd[j] - 2.0 * q[i, j]
            quad = quad if quad > 0 else TAU
            delta = (grad[i] - grad[j]) / quad
            total = ai + aj
            ni, nj = ai - delta, aj + delta
            if total > c:
                if ni > c:
                    ni, nj = c, total - c
            elif nj < 0:
                nj, ni = 0.0, total
            if total > c:
                if nj > c:
                    nj, ni = c, total - c
            elif ni < 0:
                ni, nj = 0.0, total

        grad += q[:, i] * (ni - ai) + q[:, j] * (nj - aj)
        alpha[i], alpha[j] = ni, nj

    return SmoResult(alpha, _bias(alpha, grad, y, c), grad, it, converged)


def _bias(alpha, grad, y, c) -> float:
    yg = y * grad
    free = (alpha > 0) & (alpha < c)
    if free.any():
        rho = float(yg[free].mean())
    else:
        at_upper = alpha >= c
        at_lower = alpha <= 0
        ub_mask = ((y > 0) & at_lower) | ((y < 0) & at_upper)
        lb_mask = ((y > 0) & at_upper) | ((y < 0) & at_lower)
        ub = yg[ub_mask].min() if ub_mask.any() else np.inf
        lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
        rho = float((ub + lb) / 2.0) if np.isfinite(ub) and np.isfinite(lb) else float(
            ub if np.isfinite(ub) else lb)
    return -rho


def platt_probability(decision, a: float, b: float):
    """``1 / (1 + exp(a * f + b))`` evaluated without overflow."""
    f = np.asarray(decision, dtype=np.float64) * a + b
    out = np.where(f >= 0, np.exp(-np.abs(f)) / (1.0 + np.exp(-np.abs(f))), 1.0 / (1.0 + np.exp(-np.abs(f))))
    return float(out) if out.ndim == 0 else out


def fit_platt(decision: np.ndarray, labels: np.ndarray, max_iter: int = 100) -> tuple[float, float]:
    """Sigmoid parameters by regularised maximum likelihood.

    Targets are smoothed towards the class priors; the negative
    log-likelihood is minimised with Newton steps and a backtracking line
    search.
    """
    f = np.asarray(decision, dtype=np.float64)
    y = np.asarray(labels)
    prior1 = float(np.sum(y > 0))
    prior0 = float(np.sum(y <= 0))
    t = np.where(y > 0, (prior1 + 1.0) / (prior1 + 2.0), 1.0 / (prior0 + 2.0))

    def objective(a, b):
        z = f * a + b
        return float(np.sum(np.where(z >= 0, t * z + np.log1p(np.exp(-np.abs(z))),
                                     (t - 1.0) * z + np.log1p(np.exp(-np.abs(z))))))

    a, b = 0.0, float(np.log((prior0 + 1.0) / (prior1 + 1.0)))
    fval = objective(a, b)
    for _ in range(max_iter):
        p = platt_probability(f, a, b)
        d2 = p * (1.0 - p)
        h11 = 1e-12 + np.sum(f * f * d2)
        h22 = 1e-12 + np.sum(d2)
        h21 = np.sum(f * d2)
        d1 = t - p
        g1 = np.sum(f * d1)
        g2 = np.sum(d1)
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        det = h11 * h22 - h21 * h21
        da = -(h22 * g1 - h21 * g2) / det
        db = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * da + g2 * db
        step = 1.0
        while step >= 1e-10:
            na, nb = a + step * da, b + step * db
            nf = objective(na, nb)
            if nf < fval + 1e-4 * step * gd:
                a, b, fval = na, nb, nf
                break
            step /= 2.0
        else:
            break
    # a positive slope would invert the score order; only reachable when the
    # decision values are anti-correlated with the labels
    a = min(a, -1e-12)
    return float(a), float(b)


def _check_training_data(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if x.ndim != 2 or len(x) != len(y):
        raise ValueError("features must be a 2-D array with one row per label")
    if not np.all(np.isfinite(x)):
        raise ValueError("features contain non-finite values")
    if not set(np.unique(y).tolist()) <= {-1, 1}:
        raise ValueError("labels must be -1 (natural) or +1 (fake)")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValueError("training data must contain both classes")
    return x, y.astype(np.float64)


def _fit_scaling(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lo = x.min(axis=0)
    rng = x.max(axis=0) - lo
    rng[rng == 0] = 1.0
    return lo, rng


def _train_raw(xs: np.ndarray, y: np.ndarray, cfg: SvmConfig) -> SmoResult:
    k = rbf_kernel_matrix(xs, xs, cfg.g)
    return smo_solve(k, y, cfg.c, cfg.tolerance, cfg.max_passes * max(len(y), 1))


def train_svm(features, labels, cfg: SvmConfig | None = None, seed: int = 0) -> SvmModel:
    """Train an RBF SVM on min-max scaled features and calibrate it.

    The seed only matters when ``cfg.platt_cv`` asks for cross-fitted
    decision values for the sigmoid.
    """
    cfg = cfg or SvmConfig()
    x, y = _check_training_data(features, labels)
    lo, rng = _fit_scaling(x)
    xs = (x - lo) / rng
    res = _train_raw(xs, y, cfg)

    sv = res.alpha > 0
    model = SvmModel(
        support_vectors=xs[sv],
        dual_coef=(res.alpha * y)[sv],
        bias=res.bias,
        gamma=cfg.g,
        scale_min=lo,
        scale_range=rng,
        platt_a=0.0,
        platt_b=0.0,
        threshold=cfg.threshold,
        c=cfg.c,
        info={"iterations": res.iterations, "converged": res.converged},
    )
    if cfg.platt_cv:
        decision = _cross_fitted_decisions(xs, y, cfg, seed)
    else:
        decision = model.decision_function(x)
    model.platt_a, model.platt_b = fit_platt(decision, y)
    return model


def _cross_fitted_decisions(xs, y, cfg, seed, folds: int = 3) -> np.ndarray:
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(y))
    out = np.empty(len(y))
    for f in range(folds):
        test = order[f::folds]
        train = np.setdiff1d(order, test)
        if len(test) == 0:
            continue
        if len(np.unique(y[train])) < 2:
            # a fold without both classes carries no ranking information
            out[test] = 0.0
            continue
        res = _train_raw(xs[train], y[train], cfg)
        k = rbf_kernel_matrix(xs[test], xs[train], cfg.g)
        out[test] = np.sum(k * (res.alpha * y[train]), axis=1) + res.bias
    return out


def predict_probability(model: SvmModel, x):
    return model.predict_probability(x)


def classify(model: SvmModel, x, threshold: float | None = None):
    """+1 (fake) where the calibrated probability is at least the threshold."""
    return model.classify(x, threshold)
