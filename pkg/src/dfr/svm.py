"""Multi-class SVM trained by sequential minimal optimization.

Each pair of classes gets a binary soft-margin SVM solved in the dual with
SMO (maximal-violating-pair selection using second-order information). The
pairwise machines vote; ties go to the class with the larger summed signed
margin, then to the earlier label.
"""
import itertools
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from dfr.errors import DimensionError, FormatError, ParameterError

log = logging.getLogger(__name__)

MAGIC = b"DFRS"
FORMAT_VERSION = 1
KERNELS = ("linear", "rbf")
TAU = 1e-12


@dataclass
class SvmParams:
    """Hyperparameters. ``gamma=None`` means ``1 / (n_features * X.var())``
    on the standardized training features."""

    kernel: str = "rbf"
    C: float = 1.0
    gamma: float = None
    tolerance: float = 1e-3
    max_passes: int = 10
    seed: int = 0

    def validate(self):
        if self.kernel not in KERNELS:
            raise ParameterError(f"kernel must be one of {KERNELS}, got {self.kernel!r}")
        if not self.C > 0:
            raise ParameterError(f"C must be positive, got {self.C}")
        if self.gamma is not None and not self.gamma > 0:
            raise ParameterError(f"gamma must be positive, got {self.gamma}")
        if not self.tolerance > 0:
            raise ParameterError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_passes < 1:
            raise ParameterError(f"max_passes must be >= 1, got {self.max_passes}")
        return self


def kernel_matrix(a, b, kernel, gamma=1.0):
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"kernel inputs have {a.shape[1]} and {b.shape[1]} features")
    if kernel == "linear":
        return a @ b.T
    sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2 * a @ b.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def kernel_eval(x, y, params: SvmParams, gamma=None):
    """Kernel value of two vectors; ``gamma`` overrides ``params.gamma``."""
    x = np.asarray(getattr(x, "values", x), dtype=np.float64)
    y = np.asarray(getattr(y, "values", y), dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"vectors differ in length: {x.shape} vs {y.shape}")
    if params.kernel == "linear":
        return float(x @ y)
    g = gamma if gamma is not None else params.gamma
    if g is None:
        raise ParameterError("rbf kernel needs gamma")
    d = x - y
    return float(np.exp(-g * (d @ d)))


@dataclass
class BinarySolution:
    alpha: np.ndarray
    bias: float
    gradient: np.ndarray
    iterations: int
    converged: bool

    def dual_objective(self, K, y):
        return dual_objective(self.alpha, K, y)


def dual_objective(alpha, K, y):
    """``sum(alpha) - 0.5 * alpha' Q alpha`` with ``Q = yy' * K``."""
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


def kkt_gap(alpha, grad, y, C):
    """Maximal KKT violation ``m(alpha) - M(alpha)``; zero at the optimum."""
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    score = -y * grad
    if not up.any() or not low.any():
        return 0.0
    return float(score[up].max() - score[low].min())


def _bias(alpha, grad, y, C):
    yg = y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = yg[free].mean()
    else:
        at_upper = alpha >= C
        ub_mask = (at_upper & (y < 0)) | (~at_upper & (y > 0))
        lb_mask = (at_upper & (y > 0)) | (~at_upper & (y < 0))
        ub = yg[ub_mask].min() if ub_mask.any() else np.inf
        lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
        rho = (ub + lb) / 2 if np.isfinite(ub) and np.isfinite(lb) else (ub if np.isfinite(ub) else lb)
    return -float(rho)


def smo_binary(K, y, C=1.0, tolerance=1e-3, max_passes=10):
    """Solve the binary SVM dual for kernel matrix ``K`` and labels ``y`` in {-1, +1}.

    Stops once the maximal KKT violation falls below ``tolerance`` or after
    ``max_passes * n`` pair updates.
    """
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    Q = (y[:, None] * y[None, :]) * K
    qd = np.diag(K).copy()
    alpha = np.zeros(n)
    grad = -np.ones(n)
    limit = max_passes * max(n, 1)
    it = 0
    converged = False
    while it < limit:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        score = -y * grad
        if not up.any() or not low.any():
            converged = True
            break
        i = int(np.flatnonzero(up)[np.argmax(score[up])])
        g_max = score[i]
        if g_max - score[low].min() < tolerance:
            converged = True
            break
        b = g_max - score
        quad = qd[i] + qd - 2 * y[i] * y * Q[i]
        quad = np.where(quad > 0, quad, TAU)
        cand = low & (b > 0)
        obj = np.where(cand, -(b * b) / quad, np.inf)
        j = int(np.argmin(obj))

        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            qc = qd[i] + qd[j] + 2 * Q[i, j]
            qc = qc if qc > 0 else TAU
            delta = (-grad[i] - grad[j]) / qc
            diff = ai - aj
            ni, nj = ai + delta, aj + delta
            if diff > 0:
                if nj < 0:
                    nj, ni = 0.0, diff
            elif ni < 0:
                ni, nj = 0.0, -diff
            if diff > 0:
                if ni > C:
                    ni, nj = C, C - diff
            elif nj > C:
                nj, ni = C, C + diff
        else:
            qc = qd[i] + qd[j] - 2 * Q[i, j]
            qc = qc if qc > 0 else TAU
            delta = (grad[i] - grad[j]) / qc
            total = ai + aj
            ni, nj = ai - delta, aj + delta
            if total > C:
                if ni > C:
                    ni, nj = C, total - C
                if nj > C:
                    nj, ni = C, total - C
            else:
                if nj < 0:
                    nj, ni = 0.0, total
                if ni < 0:
                    ni, nj = 0.0, total
        alpha[i], alpha[j] = ni, nj
        grad += Q[i] * (ni - ai) + Q[j] * (nj - aj)
        it += 1
    if not converged:
        log.warning("SMO stopped after %d updates with KKT gap %.3g", it, kkt_gap(alpha, grad, y, C))
    return BinarySolution(alpha, _bias(alpha, grad, y, C), grad, it, converged)


@dataclass
class PairMachine:
    """Binary machine voting ``classes[first]`` (positive) vs ``classes[second]``."""

    first: int
    second: int
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i
    bias: float

    def decision(self, x, kernel, gamma):
        if len(self.dual_coef) == 0:
            return np.full(len(x), self.bias)
        return kernel_matrix(x, self.support_vectors, kernel, gamma) @ self.dual_coef + self.bias


@dataclass
class SvmModel:
    classes: list
    mean: np.ndarray
    scale: np.ndarray
    kernel: str
    C: float
    gamma: float
    machines: list = field(default_factory=list)
    tolerance: float = 1e-3
    max_passes: int = 10
    seed: int = 0
    schema: str = ""  # version of the feature schema the model was trained on

    @property
    def n_features(self):
        return len(self.mean)

    def standardize(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise DimensionError(f"model expects {self.n_features} features, got {X.shape[1]}")
        return (X - self.mean) / self.scale

    def decision_values(self, X):
        """``(n_samples, n_pairs)`` signed margins; positive favours ``machine.first``."""
        Z = self.standardize(X)
        return np.stack([m.decision(Z, self.kernel, self.gamma) for m in self.machines], axis=1)

    def vote(self, X):
        """Vote counts ``(n_samples, n_classes)`` and summed signed margins."""
        dec = self.decision_values(X)
        k = len(self.classes)
        votes = np.zeros((len(dec), k), dtype=int)
        margins = np.zeros((len(dec), k))
        for col, m in enumerate(self.machines):
            d = dec[:, col]
            votes[:, m.first] += d > 0
            votes[:, m.second] += d < 0
            margins[:, m.first] += d
            margins[:, m.second] -= d
        return votes, margins

    def predict_many(self, X):
        votes, margins = self.vote(X)
        out = []
        for v, mg in zip(votes, margins):
            # lexicographic: most votes, then largest margin, then lowest label index
            best = min(range(len(self.classes)), key=lambda c: (-v[c], -mg[c], c))
            out.append(self.classes[best])
        return out


def _as_matrix(features):
    rows = [np.asarray(getattr(f, "values", f), dtype=np.float64).reshape(-1) for f in features]
    lengths = {len(r) for r in rows}
    if len(lengths) > 1:
        raise DimensionError(f"feature vectors have inconsistent lengths {sorted(lengths)}")
    return np.stack(rows) if rows else np.zeros((0, 0))


def train_svm(features, labels, params: SvmParams = None) -> SvmModel:
    """Fit a one-vs-one SVM on standardized features."""
    params = (params or SvmParams()).validate()
    X = _as_matrix(features)
    labels = list(labels)
    if len(X) != len(labels):
        raise DimensionError(f"{len(X)} feature vectors but {len(labels)} labels")
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise ParameterError(f"need at least 2 distinct labels, got {classes}")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    Z = (X - mean) / scale
    if params.gamma is not None:
        gamma = float(params.gamma)
    else:
        var = Z.var()
        gamma = 1.0 / (Z.shape[1] * var) if var > 0 else 1.0
    y_idx = np.array([classes.index(lab) for lab in labels])
    model = SvmModel(
        classes, mean, scale, params.kernel, params.C, gamma,
        tolerance=params.tolerance, max_passes=params.max_passes, seed=params.seed,
    )
    for a, b in itertools.combinations(range(len(classes)), 2):
        rows = np.flatnonzero((y_idx == a) | (y_idx == b))
        Zp = Z[rows]
        y = np.where(y_idx[rows] == a, 1.0, -1.0)
        K = kernel_matrix(Zp, Zp, params.kernel, gamma)
        sol = smo_binary(K, y, params.C, params.tolerance, params.max_passes)
        sv = sol.alpha > 0
        model.machines.append(PairMachine(a, b, Zp[sv].copy(), (sol.alpha * y)[sv], sol.bias))
    return model


def predict(model: SvmModel, fv):
    """Label of one feature vector plus its ``{label: votes}`` table."""
    votes, _ = model.vote(_as_matrix([fv]))
    label = model.predict_many(_as_matrix([fv]))[0]
    return label, {c: int(v) for c, v in zip(model.classes, votes[0])}


def brute_force_dual(features, labels, params: SvmParams, grid_step):
    """Exhaustive grid search of the binary dual, for checking SMO on tiny sets.

    The first ``n - 1`` multipliers range over a grid of spacing
    ``grid_step`` in ``[0, C]``; the last is fixed by ``sum(alpha * y) = 0``
    and must land in ``[0, C]``. Features are used as given (no
    standardization). Labels may be any two distinct values; the smaller
    one maps to +1. Returns ``(best_objective, alpha, bias)``.
    """
    X = _as_matrix(features)
    n = len(X)
    if n > 6:
        raise ParameterError(f"brute-force dual supports at most 6 samples, got {n}")
    classes = sorted(set(labels))
    if len(classes) != 2:
        raise ParameterError("brute-force dual needs exactly two classes")
    if grid_step <= 0:
        raise ParameterError("grid_step must be positive")
    y = np.array([1.0 if lab == classes[0] else -1.0 for lab in labels])
    C = params.C
    gamma = params.gamma if params.gamma is not None else 1.0
    K = np.array([[kernel_eval(a, b, params, gamma) for b in X] for a in X])
    Q = np.outer(y, y) * K

    steps = int(np.floor(C / grid_step + 1e-9))
    grid = np.linspace(0.0, steps * grid_step, steps + 1)
    best_obj, best_alpha = -np.inf, np.zeros(n)
    head_dims = n - 1
    for first in grid:
        rest = [grid] * (head_dims - 1)
        tails = np.array(list(itertools.product(*rest))) if rest else np.zeros((1, 0))
        A = np.empty((len(tails), n))
        A[:, 0] = first
        A[:, 1:head_dims] = tails
        A[:, -1] = -y[-1] * (A[:, :-1] @ y[:-1])
        ok = (A[:, -1] >= -1e-12) & (A[:, -1] <= C + 1e-12)
        if not ok.any():
            continue
        A = np.clip(A[ok], 0.0, C)
        obj = A.sum(1) - 0.5 * np.einsum("ni,ij,nj->n", A, Q, A)
        k = int(np.argmax(obj))
        if obj[k] > best_obj:
            best_obj, best_alpha = float(obj[k]), A[k].copy()

    # bias from margin support vectors, else from the midpoint of the feasible range
    f = (best_alpha * y) @ K
    eps = 1e-9
    free = (best_alpha > eps) & (best_alpha < C - eps)
    if free.any():
        bias = float(np.mean(y[free] - f[free]))
    else:
        lo, hi = -np.inf, np.inf
        for k in range(n):
            r = y[k] - f[k]
            at_zero = best_alpha[k] <= eps
            # alpha=0 needs y*(f+b) >= 1; alpha=C needs y*(f+b) <= 1
            if (y[k] > 0) == at_zero:
                lo = max(lo, r)
            else:
                hi = min(hi, r)
        bias = float((lo + hi) / 2) if np.isfinite(lo) and np.isfinite(hi) else float(lo if np.isfinite(lo) else hi)
    return best_obj, best_alpha, bias


# -- model files --------------------------------------------------------------
#
# layout: MAGIC | u16 version | header | labels | schema version | mean, scale |
# machines; strings are u16-length-prefixed utf-8,
# all reals are little-endian float64.


def save_svm(model: SvmModel, path):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", FORMAT_VERSION))
        fh.write(struct.pack("<B", KERNELS.index(model.kernel)))
        fh.write(struct.pack("<dddIq", model.C, model.gamma, model.tolerance, model.max_passes, model.seed))
        fh.write(struct.pack("<II", model.n_features, len(model.classes)))
        for c in model.classes:
            raw = str(c).encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
        raw = model.schema.encode("utf-8")
        fh.write(struct.pack("<H", len(raw)))
        fh.write(raw)
        fh.write(np.asarray(model.mean, dtype="<f8").tobytes())
        fh.write(np.asarray(model.scale, dtype="<f8").tobytes())
        fh.write(struct.pack("<I", len(model.machines)))
        for m in model.machines:
            fh.write(struct.pack("<IIdI", m.first, m.second, m.bias, len(m.dual_coef)))
            fh.write(np.asarray(m.dual_coef, dtype="<f8").tobytes())
            fh.write(np.asarray(m.support_vectors, dtype="<f8").reshape(-1).tobytes())


class _Reader:
    def __init__(self, fh):
        self.fh = fh

    def take(self, n, section):
        buf = self.fh.read(n)
        if len(buf) != n:
            raise FormatError(f"truncated SVM file in {section}", section)
        return buf

    def unpack(self, fmt, section):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), section))

    def floats(self, count, section):
        return np.frombuffer(self.take(8 * count, section), dtype="<f8").astype(np.float64)


def load_svm(path) -> SvmModel:
    with open(path, "rb") as fh:
        r = _Reader(fh)
        if r.take(4, "magic") != MAGIC:
            raise FormatError("bad magic, not an SVM model file", "magic")
        (version,) = r.unpack("<H", "version")
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported SVM format version {version} (reader supports {FORMAT_VERSION})", "version")
        (kernel_code,) = r.unpack("<B", "header")
        if kernel_code >= len(KERNELS):
            raise FormatError(f"unknown kernel code {kernel_code}", "header")
        C, gamma, tol, passes, seed = r.unpack("<dddIq", "header")
        n_features, n_classes = r.unpack("<II", "header")
        classes = []
        for _ in range(n_classes):
            (length,) = r.unpack("<H", "labels")
            classes.append(r.take(length, "labels").decode("utf-8"))
        (length,) = r.unpack("<H", "schema")
        schema = r.take(length, "schema").decode("utf-8")
        mean = r.floats(n_features, "normalization")
        scale = r.floats(n_features, "normalization")
        model = SvmModel(classes, mean, scale, KERNELS[kernel_code], C, gamma,
                         tolerance=tol, max_passes=passes, seed=seed, schema=schema)
        (n_machines,) = r.unpack("<I", "machines")
        for k in range(n_machines):
            first, second, bias, n_sv = r.unpack("<IIdI", f"machines[{k}]")
            coef = r.floats(n_sv, f"machines[{k}]")
            svs = r.floats(n_sv * n_features, f"machines[{k}]").reshape(n_sv, n_features)
            model.machines.append(PairMachine(first, second, svs, coef, bias))
        if fh.read(1):
            raise FormatError("trailing bytes after machines", "machines")
    return model
