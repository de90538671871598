"""NMF and PCA reducers and the block combiner.

NMF works internally on the classical column layout ``Xt = X.T`` (D x N,
samples as columns) and factorizes ``Xt ~ W @ H`` with W (D x k) and
H (k x N). The public functions take row-major sample matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EPS = 1e-12
NORM_FLOOR = 1e-12


class NegativeInputError(ValueError):
    pass


@dataclass(frozen=True)
class NmfModel:
    W: np.ndarray
    k: int
    iterations_run: int
    objective_trace: list = field(default_factory=list, repr=False)
    epsilon: float = EPS


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray

    @property
    def p(self) -> int:
        return self.components.shape[1]


def _check_nonnegative(X):
    X = np.asarray(X, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(X))[0])
        raise ValueError(f"non-finite entry at index {bad}")
    if np.any(X < 0):
        bad = tuple(int(i) for i in np.argwhere(X < 0)[0])
        raise NegativeInputError(f"negative entry {X[bad]!r} at index {bad}")
    return X


def _frobenius(Xt, W, H):
    return float(np.linalg.norm(Xt - W @ H))


def nmf_fit(X, k, max_iter=500, tol=1e-6, seed=0, eps=EPS):
    """Frobenius NMF by Lee-Seung multiplicative updates.

    Parameters
    ----------
    X : (N, D) array_like
        Nonnegative data, one sample per row.
    k : int
        Factorization rank, ``1 <= k <= min(N, D)``.
    max_iter : int
        Iteration cap.
    tol : float
        Stop once the relative decrease of the Frobenius error falls below
        ``tol``. ``tol=0`` runs exactly ``max_iter`` iterations unless the
        error hits zero.
    seed : int
        Seeds the uniform (0, 1] initialization of W and H.

    Returns
    -------
    model : NmfModel
    H : (k, N) ndarray
        Coefficients of the training samples.
    """
    X = _check_nonnegative(X)
    if X.ndim != 2:
        raise ValueError("X must be a 2-D matrix")
    n, d = X.shape
    if not 1 <= k <= min(n, d):
        raise ValueError(f"rank k={k} out of range [1, {min(n, d)}]")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")

    rng = np.random.default_rng(seed)
    Xt = X.T
    # 1 - U[0, 1) lies in (0, 1]
    W = 1.0 - rng.random((d, k))
    H = 1.0 - rng.random((k, n))

    trace = []
    prev = _frobenius(Xt, W, H)
    it = 0
    for it in range(1, max_iter + 1):
        W *= (Xt @ H.T) / (W @ (H @ H.T) + eps)
        H *= (W.T @ Xt) / ((W.T @ W) @ H + eps)
        err = _frobenius(Xt, W, H)
        trace.append(err)
        if err == 0.0 or (prev > 0 and (prev - err) / prev < tol):
            break
        prev = err
    return NmfModel(W=W, k=k, iterations_run=it, objective_trace=trace, epsilon=eps), H


def nmf_encode(model: NmfModel, X, max_iter=500, tol=1e-6):
    """Encode many samples with the basis frozen.

    Each row of ``X`` is solved independently: its coefficient vector starts
    at the uniform ``1/k`` vector and receives H-updates until its own
    relative error decrease drops below ``tol``. Returns an (N, k) array.
    """
    X = _check_nonnegative(np.atleast_2d(X))
    W = model.W
    if X.shape[1] != W.shape[0]:
        raise ValueError(f"dimension mismatch: expected {W.shape[0]}, got {X.shape[1]}")
    Xt = X.T
    n = Xt.shape[1]
    H = np.full((model.k, n), 1.0 / model.k)
    WtX = W.T @ Xt
    WtW = W.T @ W
    active = np.ones(n, dtype=bool)
    prev = np.linalg.norm(Xt - W @ H, axis=0)
    for _ in range(max_iter):
        cols = np.flatnonzero(active)
        if cols.size == 0:
            break
        Ha = H[:, cols]
        Ha *= WtX[:, cols] / (WtW @ Ha + model.epsilon)
        H[:, cols] = Ha
        err = np.linalg.norm(Xt[:, cols] - W @ Ha, axis=0)
        p = prev[cols]
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(p > 0, (p - err) / p, 0.0)
        done = (err == 0.0) | (rel < tol)
        active[cols[done]] = False
        prev[cols] = err
    return H.T


def nmf_transform(model: NmfModel, x, max_iter=500, tol=1e-6):
    """Nonnegative code ``h`` (length k) of a single sample ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("x must be a vector")
    return nmf_encode(model, x[None, :], max_iter=max_iter, tol=tol)[0]


def _fix_signs(U):
    U = U.copy()
    for j in range(U.shape[1]):
        i = int(np.argmax(np.abs(U[:, j])))
        if U[i, j] < 0:
            U[:, j] = -U[:, j]
    return U


def pca_fit(X, p) -> PcaModel:
    """PCA from the symmetric eigendecomposition of the sample covariance.

    Components are sorted by descending eigenvalue; each component is signed
    so that its largest-magnitude coordinate is positive (first one on ties).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be a 2-D matrix")
    n, d = X.shape
    if n < 2:
        raise ValueError("PCA needs at least 2 samples")
    if not 1 <= p <= min(n - 1, d):
        raise ValueError(f"p={p} out of range [1, {min(n - 1, d)}]")
    mean = X.mean(axis=0)
    Xc = X - mean
    C = (Xc.T @ Xc) / (n - 1)
    C = 0.5 * (C + C.T)
    vals, vecs = np.linalg.eigh(C)
    order = np.argsort(vals, kind="stable")[::-1][:p]
    return PcaModel(mean=mean, components=_fix_signs(vecs[:, order]), eigenvalues=vals[order])


def pca_transform(model: PcaModel, x) -> np.ndarray:
    """Project a vector (or rows of a matrix) onto the principal axes."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.mean.shape[0]:
        raise ValueError(
            f"dimension mismatch: expected {model.mean.shape[0]}, got {x.shape[-1]}")
    return (x - model.mean) @ model.components


def _unit(v):
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    safe = np.where(norm < NORM_FLOOR, 1.0, norm)
    return np.where(norm < NORM_FLOOR, 0.0, v / safe)


def combine(h, z) -> np.ndarray:
    """Concatenate the l2-normalized NMF and PCA blocks.

    Works row-wise on matrices as well. A block with norm below 1e-12 is
    emitted as zeros.
    """
    return np.concatenate([_unit(h), _unit(z)], axis=-1)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_matrix(path, M) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    lines = [f"{M.shape[0]} {M.shape[1]}"]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in M]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_matrix(path) -> np.ndarray:
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    try:
        rows, cols = (int(t) for t in lines[0].split())
    except ValueError:
        raise ValueError(f"{path}: line 1: expected 'rows cols'") from None
    M = np.empty((rows, cols))
    for i in range(rows):
        if i + 1 >= len(lines):
            raise ValueError(f"{path}: expected {rows} rows")
        parts = lines[i + 1].split()
        if len(parts) != cols:
            raise ValueError(f"{path}: line {i + 2}: expected {cols} values")
        M[i] = [float(t) for t in parts]
    return M


def save_models(directory, nmf: NmfModel, pca: PcaModel) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_matrix(d / "nmf_w.mat", nmf.W)
    save_matrix(d / "pca_mean.mat", pca.mean[None, :])
    save_matrix(d / "pca_u.mat", pca.components)
    save_matrix(d / "pca_lambda.mat", pca.eigenvalues[None, :])


def load_models(directory) -> tuple[NmfModel, PcaModel]:
    """Load a model pair; fit diagnostics are not persisted."""
    d = Path(directory)
    W = load_matrix(d / "nmf_w.mat")
    nmf = NmfModel(W=W, k=W.shape[1], iterations_run=0)
    pca = PcaModel(
        mean=load_matrix(d / "pca_mean.mat")[0],
        components=load_matrix(d / "pca_u.mat"),
        eigenvalues=load_matrix(d / "pca_lambda.mat")[0],
    )
    return nmf, pca
