"""Sparse shape basis learning: PCA truncation/whitening, FastICA, dictionary IO."""

import struct
from dataclasses import dataclass, field

import numpy as np

from .mnist import DigitSet

DICT_MAGIC = b"RSDICT01"


class IcaConvergenceError(RuntimeError):
    def __init__(self, iterations, change):
        self.iterations = iterations
        self.change = change
        super().__init__(
            f"FastICA did not converge after {iterations} iterations (change {change:.3g})"
        )


class DictionaryFormatError(ValueError):
    """Bad magic, shape, or flag in a dictionary file."""


@dataclass
class PcaModel:
    """Top-k eigenbasis of the mean-centered pixel covariance.

    eigenvectors: (784, k) columns sorted by descending variance;
    singular_values: the matching singular values of the centered data matrix;
    variances: per-component population variance (what whitening divides by);
    kept: boolean mask over all 784 eigenvalue slots (top-k true).
    """

    eigenvectors: np.ndarray
    singular_values: np.ndarray
    variances: np.ndarray
    mean: np.ndarray
    kept: np.ndarray
    n_samples: int


@dataclass
class SparseDictionary:
    """Digit basis functions as unit-norm columns of `features` (pixels x K)."""

    features: np.ndarray
    orthogonal: bool
    mean: np.ndarray
    provenance: str = "pca_ica"
    mixing: np.ndarray | None = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return self.features.shape[1]


def _fix_signs(mat: np.ndarray) -> np.ndarray:
    """Flip columns so the largest-magnitude entry is positive (reproducible files)."""
    flip = np.sign(mat[np.abs(mat).argmax(axis=0), np.arange(mat.shape[1])])
    flip[flip == 0] = 1.0
    return mat * flip


def fit_pca(digits: DigitSet, k: int) -> PcaModel:
    """Eigendecomposition of the 784x784 covariance of the training split.

    Works on the covariance rather than the 60k-row data matrix; same subspace,
    much smaller problem.
    """
    if digits.split != "train":
        raise ValueError("feature learning only accepts the train split")
    if not (1 <= k <= 784):
        raise ValueError(f"k must be in [1, 784], got {k}")
    x = digits.images
    mean = x.mean(axis=0)
    xc = x - mean
    cov = (xc.T @ xc) / len(x)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = _fix_signs(evecs[:, order])
    kept = np.zeros(784, dtype=bool)
    kept[:k] = True
    return PcaModel(
        eigenvectors=evecs[:, :k],
        singular_values=np.sqrt(evals[:k] * len(x)),
        variances=evals[:k],
        mean=mean,
        kept=kept,
        n_samples=len(x),
    )


def project(pca: PcaModel, images: np.ndarray) -> np.ndarray:
    """Centered projections onto the kept eigenvectors, (n, k)."""
    return (np.asarray(images) - pca.mean) @ pca.eigenvectors


def images_arg(x):
    # accepts DigitSet or a plain (n, d) array
    return x.images if isinstance(x, DigitSet) else np.asarray(x, dtype=np.float64)


def whiten_truncate(pca: PcaModel, digits) -> np.ndarray:
    """Project onto the kept eigenvectors with unit variance per component, then
    map back to 784-dim pixel space.

    Components with (near-)zero variance are dropped from the output: they
    cannot be whitened.
    """
    proj = project(pca, images_arg(digits))
    scale = np.zeros_like(pca.variances)
    ok = pca.variances > 1e-12 * max(pca.variances.max(), 1e-300)
    scale[ok] = 1.0 / np.sqrt(pca.variances[ok])
    return (proj * scale) @ pca.eigenvectors.T


def _sym_decorrelation(w: np.ndarray) -> np.ndarray:
    """W <- (W W^T)^(-1/2) W, the symmetric orthogonalization step."""
    s, u = np.linalg.eigh(w @ w.T)
    s = np.clip(s, 1e-12, None)
    return (u * (1.0 / np.sqrt(s))) @ u.T @ w


def fit_fast_ica(
    whitened: np.ndarray,
    k: int,
    seed: int,
    tol: float = 1e-4,
    max_iter: int = 500,
    mean: np.ndarray | None = None,
) -> SparseDictionary:
    """Symmetric FastICA with the cubic contrast on already-whitened data.

    Returns a dictionary with exactly orthonormal unit-norm columns; the mixing
    matrix (per-sample source coefficients) is retained as a training byproduct.
    Deterministic given the seed.
    """
    z = np.asarray(whitened, dtype=np.float64)
    n, d = z.shape
    # orthonormal basis of the data's own subspace; rescales residual variance
    # so the contrast sees exactly unit-variance components
    cov = (z.T @ z) / n
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    rank = int((evals > 1e-10 * max(evals[0], 1e-300)).sum())
    if k > rank:
        raise ValueError(f"k={k} exceeds data rank {rank}")
    basis = evecs[:, :k]
    y = (z @ basis) / np.sqrt(evals[:k])

    rng = np.random.default_rng(seed)
    w = _sym_decorrelation(rng.standard_normal((k, k)))
    change = np.inf
    for it in range(max_iter):
        src = y @ w.T
        g = src**3
        g_prime_mean = 3.0 * (src**2).mean(axis=0)
        w_new = _sym_decorrelation(g.T @ y / n - g_prime_mean[:, None] * w)
        change = float(np.abs(np.abs(np.einsum("ij,ij->i", w_new, w)) - 1.0).max())
        w = w_new
        if change < tol:
            break
    else:
        raise IcaConvergenceError(max_iter, change)

    feats = _fix_signs(basis @ w.T)
    mixing = z @ feats  # exact: z lies in span(feats)
    return SparseDictionary(
        features=feats,
        orthogonal=True,
        mean=np.zeros(d) if mean is None else np.asarray(mean, dtype=np.float64),
        provenance="pca_ica",
        mixing=mixing,
    )


def learn_features(digits: DigitSet, k: int, seed: int) -> tuple:
    """Full PCA -> whiten -> FastICA chain; returns (SparseDictionary, PcaModel)."""
    pca = fit_pca(digits, k)
    whitened = whiten_truncate(pca, digits)
    dictionary = fit_fast_ica(whitened, k, seed=seed, mean=pca.mean)
    return dictionary, pca


def kurtosis(coefficients: np.ndarray) -> np.ndarray:
    """Excess kurtosis per column; the non-Gaussianity FastICA maximizes."""
    c = coefficients - coefficients.mean(axis=0)
    var = (c**2).mean(axis=0)
    return (c**4).mean(axis=0) / np.clip(var, 1e-300, None) ** 2 - 3.0


def save_dictionary(dictionary: SparseDictionary, path):
    """RSDICT01, little-endian: magic, u32 rows, u32 cols, u8 orthogonal,
    f64 mean[784], f64 features row-major.  The format is pinned to 784-pixel
    dictionaries."""
    rows, cols = dictionary.features.shape
    if rows != 784:
        raise DictionaryFormatError(f"dictionary file format requires 784 rows, got {rows}")
    if cols < 1:
        raise DictionaryFormatError("dictionary must have at least one feature")
    with open(path, "wb") as f:
        f.write(DICT_MAGIC)
        f.write(struct.pack("<IIB", rows, cols, 1 if dictionary.orthogonal else 0))
        f.write(np.ascontiguousarray(dictionary.mean, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(dictionary.features, dtype="<f8").tobytes())


def load_dictionary(path) -> SparseDictionary:
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < 17 or buf[:8] != DICT_MAGIC:
        raise DictionaryFormatError(f"{path}: not a dictionary file")
    rows, cols, flag = struct.unpack_from("<IIB", buf, 8)
    if rows != 784:
        raise DictionaryFormatError(f"{path}: expected 784 rows, got {rows}")
    if cols < 1 or cols > 784:
        raise DictionaryFormatError(f"{path}: feature count {cols} outside [1, 784]")
    need = 17 + 8 * 784 + 8 * rows * cols
    if len(buf) < need:
        raise DictionaryFormatError(f"{path}: truncated ({len(buf)} < {need} bytes)")
    mean = np.frombuffer(buf, dtype="<f8", count=784, offset=17).copy()
    feats = (
        np.frombuffer(buf, dtype="<f8", count=rows * cols, offset=17 + 8 * 784)
        .reshape(rows, cols)
        .copy()
    )
    orthogonal = bool(flag)
    if orthogonal:
        gram = feats.T @ feats
        if np.abs(gram - np.eye(cols)).max() > 1e-6:
            raise DictionaryFormatError(f"{path}: orthogonal flag set but columns are not orthonormal")
    return SparseDictionary(
        features=feats,
        orthogonal=orthogonal,
        mean=mean,
        provenance="pca_ica" if orthogonal else "external",
    )
