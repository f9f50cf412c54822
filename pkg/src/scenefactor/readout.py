"""Shape reconstruction, the translation/color-invariant linear classifier, and
the scene-level evaluation harness built on batched resonator runs."""

import struct
from dataclasses import dataclass

import numpy as np

from . import resonator as rn
from . import scenes as sc
from . import vfa

CLF_MAGIC = b"RSCLF01"


@dataclass
class Reconstruction:
    centered_image: np.ndarray  # (28, 28) in [0, 1]
    coefficients: np.ndarray  # (K,)
    converged: bool
    lane: int = 0


def shape_coefficients(state: rn.ResonatorState, codebooks: dict, lane: int = 0) -> np.ndarray:
    """Real shape coefficients of one lane: LCA output if present, else the
    decode of the current shape estimate."""
    if state.lca is not None:
        return np.asarray(state.lca.x)[:, lane].copy()
    cb = codebooks["shape"]
    return np.real(cb.decode @ state.d_hat[:, lane])


def reconstruct_from_coefficients(coeffs: np.ndarray, dictionary) -> np.ndarray:
    img = dictionary.mean + dictionary.features @ coeffs
    return np.clip(img, 0.0, 1.0).reshape(28, 28)


def reconstruct_shape(
    state: rn.ResonatorState, codebooks: dict, dictionary, lane: int = 0
) -> Reconstruction:
    """Centered, decolored object image: coefficients through the basis
    functions plus the training mean, clamped to [0, 1].  The 784-dim feature
    space is exactly the canvas-center 28x28 patch."""
    coeffs = shape_coefficients(state, codebooks, lane)
    img = reconstruct_from_coefficients(coeffs, dictionary)
    conv = bool(np.asarray(state.converged).reshape(-1)[lane])
    return Reconstruction(centered_image=img, coefficients=coeffs, converged=conv, lane=lane)


def reconstruct_scene(
    states: list,
    codebooks: dict,
    dictionary,
    palette: np.ndarray,
    canvas: tuple,
) -> np.ndarray:
    """Compose every state's centered reconstruction at its decoded position and
    color, per-channel max; empty input gives a black canvas."""
    w, h = canvas
    out = np.zeros((h, w, 3))
    for item in states:
        state, info = item if isinstance(item, tuple) else (item, None)
        for lane in range(state.n_lanes):
            rec = reconstruct_shape(state, codebooks, dictionary, lane)
            if info is not None:
                x, y = rn.readout_positions(info, canvas)[lane]
                color_idx = int(info.argmaxes["color"][lane])
            else:
                am = rn.factor_argmaxes(state, codebooks)
                x, y = rn.decoded_position(am["pos_h"][lane], am["pos_v"][lane], canvas)
                color_idx = int(am["color"][lane])
            sc._place(out, rec.centered_image, palette[:, color_idx], x, y)
    return out


@dataclass
class LinearClassifier:
    weights: np.ndarray  # (10, 785), bias last
    training_type: str  # original | reconstructed
    ridge: float


def train_classifier(
    images: np.ndarray,
    labels: np.ndarray,
    ridge: float | None = None,
    training_type: str = "original",
) -> LinearClassifier:
    """Closed-form ridge regression onto one-hot targets.

    The bias column is not penalized, so ridge -> inf degrades to the
    majority-class predictor rather than label 0.
    """
    x = np.asarray(images, dtype=np.float64).reshape(len(images), -1)
    labels = np.asarray(labels)
    n, d = x.shape
    if ridge is None:
        ridge = 1e-2 * n
    a = np.hstack([x, np.ones((n, 1))])
    targets = np.eye(10)[labels]
    gram = a.T @ a
    if ridge > 0:
        gram[np.arange(d), np.arange(d)] += ridge
    try:
        # cholesky doubles as the singularity check at ridge == 0
        chol = np.linalg.cholesky(gram)
        w = np.linalg.solve(chol.T, np.linalg.solve(chol, a.T @ targets))
    except np.linalg.LinAlgError:
        raise ValueError(
            "normal matrix is singular; pass ridge > 0 (e.g. the 1e-2*n default)"
        ) from None
    return LinearClassifier(weights=w.T, training_type=training_type, ridge=float(ridge))


def classify(clf: LinearClassifier, rec) -> tuple:
    """(label, scores); accepts a Reconstruction or a (28,28)/(784,) image.
    Ties break toward the lowest label index (argmax semantics)."""
    img = rec.centered_image if isinstance(rec, Reconstruction) else rec
    v = np.append(np.asarray(img, dtype=np.float64).reshape(-1), 1.0)
    scores = clf.weights @ v
    return int(np.argmax(scores)), scores


def save_classifier(clf: LinearClassifier, path):
    rows, cols = clf.weights.shape
    with open(path, "wb") as f:
        f.write(CLF_MAGIC)
        f.write(struct.pack("<II", rows, cols))
        f.write(np.ascontiguousarray(clf.weights, dtype="<f8").tobytes())


def load_classifier(path, training_type: str = "original", ridge: float = 0.0) -> LinearClassifier:
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < 15 or buf[:7] != CLF_MAGIC:
        raise ValueError(f"{path}: not a classifier file")
    rows, cols = struct.unpack_from("<II", buf, 7)
    need = 15 + 8 * rows * cols
    if len(buf) < need:
        raise ValueError(f"{path}: truncated")
    w = np.frombuffer(buf, dtype="<f8", count=rows * cols, offset=15).reshape(rows, cols).copy()
    return LinearClassifier(weights=w, training_type=training_type, ridge=ridge)


# ---------------------------------------------------------------------------
# batched single-object scene harness (classifier training data + evaluation)

@dataclass
class SceneFactorization:
    """Per-scene outcome of a batched single-object factorization run."""

    labels: np.ndarray  # true labels (B,)
    color_true: np.ndarray
    pos_true: np.ndarray  # (B, 2)
    converged: np.ndarray
    iterations: np.ndarray
    color_est: np.ndarray
    pos_est: np.ndarray  # (B, 2)
    shape_coeffs: np.ndarray  # (K, B)


def factorize_single_object_scenes(
    digits,
    dictionary,
    basis,
    codebooks: dict,
    config: rn.ResonatorConfig,
    n_scenes: int,
    scene_seed: int,
    run_seed: int,
    palette: np.ndarray = sc.PALETTE,
    batch: int = 256,
) -> SceneFactorization:
    """Generate n single-object scenes and factorize them as batched resonator
    lanes.  Scene vectors use the exact single-object encoding shortcut."""
    n = basis.n
    k = dictionary.k
    placement = vfa.feature_placement_matrix(basis, sc.DIGIT_SIDE)
    out = SceneFactorization(
        labels=np.zeros(n_scenes, dtype=int),
        color_true=np.zeros(n_scenes, dtype=int),
        pos_true=np.zeros((n_scenes, 2), dtype=int),
        converged=np.zeros(n_scenes, dtype=bool),
        iterations=np.zeros(n_scenes, dtype=int),
        color_est=np.zeros(n_scenes, dtype=int),
        pos_est=np.zeros((n_scenes, 2), dtype=int),
        shape_coeffs=np.zeros((k, n_scenes)),
    )
    for start in range(0, n_scenes, batch):
        stop = min(start + batch, n_scenes)
        lanes = stop - start
        svecs = np.empty((n, lanes), dtype=np.complex128)
        for i in range(lanes):
            spec, _ = sc.random_scene(
                digits, palette, 1, basis.canvas, seed=scene_seed + start + i
            )
            obj = spec.objects[0]
            digit = digits.images[obj.digit_index].reshape(sc.DIGIT_SIDE, sc.DIGIT_SIDE)
            svecs[:, i] = sc.encode_single_object(
                basis, digit, palette[:, obj.color_index], obj.x, obj.y, placement
            )
            out.labels[start + i] = obj.label
            out.color_true[start + i] = obj.color_index
            out.pos_true[start + i] = (obj.x, obj.y)
        _, info = rn.run(
            svecs, codebooks, config, seed=(run_seed, start), n_lanes=lanes, basis=basis
        )
        out.converged[start:stop] = info.converged
        out.iterations[start:stop] = info.iterations
        out.color_est[start:stop] = info.argmaxes["color"]
        out.pos_est[start:stop] = rn.readout_positions(info, basis.canvas)
        out.shape_coeffs[:, start:stop] = info.coeffs["shape"]
    return out


def reconstructions_from(fz: SceneFactorization, dictionary) -> np.ndarray:
    """(B, 784) clamped reconstructions of every factorized scene."""
    imgs = dictionary.mean[:, None] + dictionary.features @ fz.shape_coeffs
    return np.clip(imgs, 0.0, 1.0).T


def centered_training_images(digits) -> np.ndarray:
    """Raw centered digits; the "original" training mode's input."""
    return digits.images
