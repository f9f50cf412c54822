"""Phasor vector encoding of images and the codebooks the resonator decodes against.

Positions are represented by elementwise integer powers of two random base
vectors whose phases are W-th / H-th roots of unity, so translation wraps
around the canvas exactly like a torus and the equivariance identity
encode(shift(Im)) == encode(Im) * h^dx * v^dy holds to float rounding.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

BASIS_MAGIC = b"RSVFA01"


@dataclass
class VfaBasis:
    n: int
    canvas: tuple
    seed: int
    h_base: np.ndarray
    v_base: np.ndarray
    color_vectors: np.ndarray  # (n, 3)
    # integer exponents of the roots of unity; powers are computed by modular
    # arithmetic on these, which keeps the torus exact
    h_exp: np.ndarray = field(repr=False)
    v_exp: np.ndarray = field(repr=False)
    roots_w: np.ndarray = field(repr=False)
    roots_h: np.ndarray = field(repr=False)

    @property
    def width(self) -> int:
        return self.canvas[0]

    @property
    def height(self) -> int:
        return self.canvas[1]


def make_basis(n: int, canvas: tuple, seed: int) -> VfaBasis:
    """Random phasor basis with torus-exact position phases, deterministic per seed."""
    w, h = canvas
    if n < 1 or w < 1 or h < 1:
        raise ValueError("n and canvas dims must be >= 1")
    rng = np.random.default_rng(seed)
    h_exp = rng.integers(0, w, size=n)
    v_exp = rng.integers(0, h, size=n)
    color_phase = rng.uniform(0.0, 2.0 * np.pi, size=(n, 3))
    roots_w = np.exp(2j * np.pi * np.arange(w) / w)
    roots_h = np.exp(2j * np.pi * np.arange(h) / h)
    return VfaBasis(
        n=n,
        canvas=(w, h),
        seed=seed,
        h_base=roots_w[h_exp],
        v_base=roots_h[v_exp],
        color_vectors=np.exp(1j * color_phase),
        h_exp=h_exp,
        v_exp=v_exp,
        roots_w=roots_w,
        roots_h=roots_h,
    )


def h_power(basis: VfaBasis, x: int) -> np.ndarray:
    """h_base^x, exact for any integer via modular exponent arithmetic."""
    return basis.roots_w[(basis.h_exp * int(x)) % basis.width]

def v_power(basis: VfaBasis, y: int) -> np.ndarray:
    return basis.roots_h[(basis.v_exp * int(y)) % basis.height]


def index_vector(basis: VfaBasis, x: int, y: int) -> np.ndarray:
    """Position vector h^x * v^y; wraps mod (W, H)."""
    return h_power(basis, x) * v_power(basis, y)


def bind(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise (Hadamard) product."""
    if a.shape[0] != b.shape[0]:
        raise ValueError("vector length mismatch")
    return a * b


def unbind(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """a * conj(b); inverts bind when b is unit modulus."""
    if a.shape[0] != b.shape[0]:
        raise ValueError("vector length mismatch")
    return a * np.conj(b)


def position_matrices(basis: VfaBasis) -> tuple:
    """(n, W) and (n, H) matrices of all horizontal/vertical powers, exact."""
    w, h = basis.canvas
    ph = basis.roots_w[(basis.h_exp[:, None] * np.arange(w)[None, :]) % w]
    pv = basis.roots_h[(basis.v_exp[:, None] * np.arange(h)[None, :]) % h]
    return ph, pv


def encode_gray(basis: VfaBasis, image: np.ndarray) -> np.ndarray:
    """Weighted superposition of index vectors; image is (H, W) with image[y, x]."""
    w, h = basis.canvas
    image = np.asarray(image, dtype=np.float64)
    if image.shape != (h, w):
        raise ValueError(f"image shape {image.shape} does not match canvas (H,W)=({h},{w})")
    ph, pv = position_matrices(basis)
    return ((ph @ image.T) * pv).sum(axis=1)


def encode_rgb(basis: VfaBasis, image: np.ndarray) -> np.ndarray:
    """Color scene vector: sum over channels of encode_gray(channel) * G_c."""
    w, h = basis.canvas
    image = np.asarray(image, dtype=np.float64)
    if image.shape != (h, w, 3):
        raise ValueError(f"image shape {image.shape} does not match canvas (H,W,3)=({h},{w},3)")
    s = np.zeros(basis.n, dtype=np.complex128)
    for c in range(3):
        if image[:, :, c].any():
            s += basis.color_vectors[:, c] * encode_gray(basis, image[:, :, c])
    return s


@dataclass
class Codebook:
    """Atoms (n, M) for one factor of variation and the matching decode matrix.

    `gram` carries the exact feature-space overlap (FᵀF − I) for codebooks an
    LCA module may drive; None for position codebooks.
    """

    atoms: np.ndarray
    decode: np.ndarray
    kind: str  # position_h | position_v | shape | color
    whitened: bool
    gram: np.ndarray | None = None
    # encoded mean-object template; the shape module's search prior
    prior: np.ndarray | None = None


def decode_similarities(cb: Codebook, r: np.ndarray) -> np.ndarray:
    """Real part of decode @ r; the argmax is the factor readout."""
    return np.real(cb.decode @ r)


def feature_placement_matrix(basis: VfaBasis, side: int = 28) -> np.ndarray:
    """(n, side*side) index vectors of the canvas-centered side x side patch.

    Column p = y*side + x maps to h^(x+offx) * v^(y+offy); "centered" in this
    codebase always means this canonical placement.
    """
    w, h = basis.canvas
    if w < side or h < side:
        raise ValueError("canvas smaller than the feature patch")
    offx, offy = (w - side) // 2, (h - side) // 2
    ph, pv = position_matrices(basis)
    block = pv[:, offy : offy + side][:, :, None] * ph[:, offx : offx + side][:, None, :]
    return block.reshape(basis.n, side * side)


def build_codebooks(
    basis: VfaBasis,
    dictionary,
    palette: np.ndarray,
    whiten_colors: bool = True,
) -> dict:
    """Construct the four codebooks the resonator modules search over.

    Shape atoms are the dictionary features placed at the canvas center and
    encoded; decode is conj-transpose/n for an orthogonal dictionary, the
    Moore-Penrose pseudoinverse otherwise.  Color atoms mix the palette through
    the channel vectors with a pseudoinverse decode (whiten_colors) or a raw
    conj-transpose/n.  Position codebooks are the exact power matrices with
    conj-transpose/n decode.
    """
    palette = np.asarray(palette, dtype=np.float64)
    if palette.shape[0] != 3:
        raise ValueError("palette must be 3 x n_colors")
    feats = dictionary.features
    if feats.shape[0] != 784:
        raise ValueError("dictionary features must have 784 pixels")
    n = basis.n

    phi = feature_placement_matrix(basis, 28)
    shape_atoms = phi @ feats
    del phi
    if dictionary.orthogonal:
        shape_decode = shape_atoms.conj().T / n
    else:
        shape_decode = np.linalg.pinv(shape_atoms)
    k = feats.shape[1]
    # the dictionary-projected mean digit, encoded: a matched-filter prior that
    # gives the position modules usable gradients before shape locks on
    mean = getattr(dictionary, "mean", None)
    prior = shape_atoms @ (feats.T @ mean) if mean is not None else None
    shape_cb = Codebook(
        shape_atoms,
        shape_decode,
        "shape",
        whitened=dictionary.orthogonal,
        gram=feats.T @ feats - np.eye(k),
        prior=prior,
    )

    color_atoms = basis.color_vectors @ palette
    if whiten_colors:
        color_decode = np.linalg.pinv(color_atoms)
    else:
        color_decode = color_atoms.conj().T / n
    color_cb = Codebook(
        color_atoms,
        color_decode,
        "color",
        whitened=whiten_colors,
        gram=palette.T @ palette - np.eye(palette.shape[1]),
    )

    ph, pv = position_matrices(basis)
    pos_h = Codebook(ph, ph.conj().T / n, "position_h", whitened=False)
    pos_v = Codebook(pv, pv.conj().T / n, "position_v", whitened=False)
    return {"shape": shape_cb, "color": color_cb, "pos_h": pos_h, "pos_v": pos_v}


def save_basis(basis: VfaBasis, path):
    """RSVFA01 + u32 n, u32 W, u32 H, u64 seed; vectors regenerate from the seed."""
    with open(path, "wb") as f:
        f.write(BASIS_MAGIC)
        f.write(struct.pack("<IIIQ", basis.n, basis.width, basis.height, basis.seed))


def load_basis(path) -> VfaBasis:
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < 27 or buf[:7] != BASIS_MAGIC:
        raise ValueError(f"{path}: not a basis file")
    n, w, h, seed = struct.unpack_from("<IIIQ", buf, 7)
    return make_basis(n, (w, h), seed)
