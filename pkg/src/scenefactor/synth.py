"""Font-rendered digit corpus for environments without the canonical MNIST files.

Digits are rasterized from the TTF fonts shipped with the OS / matplotlib,
pushed through random affine + elastic distortions, size-normalized to a
~20 px box and centered by center of mass in a 28x28 field -- the same
conventions the canonical files follow -- then written to IDX files so the
rest of the pipeline cannot tell the difference.
"""

import glob
import os

import numpy as np
from PIL import Image, ImageDraw, ImageFilter, ImageFont
from scipy import ndimage

from . import mnist

_FONT_DIRS = [
    "/usr/share/fonts/truetype/dejavu",
]


def _matplotlib_font_dir():
    try:
        import matplotlib
    except ImportError:
        return None
    return os.path.join(os.path.dirname(matplotlib.__file__), "mpl-data", "fonts", "ttf")


_FONT_ALLOW = (
    "DejaVuSans",
    "DejaVuSerif",
    "DejaVuSansMono",
    "STIXGeneral",
    "cmr10",
    "cmb10",
    "cmss10",
    "cmtt10",
)


def available_fonts() -> list:
    """TTF paths usable for digit glyphs, deterministic order."""
    dirs = list(_FONT_DIRS)
    mpl = _matplotlib_font_dir()
    if mpl:
        dirs.append(mpl)
    paths = []
    for d in dirs:
        if not os.path.isdir(d):
            continue
        for p in sorted(glob.glob(os.path.join(d, "*.ttf"))):
            base = os.path.basename(p)
            if any(base.startswith(a) for a in _FONT_ALLOW):
                paths.append(p)
    # same family may exist in both dirs; keep first occurrence by basename
    seen, unique = set(), []
    for p in paths:
        b = os.path.basename(p)
        if b not in seen:
            seen.add(b)
            unique.append(p)
    if not unique:
        raise RuntimeError("no usable TTF fonts found for digit synthesis")
    return unique


_BIG = 96  # oversampled render size before normalization


def _elastic(img: np.ndarray, rng, alpha: float, sigma: float) -> np.ndarray:
    """Smooth random displacement field, the classic handwriting-style warp."""
    dx = ndimage.gaussian_filter(rng.uniform(-1, 1, img.shape), sigma) * alpha
    dy = ndimage.gaussian_filter(rng.uniform(-1, 1, img.shape), sigma) * alpha
    yy, xx = np.meshgrid(np.arange(img.shape[0]), np.arange(img.shape[1]), indexing="ij")
    return ndimage.map_coordinates(img, [yy + dy, xx + dx], order=1, mode="constant")


def render_digit(digit: int, rng: np.random.Generator, fonts: list) -> np.ndarray:
    """One 28x28 float image in [0, 1] of `digit`, randomly styled."""
    font_path = fonts[rng.integers(len(fonts))]
    font = ImageFont.truetype(font_path, int(rng.integers(48, 64)))

    img = Image.new("L", (_BIG, _BIG), 0)
    draw = ImageDraw.Draw(img)
    draw.text((_BIG // 2, _BIG // 2), str(digit), fill=255, font=font, anchor="mm")

    # stroke thickness jitter
    r = rng.random()
    if r < 0.30:
        img = img.filter(ImageFilter.MaxFilter(3))
    elif r < 0.50:
        img = img.filter(ImageFilter.MinFilter(3))

    # rotation + shear about the glyph center
    theta = np.deg2rad(rng.uniform(-20.0, 20.0))
    shear = rng.uniform(-0.40, 0.40)
    ct, st = np.cos(theta), np.sin(theta)
    a, b = ct + shear * st, st  # inverse-map coefficients for Image.transform
    c, d = -st + shear * ct, ct
    cx = cy = _BIG / 2
    img = img.transform(
        (_BIG, _BIG),
        Image.Transform.AFFINE,
        (a, c, cx - a * cx - c * cy, b, d, cy - b * cx - d * cy),
        resample=Image.Resampling.BILINEAR,
    )

    arr = np.asarray(img, dtype=np.float64) / 255.0
    arr = _elastic(arr, rng, alpha=rng.uniform(8.0, 16.0), sigma=rng.uniform(4.0, 6.0))

    # size-normalize: bounding box of ink scaled to a ~20 px box
    ys, xs = np.nonzero(arr > 0.08)
    if len(ys) == 0:  # distortion wiped the glyph; retry with fresh randomness
        return render_digit(digit, rng, fonts)
    crop = arr[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]
    target = float(rng.uniform(16.0, 21.0))
    scale = target / max(crop.shape)
    new_hw = (max(1, round(crop.shape[1] * scale)), max(1, round(crop.shape[0] * scale)))
    crop_img = Image.fromarray((np.clip(crop, 0, 1) * 255).astype(np.uint8))
    crop = np.asarray(crop_img.resize(new_hw, Image.Resampling.BILINEAR), dtype=np.float64) / 255.0

    # center of mass to (14, 14), +- small jitter
    total = crop.sum()
    cy_m = (crop.sum(axis=1) @ np.arange(crop.shape[0])) / total
    cx_m = (crop.sum(axis=0) @ np.arange(crop.shape[1])) / total
    jitter = rng.uniform(-0.75, 0.75, 2)
    top = int(round(14 + jitter[0] - cy_m))
    left = int(round(14 + jitter[1] - cx_m))

    out = np.zeros((28, 28))
    y0, x0 = max(0, top), max(0, left)
    y1 = min(28, top + crop.shape[0])
    x1 = min(28, left + crop.shape[1])
    if y1 > y0 and x1 > x0:
        out[y0:y1, x0:x1] = crop[y0 - top : y1 - top, x0 - left : x1 - left]

    blur = rng.uniform(0.3, 0.65)
    out = ndimage.gaussian_filter(out, blur)
    peak = out.max()
    if peak < 0.2:
        return render_digit(digit, rng, fonts)
    out *= rng.uniform(0.85, 1.0) / peak
    return np.clip(out, 0.0, 1.0)


def make_split(n: int, seed: int, fonts=None) -> tuple:
    """Render n digits with balanced labels; returns (images (n,784), labels)."""
    fonts = fonts or available_fonts()
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 10
    rng.shuffle(labels)
    images = np.empty((n, 784))
    for i, lab in enumerate(labels):
        images[i] = render_digit(int(lab), rng, fonts).reshape(-1)
    return images, labels


def make_corpus(out_dir, n_train: int = 12000, n_test: int = 2000, seed: int = 0) -> dict:
    """Write a synthetic train/test corpus in canonical IDX layout.

    Train and test draw from disjoint RNG streams; the split isolation the
    pipeline relies on holds by construction.
    """
    os.makedirs(out_dir, exist_ok=True)
    fonts = available_fonts()
    tr_img, tr_lab = make_split(n_train, seed=seed, fonts=fonts)
    te_img, te_lab = make_split(n_test, seed=seed + 1, fonts=fonts)
    paths = {
        "train_images": os.path.join(out_dir, mnist.TRAIN_IMAGES),
        "train_labels": os.path.join(out_dir, mnist.TRAIN_LABELS),
        "test_images": os.path.join(out_dir, mnist.TEST_IMAGES),
        "test_labels": os.path.join(out_dir, mnist.TEST_LABELS),
    }
    mnist.write_idx_images(paths["train_images"], tr_img)
    mnist.write_idx_labels(paths["train_labels"], tr_lab)
    mnist.write_idx_images(paths["test_images"], te_img)
    mnist.write_idx_labels(paths["test_labels"], te_lab)
    return paths
