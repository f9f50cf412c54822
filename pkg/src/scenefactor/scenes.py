"""Random scene and moving-object video generation with full ground truth."""

import json
from dataclasses import dataclass, asdict

import numpy as np

from .mnist import DigitSet
from . import vfa

# the seven nonzero {0,1}^3 corners; columns of the 3 x 7 palette
COLOR_NAMES = ("red", "green", "blue", "yellow", "magenta", "cyan", "white")
PALETTE = np.array(
    [
        [1, 0, 0, 1, 1, 0, 1],
        [0, 1, 0, 1, 0, 1, 1],
        [0, 0, 1, 0, 1, 1, 1],
    ],
    dtype=np.float64,
)

DIGIT_SIDE = 28
HALF = DIGIT_SIDE // 2


@dataclass
class TrajectorySpec:
    """Per-object motion: straight (velocity) or arc/circular (center, radius, rate).

    Parameters are chosen so position(0) equals the object's static (x, y).
    """

    kind: str  # straight | arc | circular
    vx: float = 0.0
    vy: float = 0.0
    cx: float = 0.0
    cy: float = 0.0
    radius: float = 0.0
    rate: float = 0.0  # rad / frame
    phase: float = 0.0

    def position(self, t: float) -> tuple:
        if self.kind == "straight":
            return self.cx + self.vx * t, self.cy + self.vy * t
        ang = self.phase + self.rate * t
        return self.cx + self.radius * np.cos(ang), self.cy + self.radius * np.sin(ang)

    @property
    def speed(self) -> float:
        if self.kind == "straight":
            return float(np.hypot(self.vx, self.vy))
        return float(abs(self.radius * self.rate))


@dataclass
class SceneObject:
    digit_index: int
    label: int
    color_index: int
    x: int
    y: int
    trajectory: TrajectorySpec | None = None


@dataclass
class SceneSpec:
    objects: list
    canvas: tuple
    seed: int
    split: str = "test"


def _place(canvas_img: np.ndarray, digit: np.ndarray, color: np.ndarray, x: int, y: int):
    """Max-composite a 28x28 digit whose block center sits at (x, y), torus wrap."""
    h, w = canvas_img.shape[:2]
    block = np.zeros((h, w))
    block[:DIGIT_SIDE, :DIGIT_SIDE] = digit
    block = np.roll(block, (int(y) - HALF, int(x) - HALF), axis=(0, 1))
    np.maximum(canvas_img, block[:, :, None] * color[None, None, :], out=canvas_img)


def render_scene(spec: SceneSpec, digits: DigitSet, palette: np.ndarray = PALETTE) -> np.ndarray:
    """Static (H, W, 3) rendering at the objects' own positions."""
    w, h = spec.canvas
    img = np.zeros((h, w, 3))
    for obj in spec.objects:
        digit = digits.images[obj.digit_index].reshape(DIGIT_SIDE, DIGIT_SIDE)
        _place(img, digit, palette[:, obj.color_index], obj.x, obj.y)
    return img


def random_scene(
    digits: DigitSet,
    palette: np.ndarray,
    n_objects: int,
    canvas: tuple,
    seed: int,
    trajectories: bool = False,
    speed_range: tuple = (0.5, 2.0),
) -> tuple:
    """Random digits, colors, positions (and optionally trajectories) plus the render.

    Deterministic per seed.  The source split is recorded on the SceneSpec;
    evaluation paths insist on "test".
    """
    if n_objects < 1:
        raise ValueError("n_objects must be >= 1")
    w, h = canvas
    rng = np.random.default_rng(seed)
    objects = []
    for _ in range(n_objects):
        idx = int(rng.integers(len(digits)))
        color = int(rng.integers(palette.shape[1]))
        x = int(rng.integers(w))
        y = int(rng.integers(h))
        traj = _random_trajectory(rng, x, y, speed_range) if trajectories else None
        objects.append(
            SceneObject(
                digit_index=idx,
                label=int(digits.labels[idx]),
                color_index=color,
                x=x,
                y=y,
                trajectory=traj,
            )
        )
    spec = SceneSpec(objects=objects, canvas=(w, h), seed=seed, split=digits.split)
    return spec, render_scene(spec, digits, palette)


def _random_trajectory(rng, x: int, y: int, speed_range: tuple) -> TrajectorySpec:
    kind = ("straight", "arc", "circular")[rng.integers(3)]
    speed = rng.uniform(*speed_range)
    if kind == "straight":
        ang = rng.uniform(0, 2 * np.pi)
        return TrajectorySpec(
            kind=kind, vx=speed * np.cos(ang), vy=speed * np.sin(ang), cx=x, cy=y
        )
    # arc: wide slow bend; circular: full loops of a smaller circle
    radius = rng.uniform(25.0, 60.0) if kind == "arc" else rng.uniform(6.0, 18.0)
    rate = speed / radius * (1 if rng.random() < 0.5 else -1)
    phase = rng.uniform(0, 2 * np.pi)
    return TrajectorySpec(
        kind=kind,
        cx=x - radius * np.cos(phase),
        cy=y - radius * np.sin(phase),
        radius=radius,
        rate=rate,
        phase=phase,
    )


def ground_truth(spec: SceneSpec, t: float) -> list:
    """Float (label, color_index, x, y) per object at frame t, wrapped to the canvas."""
    w, h = spec.canvas
    out = []
    for obj in spec.objects:
        if obj.trajectory is None:
            fx, fy = float(obj.x), float(obj.y)
        else:
            fx, fy = obj.trajectory.position(t)
        out.append((obj.label, obj.color_index, fx % w, fy % h))
    return out


def render_frame(
    spec: SceneSpec, digits: DigitSet, t: float, palette: np.ndarray = PALETTE
) -> np.ndarray:
    """Frame t with positions advanced, rounded to pixels, wrapped."""
    w, h = spec.canvas
    img = np.zeros((h, w, 3))
    for obj in spec.objects:
        if obj.trajectory is None:
            raise ValueError("render_frame requires trajectories on every object")
        fx, fy = obj.trajectory.position(t)
        digit = digits.images[obj.digit_index].reshape(DIGIT_SIDE, DIGIT_SIDE)
        _place(
            img,
            digit,
            palette[:, obj.color_index],
            int(np.rint(fx)) % w,
            int(np.rint(fy)) % h,
        )
    return img


def encode_single_object(
    basis: vfa.VfaBasis,
    digit: np.ndarray,
    color: np.ndarray,
    x: int,
    y: int,
    placement: np.ndarray | None = None,
) -> np.ndarray:
    """Scene vector of one colored digit at (x, y) via the equivariance shortcut.

    Exact (to rounding) for single-object scenes, where max-composition onto a
    black canvas is linear.  `placement` takes a precomputed
    feature_placement_matrix to amortize repeated encodes.
    """
    if placement is None:
        placement = vfa.feature_placement_matrix(basis, DIGIT_SIDE)
    w, h = basis.canvas
    centered = placement @ np.asarray(digit, dtype=np.float64).reshape(-1)
    shift = vfa.index_vector(basis, (int(x) - w // 2) % w, (int(y) - h // 2) % h)
    color_vec = basis.color_vectors @ np.asarray(color, dtype=np.float64)
    return centered * shift * color_vec


def write_ppm(path, image: np.ndarray):
    """P6 binary PPM, maxval 255; image is (H, W, 3) floats in [0, 1]."""
    img8 = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = img8.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(img8.tobytes())


def write_pgm(path, image: np.ndarray):
    """P5 binary PGM for grayscale reconstructions."""
    img8 = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = img8.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(img8.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        if f.readline().strip() != b"P6":
            raise ValueError("not a P6 PPM")
        w, h = map(int, f.readline().split())
        maxval = int(f.readline())
        data = np.frombuffer(f.read(w * h * 3), dtype=np.uint8)
    return data.reshape(h, w, 3).astype(np.float64) / maxval


def write_ground_truth_jsonl(path, spec: SceneSpec, n_frames: int):
    """One record per object per frame: frame, object, label, color, float x/y."""
    with open(path, "w") as f:
        for t in range(n_frames):
            for i, (label, color, fx, fy) in enumerate(ground_truth(spec, t)):
                rec = {
                    "frame": t,
                    "object": i,
                    "label": int(label),
                    "color_index": int(color),
                    "color": COLOR_NAMES[color],
                    "x": float(fx),
                    "y": float(fy),
                }
                f.write(json.dumps(rec, sort_keys=True) + "\n")


def scene_to_json(spec: SceneSpec) -> dict:
    d = asdict(spec)
    d["canvas"] = list(spec.canvas)
    return d
