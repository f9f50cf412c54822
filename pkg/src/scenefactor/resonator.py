"""Four-module resonator dynamics with serial and parallel multi-object operation.

State arrays are (n, B) complex: column b is one network (or one independent
scene lane when the caller batches scenes for throughput).  All four module
updates read the time-t state and are applied simultaneously.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import lca as lca_mod
from .vfa import Codebook  # noqa: F401  (type of the codebooks dict values)

MODULES = ("color", "shape", "pos_v", "pos_h")
_ATTR = {"color": "c_hat", "shape": "d_hat", "pos_v": "v_hat", "pos_h": "h_hat"}
_CBKEY = {"color": "color", "shape": "shape", "pos_v": "pos_v", "pos_h": "pos_h"}

PHASOR_GUARD = 1e-12


class InsufficientHistoryError(ValueError):
    pass


@dataclass
class ResonatorConfig:
    f_mode: str = "phasor"  # phasor | l2norm
    g_mode: str = "identity"  # identity | signed_power (applies to shape/color)
    g_power: float = 3.0
    max_iters: int = 100
    convergence_window: int = 5
    convergence_tol: float = 1e-3
    n_parallel: int = 1
    # None resolves to 1.0 in serial mode, 0.5 in parallel mode
    explain_gain: float | None = None
    update_order: str = "jacobi"  # gauss_seidel available, excluded from acceptance
    shape_mode: str = "conventional"  # conventional | lca
    lca_lambda: float = 0.1
    lca_delta: float = 0.05
    lca_nonneg: bool = False
    # hysteresis: each estimate is the phase blend of its previous value and the
    # re-encoded update.  1.0 recovers the memoryless update, which two-cycles
    # on this task (the shape factor is continuous, so instantaneous re-fitting
    # lets position and shape chase each other indefinitely); a slow shape and
    # half-step positions/color damp the search into the correct attractor.
    mixing_rate: float = 0.5
    shape_mixing_rate: float = 0.1

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.g_mode == "signed_power" and self.g_power < 1:
            raise ValueError("g_power must be >= 1")
        if self.explain_gain is not None and not (0.0 < self.explain_gain <= 1.0):
            raise ValueError("explain_gain must be in (0, 1]")
        for eta in (self.mixing_rate, self.shape_mixing_rate):
            if not (0.0 < eta <= 1.0):
                raise ValueError("mixing rates must be in (0, 1]")


@dataclass
class ResonatorState:
    c_hat: np.ndarray  # color estimate, (n, B)
    d_hat: np.ndarray  # shape
    v_hat: np.ndarray  # vertical position
    h_hat: np.ndarray  # horizontal position
    iteration: int = 0
    converged: np.ndarray = field(default_factory=lambda: np.zeros(1, dtype=bool))
    history: list = field(default_factory=list)  # per-iter {module: real coeffs (M,B)}
    lca: lca_mod.LcaState | None = None

    @property
    def n_lanes(self) -> int:
        return self.c_hat.shape[1]

    def estimates(self) -> dict:
        return {m: getattr(self, _ATTR[m]) for m in MODULES}


def phasor_project(x: np.ndarray, guard: float = PHASOR_GUARD) -> np.ndarray:
    """x_i / |x_i| with entries below the guard mapped to 1+0i (f undefined at 0)."""
    mag = np.abs(x)
    out = np.divide(x, mag, out=np.ones_like(x), where=mag >= guard)
    return out


def _f(x: np.ndarray, mode: str) -> np.ndarray:
    if mode == "phasor":
        return phasor_project(x)
    if mode == "l2norm":
        norms = np.linalg.norm(x, axis=0, keepdims=True)
        return x / np.clip(norms, PHASOR_GUARD, None)
    raise ValueError(f"unknown f_mode {mode!r}")


def _g(coeff: np.ndarray, module: str, config: ResonatorConfig) -> np.ndarray:
    # sharpening applies to the categorical-ish modules; positions stay linear
    if config.g_mode == "signed_power" and module in ("shape", "color"):
        return coeff * np.abs(coeff) ** (config.g_power - 1.0)
    return coeff


def init_state(
    basis,
    codebooks: dict,
    seed,
    n_lanes: int = 1,
    lane_seeds: list | None = None,
    config: ResonatorConfig | None = None,
) -> ResonatorState:
    """Each estimate starts at f(sum of all codebook atoms + random unit phasors).

    Per-lane randomness comes from seeds derived as (seed, lane) unless
    lane_seeds overrides them (e.g. to force identical lanes).
    """
    n = codebooks["shape"].atoms.shape[0]
    if basis is not None and basis.n != n:
        raise ValueError("basis dimension does not match codebooks")
    if lane_seeds is None:
        lane_seeds = [(seed, lane) for lane in range(n_lanes)]
    if len(lane_seeds) != n_lanes:
        raise ValueError("lane_seeds length must equal n_lanes")

    est = {}
    for m in MODULES:
        cb = codebooks[_CBKEY[m]]
        base = cb.atoms.sum(axis=1)
        if m == "shape" and cb.prior is not None and np.linalg.norm(cb.prior) > 1e-9:
            # the mean-object template; a plain atom sum of signed features has
            # no usable spatial structure for the position modules to match
            base = cb.prior
        cols = np.empty((n, n_lanes), dtype=np.complex128)
        for lane, ls in enumerate(lane_seeds):
            rng = np.random.default_rng(ls)
            noise = np.exp(2j * np.pi * rng.random(n))
            cols[:, lane] = base + noise
        est[m] = phasor_project(cols)

    state = ResonatorState(
        c_hat=est["color"],
        d_hat=est["shape"],
        v_hat=est["pos_v"],
        h_hat=est["pos_h"],
        converged=np.zeros(n_lanes, dtype=bool),
    )
    if config is not None and config.shape_mode == "lca":
        cb = codebooks["shape"]
        gram = cb.gram if getattr(cb, "gram", None) is not None else lca_mod.gram_from_atoms(cb.atoms)
        state.lca = lca_mod.make_state(
            gram, config.lca_lambda, config.lca_delta, n_lanes=n_lanes, nonneg=config.lca_nonneg
        )
        # shape coefficients start at zero; d_hat's random init still breaks
        # symmetry.  Internal lane convention is always 2-D.
        if state.lca.u.ndim == 1:
            state.lca.u = state.lca.u[:, None]
            state.lca.x = state.lca.x[:, None]
    return state


def _as_lanes(s: np.ndarray, n_lanes: int) -> np.ndarray:
    if s.ndim == 1:
        return s[:, None]
    if s.shape[1] not in (1, n_lanes):
        raise ValueError("scene vector lane count mismatch")
    return s


def step(state: ResonatorState, s: np.ndarray, codebooks: dict, config: ResonatorConfig) -> ResonatorState:
    """One update of all four modules.

    Each module unbinds the other three time-t estimates from the scene
    vector, decodes against its codebook, applies g, re-encodes, applies f.
    Jacobi order: the four new estimates are computed from the time-t state
    and swapped in together.
    """
    sv = _as_lanes(s, state.n_lanes)
    jacobi = config.update_order == "jacobi"
    cur = {m: getattr(state, _ATTR[m]) for m in MODULES}
    new = dict(cur) if not jacobi else {}
    src = cur if jacobi else new  # gauss_seidel reads freshly written estimates
    coeffs_hist = {}
    new_lca = state.lca

    for m in MODULES:
        others = [o for o in MODULES if o != m]
        prod = src[others[0]] * src[others[1]] * src[others[2]]
        r = sv * np.conj(prod)
        cb = codebooks[_CBKEY[m]]
        if m == "shape" and config.shape_mode == "lca":
            new_lca, d_hat = lca_mod.lca_step(new_lca, sv, prod, cb)
            # below-threshold lanes have Dx = 0; keep the search prior alive there
            dead = np.abs(new_lca.x).sum(axis=0) == 0
            if dead.any():
                d_hat = d_hat.copy()
                d_hat[:, dead] = cur[m][:, dead]
            new[m] = d_hat
            coeffs_hist[m] = new_lca.x.copy()
        else:
            coeff = cb.decode @ r
            enc = _f(cb.atoms @ _g(coeff, m, config), config.f_mode)
            eta = config.shape_mixing_rate if m == "shape" else config.mixing_rate
            if eta < 1.0:
                enc = _f((1.0 - eta) * cur[m] + eta * enc, config.f_mode)
            new[m] = enc
            coeffs_hist[m] = np.real(coeff)

    out = replace(
        state,
        c_hat=new["color"],
        d_hat=new["shape"],
        v_hat=new["pos_v"],
        h_hat=new["pos_h"],
        iteration=state.iteration + 1,
        history=state.history + [coeffs_hist],
        lca=new_lca,
    )
    return out


def detect_convergence(state: ResonatorState, window: int, tol: float) -> np.ndarray:
    """Per-lane: every module's coefficient argmax constant over the last
    `window` iterations and successive shape-coefficient cosines >= 1 - tol."""
    if len(state.history) < window:
        raise InsufficientHistoryError(
            f"need {window} iterations of history, have {len(state.history)}"
        )
    recent = state.history[-window:]
    ok = np.ones(state.n_lanes, dtype=bool)
    for m in MODULES:
        args = np.stack([snap[m].argmax(axis=0) for snap in recent])  # (window, B)
        ok &= (args == args[0]).all(axis=0)
    for a, b in zip(recent[:-1], recent[1:]):
        ok &= _cosine(a["shape"], b["shape"]) >= 1.0 - tol
    return ok


def _cosine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    num = (a * b).sum(axis=0)
    den = np.linalg.norm(a, axis=0) * np.linalg.norm(b, axis=0)
    return num / np.clip(den, 1e-300, None)


def factor_argmaxes(state: ResonatorState, codebooks: dict) -> dict:
    """Current argmax per module, decoded straight from the estimates, (B,) each."""
    out = {}
    for m in MODULES:
        cb = codebooks[_CBKEY[m]]
        sims = np.real(cb.decode @ getattr(state, _ATTR[m]))
        out[m] = sims.argmax(axis=0)
    return out


def explanations(state: ResonatorState, s: np.ndarray, codebooks: dict) -> np.ndarray:
    """Amplitude-preserving per-lane scene explanations (n, B).

    Color and positions snap to their argmax atoms; shape keeps the continuous
    coefficients decoded from the scene against the snapped bound product, so
    subtracting the result removes the explained object's actual contribution.
    """
    sv = _as_lanes(s, state.n_lanes)
    am = factor_argmaxes(state, codebooks)
    # color atoms mix channels additively and are not unit modulus; snapping to
    # their phases keeps conj(snap)*snap == 1 so the subtraction cannot overshoot
    snap = (
        phasor_project(codebooks["color"].atoms[:, am["color"]])
        * codebooks["pos_v"].atoms[:, am["pos_v"]]
        * codebooks["pos_h"].atoms[:, am["pos_h"]]
    )
    shape_cb = codebooks["shape"]
    xhat = shape_cb.decode @ (sv * np.conj(snap))
    return (shape_cb.atoms @ xhat) * snap


@dataclass
class RunInfo:
    """Per-lane outcome of a run: convergence flags, iteration of convergence,
    and the coefficient snapshots taken at that moment (final state if never)."""

    converged: np.ndarray  # (B,)
    iterations: np.ndarray  # (B,)
    coeffs: dict  # module -> (M, B) real coefficients at snapshot time
    argmaxes: dict  # module -> (B,) int


def _snapshot(info: RunInfo, state: ResonatorState, lanes: np.ndarray):
    last = state.history[-1]
    for m in MODULES:
        info.coeffs[m][:, lanes] = last[m][:, lanes]
        info.argmaxes[m][lanes] = last[m][:, lanes].argmax(axis=0)
    info.iterations[lanes] = state.iteration


def run(
    s: np.ndarray,
    codebooks: dict,
    config: ResonatorConfig,
    seed,
    n_lanes: int = 1,
    basis=None,
    lane_seeds: list | None = None,
    state: ResonatorState | None = None,
) -> tuple:
    """Iterate until every lane converges or max_iters; returns (state, RunInfo)."""
    if state is None:
        state = init_state(basis, codebooks, seed, n_lanes=n_lanes, lane_seeds=lane_seeds, config=config)
    n_lanes = state.n_lanes
    info = RunInfo(
        converged=np.zeros(n_lanes, dtype=bool),
        iterations=np.full(n_lanes, -1),
        coeffs={m: np.zeros((codebooks[_CBKEY[m]].atoms.shape[1], n_lanes)) for m in MODULES},
        argmaxes={m: np.zeros(n_lanes, dtype=int) for m in MODULES},
    )
    for _ in range(config.max_iters):
        state = step(state, s, codebooks, config)
        if len(state.history) >= config.convergence_window:
            now = detect_convergence(state, config.convergence_window, config.convergence_tol)
            newly = now & ~info.converged
            if newly.any():
                _snapshot(info, state, np.nonzero(newly)[0])
                info.converged |= newly
            if info.converged.all():
                break
    never = ~info.converged
    if never.any():
        _snapshot(info, state, np.nonzero(never)[0])
        info.iterations[never] = state.iteration
    state.converged = info.converged.copy()
    return state, info


def run_serial(
    s: np.ndarray,
    codebooks: dict,
    config: ResonatorConfig,
    n_objects: int,
    seed,
    basis=None,
) -> list:
    """Factorize objects one at a time, explaining each away from the working
    scene vector after it converges.  Returns [(state, RunInfo), ...]."""
    if n_objects < 1:
        raise ValueError("n_objects must be >= 1")
    gain = 1.0 if config.explain_gain is None else config.explain_gain
    working = np.array(s, dtype=np.complex128, copy=True)
    results = []
    for i in range(n_objects):
        st, info = run(working, codebooks, config, seed=(seed, i), n_lanes=1, basis=basis)
        results.append((st, info))
        expl = explanations(st, working, codebooks)
        working = working - gain * expl[:, 0]
    return results


def parallel_step(
    state: ResonatorState,
    s: np.ndarray,
    codebooks: dict,
    config: ResonatorConfig,
    gain: float,
) -> ResonatorState:
    """One lock-step update of B networks, each seeing the scene minus the
    other networks' current explanations."""
    sv = _as_lanes(s, state.n_lanes)
    if state.n_lanes > 1 and gain > 0.0:
        expl = explanations(state, sv, codebooks)
        total = expl.sum(axis=1, keepdims=True)
        sv = sv - gain * (total - expl)
    return step(state, sv, codebooks, config)


def run_parallel(
    s: np.ndarray,
    codebooks: dict,
    config: ResonatorConfig,
    n_networks: int,
    seed,
    basis=None,
    lane_seeds: list | None = None,
) -> tuple:
    """n_networks resonators advance in lock-step, exchanging explanations every
    iteration; distinct per-network seeds unless lane_seeds says otherwise."""
    if n_networks < 1:
        raise ValueError("n_networks must be >= 1")
    gain = 0.5 if config.explain_gain is None else config.explain_gain
    state = init_state(basis, codebooks, seed, n_lanes=n_networks, lane_seeds=lane_seeds, config=config)
    info = RunInfo(
        converged=np.zeros(n_networks, dtype=bool),
        iterations=np.full(n_networks, -1),
        coeffs={m: np.zeros((codebooks[_CBKEY[m]].atoms.shape[1], n_networks)) for m in MODULES},
        argmaxes={m: np.zeros(n_networks, dtype=int) for m in MODULES},
    )
    for _ in range(config.max_iters):
        state = parallel_step(state, s, codebooks, config, gain)
        if len(state.history) >= config.convergence_window:
            now = detect_convergence(state, config.convergence_window, config.convergence_tol)
            newly = now & ~info.converged
            if newly.any():
                _snapshot(info, state, np.nonzero(newly)[0])
                info.converged |= newly
            if info.converged.all():
                break
    never = ~info.converged
    if never.any():
        _snapshot(info, state, np.nonzero(never)[0])
        info.iterations[never] = state.iteration
    state.converged = info.converged.copy()
    return state, info


def decoded_position(argmax_h: int, argmax_v: int, canvas: tuple) -> tuple:
    """Map position-module argmaxes (shifts relative to the canvas-centered
    placement) to absolute block-center pixel coordinates."""
    w, h = canvas
    return (int(argmax_h) + w // 2) % w, (int(argmax_v) + h // 2) % h


def profile_peak(profile: np.ndarray, size: int, halfwin: int = 3) -> int:
    """Peak of a circular similarity profile: argmax refined by the local
    center of mass.  The raw argmax sits up to a few px off the profile's
    mass when the shape estimate is imperfect; the local-mass estimate is
    what position readouts use throughout."""
    c = int(profile.argmax())
    offs = np.arange(-halfwin, halfwin + 1)
    w = np.clip(profile[(offs + c) % size], 0.0, None)
    return int(np.rint(c + (offs @ w) / max(w.sum(), 1e-12))) % size


def readout_positions(info: "RunInfo", canvas: tuple) -> np.ndarray:
    """(B, 2) integer block-center positions from a run's coefficient snapshots."""
    w, h = canvas
    out = np.empty((info.converged.shape[0], 2), dtype=int)
    for lane in range(out.shape[0]):
        dx = profile_peak(info.coeffs["pos_h"][:, lane], w)
        dy = profile_peak(info.coeffs["pos_v"][:, lane], h)
        out[lane, 0] = (dx + w // 2) % w
        out[lane, 1] = (dy + h // 2) % h
    return out


def write_waterfall_csv(path, history: list, lane: int = 0):
    """Fig-1B-style dump: iteration, module, coefficient index, real similarity."""
    with open(path, "w") as f:
        f.write("iteration,module,coefficient,similarity\n")
        for it, snap in enumerate(history):
            for m in MODULES:
                col = snap[m][:, lane]
                for j, val in enumerate(col):
                    f.write(f"{it},{m},{j},{val:.17g}\n")
