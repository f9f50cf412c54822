"""Locally-competitive-algorithm module: sparse inference for non-orthogonal codebooks.

The internal state u integrates the decoded drive minus lateral competition
proportional to dictionary overlap; the output x is the (two-sided) soft
threshold of u.  Fixed points coincide with lasso stationary points of the
driven subproblem, which is what the oracle tests pin down.
"""

from dataclasses import dataclass, replace

import numpy as np


@dataclass
class LcaState:
    u: np.ndarray  # (K,) or (K, B) internal state
    x: np.ndarray  # thresholded output coefficients, same shape
    lam: float
    delta: float
    gram: np.ndarray  # (K, K), Re(overlap) - I
    nonneg: bool = False


def gram_from_features(features: np.ndarray) -> np.ndarray:
    """F^T F - I; exact feature-space version of the codebook overlap."""
    k = features.shape[1]
    return features.T @ features - np.eye(k)


def gram_from_atoms(atoms: np.ndarray) -> np.ndarray:
    """Re(A^H A)/n - I for codebooks without an underlying pixel dictionary."""
    n, k = atoms.shape
    return np.real(atoms.conj().T @ atoms) / n - np.eye(k)


def make_state(gram: np.ndarray, lam: float, delta: float, n_lanes: int = 1, nonneg: bool = False) -> LcaState:
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must be in (0, 1)")
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    k = gram.shape[0]
    shape = (k,) if n_lanes == 1 else (k, n_lanes)
    return LcaState(
        u=np.zeros(shape), x=np.zeros(shape), lam=lam, delta=delta, gram=gram, nonneg=nonneg
    )


def soft_threshold(u: np.ndarray, lam: float, nonneg: bool = False) -> np.ndarray:
    """Zero below threshold, shrunk-linear above; two-sided unless nonneg."""
    if nonneg:
        return np.maximum(u - lam, 0.0)
    return np.sign(u) * np.maximum(np.abs(u) - lam, 0.0)


def lca_update(state: LcaState, drive: np.ndarray) -> LcaState:
    """One Euler step of the competitive dynamics under a real-valued drive."""
    u = (1.0 - state.delta) * state.u + state.delta * (drive - state.gram @ state.x)
    x = soft_threshold(u, state.lam, state.nonneg)
    return replace(state, u=u, x=x)


def lca_step(state: LcaState, s: np.ndarray, others: np.ndarray, codebook) -> tuple:
    """Resonator-facing step: drive decoded from the scene against the other
    modules' bound estimates, then one lca_update; returns (state, d_hat).

    The drive uses the adjoint atoms^H/n, not the codebook's conventional
    decode: the competition term's scale (gram = F^T F - I) requires it, and
    it is what makes the fixed points lasso solutions.
    """
    n = codebook.atoms.shape[0]
    if s.shape[0] != n or others.shape[0] != n:
        raise ValueError("scene/estimate length does not match codebook")
    drive = np.real(codebook.atoms.conj().T @ (s * np.conj(others))) / n
    new = lca_update(state, drive)
    from .resonator import phasor_project  # shared zero-guarded f

    return new, phasor_project(codebook.atoms @ new.x)


def lca_fixed_point_residual(state: LcaState, drive: np.ndarray) -> float:
    """inf-norm of u - (drive - gram x); zero exactly at a fixed point."""
    return float(np.abs(state.u - (drive - state.gram @ state.x)).max())
