"""WMMSE quantities shared by all strategies.

SINR and rate with an SNR gap, MMSE receivers, MSE weights, and the
assembly of the per-user quadratic forms of the beamformer subproblem.
All functions are vectorized over users; `H` is (K, N, n) with n the total
antenna count, `w` is (K, n), and `q` an optional (n,) diagonal of
quantization noise powers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

_E_FLOOR = 1e-300


@dataclass
class BeamformerSet:
    """Network-wide transmit beamformers, one length-n vector per user.

    For the hybrid scheme `w` is the combined beamformer and `w_c`/`w_d`
    hold the compression and data-sharing parts with w = w_c + w_d.
    """

    w: np.ndarray
    w_c: Optional[np.ndarray] = None
    w_d: Optional[np.ndarray] = None


@dataclass
class ReceiverState:
    u: np.ndarray    # (K, N) receive vectors
    e: np.ndarray    # (K,) MSEs, in (0, 1] at the MMSE receiver
    rho: np.ndarray  # (K,) MSE weights, 1/e


def _rx_cross(H: np.ndarray, w: np.ndarray) -> np.ndarray:
    """x[k, j, :] = H_k w_j, the signal of beam j seen at user k."""
    return np.einsum("knm,jm->kjn", H, w)


def _noise_cov(H: np.ndarray, sigma2: float, q: Optional[np.ndarray]) -> np.ndarray:
    """sigma^2 I + H Q H^H per user, (K, N, N)."""
    K, N, _ = H.shape
    cov = np.broadcast_to(sigma2 * np.eye(N, dtype=np.complex128), (K, N, N)).copy()
    if q is not None:
        cov += np.einsum("knm,m,kpm->knp", H, q, H.conj())
    return cov


def compute_sinr(H_k: np.ndarray, w: np.ndarray, k: int, sigma2: float,
                 q: Optional[np.ndarray] = None) -> float:
    """SINR of user k (gap factor not included; it is applied in `rate`)."""
    H = np.asarray(H_k, dtype=np.complex128)
    if H.ndim == 1:
        H = H[None, :]
    if H.shape[1] != w.shape[1]:
        raise ValueError(f"H_k has {H.shape[1]} columns but beamformers have length {w.shape[1]}")
    # SINR_k depends on H_k and all beams, so broadcasting H_k over users is exact
    return float(sinr_all(np.broadcast_to(H, (w.shape[0],) + H.shape), w, sigma2, q)[k])


def sinr_all(H: np.ndarray, w: np.ndarray, sigma2: float,
             q: Optional[np.ndarray] = None) -> np.ndarray:
    """SINR of every user under beamformers `w` and quantization diagonal `q`."""
    x = _rx_cross(H, w)                      # (K, K, N)
    own = np.einsum("kkn->kn", x)            # (K, N)
    B = np.einsum("kjn,kjp->knp", x, x.conj())
    B -= own[:, :, None] * own.conj()[:, None, :]
    B += _noise_cov(H, sigma2, q)
    sol = np.linalg.solve(B, own[..., None])[..., 0]
    val = np.einsum("kn,kn->k", own.conj(), sol).real
    return np.maximum(val, 0.0)


def rate(sinr, gamma_m: float, bandwidth_hz: float) -> np.ndarray:
    """Achievable rate in bits/s with SNR gap `gamma_m` (linear, >= 1)."""
    return bandwidth_hz * np.log2(1.0 + np.asarray(sinr) / gamma_m)


def spectral_rates(sinr, gamma_m: float) -> np.ndarray:
    """Rates in bits per complex symbol (bits/s/Hz)."""
    return np.log2(1.0 + np.asarray(sinr) / gamma_m)


def mmse_receivers(H: np.ndarray, w: np.ndarray, sigma2: float, gamma_m: float,
                   q: Optional[np.ndarray] = None) -> ReceiverState:
    """MMSE receive vectors and the resulting per-user MSEs e in (0, 1]."""
    x = _rx_cross(H, w)
    own = np.einsum("kkn->kn", x)
    T = np.einsum("kjn,kjp->knp", x, x.conj()) + _noise_cov(H, sigma2, q)
    V = gamma_m * T + (1.0 - gamma_m) * (own[:, :, None] * own.conj()[:, None, :])
    u = np.linalg.solve(V, own[..., None])[..., 0]
    e = 1.0 - np.einsum("kn,kn->k", own.conj(), u).real
    e = np.clip(e, _E_FLOOR, 1.0)
    return ReceiverState(u=u, e=e, rho=1.0 / e)


def mmse_receiver(H_k: np.ndarray, w: np.ndarray, k: int, sigma2: float, gamma_m: float,
                  q: Optional[np.ndarray] = None) -> tuple[np.ndarray, float]:
    """Single-user view of `mmse_receivers` (returns u_k, e_k)."""
    H = np.asarray(H_k, dtype=np.complex128)
    if H.ndim == 1:
        H = H[None, :]
    st = mmse_receivers(np.broadcast_to(H, (w.shape[0],) + H.shape), w, sigma2, gamma_m, q)
    return st.u[k], float(st.e[k])


def mse_value(H: np.ndarray, w: np.ndarray, u: np.ndarray, sigma2: float, gamma_m: float,
              q: Optional[np.ndarray] = None) -> np.ndarray:
    """MSE of every user for arbitrary receivers u (not necessarily MMSE)."""
    x = _rx_cross(H, w)
    own = np.einsum("kkn->kn", x)
    T = np.einsum("kjn,kjp->knp", x, x.conj()) + _noise_cov(H, sigma2, q)
    V = gamma_m * T + (1.0 - gamma_m) * (own[:, :, None] * own.conj()[:, None, :])
    quad = np.einsum("kn,knp,kp->k", u.conj(), V, u).real
    cross = np.einsum("kn,kn->k", u.conj(), own).real
    return quad - 2.0 * cross + 1.0


def weighted_mse_objective(H, w, u, rho, alpha, sigma2, gamma_m,
                           q: Optional[np.ndarray] = None) -> float:
    """sum_k alpha_k rho_k e_k(w, q; u) — the block-update surrogate objective."""
    e = mse_value(H, w, u, sigma2, gamma_m, q)
    return float(np.sum(alpha * rho * e))


def assemble_forms(H: np.ndarray, u: np.ndarray, alpha: np.ndarray, rho: np.ndarray,
                   gamma_m: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-user (A_k, b_k) of the beamformer subproblem at fixed receivers/weights."""
    g = np.einsum("knm,kn->km", H.conj(), u)      # (K, n), H_k^H u_k
    c = np.asarray(alpha, float) * np.asarray(rho, float)
    S = np.einsum("k,km,kl->ml", c, g, g.conj())  # sum of weighted outer products
    own = c[:, None, None] * (g[:, :, None] * g.conj()[:, None, :])
    A = gamma_m * S[None, :, :] + (1.0 - gamma_m) * own
    b = 2.0 * c[:, None] * g
    return A, b


def quantization_price(H: np.ndarray, u: np.ndarray, alpha: np.ndarray, rho: np.ndarray,
                       gamma_m: float) -> np.ndarray:
    """Linear cost t (n,) of the quantization noise diagonal in the surrogate objective."""
    g = np.einsum("knm,kn->km", H.conj(), u)
    c = np.asarray(alpha, float) * np.asarray(rho, float)
    return gamma_m * np.einsum("k,km->m", c, np.abs(g) ** 2)


def weighted_sum_rate(alpha: np.ndarray, rates: np.ndarray) -> float:
    return float(np.sum(np.asarray(alpha) * np.asarray(rates)))
