"""Pure-numpy batched Hermitian solve kernels (fallback backend)."""

import numpy as np


def loaded_solve(A: np.ndarray, load: np.ndarray, bhalf: np.ndarray) -> np.ndarray:
    """Solve (A_k + diag(load_k)) w_k = bhalf_k for every k.

    A: (K, n, n) complex Hermitian, load: (K, n) real >= 0, bhalf: (K, n).
    """
    K, n, _ = A.shape
    M = A.copy()
    idx = np.arange(n)
    M[:, idx, idx] += load
    return np.linalg.solve(M, bhalf[..., None])[..., 0]


def chol_solve_inplace(M: np.ndarray, bhalf: np.ndarray) -> np.ndarray:
    """Solve M_k w_k = bhalf_k for a stack of Hermitian positive-definite M.

    M may be overwritten by the backend (this implementation leaves it intact).
    """
    return np.linalg.solve(M, bhalf[..., None])[..., 0]
