"""Eigenstructure of consensus Laplacians and the kernel projector."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "SpectralError",
    "SpectralSummary",
    "zero_tolerance",
    "spectrum",
    "zero_multiplicity",
    "algebraic_connectivity",
    "kernel_projector",
    "predict_limit",
    "gershgorin_discs",
]


class SpectralError(RuntimeError):
    pass


def zero_tolerance(lap):
    """Threshold below which ``|lambda|`` counts as zero: 1e-9 * max(1, ||L||_inf)."""
    lap = np.asarray(lap)
    norm = float(np.abs(lap).sum(axis=1).max(initial=0.0))
    return 1e-9 * max(1.0, norm)


@dataclass(frozen=True)
class SpectralSummary:
    eigenvalues: np.ndarray  # complex, sorted by (real, imag)
    zero_multiplicity: int
    lambda2: float | None  # min Re over the nonzero eigenvalues
    is_symmetric_case: bool
    kernel_right: np.ndarray  # (m, N), rows span ker(L)
    kernel_left: np.ndarray  # (m, N), rows span ker(L^T)
    tol_zero: float

    def to_dict(self):
        return {
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "zero_multiplicity": self.zero_multiplicity,
            "lambda2": self.lambda2,
            "is_symmetric_case": self.is_symmetric_case,
            "kernel_right": self.kernel_right.tolist(),
            "kernel_left": self.kernel_left.tolist(),
            "tol_zero": self.tol_zero,
        }


def _diagnostics(lap):
    try:
        cond = float(np.linalg.cond(lap))
    except np.linalg.LinAlgError:
        cond = float("inf")
    return f"shape={lap.shape}, norm_inf={np.abs(lap).sum(axis=1).max():.3e}, cond={cond:.3e}"


def _null_rows(mat, m):
    """Orthonormal basis (as rows) of the m-dimensional numerical null space."""
    if m == 0:
        return np.zeros((0, mat.shape[1]))
    _, _, vh = scipy.linalg.svd(mat)
    return vh[-m:].copy()


def spectrum(lap):
    lap = np.asarray(lap, dtype=float)
    if lap.ndim != 2 or lap.shape[0] != lap.shape[1]:
        raise ValueError("Laplacian must be a square matrix")
    if not np.all(np.isfinite(lap)):
        raise SpectralError("Laplacian has non-finite entries: " + _diagnostics(np.nan_to_num(lap)))
    tol = zero_tolerance(lap)
    symmetric = bool(np.array_equal(lap, lap.T))
    try:
        if symmetric:
            vals, vecs = scipy.linalg.eigh(lap)
            vals = vals.astype(complex)
        else:
            vals = scipy.linalg.eigvals(lap)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise SpectralError(f"eigensolver failed ({exc}); {_diagnostics(lap)}") from exc

    order = np.lexsort((vals.imag, vals.real))
    vals = vals[order]
    is_zero = np.abs(vals) < tol
    m = int(is_zero.sum())
    nonzero = vals[~is_zero]
    lambda2 = float(nonzero.real.min()) if nonzero.size else None

    if symmetric:
        # eigh orders ascending, so the kernel vectors come first
        right = vecs[:, order][:, :m].T.copy()
        left = right.copy()
    else:
        right = _null_rows(lap, m)
        left = _null_rows(lap.T, m)
    return SpectralSummary(vals, m, lambda2, symmetric, right, left, tol)


def zero_multiplicity(lap):
    return spectrum(lap).zero_multiplicity


def algebraic_connectivity(lap):
    """Second-smallest eigenvalue of a symmetric Laplacian."""
    lap = np.asarray(lap, dtype=float)
    if not np.array_equal(lap, lap.T):
        raise ValueError(
            "algebraic connectivity needs a symmetric Laplacian; "
            "use spectrum(L).lambda2 (min real part of nonzero eigenvalues) instead"
        )
    if lap.shape[0] < 2:
        return 0.0
    vals = scipy.linalg.eigvalsh(lap)
    lam2 = float(vals[1])
    # clamp roundoff on disconnected graphs
    return 0.0 if abs(lam2) < zero_tolerance(lap) else lam2


def kernel_projector(lap, summary=None):
    """Spectral projector onto ker(L) along the range of L: R (W R)^-1 W."""
    s = summary if summary is not None else spectrum(lap)
    right, left = s.kernel_right.T, s.kernel_left
    gram = left @ right
    if gram.size and np.linalg.cond(gram) > 1e10:
        raise SpectralError("kernel bases not biorthogonalizable")
    return right @ np.linalg.solve(gram, left)


def predict_limit(lap, s0, summary=None):
    """Long-time limit of ds/dt = -L s started from ``s0``."""
    s0 = np.asarray(s0, dtype=float)
    return kernel_projector(lap, summary) @ s0


def gershgorin_discs(lap):
    """``(centers, radii)``; for a Laplacian both equal the diagonal."""
    lap = np.asarray(lap, dtype=float)
    centers = np.diag(lap).copy()
    radii = np.abs(lap).sum(axis=1) - np.abs(centers)
    return centers, radii
