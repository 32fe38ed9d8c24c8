"""Spectrum, resolvent norms and kernel projection of a discrete generator.

All norms are taken in the energy inner product. M_h is diagonal with
Cholesky factor L = diag(sqrt(w)) (the identity for assembled bundles) and
every computation works with the similar matrix A~ = L A_h L^-1.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import linalg, optimize

from config.settings import (
    KERNEL_TOL,
    KERNEL_WARN_TOL,
    MAX_DENSE_DIM,
    MIN_SWEEP_SAMPLES,
    REFINE_PEAKS,
    SWEEP_WORKERS,
)
from utils.discretizer import OperatorBundle
from utils.errors import ConvergenceFailure, DimensionTooLarge, EmptySpectrum, UnsupportedClosure

logger = logging.getLogger(__name__)

SENTINEL = float("inf")
SINGULAR_REL_TOL = 1e-10
INVERSE_ITERATIONS = 60


@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    residuals: np.ndarray
    vectors: Optional[np.ndarray] = None

    @property
    def abscissa(self) -> float:
        return spectral_abscissa(self)

    def smallest(self, count: int, imag_positive: bool = True) -> np.ndarray:
        """The `count` eigenvalues of smallest magnitude, one per conjugate pair."""
        values = self.eigenvalues
        if imag_positive:
            values = values[values.imag > 0.0]
        return values[np.argsort(np.abs(values))][:count]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "re": self.eigenvalues.real,
            "im": self.eigenvalues.imag,
            "residual": self.residuals,
        })


@dataclass
class ResolventSweep:
    betas: np.ndarray
    norms: np.ndarray
    sup_estimate: float
    beta_star: float
    beta_min: float
    beta_max: float
    refined: List[Tuple[float, float]] = field(default_factory=list)

    @property
    def has_sentinel(self) -> bool:
        return bool(np.any(np.isinf(self.norms))) or bool(np.isinf(self.sup_estimate))

    @property
    def is_finite(self) -> bool:
        return not self.has_sentinel and np.isfinite(self.sup_estimate)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"beta": self.betas, "norm": self.norms})

    def to_dict(self) -> dict:
        return {
            "beta_min": self.beta_min,
            "beta_max": self.beta_max,
            "n_samples": int(len(self.betas)),
            "sup_estimate": "inf" if np.isinf(self.sup_estimate) else self.sup_estimate,
            "beta_star": self.beta_star,
            "has_sentinel": self.has_sentinel,
        }


@dataclass
class KernelProjection:
    basis: np.ndarray
    projector: np.ndarray
    singular_values: np.ndarray
    weights: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.basis.shape[1])

    def kernel_weight(self, x: np.ndarray) -> np.ndarray:
        """Energy inner products of x with the kernel basis."""
        return self.basis.conj().T @ (self.weights * x)

    def project(self, x: np.ndarray) -> np.ndarray:
        return self.projector @ x


# ---- Helpers ----

def symmetrized(bundle: OperatorBundle) -> np.ndarray:
    """A~ = L A_h L^-1 with L the Cholesky factor of M_h."""
    root = np.sqrt(bundle.weights)
    return root[:, None] * bundle.A_h / root[None, :]


def _check_dense(bundle: OperatorBundle):
    if bundle.dim > MAX_DENSE_DIM:
        raise DimensionTooLarge(f"dim {bundle.dim} exceeds the dense limit {MAX_DENSE_DIM}")


def _smallest_singular_value(Z: np.ndarray, scale: float) -> float:
    """sigma_min(Z) by inverse iteration on Z* Z; 0.0 when Z is numerically singular."""
    try:
        lu_piv = linalg.lu_factor(Z, check_finite=False)
    except (linalg.LinAlgError, ValueError):
        return 0.0
    pivots = np.abs(np.diag(lu_piv[0]))
    if np.min(pivots) <= np.finfo(float).eps * scale:
        return 0.0

    rng = np.random.default_rng(0)
    q = rng.standard_normal(Z.shape[0]) + 1j * rng.standard_normal(Z.shape[0])
    q /= np.linalg.norm(q)
    estimate = 0.0
    for _ in range(INVERSE_ITERATIONS):
        w = linalg.lu_solve(lu_piv, q, trans=2, check_finite=False)
        y = linalg.lu_solve(lu_piv, w, check_finite=False)
        growth = np.linalg.norm(y)
        if not np.isfinite(growth) or growth == 0.0:
            return 0.0
        q = y / growth
        new = 1.0 / np.sqrt(growth)
        if abs(new - estimate) <= 1e-10 * new:
            return new
        estimate = new
    logger.warning("Inverse iteration stopped after %d steps (sigma_min ~ %.3e)", INVERSE_ITERATIONS, estimate)
    return estimate


def _resolvent_at(At: np.ndarray, beta: float, scale: float) -> float:
    Z = 1j * beta * np.eye(At.shape[0]) - At
    sigma = _smallest_singular_value(Z, scale)
    if sigma <= SINGULAR_REL_TOL * scale:
        return SENTINEL
    return 1.0 / sigma


def _sample_betas(beta_min: float, beta_max: float, n_samples: int) -> np.ndarray:
    n_lin = n_samples // 2
    linear = np.linspace(beta_min, beta_max, n_lin)
    n_log = n_samples - n_lin
    top = max(abs(beta_min), abs(beta_max))
    positive = np.geomspace(max(1e-3 * top, 1e-6), top, n_log) if top > 0.0 else np.zeros(0)
    log_part = np.concatenate([positive, -positive])
    log_part = log_part[(log_part >= beta_min) & (log_part <= beta_max)]
    return np.unique(np.concatenate([linear, log_part]))


# ---- Operations ----

def eigenvalues(bundle: OperatorBundle, keep_vectors: bool = False) -> Spectrum:
    """Eigenvalues of the energy-symmetrized generator (Hessenberg + shifted QR)."""
    _check_dense(bundle)
    At = symmetrized(bundle)
    try:
        values, vectors_t = linalg.eig(At, check_finite=False)
    except linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"QR iteration failed: {exc}") from exc

    root = np.sqrt(bundle.weights)
    vectors = vectors_t / root[:, None]
    vectors /= np.linalg.norm(vectors, axis=0, keepdims=True)

    S = bundle.weights[:, None] * bundle.A_h
    residual = S @ vectors - (bundle.weights[:, None] * vectors) * values[None, :]
    residuals = np.linalg.norm(residual, axis=0)

    order = np.lexsort((values.imag, np.round(np.abs(values), 12)))
    values, residuals, vectors = values[order], residuals[order], vectors[:, order]
    logger.debug("Spectrum of %s: %d eigenvalues, max residual %.3e", bundle.config_hash, len(values), residuals.max())
    return Spectrum(eigenvalues=values, residuals=residuals, vectors=vectors if keep_vectors else None)


def spectral_abscissa(s: Spectrum) -> float:
    if s.eigenvalues.size == 0:
        raise EmptySpectrum("spectrum has no eigenvalues")
    return float(np.max(s.eigenvalues.real))


def resolvent_norm(bundle: OperatorBundle, beta: float) -> float:
    """||(i beta - A_h)^-1|| in the energy norm; +inf when i beta is an eigenvalue."""
    _check_dense(bundle)
    At = symmetrized(bundle)
    return _resolvent_at(At, float(beta), max(1.0, float(np.linalg.norm(At, 1))))


def resolvent_sweep(
    bundle: OperatorBundle,
    beta_min: float,
    beta_max: float,
    n_samples: int,
) -> ResolventSweep:
    """Sampled sup of the resolvent norm on [beta_min, beta_max] with local refinement."""
    if n_samples < MIN_SWEEP_SAMPLES:
        raise ValueError(f"n_samples must be >= {MIN_SWEEP_SAMPLES}, got {n_samples}")
    if beta_max <= beta_min:
        raise ValueError("beta_max must exceed beta_min")
    _check_dense(bundle)

    At = symmetrized(bundle)
    scale = max(1.0, float(np.linalg.norm(At, 1)))
    betas = _sample_betas(beta_min, beta_max, n_samples)
    with ThreadPoolExecutor(max_workers=SWEEP_WORKERS) as pool:
        norms = np.array(list(pool.map(lambda b: _resolvent_at(At, b, scale), betas)))

    if np.any(np.isinf(norms)):
        beta_star = float(betas[np.argmax(np.isinf(norms))])
        logger.info("Resolvent sweep hit an eigenvalue on the axis near beta = %.6g", beta_star)
        return ResolventSweep(betas, norms, SENTINEL, beta_star, beta_min, beta_max)

    def objective(b: float) -> float:
        return -min(_resolvent_at(At, b, scale), 1e300)

    sup_estimate = float(norms.max())
    beta_star = float(betas[np.argmax(norms)])
    refined = []
    for idx in np.argsort(norms)[::-1][:REFINE_PEAKS]:
        lo = betas[max(idx - 1, 0)]
        hi = betas[min(idx + 1, len(betas) - 1)]
        if hi <= lo:
            continue
        mid = betas[idx]
        try:
            if lo < mid < hi and objective(mid) <= min(objective(lo), objective(hi)):
                result = optimize.minimize_scalar(objective, bracket=(lo, mid, hi), method="golden", tol=1e-12)
            else:
                result = optimize.minimize_scalar(
                    objective, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10 * max(1.0, abs(hi))}
                )
        except (ValueError, RuntimeError) as exc:
            logger.debug("Refinement around beta = %.6g skipped: %s", mid, exc)
            continue
        beta_r = float(result.x)
        if not lo <= beta_r <= hi:
            continue
        value = -float(result.fun)
        refined.append((beta_r, value))
        if value >= 1e300:
            sup_estimate, beta_star = SENTINEL, beta_r
        elif value > sup_estimate:
            sup_estimate, beta_star = value, beta_r

    logger.debug("Resolvent sweep on [%g, %g]: sup %.6g at beta = %.6g", beta_min, beta_max, sup_estimate, beta_star)
    return ResolventSweep(betas, norms, sup_estimate, beta_star, beta_min, beta_max, refined)


def kernel_projection(bundle: OperatorBundle) -> KernelProjection:
    """Numerical kernel of A_h and the energy-orthogonal projector onto its complement."""
    _check_dense(bundle)
    At = symmetrized(bundle)
    _, s, Vh = linalg.svd(At, check_finite=False)
    top = s[0] if s.size else 1.0

    in_kernel = s <= KERNEL_TOL * top
    borderline = (s > KERNEL_TOL * top) & (s <= KERNEL_WARN_TOL * top)
    if np.any(borderline):
        logger.warning(
            "Borderline singular values %s of A_h (relative to %.3e); not counted as kernel",
            np.array2string(s[borderline] / top, precision=3), top,
        )

    root = np.sqrt(bundle.weights)
    basis = (Vh[in_kernel].conj().T) / root[:, None]
    identity = np.eye(bundle.dim, dtype=basis.dtype if basis.size else bundle.A_h.dtype)
    if basis.shape[1] == 0:
        projector = identity
    else:
        MK = bundle.weights[:, None] * basis
        gram = basis.conj().T @ MK
        projector = identity - basis @ linalg.solve(gram, MK.conj().T, assume_a="her")
    logger.debug("Kernel dimension %d for %s", basis.shape[1], bundle.config_hash)
    return KernelProjection(basis=basis, projector=projector, singular_values=s, weights=bundle.weights)


# ---- Uniform beam oracle ----

def _characteristic(closure: str):
    table = {
        "clamped-free": lambda k: np.cos(k) + 1.0 / np.cosh(k),
        "clamped-clamped": lambda k: np.cos(k) - 1.0 / np.cosh(k),
        "clamped-pinned": lambda k: np.sin(k) - np.cos(k) * np.tanh(k),
    }
    return table.get(closure)


def uniform_beam_oracle(closure: str, count: int) -> List[float]:
    """First `count` positive roots kappa of a uniform beam's frequency equation."""
    if count < 1 or count > 20:
        raise ValueError("count must be between 1 and 20")
    if closure == "pinned-pinned":
        return [n * np.pi for n in range(1, count + 1)]

    f = _characteristic(closure)
    if f is None:
        raise UnsupportedClosure(f"no frequency equation for closure {closure!r}")

    grid = np.arange(0.1, (count + 2) * np.pi, 0.05)
    values = f(grid)
    roots = []
    for a, b, fa, fb in zip(grid[:-1], grid[1:], values[:-1], values[1:]):
        if fa == 0.0:
            roots.append(float(a))
        elif fa * fb < 0.0:
            roots.append(float(optimize.bisect(f, a, b, xtol=1e-12)))
        if len(roots) == count:
            break
    return roots


def oracle_frequencies(closure: str, count: int, rho: float = 1.0, ei: float = 1.0, length: float = 1.0) -> np.ndarray:
    """Imaginary parts kappa^2 sqrt(EI/rho)/L^2 of the uniform beam eigenvalues."""
    kappa = np.array(uniform_beam_oracle(closure, count))
    return kappa ** 2 * np.sqrt(ei / rho) / length ** 2
