"""Implicit midpoint integration of the closed loop and energy decay fitting."""

import logging
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import linalg, signal

from config.settings import (
    DECAY_WINDOW_START,
    DT_CAP,
    MAX_RECORDED_SAMPLES,
    MAX_STEPS,
    MIN_FIT_SAMPLES,
    STABILITY_TOL,
)
from utils.discretizer import OperatorBundle, energy
from utils.errors import DimensionMismatch, SingularSystem

logger = logging.getLogger(__name__)

_FACTOR_CACHE_SIZE = 8
_factor_cache: "OrderedDict[Tuple[str, float], Tuple[np.ndarray, np.ndarray]]" = OrderedDict()
_factor_lock = threading.Lock()


@dataclass
class EnergyTrace:
    times: np.ndarray
    energies: np.ndarray
    config_hash: str
    dt: float
    stride: int = 1

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.times, "energy": self.energies})


@dataclass
class DecayFit:
    M: float
    eta: float
    fit_window: Tuple[float, float]
    residual: float
    amplitude: float
    decaying: bool
    n_points: int

    def to_dict(self) -> Dict[str, object]:
        return {
            "M": self.M,
            "eta": self.eta,
            "residual": self.residual,
            "window": list(self.fit_window),
            "amplitude": self.amplitude,
            "decaying": self.decaying,
            "n_points": self.n_points,
        }


# ---- Factorization cache ----

def _midpoint_factor(bundle: OperatorBundle, dt: float):
    key = (bundle.config_hash, float(dt))
    with _factor_lock:
        if key in _factor_cache:
            _factor_cache.move_to_end(key)
            return _factor_cache[key]

    lhs = np.eye(bundle.dim) - 0.5 * dt * bundle.A_h
    try:
        factor = linalg.lu_factor(lhs, check_finite=False)
    except (linalg.LinAlgError, ValueError) as exc:
        raise SingularSystem(f"I - dt/2 A_h is singular for dt = {dt}") from exc
    if np.min(np.abs(np.diag(factor[0]))) <= np.finfo(float).eps * np.max(np.abs(np.diag(factor[0]))):
        raise SingularSystem(f"I - dt/2 A_h is singular for dt = {dt}")

    with _factor_lock:
        _factor_cache[key] = factor
        while len(_factor_cache) > _FACTOR_CACHE_SIZE:
            _factor_cache.popitem(last=False)
    return factor


def _check_state(bundle: OperatorBundle, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.shape != (bundle.dim,):
        raise DimensionMismatch(f"state has shape {x.shape}, bundle dim is {bundle.dim}")
    return x


# ---- Operations ----

def step_midpoint(bundle: OperatorBundle, x: np.ndarray, dt: float) -> np.ndarray:
    """(I - dt/2 A_h) x+ = (I + dt/2 A_h) x."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = _check_state(bundle, x)
    factor = _midpoint_factor(bundle, dt)
    return linalg.lu_solve(factor, x + 0.5 * dt * (bundle.A_h @ x), check_finite=False)


def cayley_matrix(bundle: OperatorBundle, dt: float) -> np.ndarray:
    """One midpoint step as a matrix: (I - dt/2 A_h)^-1 (I + dt/2 A_h)."""
    factor = _midpoint_factor(bundle, dt)
    return linalg.lu_solve(factor, np.eye(bundle.dim) + 0.5 * dt * bundle.A_h, check_finite=False)


def spectral_radius_estimate(bundle: OperatorBundle, iterations: int = 60) -> float:
    """Upper estimate of max |lambda| from power iteration on A~* A~."""
    root = np.sqrt(bundle.weights)
    At = root[:, None] * bundle.A_h / root[None, :]
    q = np.ones(bundle.dim) / math.sqrt(bundle.dim)
    estimate = 0.0
    for _ in range(iterations):
        y = At.conj().T @ (At @ q)
        norm = float(np.linalg.norm(y))
        if norm == 0.0:
            return 0.0
        q = y / norm
        if abs(norm - estimate) <= 1e-6 * norm:
            estimate = norm
            break
        estimate = norm
    return math.sqrt(estimate)


def default_dt(bundle: OperatorBundle, T: Optional[float] = None) -> float:
    """0.5 / |lambda|_max capped at DT_CAP, raised if T would need too many steps."""
    radius = spectral_radius_estimate(bundle)
    dt = DT_CAP if radius == 0.0 else min(DT_CAP, 0.5 / radius)
    if T is not None and T / dt > MAX_STEPS:
        raised = T / MAX_STEPS
        logger.warning("dt raised from %.3e to %.3e to stay within %d steps", dt, raised, MAX_STEPS)
        dt = raised
    return dt


def simulate(bundle: OperatorBundle, x0: np.ndarray, T: float, dt: float) -> EnergyTrace:
    """Energy trace of the midpoint trajectory from x0 over [0, T]."""
    if T <= 0.0 or dt <= 0.0:
        raise ValueError(f"T and dt must be positive, got T={T}, dt={dt}")
    steps = int(round(T / dt))
    if steps > MAX_STEPS:
        raise ValueError(f"T/dt = {steps} exceeds {MAX_STEPS} steps")
    steps = max(steps, 1)
    x = _check_state(bundle, x0).astype(complex if bundle.is_complex or np.iscomplexobj(x0) else float)

    stride = max(1, math.ceil(steps / MAX_RECORDED_SAMPLES))
    times = [0.0]
    energies = [energy(bundle, x)]

    if stride == 1:
        for n in range(1, steps + 1):
            x = step_midpoint(bundle, x, dt)
            times.append(n * dt)
            energies.append(energy(bundle, x))
    else:
        C = cayley_matrix(bundle, dt)
        jump = np.linalg.matrix_power(C, stride)
        done = 0
        while done + stride <= steps:
            x = jump @ x
            done += stride
            times.append(done * dt)
            energies.append(energy(bundle, x))
        if done < steps:
            x = np.linalg.matrix_power(C, steps - done) @ x
            times.append(steps * dt)
            energies.append(energy(bundle, x))

    logger.debug("Simulated %d steps of dt=%.3e (stride %d) for %s", steps, dt, stride, bundle.config_hash)
    return EnergyTrace(
        times=np.array(times),
        energies=np.array(energies),
        config_hash=bundle.config_hash,
        dt=dt,
        stride=stride,
    )


def fit_decay(trace: EnergyTrace) -> DecayFit:
    """Least-squares envelope H(t) ~ M e^{eta t} over [T/10, T]; M is the intercept, at least 1."""
    t, H = trace.times, trace.energies
    if len(t) < MIN_FIT_SAMPLES:
        raise ValueError(f"fit_decay needs at least {MIN_FIT_SAMPLES} samples, got {len(t)}")
    H0 = float(H[0])
    if H0 <= 0.0:
        raise ValueError("fit_decay needs H(0) > 0")

    T = float(t[-1])
    window = (DECAY_WINDOW_START * T, T)
    in_window = (t >= window[0]) & (H > 0.0)
    tw, Hw = t[in_window], H[in_window]

    peaks, _ = signal.find_peaks(Hw)
    if len(peaks) >= 3:
        tf, Hf = tw[peaks], Hw[peaks]
    else:
        tf, Hf = tw, Hw

    eta, intercept = np.polyfit(tf, np.log(Hf), 1)
    fitted = intercept + eta * tf
    residual = float(np.max(np.abs(np.log(Hf) - fitted)))
    amplitude = float(np.exp(intercept))
    M = max(1.0, amplitude)

    fit = DecayFit(
        M=M,
        eta=float(eta),
        fit_window=window,
        residual=residual,
        amplitude=amplitude,
        decaying=bool(eta < -STABILITY_TOL),
        n_points=int(len(tf)),
    )
    if not fit.decaying:
        logger.info("Energy trace of %s does not decay (eta = %.3e)", trace.config_hash, fit.eta)
    return fit
