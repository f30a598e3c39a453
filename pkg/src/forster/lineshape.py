"""Line-shape metrics, the Lorentz comparison fit and the local Stark map."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .montecarlo import Spectrum

GRADIENT_TOL = 1e-9


class LineshapeError(ValueError):
    pass


class FitError(RuntimeError):
    def __init__(self, message: str, last: "LorentzFit | None" = None):
        super().__init__(message)
        self.last = last


@dataclass(frozen=True)
class StarkMap:
    """Linearised Stark tuning of the Förster defect around the resonance field.

    The default slope maps 16.4 mV/cm onto 1.94 MHz; Δ > 0 below the resonance field.
    """

    f_res: float = 1.79  # V/cm
    slope: float = -118.3  # MHz per V/cm
    delta0: float = 103.0  # MHz at zero field, informational only
    window: float = 0.1  # V/cm, half-width of the linear region

    def __post_init__(self):
        if self.slope == 0 or not np.isfinite(self.slope):
            raise ValueError("Stark slope must be finite and non-zero")


def field_to_detuning(F, stark: StarkMap = StarkMap()):
    F = np.asarray(F, dtype=float)
    if np.any(np.abs(F - stark.f_res) > stark.window + 1e-12):
        raise LineshapeError(
            f"field outside the linear window {stark.f_res} ± {stark.window} V/cm"
        )
    out = stark.slope * (F - stark.f_res)
    return float(out) if out.ndim == 0 else out


def detuning_to_field(delta, stark: StarkMap = StarkMap()):
    F = stark.f_res + np.asarray(delta, dtype=float) / stark.slope
    if np.any(np.abs(F - stark.f_res) > stark.window + 1e-12):
        raise LineshapeError(f"detuning maps outside the linear window {stark.f_res} ± {stark.window} V/cm")
    return float(F) if F.ndim == 0 else F


def baseline(values: np.ndarray) -> float:
    """Median of the outer 10% of points (5% from each end, at least one each)."""
    values = np.asarray(values, dtype=float)
    edge = max(1, int(round(0.05 * len(values))))
    return float(np.median(np.concatenate([values[:edge], values[-edge:]])))


def peak_amplitude(spec: Spectrum) -> float:
    return float(np.max(spec.values) - baseline(spec.values))


def _half_max_crossings(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    base = baseline(y)
    top = int(np.argmax(y))
    level = base + 0.5 * (y[top] - base)
    if y[top] - base <= 0:
        raise LineshapeError("spectrum has no peak above its baseline")

    left = top
    while left > 0 and y[left] >= level:
        left -= 1
    right = top
    while right < len(y) - 1 and y[right] >= level:
        right += 1
    if y[left] >= level or y[right] >= level:
        raise LineshapeError("no half-maximum crossing on one side of the peak; widen the grid")

    def cross(a: int, b: int) -> float:
        return x[a] + (level - y[a]) * (x[b] - x[a]) / (y[b] - y[a])

    return cross(left, left + 1), cross(right, right - 1)


def fwhm(spec: Spectrum) -> float:
    """Full width at half maximum above the baseline, by linear interpolation."""
    lo, hi = _half_max_crossings(spec.detunings, spec.values)
    return float(hi - lo)


def lorentzian(x, amplitude, gamma, center, offset):
    return amplitude * gamma**2 / (gamma**2 + (x - center) ** 2) + offset


def _lorentz_jac(p, x):
    a, g, c, _ = p
    u = (x - c) ** 2
    den = g**2 + u
    return np.column_stack(
        [
            g**2 / den,
            2 * a * g * u / den**2,
            2 * a * g**2 * (x - c) / den**2,
            np.ones_like(x),
        ]
    )


@dataclass(frozen=True)
class LorentzFit:
    amplitude: float
    gamma: float
    center: float
    offset: float
    sse: float
    residuals: np.ndarray  # data - fit
    gradient_norm: float
    n_evaluations: int

    def __call__(self, x):
        return lorentzian(np.asarray(x, dtype=float), self.amplitude, self.gamma, self.center, self.offset)

    def wing_residual(self, detunings, widths: float = 3.0) -> float:
        """Mean of (data − fit) over points farther than ``widths``·γ from the centre."""
        mask = np.abs(np.asarray(detunings) - self.center) > widths * self.gamma
        if not mask.any():
            raise LineshapeError(f"no grid points beyond {widths} half-widths")
        return float(self.residuals[mask].mean())


def lorentz_fit(spec: Spectrum, offset: float | None = None, max_evaluations: int = 2000) -> LorentzFit:
    """Least-squares fit of A·γ²/(γ² + (Δ − c)²) + offset.

    Initialised deterministically from the data: A = peak amplitude, γ = FWHM/2,
    c = argmax, offset = baseline. Converged means ‖∇SSE‖ < 1e-9.

    With ``offset`` given, the offset is held at that value and only A, γ, c
    are fitted. A free offset makes the residuals sum to zero, so the wing
    residual then mirrors the core misfit; a held offset (e.g. the baseline)
    matches the central part and exposes the wings directly.
    """
    x, y = spec.detunings, spec.values
    if len(x) < 8:
        raise LineshapeError("Lorentz fit needs at least 8 points")
    p0 = np.array([peak_amplitude(spec), 0.5 * fwhm(spec), x[int(np.argmax(y))], baseline(y)])

    if offset is None:
        fun = lambda p: lorentzian(x, *p) - y
        jac = lambda p: _lorentz_jac(p, x)
    else:
        p0 = p0[:3]
        fun = lambda p: lorentzian(x, *p, offset) - y
        jac = lambda p: _lorentz_jac([*p, offset], x)[:, :3]
    res = least_squares(fun, p0, jac=jac, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_evaluations)
    p = res.x
    p[1] = abs(p[1])  # γ enters squared
    r = fun(p)
    grad = float(np.linalg.norm(2.0 * jac(p).T @ r))
    # LM stops on step size; a few Gauss-Newton steps bring the gradient to the tolerance
    n_eval = int(res.nfev)
    for _ in range(min(20, max(0, max_evaluations - n_eval))):
        if grad < GRADIENT_TOL:
            break
        step = np.linalg.lstsq(jac(p), -r, rcond=None)[0]
        trial = p + step
        r_trial = fun(trial)
        grad_trial = float(np.linalg.norm(2.0 * jac(trial).T @ r_trial))
        if r_trial @ r_trial > r @ r * (1 + 1e-12) or grad_trial >= grad:
            break
        n_eval += 1
        p, r, grad = trial, r_trial, grad_trial
    params = [*map(float, p)] + ([] if offset is None else [float(offset)])
    fit = LorentzFit(*params, float(r @ r), -r, grad, n_eval)
    if grad >= GRADIENT_TOL or not p[1] > 0:
        raise FitError(f"Lorentz fit did not converge: |grad SSE| = {grad:.3g} after {n_eval} evaluations", fit)
    return fit
