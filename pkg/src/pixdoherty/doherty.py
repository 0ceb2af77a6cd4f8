"""Ideal black-box Doherty model.

Both devices are piecewise-linear, voltage-controlled current sources in
ideal Class B (fundamental only).  The combiner is a reciprocal two-port
impedance matrix chosen so that the main device saturates at the break
point and stays saturated up to peak drive.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NoRealSolution

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class IdealDohertyConfig:
    beta_b: float
    alpha: float
    theta: float
    r_opt: float = 50.0
    v_max: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.beta_b < 1.0:
            raise ValueError(f"beta_b must lie in (0, 1), got {self.beta_b}")
        if not self.alpha > 0.0:
            raise ValueError("alpha must be positive")
        if not self.r_opt > 0.0:
            raise ValueError("r_opt must be positive")

    @property
    def i_main_max(self) -> float:
        # peak main current that gives |V_m| = v_max across R_opt
        return self.v_max / self.r_opt

    def is_consistent(self, tol=1e-9) -> bool:
        """True if theta is one of the realizable phase solutions."""
        try:
            sols = theta_solutions(self.beta_b, self.alpha)
        except NoRealSolution:
            return False
        t = self.theta % TWO_PI
        return any(min(abs(t - s), TWO_PI - abs(t - s)) <= tol for s in sols)


@dataclass(frozen=True)
class DrivePoint:
    beta: float
    i_main: complex
    i_aux: complex


def current_profiles(cfg: IdealDohertyConfig, beta: float) -> DrivePoint:
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    i_mm = cfg.i_main_max
    i_m = complex(beta * i_mm)
    if beta <= cfg.beta_b:
        i_a = 0j
    else:
        i_a = (beta - cfg.beta_b) / (1.0 - cfg.beta_b) * cfg.alpha * i_mm * np.exp(-1j * cfg.theta)
    return DrivePoint(beta, i_m, complex(i_a))


def ideal_combiner_z(cfg: IdealDohertyConfig) -> np.ndarray:
    """Two-port impedance matrix of the ideal combiner (symmetric)."""
    b, a, r, th = cfg.beta_b, cfg.alpha, cfg.r_opt, cfg.theta
    z11 = r / b
    z12 = (1.0 - 1.0 / b) * (r / a) * np.exp(1j * th)
    z22 = (1.0 / b + a * np.exp(-2j * th) - 1.0) * (r / a**2) * np.exp(2j * th)
    return np.array([[z11, z12], [z12, z22]], dtype=complex)


def backoff_gamma(beta_b: float, alpha: float) -> tuple[float, float]:
    """Output back-off level between the two efficiency peaks.

    Returns:
        (gamma, gamma_db) with gamma = (1 + alpha) / beta_b as a power ratio.
    """
    if not 0.0 < beta_b <= 1.0:
        raise ValueError("beta_b must lie in (0, 1]")
    if alpha < 0.0:
        raise ValueError("alpha must be non-negative")
    g = (1.0 + alpha) / beta_b
    return g, 10.0 * math.log10(g)


def beta_b_for_backoff(gamma_db: float, alpha: float) -> float:
    """Break point giving the requested back-off for current ratio ``alpha``."""
    return (1.0 + alpha) / 10.0 ** (gamma_db / 10.0)


def theta_argument(beta_b: float, alpha: float) -> float:
    return beta_b * (alpha - beta_b + 1.0) / (1.0 - beta_b**2)


def theta_solutions(beta_b: float, alpha: float, slack=1e-12) -> list[float]:
    """All distinct phase delays in [0, 2*pi) that make the ideal combiner realizable."""
    if not 0.0 < beta_b < 1.0 or not alpha > 0.0:
        raise ValueError("need 0 < beta_b < 1 and alpha > 0")
    arg = theta_argument(beta_b, alpha)
    if arg > 1.0 + slack or arg < 0.0:
        raise NoRealSolution(
            f"no real theta for beta_b={beta_b}, alpha={alpha}: arcsin argument {arg:.6g} > 1"
        )
    s = math.asin(math.sqrt(min(arg, 1.0)))
    out = []
    for t in (s, math.pi - s, math.pi + s, TWO_PI - s):
        t = t % TWO_PI
        if TWO_PI - t < 1e-12:
            t = 0.0
        if all(abs(t - u) > 1e-12 for u in out):
            out.append(t)
    return sorted(out)


def sweep_grid(beta_b: float, n_points: int) -> np.ndarray:
    """Uniform-ish drive grid on [0, 1] that contains the break point exactly."""
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    if n_points == 2:
        return np.array([0.0, 1.0])
    n_lo = min(max(2, int(round(beta_b * (n_points - 1))) + 1), n_points - 1)
    lo = np.linspace(0.0, beta_b, n_lo)
    hi = np.linspace(beta_b, 1.0, n_points - n_lo + 1)[1:]
    return np.concatenate([lo, hi])


def drive_sweep(cfg: IdealDohertyConfig, n_points: int, betas=None) -> dict[str, np.ndarray]:
    """Output power, DC power, drain efficiency and load modulation versus drive.

    The grid includes ``beta_b`` exactly (see :func:`sweep_grid`) unless
    explicit ``betas`` are given.  DC power is the ideal Class-B value
    ``(2/pi) * v_max * (|I_m| + |I_a|)``.
    """
    betas = sweep_grid(cfg.beta_b, n_points) if betas is None else np.asarray(betas, float)
    z = ideal_combiner_z(cfg)
    n = betas.size
    pout = np.empty(n)
    pdc = np.empty(n)
    zm = np.full(n, np.nan + 1j * np.nan)
    za = np.full(n, np.nan + 1j * np.nan)
    vm = np.empty(n, complex)
    va = np.empty(n, complex)
    for k, b in enumerate(betas):
        dp = current_profiles(cfg, float(b))
        i = np.array([dp.i_main, dp.i_aux])
        v = z @ i
        vm[k], va[k] = v
        pout[k] = 0.5 * np.real(v @ np.conj(i))
        pdc[k] = (2.0 / math.pi) * cfg.v_max * (abs(dp.i_main) + abs(dp.i_aux))
        if dp.i_main != 0:
            zm[k] = v[0] / dp.i_main
        if dp.i_aux != 0:
            za[k] = v[1] / dp.i_aux
    with np.errstate(divide="ignore", invalid="ignore"):
        eff = np.where(pdc > 0, pout / np.where(pdc > 0, pdc, 1.0), 0.0)
        pout_dbc = 10.0 * np.log10(pout / pout.max())
    return {
        "beta": betas,
        "pout_w": pout,
        "pout_dbc": pout_dbc,
        "pdc_w": pdc,
        "eff": eff,
        "zm": zm,
        "za": za,
        "vm": vm,
        "va": va,
    }


SWEEP_COLUMNS = ["beta", "pout_w", "pout_dbc", "pdc_w", "eff", "re_zm", "im_zm", "re_za", "im_za"]


def write_sweep_csv(sweep: dict, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for k in range(sweep["beta"].size):
            zm, za = sweep["zm"][k], sweep["za"][k]
            w.writerow(
                [repr(float(x)) for x in (
                    sweep["beta"][k], sweep["pout_w"][k], sweep["pout_dbc"][k], sweep["pdc_w"][k],
                    sweep["eff"][k], zm.real, zm.imag, za.real, za.imag,
                )]
            )
    return path


def efficiency_peaks(eff) -> list[int]:
    """Indices of strict local maxima of a sampled efficiency curve.

    The last sample counts as a maximum when the curve rises into it.
    """
    eff = np.asarray(eff, dtype=float)
    peaks = []
    for k in range(1, eff.size):
        rises = eff[k] > eff[k - 1]
        falls = k == eff.size - 1 or eff[k] > eff[k + 1]
        if rises and falls:
            peaks.append(k)
    return peaks
