"""Two-port combiner synthesis from load-pull data.

Given the optimal loads and delivered powers of the main and auxiliary
devices at peak and back-off, the combiner impedance matrix is fixed up to
the phase parameter ``theta``.  :func:`solve_theta` finds every ``theta``
for which the matrix is realizable as a lossless three-port with one
resistive termination.

Convention for the off-state auxiliary impedance: load-pull tables list
load impedances.  The off-state entry is read the same way, so the
auxiliary port of the combiner is terminated by its complex conjugate when
the auxiliary device is off (``aux_off_convention="load"``).  Passing
``"device"`` uses the tabulated value as-is.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from . import doherty
from .errors import (
    DegenerateDenominator,
    NonPositiveResistance,
    NoRealSolution,
    NoSolution,
    PixDohertyError,
    PowerMismatch,
)
from .netalg import losslessness_residual

TWO_PI = 2.0 * math.pi


def dbm_to_w(p_dbm: float) -> float:
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def w_to_dbm(p_w: float) -> float:
    return 10.0 * math.log10(p_w) + 30.0 if p_w > 0 else -math.inf


@dataclass(frozen=True)
class LoadPullPoint:
    z_opt: complex
    p_del: float  # dBm
    pae: float | None = None

    @property
    def p_w(self) -> float:
        return dbm_to_w(self.p_del)


@dataclass(frozen=True)
class SynthesisInput:
    main_peak: LoadPullPoint
    main_backoff: LoadPullPoint
    aux_peak: LoadPullPoint
    z_aux_off: complex
    gamma_b_db: float
    power_tol_db: float = 0.2
    aux_off_convention: str = "load"

    def __post_init__(self):
        if not self.gamma_b_db > 0:
            raise ValueError("gamma_b_db must be positive")
        if self.aux_off_convention not in ("load", "device"):
            raise ValueError("aux_off_convention must be 'load' or 'device'")

    @property
    def aux_off_termination(self) -> complex:
        """Impedance terminating the auxiliary port while the device is off."""
        z = complex(self.z_aux_off)
        return z.conjugate() if self.aux_off_convention == "load" else z

    def replace(self, **kw) -> "SynthesisInput":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(kw)
        return SynthesisInput(**d)


@dataclass(frozen=True)
class PowerBalance:
    lhs_dbm: float
    rhs_dbm: float
    delta_db: float


@dataclass(frozen=True)
class ThetaRoot:
    theta: float
    z2p: np.ndarray
    residual: float

    @property
    def theta_deg(self) -> float:
        return math.degrees(self.theta)


@dataclass
class SynthesisResult:
    theta: float
    z2p: np.ndarray
    residual: float
    alpha: complex
    roots: list[ThetaRoot]
    balance: PowerBalance
    selection: str = "ideal-branch"
    notes: list[str] = field(default_factory=list)


def alpha_from_loadpull(inp: SynthesisInput, theta: float) -> complex:
    """Complex peak-current ratio (aux over main) at phase ``theta``."""
    r_m = inp.main_peak.z_opt.real
    r_a = inp.aux_peak.z_opt.real
    if r_m <= 0 or r_a <= 0:
        raise NonPositiveResistance(f"Re(Z_m,M)={r_m}, Re(Z_a,M)={r_a} must be positive")
    p_m, p_a = inp.main_peak.p_w, inp.aux_peak.p_w
    if p_m <= 0:
        raise PixDohertyError("main peak power must be positive")
    return math.sqrt(r_m * p_a / (r_a * p_m)) * np.exp(-1j * theta)


def check_power_conservation(inp: SynthesisInput, tol_db: float | None = None, raise_on_error=True) -> PowerBalance:
    """Compare ``gamma_B * P_m,B`` with ``P_m,M + P_a,M`` in the dB domain."""
    tol = inp.power_tol_db if tol_db is None else tol_db
    lhs = inp.main_backoff.p_del + inp.gamma_b_db
    p_sum = 10.0 ** (inp.main_peak.p_del / 10.0)
    if math.isfinite(inp.aux_peak.p_del):
        p_sum += 10.0 ** (inp.aux_peak.p_del / 10.0)
    rhs = 10.0 * math.log10(p_sum)
    bal = PowerBalance(lhs, rhs, lhs - rhs)
    if raise_on_error and abs(bal.delta_db) > tol:
        raise PowerMismatch(
            f"power conservation violated: {lhs:.3f} dBm vs {rhs:.3f} dBm (delta {bal.delta_db:+.3f} dB, tol {tol} dB)"
        )
    return bal


def z2p_from_loadpull(inp: SynthesisInput, theta: float, alpha_square="complex") -> np.ndarray:
    """Combiner impedance matrix at a given ``theta``.

    Args:
        inp: load-pull data.
        theta: phase delay of the auxiliary current in radians.
        alpha_square: ``"complex"`` uses alpha**2, ``"magnitude"`` uses |alpha|**2.

    An infinite off-state termination (ideal current-source aux) selects the
    limiting form of the equations.
    """
    a = alpha_from_loadpull(inp, theta)
    if alpha_square == "complex":
        a2 = a * a
    elif alpha_square == "magnitude":
        a2 = abs(a) ** 2
    else:
        raise ValueError("alpha_square must be 'complex' or 'magnitude'")
    zmm = complex(inp.main_peak.z_opt)
    zmb = complex(inp.main_backoff.z_opt)
    zam = complex(inp.aux_peak.z_opt)
    zoff = inp.aux_off_termination
    dz = zmm - zmb
    if not np.isfinite(zoff):
        z11 = zmb
        z12 = dz / a
        z22 = zam - dz / a2
    else:
        s = zam + zoff
        den = dz + s * a2
        if abs(den) <= 1e-9:
            raise DegenerateDenominator(f"|denominator|={abs(den):.3g} at theta={theta}")
        z11 = (s * zmb * a2 + dz * zmm) / den
        z12 = dz * s * a / den
        z22 = (s * zam * a2 - dz * zoff) / den
    return np.array([[z11, z12], [z12, z22]], dtype=complex)


def _signed_residual(inp, theta, alpha_square):
    try:
        z = z2p_from_loadpull(inp, theta, alpha_square)
    except DegenerateDenominator:
        return math.nan
    prod = z[0, 0].real * z[1, 1].real
    return (z[0, 1].real ** 2 - prod) / max(1.0, abs(prod))


def solve_theta(
    inp: SynthesisInput,
    n_grid: int = 3600,
    alpha_square="complex",
    candidate_tol=1e-3,
    root_tol=1e-8,
) -> list[ThetaRoot]:
    """All realizable phase parameters in [0, 2*pi), sorted by theta.

    The normalized residual is scanned on ``n_grid`` points; sign changes are
    refined with Brent's method and near-zero local minima of the magnitude
    (tangent roots) with a bounded scalar minimization.
    """
    grid = np.linspace(0.0, TWO_PI, n_grid, endpoint=False)
    step = TWO_PI / n_grid
    r = np.array([_signed_residual(inp, t, alpha_square) for t in grid])
    finite = np.isfinite(r)
    if finite.all() and np.max(np.abs(r)) < root_tol and np.ptp(r) < root_tol:
        # no load modulation and zero residual everywhere: theta is irrelevant
        return [ThetaRoot(0.0, z2p_from_loadpull(inp, 0.0, alpha_square), float(abs(r[0])))]

    def f(t):
        return _signed_residual(inp, t, alpha_square)

    cands = []
    n = n_grid
    for k in range(n):
        a, b = r[k], r[(k + 1) % n]
        lo = grid[k]
        hi = lo + step
        if not (np.isfinite(a) and np.isfinite(b)):
            continue
        if a == 0.0:
            cands.append(lo)
        elif a * b < 0:
            cands.append(brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))
        else:
            prev = r[(k - 1) % n]
            if np.isfinite(prev) and abs(a) <= abs(prev) and abs(a) <= abs(b) and abs(a) < candidate_tol:
                res = minimize_scalar(
                    lambda t: abs(f(t)), bounds=(lo - step, hi), method="bounded",
                    options={"xatol": 1e-13, "maxiter": 500},
                )
                cands.append(float(res.x))
    if not cands and (not finite.any() or np.nanmin(np.abs(r)) >= candidate_tol):
        raise NoSolution("no theta brings the realizability residual below "
                         f"{candidate_tol:g} (min {np.nanmin(np.abs(r)):.3g})")
    roots: list[ThetaRoot] = []
    for t in cands:
        t = float(t) % TWO_PI
        z = z2p_from_loadpull(inp, t, alpha_square)
        res = losslessness_residual(z)
        if res >= root_tol:
            continue
        if any(min(abs(t - q.theta), TWO_PI - abs(t - q.theta)) < 1e-7 for q in roots):
            continue
        roots.append(ThetaRoot(t, z, res))
    if not roots:
        raise NoSolution("grid candidates did not refine below the residual tolerance")
    return sorted(roots, key=lambda q: q.theta)


def ideal_branch_thetas(inp: SynthesisInput) -> list[float]:
    """Phase solutions of the ideal model with the same current ratio and back-off."""
    a = abs(alpha_from_loadpull(inp, 0.0))
    beta_b = doherty.beta_b_for_backoff(inp.gamma_b_db, a)
    if not 0.0 < beta_b < 1.0:
        raise NoRealSolution(f"back-off {inp.gamma_b_db} dB gives beta_b={beta_b:.4g}")
    return doherty.theta_solutions(beta_b, a)


def _circ(a, b):
    d = abs(a - b) % TWO_PI
    return min(d, TWO_PI - d)


def select_root(roots: list[ThetaRoot], inp: SynthesisInput, strategy="ideal-branch") -> ThetaRoot:
    """Pick one root.

    ``"ideal-branch"``: closest to a phase solution of the ideal model with the
    same |alpha| and back-off (falls back to ``"min-residual"`` if the ideal
    model has no real solution).  ``"min-residual"``: smallest residual.
    Ties go to the smallest theta.
    """
    if not roots:
        raise NoSolution("no roots to select from")
    if strategy == "ideal-branch":
        try:
            ref = ideal_branch_thetas(inp)
        except NoRealSolution:
            strategy = "min-residual"
        else:
            dist = [min(_circ(q.theta, t) for t in ref) for q in roots]
            best = min(dist)
            return min((q for q, d in zip(roots, dist) if d - best < 1e-6), key=lambda q: q.theta)
    if strategy == "min-residual":
        best = min(q.residual for q in roots)
        return min((q for q in roots if q.residual - best <= 1e-12), key=lambda q: q.theta)
    raise ValueError(f"unknown root selection strategy {strategy!r}")


def synthesize(inp: SynthesisInput, strategy="ideal-branch", alpha_square="complex",
               check_power=True) -> SynthesisResult:
    """Power check, theta solve, and root selection in one call."""
    bal = check_power_conservation(inp, raise_on_error=check_power)
    roots = solve_theta(inp, alpha_square=alpha_square)
    pick = select_root(roots, inp, strategy)
    return SynthesisResult(
        theta=pick.theta,
        z2p=pick.z2p,
        residual=pick.residual,
        alpha=alpha_from_loadpull(inp, pick.theta),
        roots=roots,
        balance=bal,
        selection=strategy,
    )


def implied_loads(z2p, inp: SynthesisInput, theta: float) -> dict[str, complex]:
    """Device loads the combiner presents at peak and back-off.

    Inverse check of the synthesis: these should equal the load-pull optima.
    """
    z = np.asarray(z2p, dtype=complex)
    a = alpha_from_loadpull(inp, theta)
    zoff = inp.aux_off_termination
    out = {
        "main_peak": z[0, 0] + z[0, 1] * a,
        "aux_peak": z[1, 1] + z[0, 1] / a,
    }
    out["main_backoff"] = z[0, 0] if not np.isfinite(zoff) else z[0, 0] - z[0, 1] ** 2 / (z[1, 1] + zoff)
    return out


def loadpull_from_ideal(cfg: doherty.IdealDohertyConfig, z_aux_off=complex(math.inf, 0)) -> SynthesisInput:
    """Manufacture load-pull data from the ideal model (for round-trip checks).

    Powers use a 1 W peak main output so that the dBm values stay finite.
    """
    r = cfg.r_opt
    gamma, gamma_db = doherty.backoff_gamma(cfg.beta_b, cfg.alpha)
    p_m = 1.0
    return SynthesisInput(
        main_peak=LoadPullPoint(complex(r), w_to_dbm(p_m)),
        main_backoff=LoadPullPoint(complex(r / cfg.beta_b), w_to_dbm(p_m * cfg.beta_b)),
        aux_peak=LoadPullPoint(complex(r / cfg.alpha), w_to_dbm(p_m * cfg.alpha)),
        z_aux_off=z_aux_off,
        gamma_b_db=gamma_db,
        aux_off_convention="device",
    )


REFERENCE_LOADPULL = {
    "main_peak": {"z_re": 14.3, "z_im": 1.6, "p_dbm": 42.7, "pae": 0.74},
    "main_backoff": {"z_re": 7.2, "z_im": 15.3, "p_dbm": 36.4, "pae": 0.57},
    "aux_peak": {"z_re": 14.3, "z_im": 1.6, "p_dbm": 42.1, "pae": 0.78},
    "aux_off": {"z_re": 0.25, "z_im": 21.1},
    "gamma_b_db": 9.0,
}


def _point(d, name, need_power=True):
    try:
        z = complex(float(d["z_re"]), float(d["z_im"]))
        p = float(d["p_dbm"]) if need_power else math.nan
    except (KeyError, TypeError, ValueError) as exc:
        raise PixDohertyError(f"bad load-pull entry {name!r}: {exc}") from exc
    return LoadPullPoint(z, p, d.get("pae"))


def input_from_dict(d: dict) -> SynthesisInput:
    for key in ("main_peak", "main_backoff", "aux_peak", "aux_off", "gamma_b_db"):
        if key not in d:
            raise PixDohertyError(f"load-pull document missing {key!r}")
    off = _point(d["aux_off"], "aux_off", need_power=False)
    return SynthesisInput(
        main_peak=_point(d["main_peak"], "main_peak"),
        main_backoff=_point(d["main_backoff"], "main_backoff"),
        aux_peak=_point(d["aux_peak"], "aux_peak"),
        z_aux_off=off.z_opt,
        gamma_b_db=float(d["gamma_b_db"]),
        power_tol_db=float(d.get("power_tol_db", 0.2)),
        aux_off_convention=d.get("aux_off_convention", "load"),
    )


def input_to_dict(inp: SynthesisInput) -> dict:
    def pt(p):
        out = {"z_re": p.z_opt.real, "z_im": p.z_opt.imag, "p_dbm": p.p_del}
        if p.pae is not None:
            out["pae"] = p.pae
        return out

    off = complex(inp.z_aux_off)
    return {
        "main_peak": pt(inp.main_peak),
        "main_backoff": pt(inp.main_backoff),
        "aux_peak": pt(inp.aux_peak),
        "aux_off": {"z_re": off.real, "z_im": off.imag},
        "gamma_b_db": inp.gamma_b_db,
        "power_tol_db": inp.power_tol_db,
        "aux_off_convention": inp.aux_off_convention,
    }


def load_input(path) -> SynthesisInput:
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise PixDohertyError(f"cannot read load-pull file {path}: {exc}") from exc
    return input_from_dict(d)
