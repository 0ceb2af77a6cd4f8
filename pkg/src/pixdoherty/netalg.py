"""Complex N-port network algebra.

Frequency-indexed impedance and scattering matrices, conversions between
them, single-port termination, and the realizability test for a lossy
reciprocal two-port.  Ports are numbered from 1, as on a network analyzer.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    NonReciprocalInput,
    PixDohertyError,
    ResonantTermination,
    SingularAugmentedMatrix,
    SingularReflection,
)

Z_REF_DEFAULT = 50.0
COND_LIMIT = 1e12
DENOM_LIMIT = 1e-12


class Kind(str, enum.Enum):
    IMPEDANCE = "Z"
    SCATTERING = "S"


@dataclass(frozen=True)
class NetworkMatrix:
    """Per-frequency complex N x N matrix.

    Attributes:
        kind: Impedance or scattering.
        freqs: Frequencies in Hz, strictly increasing, shape (F,).
        data: Complex array of shape (F, N, N).
        z_ref: Real reference impedance (meaningful for scattering kind).
    """

    kind: Kind
    freqs: np.ndarray
    data: np.ndarray
    z_ref: float = Z_REF_DEFAULT
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        freqs = np.atleast_1d(np.asarray(self.freqs, dtype=float))
        data = np.asarray(self.data, dtype=complex)
        if data.ndim == 2:
            data = data[None, :, :]
        if data.ndim != 3 or data.shape[1] != data.shape[2] or data.shape[1] < 1:
            raise ValueError(f"data must have shape (F, N, N), got {data.shape}")
        if data.shape[0] != freqs.shape[0]:
            raise ValueError(f"{data.shape[0]} matrices for {freqs.shape[0]} frequencies")
        if freqs.size > 1 and np.any(np.diff(freqs) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        kind = Kind(self.kind)
        if kind is Kind.SCATTERING and not self.z_ref > 0:
            raise ValueError("z_ref must be positive")
        freqs.setflags(write=False)
        data.setflags(write=False)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "z_ref", float(self.z_ref))

    @property
    def nports(self) -> int:
        return self.data.shape[1]

    def __len__(self):
        return self.freqs.shape[0]

    def is_reciprocal(self, tol=1e-9) -> bool:
        return reciprocity_error(self.data) <= tol

    def entry(self, i, j) -> np.ndarray:
        """Return the ``(i, j)`` entry over frequency, 1-based port numbers."""
        return self.data[:, i - 1, j - 1]

    def replace(self, **kw) -> "NetworkMatrix":
        args = dict(kind=self.kind, freqs=self.freqs, data=self.data, z_ref=self.z_ref, meta=self.meta)
        args.update(kw)
        return NetworkMatrix(**args)

    # serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "z_ref": self.z_ref,
            "nports": self.nports,
            "freqs_hz": self.freqs.tolist(),
            "re": self.data.real.tolist(),
            "im": self.data.imag.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkMatrix":
        try:
            data = np.asarray(d["re"], dtype=float) + 1j * np.asarray(d["im"], dtype=float)
            net = cls(Kind(d["kind"]), d["freqs_hz"], data, d.get("z_ref", Z_REF_DEFAULT))
        except (KeyError, TypeError, ValueError) as exc:
            raise PixDohertyError(f"invalid NetworkMatrix document: {exc}") from exc
        if "nports" in d and d["nports"] != net.nports:
            raise PixDohertyError(f"nports={d['nports']} but data has {net.nports} ports")
        return net

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict())
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, text_or_path) -> "NetworkMatrix":
        p = Path(text_or_path) if not str(text_or_path).lstrip().startswith("{") else None
        text = p.read_text() if p is not None else text_or_path
        return cls.from_dict(json.loads(text))


def reciprocity_error(data) -> float:
    data = np.asarray(data)
    return float(np.max(np.abs(data - np.swapaxes(data, -1, -2)), initial=0.0))


def _check_cond(a, exc, what):
    cond = np.linalg.cond(a)
    bad = ~np.isfinite(cond) | (cond > COND_LIMIT)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise exc(f"{what} is numerically singular at frequency index {k} (cond={cond[k]:.3g})")


def z_to_s(z: NetworkMatrix, z_ref: float = Z_REF_DEFAULT) -> NetworkMatrix:
    """Convert impedance parameters to scattering parameters at ``z_ref``.

    ``S = (Z - z_ref I)(Z + z_ref I)^-1``. Raises SingularAugmentedMatrix if
    ``Z + z_ref I`` is ill-conditioned at any frequency.
    """
    if z.kind is not Kind.IMPEDANCE:
        raise TypeError("z_to_s expects an impedance-kind NetworkMatrix")
    if not z_ref > 0:
        raise ValueError("z_ref must be positive")
    eye = np.eye(z.nports)
    plus = z.data + z_ref * eye
    _check_cond(plus, SingularAugmentedMatrix, "Z + z_ref*I")
    minus = z.data - z_ref * eye
    # X = minus @ inv(plus)  <=>  plus^T X^T = minus^T
    s = np.swapaxes(np.linalg.solve(np.swapaxes(plus, -1, -2), np.swapaxes(minus, -1, -2)), -1, -2)
    return NetworkMatrix(Kind.SCATTERING, z.freqs, s, z_ref, dict(z.meta))


def s_to_z(s: NetworkMatrix) -> NetworkMatrix:
    """Convert scattering parameters to impedance, ``Z = z_ref (I + S)(I - S)^-1``."""
    if s.kind is not Kind.SCATTERING:
        raise TypeError("s_to_z expects a scattering-kind NetworkMatrix")
    eye = np.eye(s.nports)
    minus = eye - s.data
    _check_cond(minus, SingularReflection, "I - S")
    plus = eye + s.data
    z = s.z_ref * np.swapaxes(
        np.linalg.solve(np.swapaxes(minus, -1, -2), np.swapaxes(plus, -1, -2)), -1, -2
    )
    return NetworkMatrix(Kind.IMPEDANCE, s.freqs, z, s.z_ref, dict(s.meta))


def gamma_of_load(r_load: float, z_ref: float = Z_REF_DEFAULT) -> complex:
    """Reflection coefficient of a load; ``inf`` gives an ideal open (+1)."""
    if np.isinf(r_load):
        return 1.0 + 0j
    return complex((r_load - z_ref) / (r_load + z_ref))


def terminate_port(s: NetworkMatrix, port: int, gamma: complex) -> NetworkMatrix:
    """Terminate ``port`` (1-based) in reflection ``gamma`` and remove it.

    ``S'_ij = S_ij + S_ik gamma S_kj / (1 - gamma S_kk)``. ``gamma = 0`` is a
    matched load, ``gamma = +1`` an ideal open.
    """
    if s.kind is not Kind.SCATTERING:
        raise TypeError("terminate_port expects a scattering-kind NetworkMatrix")
    n = s.nports
    if not 1 <= port <= n:
        raise IndexError(f"port {port} out of range 1..{n}")
    if n == 1:
        raise ValueError("cannot terminate the only port of a one-port")
    k = port - 1
    keep = [i for i in range(n) if i != k]
    d = s.data
    sub = d[:, keep][:, :, keep]
    if gamma == 0:
        return s.replace(data=sub.copy())
    denom = 1.0 - gamma * d[:, k, k]
    if np.any(np.abs(denom) < DENOM_LIMIT):
        raise ResonantTermination(f"|1 - gamma*S_kk| below {DENOM_LIMIT} when terminating port {port}")
    col = d[:, keep, k]
    row = d[:, k, keep]
    out = sub + (gamma / denom)[:, None, None] * col[:, :, None] * row[:, None, :]
    return s.replace(data=out)


def losslessness_residual(z2p, tol=1e-9) -> float:
    """Normalized violation of ``Re{Z12}^2 = Re{Z11} Re{Z22}``.

    Zero means the lossy reciprocal two-port can be realized as a lossless
    three-port with a single resistive termination.

    Args:
        z2p: complex 2x2 impedance matrix.
        tol: symmetry tolerance.
    """
    z = np.asarray(z2p, dtype=complex)
    if z.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got {z.shape}")
    if abs(z[0, 1] - z[1, 0]) > tol * max(1.0, abs(z[0, 1])):
        raise NonReciprocalInput(f"Z12={z[0, 1]} differs from Z21={z[1, 0]}")
    prod = z[0, 0].real * z[1, 1].real
    return abs(z[0, 1].real ** 2 - prod) / max(1.0, abs(prod))


def singular_values(s: NetworkMatrix) -> np.ndarray:
    return np.linalg.svd(s.data, compute_uv=False)


def permute_ports(net: NetworkMatrix, perm) -> NetworkMatrix:
    """Reorder ports so that new port ``i`` is old port ``perm[i]`` (0-based)."""
    perm = np.asarray(perm)
    return net.replace(data=net.data[:, perm][:, :, perm])
