"""Exact quantum predictions for the two path-qubit (short/long) photon pair.

Single-photon basis order is (S, L); the two-photon basis is the Kronecker
product (SS, SL, LS, LL) with photon A first.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import DomainError

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10

BASIS_LABELS = ("SS", "SL", "LS", "LL")
DETECTOR_PAIRS = ("11", "12", "21", "22")


def wrap_phase(phi: float) -> float:
    """Reduce an angle to the half-open interval (-pi, pi]."""
    phi = float(phi)
    if not math.isfinite(phi):
        raise DomainError(f"phase must be finite, got {phi}")
    wrapped = math.pi - math.fmod(math.pi - phi, 2 * math.pi)
    if wrapped > math.pi:
        wrapped -= 2 * math.pi
    elif wrapped <= -math.pi:
        wrapped += 2 * math.pi
    return wrapped


@dataclass(frozen=True)
class DensityOperator:
    """Validated 4x4 density matrix in the (SS, SL, LS, LL) basis."""

    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (4, 4):
            raise DomainError(f"density operator must be 4x4, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise DomainError("density operator has non-finite entries")
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise DomainError("density operator is not Hermitian")
        if abs(np.trace(m) - 1.0) > TRACE_TOL:
            raise DomainError(f"density operator trace is {np.trace(m).real:.3g}, expected 1")
        if np.linalg.eigvalsh(m).min() < -PSD_TOL:
            raise DomainError("density operator is not positive semidefinite")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "DensityOperator":
        """Symmetrize and trace-normalize ``m`` before validating it."""
        m = np.asarray(m, dtype=complex)
        m = 0.5 * (m + m.conj().T)
        tr = np.trace(m).real
        if tr <= 0:
            raise DomainError("matrix has nonpositive trace")
        return cls(m / tr)

    @classmethod
    def from_ket(cls, ket) -> "DensityOperator":
        ket = np.asarray(ket, dtype=complex).ravel()
        ket = ket / np.linalg.norm(ket)
        return cls(np.outer(ket, ket.conj()))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def eigvals(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


StateLike = Union[DensityOperator, np.ndarray]


def as_density(rho: StateLike) -> DensityOperator:
    if isinstance(rho, DensityOperator):
        return rho
    return DensityOperator(rho)


@dataclass(frozen=True)
class AnalyzerProjector:
    """Projector of one interferometer output port.

    Port 1 projects onto (|L> + e^{i phi}|S>)/sqrt(2), port 2 onto the
    orthogonal state.
    """

    phase: float
    port: int = 1

    def __post_init__(self):
        if self.port not in (1, 2):
            raise DomainError(f"port must be 1 or 2, got {self.port}")
        object.__setattr__(self, "phase", wrap_phase(self.phase))

    @property
    def ket(self) -> np.ndarray:
        sign = 1.0 if self.port == 1 else -1.0
        return np.array([sign * np.exp(1j * self.phase), 1.0], dtype=complex) / math.sqrt(2.0)

    @property
    def matrix(self) -> np.ndarray:
        k = self.ket
        return np.outer(k, k.conj())


def analyzer_ket(phase: float, port: int = 1) -> np.ndarray:
    return AnalyzerProjector(phase, port).ket


def path_ket(label: str) -> np.ndarray:
    """|S> or |L> as a single-photon column."""
    if label == "S":
        return np.array([1.0, 0.0], dtype=complex)
    if label == "L":
        return np.array([0.0, 1.0], dtype=complex)
    raise DomainError(f"unknown path label {label!r}")


def _dichotomic(phase: float) -> np.ndarray:
    # port-1 projector minus port-2 projector
    return AnalyzerProjector(phase, 1).matrix - AnalyzerProjector(phase, 2).matrix


@dataclass(frozen=True)
class MeasurementSettings:
    """The four analyzer phases of a CHSH run, wrapped to (-pi, pi]."""

    phi_a: float
    phi_a2: float
    phi_b: float
    phi_b2: float

    def __post_init__(self):
        for name in ("phi_a", "phi_a2", "phi_b", "phi_b2"):
            object.__setattr__(self, name, wrap_phase(getattr(self, name)))

    def pairs(self) -> dict[str, tuple[float, float]]:
        """The four setting pairs keyed by label, in CHSH order."""
        return {
            "A0B0": (self.phi_a, self.phi_b),
            "A1B0": (self.phi_a2, self.phi_b),
            "A0B1": (self.phi_a, self.phi_b2),
            "A1B1": (self.phi_a2, self.phi_b2),
        }


SETTING_LABELS = ("A0B0", "A1B0", "A0B1", "A1B1")
CHSH_SIGNS = {"A0B0": 1.0, "A1B0": 1.0, "A0B1": 1.0, "A1B1": -1.0}


def canonical_settings() -> MeasurementSettings:
    """Settings reaching S = 2*sqrt(2)*V for the CHSH combination used here.

    phi_b2 is -pi/2: with the plus-plus-plus-minus combination and
    E = V cos(phi_a + phi_b), the value +pi/2 would give S = 0.
    """
    return MeasurementSettings(math.pi / 4, -math.pi / 4, 0.0, -math.pi / 2)


def printed_settings() -> MeasurementSettings:
    """The settings with phi_b2 = +pi/2; yields S = 0 under the same combination."""
    return MeasurementSettings(math.pi / 4, -math.pi / 4, 0.0, math.pi / 2)


@dataclass(frozen=True)
class CoincidenceProbabilities:
    p11: float
    p12: float
    p21: float
    p22: float

    def as_array(self) -> np.ndarray:
        return np.array([self.p11, self.p12, self.p21, self.p22])

    @property
    def correlation(self) -> float:
        return self.p11 + self.p22 - self.p12 - self.p21


def bell_phi_plus() -> DensityOperator:
    return DensityOperator.from_ket([1.0, 0.0, 0.0, 1.0])


def werner_like(visibility: float) -> DensityOperator:
    """Phi+ mixed with its fully dephased version; fringe visibility equals ``visibility``."""
    v = float(visibility)
    if not (0.0 <= v <= 1.0):
        raise DomainError(f"visibility must lie in [0, 1], got {visibility}")
    dephased = np.diag([0.5, 0.0, 0.0, 0.5]).astype(complex)
    return DensityOperator(v * bell_phi_plus().matrix + (1.0 - v) * dephased)


def joint_projector(phi_a: float, port_a: int, phi_b: float, port_b: int) -> np.ndarray:
    return np.kron(AnalyzerProjector(phi_a, port_a).matrix, AnalyzerProjector(phi_b, port_b).matrix)


def coincidence_probabilities(rho: StateLike, phi_a: float, phi_b: float) -> CoincidenceProbabilities:
    m = as_density(rho).matrix
    probs = []
    for i in (1, 2):
        for j in (1, 2):
            p = np.trace(m @ joint_projector(phi_a, i, phi_b, j)).real
            probs.append(min(max(p, 0.0), 1.0))
    return CoincidenceProbabilities(*probs)


def correlation(rho: StateLike, phi_a: float, phi_b: float) -> float:
    return coincidence_probabilities(rho, phi_a, phi_b).correlation


def chsh_value(rho: StateLike, settings: MeasurementSettings) -> float:
    rho = as_density(rho)
    return float(sum(CHSH_SIGNS[k] * correlation(rho, a, b) for k, (a, b) in settings.pairs().items()))


def chsh_operator(settings: MeasurementSettings) -> np.ndarray:
    """Hermitian operator whose expectation value is the CHSH quantity."""
    op = np.zeros((4, 4), dtype=complex)
    for key, (a, b) in settings.pairs().items():
        op += CHSH_SIGNS[key] * np.kron(_dichotomic(a), _dichotomic(b))
    return op


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity(rho: StateLike, sigma: StateLike) -> float:
    """Jozsa fidelity (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2."""
    r = as_density(rho).matrix
    s = as_density(sigma).matrix
    # pure argument: F = tr(rho sigma) exactly, avoiding square roots of ~0 eigenvalues
    if np.linalg.eigvalsh(s)[-1] > 1 - 1e-12 or np.linalg.eigvalsh(r)[-1] > 1 - 1e-12:
        return min(max(float(np.trace(r @ s).real), 0.0), 1.0)
    sr = _psd_sqrt(r)
    inner = sr @ s @ sr
    w = np.clip(np.linalg.eigvalsh(0.5 * (inner + inner.conj().T)), 0.0, None)
    f = float(np.sum(np.sqrt(w)) ** 2)
    return min(max(f, 0.0), 1.0)


def random_density(rng: np.random.Generator, rank: int = 4) -> DensityOperator:
    """Random state G G^dagger / tr from a complex Gaussian factor."""
    g = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    return DensityOperator.from_matrix(g @ g.conj().T)
