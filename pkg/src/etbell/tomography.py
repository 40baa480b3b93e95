"""Two path-qubit state tomography from 16 projective phase measurements.

Projector codes: ``S`` and ``L`` are the path states, ``P0`` and ``P90``
the interferometer port-1 states at phase 0 and pi/2.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .analysis import subtract_accidental_counts
from .errors import ConfigError, DomainError
from .quantum import (
    DensityOperator,
    StateLike,
    analyzer_ket,
    as_density,
    bell_phi_plus,
    canonical_settings,
    chsh_operator,
    fidelity,
    path_ket,
)

PROJECTOR_CODES = ("S", "L", "P0", "P90")

_TABLE2 = [
    ("L", "L", 3058), ("S", "L", 31), ("S", "S", 3416), ("L", "S", 35),
    ("L", "P90", 1737), ("S", "P90", 1799), ("S", "P0", 1708), ("L", "P0", 1797),
    ("P90", "P0", 1795), ("P0", "P0", 3304), ("P0", "P90", 1727), ("P0", "L", 1762),
    ("P0", "S", 1801), ("P90", "S", 1713), ("P90", "L", 1744), ("P90", "P90", 97),
]
TABLE2_DURATION = 2.0


def projector_ket(code: str) -> np.ndarray:
    if code in ("S", "L"):
        return path_ket(code)
    if code == "P0":
        return analyzer_ket(0.0)
    if code == "P90":
        return analyzer_ket(math.pi / 2)
    raise DomainError(f"unknown projector code {code!r}")


@dataclass(frozen=True)
class TomographySetting:
    index: int
    proj_a: str
    proj_b: str
    count: int = 0
    duration: float = TABLE2_DURATION

    def __post_init__(self):
        for code in (self.proj_a, self.proj_b):
            if code not in PROJECTOR_CODES:
                raise DomainError(f"unknown projector code {code!r}")
        if self.count < 0:
            raise DomainError("counts must be nonnegative")

    @property
    def ket(self) -> np.ndarray:
        return np.kron(projector_ket(self.proj_a), projector_ket(self.proj_b))

    @property
    def projector(self) -> np.ndarray:
        k = self.ket
        return np.outer(k, k.conj())


def table2_settings() -> list[TomographySetting]:
    """The 16 measurements with the recorded two-second coincidence totals."""
    return [TomographySetting(k + 1, a, b, c, TABLE2_DURATION) for k, (a, b, c) in enumerate(_TABLE2)]


def with_counts(settings: Sequence[TomographySetting], counts) -> list[TomographySetting]:
    counts = [int(c) for c in counts]
    if len(counts) != len(settings):
        raise ConfigError(f"expected {len(settings)} counts, got {len(counts)}")
    return [replace(s, count=c) for s, c in zip(settings, counts)]


def _kets(settings: Sequence[TomographySetting]) -> np.ndarray:
    return np.array([s.ket for s in settings])


def _counts(settings: Sequence[TomographySetting]) -> np.ndarray:
    return np.array([s.count for s in settings], dtype=float)


def measurement_probabilities(rho: StateLike, settings: Sequence[TomographySetting]) -> np.ndarray:
    m = as_density(rho).matrix
    kets = _kets(settings)
    return np.einsum("ki,ij,kj->k", kets.conj(), m, kets).real


def expected_tomography_counts(rho: StateLike, n_ref: float, settings=None) -> np.ndarray:
    settings = table2_settings() if settings is None else settings
    return n_ref * np.clip(measurement_probabilities(rho, settings), 0.0, None)


def simulate_tomography_counts(rho: StateLike, n_ref: float, seed, settings=None) -> np.ndarray:
    """Poisson counts with mean ``n_ref`` times each measurement probability."""
    rng = np.random.default_rng(seed)
    return rng.poisson(expected_tomography_counts(rho, n_ref, settings)).astype(np.int64)


_PAULI = [
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
]
HERMITIAN_BASIS = np.array([np.kron(a, b) for a in _PAULI for b in _PAULI])


def design_matrix(settings: Sequence[TomographySetting]) -> np.ndarray:
    """B[k, mu] = tr(Pi_k Gamma_mu) over the two-qubit Pauli basis."""
    kets = _kets(settings)
    return np.einsum("ki,mij,kj->km", kets.conj(), HERMITIAN_BASIS, kets).real


def informational_completeness(settings: Sequence[TomographySetting]) -> tuple[int, float]:
    """(rank, condition number) of the design matrix."""
    b = design_matrix(settings)
    sv = np.linalg.svd(b, compute_uv=False)
    rank = int(np.sum(sv > sv[0] * 1e-12))
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    return rank, cond


def linear_reconstruction(settings: Sequence[TomographySetting]) -> np.ndarray:
    """Direct inversion; Hermitian and unit trace but not necessarily PSD."""
    b = design_matrix(settings)
    if b.shape[0] < 16 or informational_completeness(settings)[0] < 16:
        raise ConfigError("measurement set is not informationally complete")
    x, *_ = np.linalg.lstsq(b, _counts(settings), rcond=None)
    m = np.einsum("m,mij->ij", x, HERMITIAN_BASIS)
    m = 0.5 * (m + m.conj().T)
    tr = np.trace(m).real
    if tr <= 0:
        raise ConfigError("linear inversion gave a nonpositive trace")
    return m / tr


def project_psd(m: np.ndarray) -> np.ndarray:
    """Closest unit-trace PSD matrix: eigenvalues projected onto the simplex."""
    m = 0.5 * (m + m.conj().T)
    w, v = np.linalg.eigh(m)
    u = np.sort(w)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.nonzero(u - css / np.arange(1, u.size + 1) > 0)[0][-1]
    w = np.maximum(w - css[k] / (k + 1), 0.0)
    return (v * w) @ v.conj().T


# --- Cholesky-factor parameterization ---------------------------------------

_TRIL = np.tril_indices(4, -1)


def params_to_factor(theta: np.ndarray) -> np.ndarray:
    """16 reals -> lower-triangular T with real diagonal; the state is T T^dagger / tr."""
    t = np.zeros((4, 4), dtype=complex)
    t[np.diag_indices(4)] = theta[:4]
    t[_TRIL] = theta[4:10] + 1j * theta[10:16]
    return t


def factor_to_params(t: np.ndarray) -> np.ndarray:
    return np.concatenate([t[np.diag_indices(4)].real, t[_TRIL].real, t[_TRIL].imag])


def _initial_params(rho0: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    rho0 = (1 - floor) * project_psd(rho0) + floor * np.eye(4) / 4
    t = np.linalg.cholesky(0.5 * (rho0 + rho0.conj().T))
    return factor_to_params(t)


class ProfileLikelihood:
    """Poisson log-likelihood with the unit-probability count level profiled out.

    For unnormalized probabilities q_k = <psi_k| T T^dagger |psi_k> the value is
    sum_k n_k log q_k - n log sum_k q_k, invariant under rescaling of T.
    """

    def __init__(self, settings: Sequence[TomographySetting]):
        self.kets = _kets(settings)
        self.counts = _counts(settings)
        self.total = float(self.counts.sum())
        if self.total <= 0:
            raise DomainError("all counts are zero")

    def probabilities(self, t: np.ndarray) -> np.ndarray:
        y = self.kets.conj() @ t
        return np.einsum("ki,ki->k", y, y.conj()).real

    def value(self, theta: np.ndarray) -> float:
        q = self.probabilities(params_to_factor(theta))
        s = q.sum()
        if s <= 0:
            return -math.inf
        pos = self.counts > 0
        if np.any(q[pos] <= 0):
            return -math.inf
        return float(self.counts[pos] @ np.log(q[pos]) - self.total * math.log(s))

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        t = params_to_factor(theta)
        q = self.probabilities(t)
        c = np.where(self.counts > 0, self.counts / np.where(q > 0, q, 1.0), 0.0) - self.total / q.sum()
        g = self.kets.T @ (c[:, None] * self.kets.conj())
        gt = 2.0 * g @ t
        return np.concatenate([gt[np.diag_indices(4)].real, gt[_TRIL].real, gt[_TRIL].imag])

    def full_log_likelihood(self, rho: np.ndarray) -> tuple[float, float]:
        """Poisson log-likelihood at the best count level, and that level."""
        p = np.einsum("ki,ij,kj->k", self.kets.conj(), rho, self.kets).real
        n_ref = self.total / p.sum()
        mu = n_ref * p
        pos = self.counts > 0
        ll = float(self.counts[pos] @ np.log(mu[pos]) - mu.sum() - gammaln(self.counts + 1).sum())
        return ll, float(n_ref)


@dataclass
class ReconstructionResult:
    rho: DensityOperator
    log_likelihood: float
    fidelity_with_phi_plus: float
    predicted_s: float
    iterations: int
    converged: bool
    n_ref: float
    params: np.ndarray | None = None

    def to_dict(self) -> dict:
        m = self.rho.matrix
        return {
            "rho": [[[float(m[i, j].real), float(m[i, j].imag)] for j in range(4)] for i in range(4)],
            "basis": ["SS", "SL", "LS", "LL"],
            "fidelity": self.fidelity_with_phi_plus,
            "predicted_s": self.predicted_s,
            "log_likelihood": self.log_likelihood,
            "iterations": self.iterations,
            "converged": self.converged,
            "n_ref": self.n_ref,
        }

    def to_json(self, extra: dict | None = None) -> str:
        d = self.to_dict()
        if extra:
            d.update(extra)
        return json.dumps(d, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ReconstructionResult":
        m = np.array([[complex(re, im) for re, im in row] for row in d["rho"]])
        return cls(DensityOperator.from_matrix(m), float(d["log_likelihood"]), float(d["fidelity"]),
                   float(d["predicted_s"]), int(d["iterations"]), bool(d["converged"]), float(d["n_ref"]))


def _summarize(rho_m: np.ndarray, lik: ProfileLikelihood, iterations: int, converged: bool,
               theta: np.ndarray | None) -> ReconstructionResult:
    rho = DensityOperator.from_matrix(rho_m)
    ll, n_ref = lik.full_log_likelihood(rho.matrix)
    return ReconstructionResult(
        rho=rho,
        log_likelihood=ll,
        fidelity_with_phi_plus=fidelity(rho, bell_phi_plus()),
        predicted_s=float(np.trace(chsh_operator(canonical_settings()) @ rho.matrix).real),
        iterations=iterations,
        converged=converged,
        n_ref=n_ref,
        params=theta,
    )


def ml_reconstruction(settings: Sequence[TomographySetting], tol: float = 1e-10, max_iter: int = 5000,
                      init: np.ndarray | None = None, history: list | None = None,
                      patience: int = 10) -> ReconstructionResult:
    """Maximum-likelihood state by gradient ascent with backtracking.

    The state is T T^dagger / tr with T lower triangular, so every iterate is
    physical. Starts from the PSD-projected linear inversion unless ``init``
    (a 16-parameter vector) is given. Stops once the relative change of the
    log-likelihood has stayed below ``tol`` for ``patience`` consecutive
    steps; if ``max_iter`` is hit first the result carries ``converged=False``.
    """
    lik = ProfileLikelihood(settings)
    theta = np.array(init, dtype=float) if init is not None else _initial_params(linear_reconstruction(settings))
    theta /= np.linalg.norm(theta)
    f = lik.value(theta)
    prev = theta
    k = 0  # iterations since the last momentum restart
    quiet = 0
    step = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        # Nesterov look-ahead, dropped whenever it does not improve
        y = theta + (k / (k + 3.0)) * (theta - prev)
        fy = lik.value(y) if k else f
        if fy < f:
            y, fy, k = theta, f, 0
        g = lik.gradient(y)
        gg = float(g @ g)
        step *= 2.0
        while True:
            trial = y + step * g
            f_new = lik.value(trial)
            if f_new >= fy + 1e-4 * step * gg:
                break
            step *= 0.5
            if step < 1e-300:
                trial, f_new = y, fy
                break
        if f_new < f:
            k = 0
            continue
        change = f_new - f
        prev, theta, f = theta, trial / np.linalg.norm(trial), f_new
        k += 1
        if history is not None:
            history.append(f)
        quiet = quiet + 1 if change <= tol * max(abs(f), 1.0) else 0
        if quiet >= patience:
            converged = True
            break
    t = params_to_factor(theta)
    m = t @ t.conj().T
    return _summarize(m / np.trace(m).real, lik, it, converged, theta)


def reconstruct_with_accidental_subtraction(settings: Sequence[TomographySetting], rates,
                                            **kwargs) -> ReconstructionResult:
    """Subtract ``rates`` (per second, scalar or one per setting) then run ML."""
    counts = subtract_accidental_counts(_counts(settings), rates, [s.duration for s in settings])
    return ml_reconstruction(with_counts(settings, counts), **kwargs)


def fidelity_error_bar(settings: Sequence[TomographySetting], n_resamples: int = 200, seed: int = 0,
                       **kwargs) -> float:
    """Standard deviation of the fidelity with Phi+ over Poisson resamples of the counts."""
    if n_resamples < 100:
        raise ConfigError("fidelity_error_bar needs at least 100 resamples")
    base = ml_reconstruction(settings, **kwargs)
    rng = np.random.default_rng(seed)
    counts = _counts(settings)
    fids = np.empty(n_resamples)
    for k in range(n_resamples):
        resampled = with_counts(settings, rng.poisson(counts))
        fids[k] = ml_reconstruction(resampled, init=base.params, **kwargs).fidelity_with_phi_plus
    return float(np.std(fids, ddof=1))
