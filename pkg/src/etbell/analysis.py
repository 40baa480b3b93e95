"""From coincidence counts to CHSH values, visibilities and their errors."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import IncompleteDataError, SingularFitError, UndefinedEstimateError
from .events import CountRow, CountTable
from .quantum import CHSH_SIGNS, DETECTOR_PAIRS, SETTING_LABELS, MeasurementSettings, wrap_phase

CLASSICAL_BOUND = 2.0
PHASE_MATCH_TOL = 1e-8  # phases are stored with 9 significant digits


def correlation_from_counts(counts: Sequence[float]) -> tuple[float, float]:
    """Correlator (c11 + c22 - c12 - c21) / N with first-order Poisson error.

    Each count is treated as an independent Poisson variable, which gives
    var(E) = 4 * (c11 + c22) * (c12 + c21) / N**3.
    """
    c11, c12, c21, c22 = (float(x) for x in counts)
    same = c11 + c22
    diff = c12 + c21
    n = same + diff
    if n <= 0:
        raise UndefinedEstimateError("correlator undefined: total count is zero")
    e = (same - diff) / n
    de = math.sqrt(max(4.0 * same * diff / n**3, 0.0))
    return e, de


def sigma_violation(s: float, delta_s: float) -> float:
    """Distance of ``s`` above the classical bound in units of ``delta_s``."""
    if delta_s > 0:
        return (s - CLASSICAL_BOUND) / delta_s
    if s == CLASSICAL_BOUND:
        return 0.0
    return math.copysign(math.inf, s - CLASSICAL_BOUND)


def expected_chsh(visibility: float) -> float:
    return 2.0 * math.sqrt(2.0) * visibility


@dataclass(frozen=True)
class Correlator:
    label: str
    phi_a: float
    phi_b: float
    e: float
    delta_e: float


@dataclass(frozen=True)
class ChshReport:
    s: float
    delta_s: float
    sigma_violation: float
    correlators: tuple[Correlator, ...]
    method: str = "raw_counts"

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "delta_s": self.delta_s,
            "sigma_violation": self.sigma_violation,
            "method": self.method,
            "correlators": [
                {"label": c.label, "phi_a": c.phi_a, "phi_b": c.phi_b, "e": c.e, "delta_e": c.delta_e}
                for c in self.correlators
            ],
        }

    def to_json(self) -> str:
        return json.dumps(_finite(self.to_dict()), indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_dict(cls, d: Mapping) -> "ChshReport":
        cors = tuple(
            Correlator(c.get("label", SETTING_LABELS[k]), float(c["phi_a"]), float(c["phi_b"]),
                       float(c["e"]), float(c["delta_e"]))
            for k, c in enumerate(d["correlators"])
        )
        sv = d["sigma_violation"]
        return cls(float(d["s"]), float(d["delta_s"]), float(sv) if sv is not None else math.nan, cors,
                   d.get("method", "raw_counts"))

    @classmethod
    def from_json(cls, text: str) -> "ChshReport":
        return cls.from_dict(json.loads(text))


def _finite(obj):
    # JSON has no inf/nan
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite(v) for v in obj]
    return obj


def _same_phase(a: float, b: float) -> bool:
    return abs(wrap_phase(a - b)) < PHASE_MATCH_TOL


def _report(entries: list[tuple[str, float, float, Sequence[float]]], method: str) -> ChshReport:
    cors = []
    s = 0.0
    var = 0.0
    for label, a, b, counts in entries:
        e, de = correlation_from_counts(counts)
        cors.append(Correlator(label, a, b, e, de))
        s += CHSH_SIGNS[label] * e
        var += de * de
    ds = math.sqrt(var)
    return ChshReport(s, ds, sigma_violation(s, ds), tuple(cors), method)


def chsh_from_counts(table: CountTable, settings: MeasurementSettings | None = None) -> ChshReport:
    """CHSH value from a table holding the four setting pairs A0B0, A1B0, A0B1, A1B1."""
    missing = [lab for lab in SETTING_LABELS if lab not in table]
    if missing:
        raise IncompleteDataError(f"count table lacks setting pairs {missing}")
    expected = settings.pairs() if settings is not None else {}
    entries = []
    for label in SETTING_LABELS:
        row = table[label]
        if label in expected:
            a, b = expected[label]
            if not (_same_phase(a, row.phi_a) and _same_phase(b, row.phi_b)):
                raise IncompleteDataError(
                    f"row {label} was taken at ({row.phi_a:.6g}, {row.phi_b:.6g}), expected ({a:.6g}, {b:.6g})")
        entries.append((label, row.phi_a, row.phi_b, row.counts))
    return _report(entries, "raw_counts")


def bootstrap_chsh_error(table: CountTable, n_resamples: int, seed: int) -> float:
    """Parametric Poisson bootstrap of S; a cross-check of the propagated error."""
    rng = np.random.default_rng(seed)
    counts = np.array([table[lab].counts for lab in SETTING_LABELS], dtype=float)
    signs = np.array([CHSH_SIGNS[lab] for lab in SETTING_LABELS])
    sims = rng.poisson(counts, size=(n_resamples,) + counts.shape).astype(float)
    n = sims.sum(axis=2)
    e = (sims[..., 0] + sims[..., 3] - sims[..., 1] - sims[..., 2]) / n
    return float(np.std(e @ signs, ddof=1))


@dataclass(frozen=True)
class FringeFit:
    """Fit of count(phi) = C * (1 + V cos(phi + theta0)); amplitude A = C * V."""

    amplitude: float
    offset: float
    phase: float
    visibility: float
    residual_norm: float
    n_points: int = 0

    def model(self, phi) -> np.ndarray:
        return self.offset + self.amplitude * np.cos(np.asarray(phi, dtype=float) + self.phase)

    def to_dict(self) -> dict:
        return {
            "amplitude": self.amplitude,
            "offset": self.offset,
            "phase": self.phase,
            "visibility": self.visibility,
            "residual_norm": self.residual_norm,
            "n_points": self.n_points,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FringeFit":
        return cls(float(d["amplitude"]), float(d["offset"]), float(d["phase"]), float(d["visibility"]),
                   float(d["residual_norm"]), int(d.get("n_points", 0)))


def fit_fringe(phi, counts) -> FringeFit:
    """Linear least squares in (C, C V cos theta0, C V sin theta0)."""
    phi = np.asarray(phi, dtype=float).ravel()
    y = np.asarray(counts, dtype=float).ravel()
    if phi.shape != y.shape:
        raise SingularFitError("phase and count arrays differ in length")
    distinct = np.unique(np.round(np.mod(phi, 2 * np.pi), 12))
    if distinct.size < 4:
        raise SingularFitError(f"need at least 4 distinct phases, got {distinct.size}")
    design = np.column_stack([np.ones_like(phi), np.cos(phi), -np.sin(phi)])
    if np.linalg.matrix_rank(design) < 3:
        raise SingularFitError("phases are degenerate (all equal modulo pi)")
    (c, p, q), *_ = np.linalg.lstsq(design, y, rcond=None)
    residual = float(np.linalg.norm(design @ np.array([c, p, q]) - y))
    amp = math.hypot(p, q)
    theta = math.atan2(q, p)
    if c <= 0:
        if amp == 0 and c == 0:
            return FringeFit(0.0, 0.0, 0.0, 0.0, residual, phi.size)
        raise SingularFitError(f"fitted offset {c:.4g} is not positive")
    # visibility is capped at 1 (A <= C)
    amp = min(amp, c)
    return FringeFit(amp, float(c), theta, amp / c, residual, phi.size)


def mean_visibility(fits: Sequence[FringeFit] | Mapping) -> tuple[float, float]:
    """Unweighted mean visibility and its standard error."""
    vals = _flatten_fits(fits)
    if not vals:
        raise UndefinedEstimateError("no fits given")
    v = np.array([f.visibility for f in vals])
    sem = float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), sem


def _flatten_fits(fits) -> list[FringeFit]:
    if isinstance(fits, FringeFit):
        return [fits]
    if isinstance(fits, Mapping):
        out = []
        for v in fits.values():
            out.extend(_flatten_fits(v))
        return out
    out = []
    for v in fits:
        out.extend(_flatten_fits(v))
    return out


def fit_scan(phi_a, counts) -> dict[str, FringeFit]:
    """Fit all four detector-pair curves of a scan; ``counts`` has shape (n, 4)."""
    counts = np.asarray(counts, dtype=float)
    return {ij: fit_fringe(phi_a, counts[:, k]) for k, ij in enumerate(DETECTOR_PAIRS)}


def chsh_from_fits(fits: Mapping[float, Mapping[str, FringeFit]], settings: MeasurementSettings) -> ChshReport:
    """Evaluate the fitted curves at the four setting pairs and treat the
    model values as counts.

    ``fits`` maps each scanned phi_b to the four detector-pair fits of the
    curve taken against phi_a.
    """
    entries = []
    for label, (a, b) in settings.pairs().items():
        curves = next((f for pb, f in fits.items() if _same_phase(pb, b)), None)
        if curves is None:
            raise IncompleteDataError(f"no fringe scan at phi_b = {b:.6g} (needed for {label})")
        missing = [ij for ij in DETECTOR_PAIRS if ij not in curves]
        if missing:
            raise IncompleteDataError(f"scan at phi_b = {b:.6g} lacks curves {missing}")
        model = [max(float(curves[ij].model(a)), 0.0) for ij in DETECTOR_PAIRS]
        entries.append((label, a, b, model))
    return _report(entries, "from_fit")


def subtract_accidental_counts(counts, rates, durations) -> np.ndarray:
    """max(0, c - rate * duration) rounded to the nearest integer, elementwise."""
    counts = np.asarray(counts, dtype=float)
    rates = np.broadcast_to(np.asarray(rates, dtype=float), counts.shape)
    if np.any(rates < 0):
        raise ValueError("accidental rates must be nonnegative")
    durations = np.asarray(durations, dtype=float)
    if durations.ndim and durations.shape != counts.shape:
        durations = durations.reshape(durations.shape + (1,) * (counts.ndim - durations.ndim))
    return np.rint(np.maximum(counts - rates * durations, 0.0)).astype(np.int64)


def subtract_accidentals(table: CountTable, rates) -> CountTable:
    """Subtract accidental rates per detector pair.

    ``rates`` is either four numbers (c11..c22, per second) applied to every
    row, or a mapping from setting label to four numbers.
    """
    rows = []
    for label, row in table.rows.items():
        r = rates[label] if isinstance(rates, Mapping) else rates
        new = subtract_accidental_counts(row.counts, r, row.duration_s)
        rows.append(CountRow(label, row.phi_a, row.phi_b, tuple(int(x) for x in new), row.duration_s))
    return CountTable.from_rows(rows)
