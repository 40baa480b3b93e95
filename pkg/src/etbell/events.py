"""Event-level Monte Carlo of photon pairs in the Franson and hug geometries.

Pairs are held as struct-of-arrays batches; ``PhotonPairRecord`` and
``CoincidenceRecord`` are row views for callers that want single events.

Path codes: 0 = S, 1 = L. Port codes: 0 = lost, 1, 2. Station codes: 0 = A, 1 = B.
Class codes follow ``PAIR_CLASSES``; ``ACC`` marks a coincidence between hits
of different emissions (or background).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Literal

import numpy as np

from . import kernels
from .errors import ConfigError, ProcessingError
from .quantum import (
    DETECTOR_PAIRS,
    SETTING_LABELS,
    MeasurementSettings,
    coincidence_probabilities,
    werner_like,
    wrap_phase,
)

PAIR_CLASSES = ("SS", "SL", "LS", "LL", "ACC")
NO_PAIR = -1


@dataclass(frozen=True)
class GeometryConfig:
    scheme: Literal["franson", "hug"] = "franson"
    path_delay: float = 3e-9
    coincidence_window: float = 1e-9
    dead_time: float = 1e-9
    detection_efficiency: float = 0.15
    pair_rate: float = 1e4
    visibility: float = 1.0
    base_transit: float = 0.0
    # uncorrelated singles per detector, source of accidental coincidences
    background_rate: float = 0.0

    def __post_init__(self):
        scheme = str(self.scheme).lower()
        if scheme not in ("franson", "hug"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        object.__setattr__(self, "scheme", scheme)
        for name in ("path_delay", "coincidence_window", "dead_time", "detection_efficiency",
                     "pair_rate", "visibility", "base_transit", "background_rate"):
            if not math.isfinite(float(getattr(self, name))):
                raise ConfigError(f"{name} must be finite")
        if self.path_delay <= 0:
            raise ConfigError("path_delay must be positive")
        if not (0 < self.coincidence_window < self.path_delay):
            raise ConfigError("coincidence_window must lie in (0, path_delay)")
        if self.dead_time < 0:
            raise ConfigError("dead_time must be nonnegative")
        if not (0 < self.detection_efficiency <= 1):
            raise ConfigError("detection_efficiency must lie in (0, 1]")
        if self.pair_rate <= 0:
            raise ConfigError("pair_rate must be positive")
        if not (0 <= self.visibility <= 1):
            raise ConfigError("visibility must lie in [0, 1]")
        if self.background_rate < 0:
            raise ConfigError("background_rate must be nonnegative")


@dataclass(frozen=True)
class PhotonPairRecord:
    emission_time: float
    path_a: str
    path_b: str
    detector_a: int | None
    detector_b: int | None
    arrival_time_a: float
    arrival_time_b: float
    station_a: str = "A"
    station_b: str = "B"


@dataclass
class PairBatch:
    """Emitted pairs, one array element per pair.

    Photon ``a`` is the one whose short arm leads to station A; in the hug
    geometry its long arm leads to station B (and symmetrically for ``b``).
    ``port_*`` holds the output port hit, 0 if the photon was lost.
    """

    emission_time: np.ndarray
    path_a: np.ndarray
    path_b: np.ndarray
    port_a: np.ndarray
    port_b: np.ndarray
    time_a: np.ndarray
    time_b: np.ndarray
    station_a: np.ndarray
    station_b: np.ndarray
    phi_a: float = 0.0
    phi_b: float = 0.0
    duration: float = 0.0
    # background singles: time, station, port
    noise_time: np.ndarray = field(default_factory=lambda: np.zeros(0))
    noise_station: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))
    noise_port: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))

    def __len__(self) -> int:
        return self.emission_time.size

    @property
    def pair_class(self) -> np.ndarray:
        return (2 * self.path_a + self.path_b).astype(np.int8)

    def record(self, k: int) -> PhotonPairRecord:
        paths = "SL"
        stations = "AB"
        return PhotonPairRecord(
            emission_time=float(self.emission_time[k]),
            path_a=paths[self.path_a[k]],
            path_b=paths[self.path_b[k]],
            detector_a=int(self.port_a[k]) or None,
            detector_b=int(self.port_b[k]) or None,
            arrival_time_a=float(self.time_a[k]),
            arrival_time_b=float(self.time_b[k]),
            station_a=stations[self.station_a[k]],
            station_b=stations[self.station_b[k]],
        )

    def __iter__(self) -> Iterator[PhotonPairRecord]:
        for k in range(len(self)):
            yield self.record(k)


def _streams(seed) -> tuple[np.random.Generator, ...]:
    # independent streams so path/loss draws never depend on the settings
    ss = np.random.SeedSequence(seed)
    return tuple(np.random.default_rng(s) for s in ss.spawn(5))


def emission_times(rng: np.random.Generator, rate: float, *, duration: float | None = None,
                   n_pairs: int | None = None) -> np.ndarray:
    """Poisson-process emission times over ``duration`` or for exactly ``n_pairs`` pairs."""
    if rate <= 0:
        raise ConfigError("pair_rate must be positive")
    if n_pairs is not None:
        if n_pairs < 0:
            raise ConfigError("n_pairs must be nonnegative")
        return np.cumsum(rng.exponential(1.0 / rate, size=int(n_pairs)))
    if duration is None or duration < 0:
        raise ConfigError("duration must be nonnegative")
    n = rng.poisson(rate * duration)
    return np.sort(rng.uniform(0.0, duration, size=n))


def port_distribution(cfg: GeometryConfig, phi_a: float, phi_b: float) -> np.ndarray:
    """Conditional (p11, p12, p21, p22) for the interfering SS/LL classes."""
    return coincidence_probabilities(werner_like(cfg.visibility), phi_a, phi_b).as_array()


def _sample_ports(probs: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    k = np.searchsorted(cdf, u, side="right")
    k = np.minimum(k, 3)
    return (k // 2 + 1).astype(np.int8), (k % 2 + 1).astype(np.int8)


def propagate_pairs(t_emit: np.ndarray, cfg: GeometryConfig, phi_a: float, phi_b: float,
                    rngs: tuple[np.random.Generator, ...]) -> PairBatch:
    """Send emitted pairs through the interferometers.

    Each photon takes S or L with probability 1/2. The SS and LL classes
    interfere and their (port at A, port at B) is drawn from the coincidence
    probabilities; SL and LS ports are uniform. Each photon is then lost with
    probability 1 - detection_efficiency.
    """
    rng_path, rng_port, rng_loss = rngs[0], rngs[1], rngs[2]
    n = t_emit.size
    path_a = rng_path.integers(0, 2, size=n).astype(np.int8)
    path_b = rng_path.integers(0, 2, size=n).astype(np.int8)
    u_joint = rng_port.random(n)
    u_a = rng_port.random(n)
    u_b = rng_port.random(n)
    lost_a = rng_loss.random(n) >= cfg.detection_efficiency
    lost_b = rng_loss.random(n) >= cfg.detection_efficiency

    if cfg.scheme == "franson":
        station_a = np.zeros(n, dtype=np.int8)
        station_b = np.ones(n, dtype=np.int8)
    else:
        # short arm of a and long arm of b end at A; the other two at B
        station_a = path_a.copy()
        station_b = (1 - path_b).astype(np.int8)

    time_a = t_emit + cfg.base_transit + cfg.path_delay * path_a
    time_b = t_emit + cfg.base_transit + cfg.path_delay * path_b

    interfering = path_a == path_b
    at_a, at_b = _sample_ports(port_distribution(cfg, phi_a, phi_b), u_joint)
    port_a = np.where(u_a < 0.5, 1, 2).astype(np.int8)
    port_b = np.where(u_b < 0.5, 1, 2).astype(np.int8)
    # photon a sits at station A for SS and at B for LL (hug); Franson: always A
    a_is_at_a = station_a == 0
    port_a = np.where(interfering, np.where(a_is_at_a, at_a, at_b), port_a).astype(np.int8)
    port_b = np.where(interfering, np.where(a_is_at_a, at_b, at_a), port_b).astype(np.int8)
    port_a[lost_a] = 0
    port_b[lost_b] = 0
    return PairBatch(t_emit, path_a, path_b, port_a, port_b, time_a, time_b, station_a, station_b,
                     phi_a=float(phi_a), phi_b=float(phi_b))


def _background(cfg: GeometryConfig, duration: float, rng: np.random.Generator):
    if cfg.background_rate <= 0 or duration <= 0:
        return np.zeros(0), np.zeros(0, dtype=np.int8), np.zeros(0, dtype=np.int8)
    n = rng.poisson(4 * cfg.background_rate * duration)
    t = rng.uniform(0.0, duration, size=n)
    det = rng.integers(0, 4, size=n)
    order = np.argsort(t, kind="stable")
    return t[order], (det[order] // 2).astype(np.int8), (det[order] % 2 + 1).astype(np.int8)


def generate_pairs(cfg: GeometryConfig, duration: float | None, seed, phi_a: float = 0.0,
                   phi_b: float = 0.0, *, n_pairs: int | None = None) -> PairBatch:
    """Simulate a run of ``duration`` seconds (or exactly ``n_pairs`` emissions)."""
    if n_pairs is None:
        if duration is None or duration < 0:
            raise ConfigError("duration must be nonnegative")
    phi_a, phi_b = wrap_phase(phi_a), wrap_phase(phi_b)
    rngs = _streams(seed)
    t = emission_times(rngs[3], cfg.pair_rate, duration=duration, n_pairs=n_pairs)
    if n_pairs is not None:
        duration = float(t[-1]) if t.size else 0.0
    batch = propagate_pairs(t, cfg, phi_a, phi_b, rngs)
    batch.duration = float(duration)
    batch.noise_time, batch.noise_station, batch.noise_port = _background(cfg, batch.duration, rngs[4])
    return batch


def propagate_pair(rec: PhotonPairRecord, cfg: GeometryConfig, phi_a: float, phi_b: float,
                   rng: np.random.Generator) -> PhotonPairRecord:
    """Single-event form of :func:`propagate_pairs`."""
    batch = propagate_pairs(np.array([rec.emission_time]), cfg, wrap_phase(phi_a), wrap_phase(phi_b),
                            (rng, rng, rng))
    return batch.record(0)


@dataclass(frozen=True)
class CoincidenceRecord:
    pair_class: str
    ij: str
    accepted: bool
    settings: tuple[float, float]
    delta_t: float


@dataclass
class Coincidences:
    """Coincidence candidates found in one batch.

    ``same_pair`` rows are both photons of one emission surviving loss and
    dead time; the rest are window matches between unrelated hits.
    """

    pair_class: np.ndarray
    port_a: np.ndarray
    port_b: np.ndarray
    accepted: np.ndarray
    delta_t: np.ndarray
    same_pair: np.ndarray
    phi_a: float
    phi_b: float
    duration: float
    pair_id: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return self.pair_class.size

    def records(self) -> list[CoincidenceRecord]:
        return [
            CoincidenceRecord(PAIR_CLASSES[c], f"{pa}{pb}", bool(ok), (self.phi_a, self.phi_b), float(dt))
            for c, pa, pb, ok, dt in zip(self.pair_class, self.port_a, self.port_b, self.accepted, self.delta_t)
        ]

    def counts(self) -> np.ndarray:
        """Accepted coincidences tallied as (c11, c12, c21, c22)."""
        ok = self.accepted
        idx = 2 * (self.port_a[ok].astype(np.int64) - 1) + (self.port_b[ok].astype(np.int64) - 1)
        return np.bincount(idx, minlength=4).astype(np.int64)

    @property
    def n_detected_pairs(self) -> int:
        return int(np.count_nonzero(self.same_pair))

    @property
    def selection_rate(self) -> float:
        n = self.n_detected_pairs
        return float(np.count_nonzero(self.accepted & self.same_pair)) / n if n else float("nan")

    def cross_class_accepted(self) -> int:
        """Accepted A-B coincidences from the distinguishable SL/LS classes."""
        cls = self.pair_class
        return int(np.count_nonzero(self.accepted & self.same_pair & ((cls == 1) | (cls == 2))))


def selection_mask(batch: PairBatch, cfg: GeometryConfig) -> np.ndarray:
    """Per-emission acceptance by the scheme's rule, before loss and dead time.

    Franson compares the two arrival times; hug looks only at which station
    each photon reached.
    """
    if cfg.scheme == "franson":
        return np.abs(batch.time_a - batch.time_b) <= cfg.coincidence_window
    return batch.station_a != batch.station_b


def find_coincidences(batch: PairBatch, cfg: GeometryConfig) -> Coincidences:
    """Apply detector dead time, then pair station-A hits with station-B hits.

    Franson: an emission is accepted when its two arrival times differ by at
    most the coincidence window. Hug: when its photons landed at different
    stations; both-at-one-station emissions are rejected locally.
    """
    if np.any(np.diff(batch.emission_time) < 0):
        raise ProcessingError("pair records are not time-ordered")
    n = len(batch)
    det_mask_a = batch.port_a > 0
    det_mask_b = batch.port_b > 0
    pid = np.arange(n, dtype=np.int64)

    times = np.concatenate([batch.time_a[det_mask_a], batch.time_b[det_mask_b], batch.noise_time])
    station = np.concatenate([batch.station_a[det_mask_a], batch.station_b[det_mask_b], batch.noise_station])
    port = np.concatenate([batch.port_a[det_mask_a], batch.port_b[det_mask_b], batch.noise_port])
    owner = np.concatenate([pid[det_mask_a], pid[det_mask_b], np.full(batch.noise_time.size, NO_PAIR)])
    photon = np.concatenate([np.zeros(det_mask_a.sum(), np.int8), np.ones(det_mask_b.sum(), np.int8),
                             np.full(batch.noise_time.size, -1, np.int8)])
    order = np.argsort(times, kind="stable")
    times, station, port, owner, photon = times[order], station[order], port[order], owner[order], photon[order]
    detector = 2 * station.astype(np.int64) + port.astype(np.int64) - 1
    keep = kernels.dead_time_mask(times, detector, cfg.dead_time, 4)

    alive_a = np.zeros(n, dtype=bool)
    alive_b = np.zeros(n, dtype=bool)
    alive_a[owner[keep & (photon == 0)]] = True
    alive_b[owner[keep & (photon == 1)]] = True

    # same-emission records
    both = alive_a & alive_b
    cls = batch.pair_class[both]
    dt = (batch.time_a - batch.time_b)[both]
    sa = batch.station_a[both]
    sb = batch.station_b[both]
    pa = batch.port_a[both]
    pb = batch.port_b[both]
    accepted = selection_mask(batch, cfg)[both]
    if cfg.scheme == "franson":
        port_at_a, port_at_b = pa, pb
    else:
        swap = sa == 1
        port_at_a = np.where(swap, pb, pa)
        port_at_b = np.where(swap, pa, pb)
        dt = np.where(swap, -dt, dt)

    # window join for hits belonging to different emissions
    kt, ks, kp, ko = times[keep], station[keep], port[keep], owner[keep]
    on_a = ks == 0
    on_b = ks == 1
    ia, ib = kernels.window_join(kt[on_a], kt[on_b], cfg.coincidence_window)
    oa = ko[on_a][ia]
    ob = ko[on_b][ib]
    foreign = (oa != ob) | (oa == NO_PAIR)
    ia, ib = ia[foreign], ib[foreign]
    n_acc = ia.size

    return Coincidences(
        pair_class=np.concatenate([cls, np.full(n_acc, 4, np.int8)]).astype(np.int8),
        port_a=np.concatenate([port_at_a, kp[on_a][ia]]).astype(np.int8),
        port_b=np.concatenate([port_at_b, kp[on_b][ib]]).astype(np.int8),
        accepted=np.concatenate([accepted, np.ones(n_acc, bool)]),
        delta_t=np.concatenate([dt, kt[on_a][ia] - kt[on_b][ib]]),
        same_pair=np.concatenate([np.ones(cls.size, bool), np.zeros(n_acc, bool)]),
        phi_a=batch.phi_a,
        phi_b=batch.phi_b,
        duration=batch.duration,
        pair_id=np.concatenate([pid[both], np.full(n_acc, NO_PAIR, np.int64)]),
    )


@dataclass(frozen=True)
class CountRow:
    label: str
    phi_a: float
    phi_b: float
    counts: tuple[int, int, int, int]
    duration_s: float

    def __post_init__(self):
        c = tuple(int(x) for x in self.counts)
        if len(c) != 4 or any(x < 0 for x in c):
            raise ConfigError(f"counts must be four nonnegative integers, got {self.counts}")
        object.__setattr__(self, "counts", c)

    @property
    def total(self) -> int:
        return sum(self.counts)

    def as_dict(self) -> dict[str, int]:
        return dict(zip(DETECTOR_PAIRS, self.counts))


@dataclass(frozen=True)
class CountTable:
    """Accepted coincidences per setting pair and detector pair."""

    rows: dict[str, CountRow]

    @classmethod
    def from_rows(cls, rows) -> "CountTable":
        return cls({r.label: r for r in rows})

    def __getitem__(self, label: str) -> CountRow:
        return self.rows[label]

    def __contains__(self, label: str) -> bool:
        return label in self.rows

    def labels(self) -> list[str]:
        return list(self.rows)

    def merge(self, other: "CountTable") -> "CountTable":
        out = dict(self.rows)
        for label, row in other.rows.items():
            if label in out:
                mine = out[label]
                if not (np.isclose(mine.phi_a, row.phi_a) and np.isclose(mine.phi_b, row.phi_b)):
                    raise ConfigError(f"cannot merge {label}: phases differ")
                out[label] = CountRow(label, mine.phi_a, mine.phi_b,
                                      tuple(a + b for a, b in zip(mine.counts, row.counts)),
                                      mine.duration_s + row.duration_s)
            else:
                out[label] = row
        return CountTable(out)


@dataclass(frozen=True)
class SettingRun:
    label: str
    phi_a: float
    phi_b: float
    counts: np.ndarray
    n_emitted: int
    n_detected_pairs: int
    selection_rate: float
    cross_class_accepted: int
    duration: float


def simulate_setting(cfg: GeometryConfig, phi_a: float, phi_b: float, n_pairs: int, seed,
                     label: str = "") -> SettingRun:
    batch = generate_pairs(cfg, None, seed, phi_a, phi_b, n_pairs=n_pairs)
    co = find_coincidences(batch, cfg)
    return SettingRun(label, batch.phi_a, batch.phi_b, co.counts(), len(batch), co.n_detected_pairs,
                      co.selection_rate, co.cross_class_accepted(), batch.duration)


def simulate_chsh_runs(cfg: GeometryConfig, settings: MeasurementSettings, pairs_per_setting: int,
                       seed: int) -> dict[str, SettingRun]:
    if pairs_per_setting < 1:
        raise ConfigError("pairs_per_setting must be at least 1")
    runs = {}
    # sub-stream k is tied to the setting label, not to execution order
    for label, (a, b) in settings.pairs().items():
        runs[label] = simulate_setting(cfg, a, b, pairs_per_setting, [int(seed), SETTING_LABELS.index(label)], label)
    return runs


def run_chsh_experiment(cfg: GeometryConfig, settings: MeasurementSettings, pairs_per_setting: int,
                        seed: int) -> CountTable:
    runs = simulate_chsh_runs(cfg, settings, pairs_per_setting, seed)
    return CountTable.from_rows(
        CountRow(r.label, r.phi_a, r.phi_b, tuple(r.counts), r.duration) for r in runs.values()
    )


@dataclass(frozen=True)
class FringeScan:
    phi_b: float
    phi_a: np.ndarray
    counts: np.ndarray  # shape (n_points, 4): c11, c12, c21, c22

    def curve(self, ij: str) -> np.ndarray:
        return self.counts[:, DETECTOR_PAIRS.index(ij)]


def fringe_scan(cfg: GeometryConfig, phi_b: float, phi_a_grid, pairs_per_point: int, seed) -> FringeScan:
    """Count curves against phi_a at fixed phi_b. ``seed`` is an int or a sequence of ints."""
    base = [int(x) for x in np.atleast_1d(seed)]
    grid = np.asarray(list(phi_a_grid), dtype=float)
    if grid.size == 0:
        raise ConfigError("phase grid is empty")
    if pairs_per_point < 1:
        raise ConfigError("pairs_per_point must be at least 1")
    counts = np.zeros((grid.size, 4), dtype=np.int64)
    for k, a in enumerate(grid):
        counts[k] = simulate_setting(cfg, a, phi_b, pairs_per_point, [*base, 1000 + k]).counts
    return FringeScan(wrap_phase(phi_b), grid, counts)
