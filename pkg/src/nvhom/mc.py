"""
Event-driven Monte Carlo of emitter click streams and two-photon interference.

Emitters are three-state Markov chains (ground, excited, metastable shelf)
under continuous pumping. Every decay of the excited state emits a photon;
afterwards the emitter is in the ground state, or shelved with probability
``shelf_prob``. The post-emission state does not depend on the past, so the
emission times form a renewal process. Photon collection is independent
thinning, and a thinned renewal process is again renewal. Its intervals are
sums of a geometric number of emission cycles, sampled exactly as

    Gamma(N, 1/pump) + Gamma(N, 1/gamma) + Gamma(M, 1/k_shelf),
    N ~ Geometric(eta), M ~ Binomial(N, shelf_prob),

so streams at realistic collection efficiencies (1e-4..1e-2) cost one draw per
collected photon.

Interference at the beamsplitter is applied pairwise. Photons of different
emitters closer than a pairing window leave through different ports with
probability 1/2 [1 - V], with V = xi exp(-gamma_bar |dt|) cos(2 pi (nu1 - nu2) dt).
Every other photon picks a port at random. This is exact when photon
overlaps are rare. ``simulate_hom`` refuses to run otherwise.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, DomainError, ValidityError
from .model import AutocorrParams, EmitterModel, PairConfig, interference_feature_width

__all__ = [
    "EmissionDynamics",
    "DetectorModel",
    "PhotonRecord",
    "PhotonStream",
    "ClickStream",
    "PLESpectrum",
    "PROVENANCE",
    "simulate_emitter_stream",
    "simulate_hom",
    "simulate_hbt",
    "hom_batches",
    "hbt_batches",
    "simulate_ple",
    "batch_seed",
]

PS = 1e-12
DETECTORS = ("C", "D")
PROVENANCE = ("signal1", "signal2", "dark", "background")
_SIGNAL1, _SIGNAL2, _DARK, _BACKGROUND = range(4)

#: detuning of emission from non-selected transitions
IMPURITY_DETUNING = 3e9


@dataclass(frozen=True)
class EmissionDynamics:
    """Rates of the three-state emitter and the collection efficiency.

    ``pump_rate == 0`` switches the emitter off.
    """

    pump_rate: float
    gamma: float
    shelf_prob: float = 0.0
    shelf_lifetime: float = 300e-9
    collection_efficiency: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.pump_rate) and self.pump_rate >= 0):
            raise ConfigError("must be finite and >= 0", "pump_rate")
        if not (math.isfinite(self.gamma) and self.gamma > 0):
            raise ConfigError("must be > 0, otherwise the excited state is absorbing", "gamma")
        if not 0.0 <= self.shelf_prob < 1.0:
            raise ConfigError("must lie in [0, 1)", "shelf_prob")
        if not (math.isfinite(self.shelf_lifetime) and self.shelf_lifetime > 0):
            raise ConfigError("must be finite and > 0, otherwise the shelf is absorbing",
                              "shelf_lifetime")
        if not 0.0 < self.collection_efficiency <= 1.0:
            raise ConfigError("must lie in (0, 1]", "collection_efficiency")

    @property
    def shelf_rate(self):
        return 1.0 / self.shelf_lifetime

    def generator(self):
        """Rate matrix over (ground, excited, shelf); rows are 'from' states."""
        r, g, s, k = self.pump_rate, self.gamma, self.shelf_prob, self.shelf_rate
        return np.array([
            [-r, r, 0.0],
            [g * (1 - s), -g, g * s],
            [k, 0.0, -k],
        ])

    def emission_rate(self):
        """Steady-state photon emission rate (inverse mean cycle time)."""
        if self.pump_rate == 0:
            return 0.0
        return 1.0 / (1.0 / self.pump_rate + 1.0 / self.gamma + self.shelf_prob / self.shelf_rate)

    def collected_rate(self):
        return self.collection_efficiency * self.emission_rate()

    def with_collected_rate(self, rate):
        """Copy with the collection efficiency set to give ``rate`` photons/s."""
        em = self.emission_rate()
        if em <= 0:
            raise ConfigError("emitter is off; cannot reach a nonzero rate", "pump_rate")
        eta = rate / em
        if not 0 < eta <= 1:
            raise ConfigError(f"rate {rate:g}/s needs collection efficiency {eta:g} outside (0, 1]",
                              "collection_efficiency")
        return replace(self, collection_efficiency=eta)

    def autocorr(self):
        """Exact g2 of the emission process as three-level parameters.

        After an emission the excited-state population p_E(t) is a sum of the
        generator's three modes. p_E(0) = 0 and p_E'(0) = pump (1 - shelf_prob)
        fix the two transient amplitudes.
        """
        r, g, s, k = self.pump_rate, self.gamma, self.shelf_prob, self.shelf_rate
        if r == 0:
            raise ConfigError("emitter is off; autocorrelation undefined", "pump_rate")
        s1 = r + g + k
        s2 = r * g * s + r * k + g * k
        disc = s1 * s1 - 4 * s2
        if disc <= 0:
            raise ConfigError("oscillatory dynamics are not representable by the "
                              "three-level autocorrelation form")
        root = math.sqrt(disc)
        lam_fast = -(s1 + root) / 2
        lam_slow = -(s1 - root) / 2
        pi_e = self.emission_rate() / g
        amp_fast = (r * (1 - s) + lam_slow * pi_e) / (lam_fast - lam_slow)
        amp_slow = -pi_e - amp_fast
        a = amp_slow / pi_e
        if a < -1e-12:
            raise ConfigError("dynamics give negative bunching amplitude")
        return AutocorrParams(a=max(a, 0.0), tau1=-1.0 / lam_fast, tau2=-1.0 / lam_slow)

    @classmethod
    def from_autocorr(cls, p: AutocorrParams, gamma, collection_efficiency=1.0):
        """Invert :meth:`autocorr`: find pump, shelf_prob, shelf_lifetime.

        The eigenvalue sum and product fix pump + k and the second invariant;
        the bunching amplitude fixes the remaining degree of freedom, found by
        bracketing root search over the pump rate.
        """
        if p.a == 0:
            # no shelving; tau2 only sets the (unvisited) shelf lifetime
            r = 1.0 / p.tau1 - gamma
            if r <= 0:
                raise ConfigError("tau1 too long for the given gamma (need 1/tau1 > gamma)")
            return cls(r, gamma, 0.0, p.tau2, collection_efficiency)
        s1 = 1.0 / p.tau1 + 1.0 / p.tau2
        s2 = 1.0 / (p.tau1 * p.tau2)
        budget = s1 - gamma
        if budget <= 0:
            raise ConfigError("tau1 too long for the given gamma (need 1/tau1 + 1/tau2 > gamma)")

        def unpack(r):
            k = budget - r
            s = (s2 - r * k - gamma * k) / (r * gamma)
            return k, s

        def excess(r):
            k, s = unpack(r)
            dyn = cls(r, gamma, min(max(s, 0.0), 0.999999), 1.0 / k)
            return dyn.autocorr().a - p.a

        lo, hi = budget * 1e-9, budget * (1 - 1e-9)
        grid = np.linspace(lo, hi, 400)
        vals = []
        for r in grid:
            k, s = unpack(r)
            ok = 0 <= s < 1 and k > 0
            try:
                vals.append(excess(r) if ok else np.nan)
            except ConfigError:
                vals.append(np.nan)
        vals = np.array(vals)
        for i in range(len(grid) - 1):
            if np.isfinite(vals[i]) and np.isfinite(vals[i + 1]) and vals[i] * vals[i + 1] <= 0:
                r = brentq(excess, grid[i], grid[i + 1], xtol=1e-14 * budget, rtol=1e-14)
                k, s = unpack(r)
                return cls(r, gamma, s, 1.0 / k, collection_efficiency)
        raise ConfigError(f"no three-state dynamics reproduce {p}")


@dataclass(frozen=True)
class DetectorModel:
    efficiency: float = 1.0
    dark_rate: float = 0.0
    background_rate: float = 0.0
    jitter_sigma: float = 50e-12
    dead_time: float = 0.0

    def __post_init__(self):
        for name in ("efficiency", "dark_rate", "background_rate", "jitter_sigma", "dead_time"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError("must be finite and >= 0", name)
        if self.efficiency > 1:
            raise ConfigError("must be <= 1", "efficiency")

    @property
    def noise_rate(self):
        return self.dark_rate + self.background_rate


@dataclass(frozen=True)
class PhotonRecord:
    emit_time: float
    center_freq: float
    emitter_id: int
    interferes: bool = True


@dataclass
class PhotonStream:
    """Columnar store of collected photons from one or more emitters."""

    emit_time: np.ndarray
    center_freq: np.ndarray
    emitter_id: np.ndarray
    interferes: np.ndarray

    def __len__(self):
        return len(self.emit_time)

    def __iter__(self) -> Iterator[PhotonRecord]:
        for t, f, e, i in zip(self.emit_time, self.center_freq, self.emitter_id, self.interferes):
            yield PhotonRecord(float(t), float(f), int(e), bool(i))

    @classmethod
    def empty(cls):
        return cls(np.empty(0), np.empty(0), np.empty(0, np.int8), np.empty(0, bool))


@dataclass
class ClickStream:
    """Time-ordered detector clicks.

    ``detector`` holds 0 (C) or 1 (D), ``time_ps`` integer picoseconds from
    the start of the record, ``provenance`` an index into :data:`PROVENANCE`.
    """

    detector: np.ndarray
    time_ps: np.ndarray
    provenance: np.ndarray
    duration: float
    seed: int | None = None
    batch: int | None = None

    def __post_init__(self):
        self.detector = np.asarray(self.detector, dtype=np.uint8)
        self.time_ps = np.asarray(self.time_ps, dtype=np.int64)
        self.provenance = np.asarray(self.provenance, dtype=np.uint8)
        if not (len(self.detector) == len(self.time_ps) == len(self.provenance)):
            raise DomainError("click columns must have equal length")

    def __len__(self):
        return len(self.time_ps)

    def times(self, detector):
        """Sorted click times (ps) of detector 'C'/'D' (or 0/1)."""
        d = DETECTORS.index(detector) if isinstance(detector, str) else int(detector)
        return self.time_ps[self.detector == d]

    def rate(self, detector):
        return len(self.times(detector)) / self.duration

    def counts_by_provenance(self, detector=None):
        sel = slice(None) if detector is None else self.detector == DETECTORS.index(detector)
        n = np.bincount(self.provenance[sel], minlength=len(PROVENANCE))
        return dict(zip(PROVENANCE, n.tolist()))

    def equals(self, other):
        return (
            self.duration == other.duration
            and np.array_equal(self.detector, other.detector)
            and np.array_equal(self.time_ps, other.time_ps)
            and np.array_equal(self.provenance, other.provenance)
        )

    # serialization: columnar .npz or CSV with integer picoseconds
    def save_npz(self, path):
        np.savez(path, detector=self.detector, time_ps=self.time_ps, provenance=self.provenance,
                 duration=np.float64(self.duration),
                 seed=np.int64(-1 if self.seed is None else self.seed))

    @classmethod
    def load_npz(cls, path):
        with np.load(path) as z:
            seed = int(z["seed"])
            return cls(z["detector"], z["time_ps"], z["provenance"], float(z["duration"]),
                       None if seed < 0 else seed)

    def save_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# duration_s={self.duration!r} seed={self.seed}\n")
            w = csv.writer(fh)
            w.writerow(["detector_id", "time_ps", "provenance"])
            for d, t, p in zip(self.detector, self.time_ps, self.provenance):
                w.writerow([DETECTORS[d], int(t), PROVENANCE[p]])

    @classmethod
    def load_csv(cls, path, duration=None):
        det, tps, prov = [], [], []
        seed = None
        with open(path, newline="") as fh:
            first = fh.readline()
            if first.startswith("#"):
                for tok in first[1:].split():
                    key, _, val = tok.partition("=")
                    if key == "duration_s" and duration is None:
                        duration = float(val)
                    elif key == "seed" and val != "None":
                        seed = int(val)
            else:
                fh.seek(0)
            for row in csv.DictReader(fh):
                det.append(DETECTORS.index(row["detector_id"]))
                tps.append(int(row["time_ps"]))
                prov.append(PROVENANCE.index(row.get("provenance") or "signal1"))
        if duration is None:
            duration = (max(tps) + 1) * PS if tps else 0.0
        return cls(np.array(det), np.array(tps), np.array(prov), duration, seed)


@dataclass
class PLESpectrum:
    freq: np.ndarray
    counts: np.ndarray
    expected: np.ndarray
    dwell: float
    meta: dict = field(default_factory=dict)


def batch_seed(seed, batch):
    """Independent RNG seed for batch ``batch`` of a run keyed by ``seed``."""
    return np.random.SeedSequence(entropy=int(seed), spawn_key=(int(batch),))


def _seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if seed is None:
        raise ConfigError("a seed is required for stochastic simulation", "seed")
    return np.random.SeedSequence(int(seed))


def _collected_times(dyn: EmissionDynamics, duration, rng, warmup=10e-6):
    """Collected-photon times in [0, duration) from a stationary emitter."""
    if dyn.pump_rate == 0:
        return np.empty(0)
    eta = dyn.collection_efficiency
    mean_interval = 1.0 / dyn.collected_rate()
    chunk = int((duration + warmup) / mean_interval * 1.05) + 64
    out = []
    t0 = -warmup
    while True:
        n = rng.geometric(eta, chunk) if eta < 1 else np.ones(chunk, dtype=np.int64)
        iv = rng.gamma(n, 1.0 / dyn.pump_rate) + rng.gamma(n, 1.0 / dyn.gamma)
        if dyn.shelf_prob > 0:
            m = rng.binomial(n, dyn.shelf_prob)
            iv += rng.gamma(m, dyn.shelf_lifetime)
        t = t0 + np.cumsum(iv)
        out.append(t)
        if t[-1] >= duration:
            break
        t0 = t[-1]
        chunk = max(64, int((duration - t0) / mean_interval * 1.05) + 64)
    t = np.concatenate(out)
    return t[(t >= 0) & (t < duration)]


def simulate_emitter_stream(em: EmitterModel, dyn: EmissionDynamics, duration, seed=None,
                            emitter_id=1, rng=None, impurity_detuning=IMPURITY_DETUNING):
    """Collected photons of one continuously pumped emitter.

    Each photon carries a center frequency drawn afresh from the spectral
    diffusion Lorentzian around ``em.f_Ex``. A fraction 1 - spin_purity
    comes from other transitions. Those photons sit ``impurity_detuning``
    away and are marked as non-interfering.
    """
    if not duration > 0:
        raise DomainError("duration must be > 0")
    if abs(dyn.gamma - em.gamma) > 1e-9 * em.gamma:
        raise ConfigError("dynamics gamma differs from emitter gamma", "gamma")
    if rng is None:
        rng = np.random.default_rng(_seed_sequence(seed))
    t = _collected_times(dyn, duration, rng)
    n = t.size
    freq = em.f_Ex + 0.5 * em.sd_fwhm * rng.standard_cauchy(n)
    pure = rng.random(n) < em.spin_purity
    freq = np.where(pure, freq, em.f_Ex + impurity_detuning)
    return PhotonStream(t, freq, np.full(n, emitter_id, dtype=np.int8), pure)


def _merge_sorted(a, b):
    """Positions of b's elements in the sorted union of sorted a and b."""
    pos_b = np.searchsorted(a, b, side="right") + np.arange(b.size)
    mask = np.zeros(a.size + b.size, dtype=bool)
    mask[pos_b] = True
    return mask


def _merge_streams(s1: PhotonStream, s2: PhotonStream):
    mask = _merge_sorted(s1.emit_time, s2.emit_time)

    def cat(x1, x2):
        out = np.empty(x1.size + x2.size, dtype=np.result_type(x1, x2))
        out[~mask] = x1
        out[mask] = x2
        return out

    return PhotonStream(cat(s1.emit_time, s2.emit_time), cat(s1.center_freq, s2.center_freq),
                        cat(s1.emitter_id, s2.emitter_id), cat(s1.interferes, s2.interferes))


def _pair_candidates(ph: PhotonStream, window):
    """Disjoint adjacent cross-emitter pairs closer than ``window``.

    Returns first indices of kept pairs and the number of conflicts (photons
    that could pair on both sides).
    """
    if len(ph) < 2:
        return np.empty(0, dtype=np.int64), 0
    dt = np.diff(ph.emit_time)
    cand = (ph.emitter_id[1:] != ph.emitter_id[:-1]) & (dt <= window)
    idx = np.flatnonzero(cand)
    if idx.size == 0:
        return idx, 0
    # chains of overlapping candidates: keep every other one from the chain start
    new_run = np.ones(idx.size, dtype=bool)
    new_run[1:] = np.diff(idx) != 1
    run_id = np.cumsum(new_run) - 1
    run_start = idx[new_run][run_id]
    keep = (idx - run_start) % 2 == 0
    return idx[keep], int(np.count_nonzero(~new_run))


def _dead_time_filter(t, dead_ps):
    """Non-paralyzable dead time on a sorted click array; returns keep mask."""
    keep = np.ones(t.size, dtype=bool)
    if t.size < 2:
        return keep
    close = np.diff(t) < dead_ps
    if not close.any():
        return keep
    # clusters: maximal runs linked by gaps shorter than the dead time;
    # a cluster's first click is always kept
    starts = np.flatnonzero(close & ~np.concatenate(([False], close[:-1])))
    for s in starts:
        last = t[s]
        i = s + 1
        while i < t.size and t[i] - t[i - 1] < dead_ps:
            if t[i] - last < dead_ps:
                keep[i] = False
            else:
                last = t[i]
            i += 1
        # the first click after the cluster may still be inside the last dead window
        while i < t.size and t[i] - last < dead_ps:
            keep[i] = False
            i += 1
    return keep


def _detect(times, provenance, det: DetectorModel, duration, rng):
    """Apply efficiency, jitter, noise clicks and dead time for one detector."""
    n = times.size
    if det.efficiency < 1:
        sel = rng.random(n) < det.efficiency
        times, provenance = times[sel], provenance[sel]
    if det.jitter_sigma > 0:
        times = times + rng.normal(0.0, det.jitter_sigma, times.size)
    t_ps = np.rint(times / PS).astype(np.int64)
    parts_t, parts_p = [t_ps], [provenance]
    for rate, tag in ((det.dark_rate, _DARK), (det.background_rate, _BACKGROUND)):
        if rate > 0:
            k = rng.poisson(rate * duration)
            parts_t.append(np.rint(rng.random(k) * duration / PS).astype(np.int64))
            parts_p.append(np.full(k, tag, dtype=np.uint8))
    t_ps = np.concatenate(parts_t)
    prov = np.concatenate(parts_p).astype(np.uint8)
    end_ps = int(round(duration / PS))
    inside = (t_ps >= 0) & (t_ps <= end_ps)
    t_ps, prov = t_ps[inside], prov[inside]
    order = np.argsort(t_ps, kind="stable")
    t_ps, prov = t_ps[order], prov[order]
    keep = _dead_time_filter(t_ps, max(1, int(round(det.dead_time / PS))))
    return t_ps[keep], prov[keep]


def _assemble(port_c, port_d, duration, seed):
    (tc, pc), (td, pd) = port_c, port_d
    t = np.concatenate([tc, td])
    d = np.concatenate([np.zeros(tc.size, np.uint8), np.ones(td.size, np.uint8)])
    p = np.concatenate([pc, pd])
    order = np.lexsort((d, t))
    return ClickStream(d[order], t[order], p[order], duration, seed)


def _detectors(det):
    if isinstance(det, DetectorModel):
        return det, det
    det_c, det_d = det
    return det_c, det_d


def _base_seed(seed):
    if isinstance(seed, np.random.SeedSequence):
        return int(seed.entropy)
    return None if seed is None else int(seed)


def simulate_hom(cfg: PairConfig, dyn1: EmissionDynamics, dyn2: EmissionDynamics,
                 det, duration, seed, polarization="parallel", pairing_window=None,
                 max_occupancy=0.01, impurity_detuning=IMPURITY_DETUNING):
    """Click stream at the two outputs of a beamsplitter fed by two emitters.

    Parameters
    ----------
    cfg : PairConfig
        Emitters, interference amplitude ``xi`` and mean detuning.
    dyn1, dyn2 : EmissionDynamics
        Generative dynamics and collection efficiency of each emitter.
    det : DetectorModel or (DetectorModel, DetectorModel)
        Detector on output C and D.
    duration : float
        Simulated time in seconds.
    seed : int or numpy.random.SeedSequence
    polarization : {'parallel', 'perpendicular'}
        Perpendicular polarizations make the photons distinguishable (xi = 0).
    pairing_window : float, optional
        Largest separation at which two photons are treated as a pair; by
        default five times the interference feature width.
    max_occupancy : float
        Refuse to run when the expected number of other photons within
        +-pairing_window of a photon exceeds this.
    """
    if not duration > 0:
        raise DomainError("duration must be > 0")
    if polarization not in ("parallel", "perpendicular"):
        raise DomainError("polarization must be 'parallel' or 'perpendicular'")
    det_c, det_d = _detectors(det)
    if pairing_window is None:
        pairing_window = 5.0 * interference_feature_width(cfg)
    occupancy = (dyn1.collected_rate() + dyn2.collected_rate()) * 2 * pairing_window
    if occupancy > max_occupancy:
        raise ValidityError(
            f"photon flux too high for pairwise interference: {occupancy:.3g} photons per "
            f"pairing window (limit {max_occupancy:g})"
        )
    ss = _seed_sequence(seed)
    rng_e1, rng_e2, rng_route, rng_c, rng_d = (np.random.default_rng(s) for s in ss.spawn(5))

    s1 = simulate_emitter_stream(cfg.emitter1, dyn1, duration, emitter_id=1, rng=rng_e1,
                                 impurity_detuning=impurity_detuning)
    s2 = simulate_emitter_stream(cfg.emitter2, dyn2, duration, emitter_id=2, rng=rng_e2,
                                 impurity_detuning=impurity_detuning)
    ph = _merge_streams(s1, s2)
    n = len(ph)
    port = rng_route.integers(0, 2, n, dtype=np.uint8)

    first, _conflicts = _pair_candidates(ph, pairing_window)
    if first.size:
        second = first + 1
        dt = ph.emit_time[second] - ph.emit_time[first]
        xi_eff = cfg.xi if polarization == "parallel" else 0.0
        vis = xi_eff * np.exp(-cfg.gamma_bar * dt) * np.cos(
            2 * math.pi * (ph.center_freq[second] - ph.center_freq[first]) * dt)
        vis = np.where(ph.interferes[first] & ph.interferes[second], vis, 0.0)
        split = rng_route.random(first.size) < 0.5 * (1.0 - vis)
        port[second] = np.where(split, 1 - port[first], port[first])

    prov = np.where(ph.emitter_id == 1, _SIGNAL1, _SIGNAL2).astype(np.uint8)
    to_c = port == 0
    clicks_c = _detect(ph.emit_time[to_c], prov[to_c], det_c, duration, rng_c)
    clicks_d = _detect(ph.emit_time[~to_c], prov[~to_c], det_d, duration, rng_d)
    return _assemble(clicks_c, clicks_d, duration, _base_seed(seed))


def simulate_hbt(em: EmitterModel, dyn: EmissionDynamics, det, duration, seed):
    """Single emitter split on a 50:50 beamsplitter (autocorrelation setup)."""
    if not duration > 0:
        raise DomainError("duration must be > 0")
    det_c, det_d = _detectors(det)
    ss = _seed_sequence(seed)
    rng_e, rng_route, rng_c, rng_d = (np.random.default_rng(s) for s in ss.spawn(4))
    ph = simulate_emitter_stream(em, dyn, duration, emitter_id=1, rng=rng_e)
    to_c = rng_route.integers(0, 2, len(ph), dtype=np.uint8) == 0
    prov = np.full(len(ph), _SIGNAL1, dtype=np.uint8)
    clicks_c = _detect(ph.emit_time[to_c], prov[to_c], det_c, duration, rng_c)
    clicks_d = _detect(ph.emit_time[~to_c], prov[~to_c], det_d, duration, rng_d)
    return _assemble(clicks_c, clicks_d, duration, _base_seed(seed))


def _batch_durations(duration, batch_duration):
    if not duration > 0:
        raise DomainError("duration must be > 0")
    if batch_duration is None or batch_duration >= duration:
        return [duration]
    n = int(math.ceil(duration / batch_duration - 1e-9))
    return [batch_duration] * (n - 1) + [duration - batch_duration * (n - 1)]


def hom_batches(cfg, dyn1, dyn2, det, duration, seed, batch_duration=60.0, **kwargs):
    """Yield independent ClickStreams covering ``duration`` in batches.

    Batch ``i`` is seeded from (seed, i) only, so batches can be produced in
    any order or in parallel and merged afterwards.
    """
    for i, d in enumerate(_batch_durations(duration, batch_duration)):
        cs = simulate_hom(cfg, dyn1, dyn2, det, d, batch_seed(seed, i), **kwargs)
        cs.seed, cs.batch = int(seed), i
        yield cs


def hbt_batches(em, dyn, det, duration, seed, batch_duration=60.0):
    for i, d in enumerate(_batch_durations(duration, batch_duration)):
        cs = simulate_hbt(em, dyn, det, d, batch_seed(seed, i))
        cs.seed, cs.batch = int(seed), i
        yield cs


def lorentzian_peak(f, center, fwhm):
    """Lorentzian normalized to 1 at its center."""
    hw2 = (0.5 * fwhm) ** 2
    return hw2 / ((np.asarray(f, dtype=float) - center) ** 2 + hw2)


def simulate_ple(emitters: EmitterModel | Sequence[EmitterModel], scan, dwell, peak_rate,
                 seed, background_rate=0.0, init_pulse=5e-6, probe_time=20e-6, line="Ex"):
    """Photoluminescence-excitation spectrum of one or more emitters.

    The laser frequency steps through ``scan``; at each point the sideband
    fluorescence is counted for ``dwell`` seconds. Each line is a Lorentzian
    of FWHM ``sd_fwhm`` normalized to ``peak_rate`` at its center. The
    green initialization pulse, repeated before every ``probe_time`` of
    resonant excitation, produces no counts; it only enters the wall-clock
    time reported in ``meta``.
    """
    ems = [emitters] if isinstance(emitters, EmitterModel) else list(emitters)
    f = np.asarray(scan, dtype=float)
    if f.size == 0:
        raise DomainError("scan grid is empty")
    if f.ndim != 1 or (f.size > 1 and not (np.all(np.diff(f) > 0) or np.all(np.diff(f) < 0))):
        raise DomainError("scan grid must be one-dimensional and monotone")
    if not dwell > 0:
        raise DomainError("dwell must be > 0")
    if init_pulse < 0 or not probe_time > 0:
        raise DomainError("init_pulse must be >= 0 and probe_time > 0")
    rates = np.broadcast_to(np.asarray(peak_rate, dtype=float), (len(ems),))
    if np.any(rates < 0) or background_rate < 0:
        raise DomainError("rates must be >= 0")
    signal = np.zeros_like(f)
    for em, r in zip(ems, rates):
        if r == 0:
            continue
        if em.sd_fwhm <= 0:
            raise DomainError("PLE line needs a nonzero width (sd_fwhm)")
        signal += r * lorentzian_peak(f, em.line(line), em.sd_fwhm)
    expected = dwell * (signal + background_rate)
    rng = np.random.default_rng(_seed_sequence(seed))
    counts = rng.poisson(expected)
    cycles = dwell / probe_time
    meta = {
        "lines": [em.line(line) for em in ems],
        "fwhm": [em.sd_fwhm for em in ems],
        "init_pulse": init_pulse,
        "probe_time": probe_time,
        "wall_time": f.size * cycles * (probe_time + init_pulse),
        "background_rate": background_rate,
        "seed": _base_seed(seed),
    }
    return PLESpectrum(f, counts, expected, dwell, meta)
