"""
Start-multistop coincidence correlator for two detector channels.

Every ordered pair (t_C, t_D) with |t_D - t_C| inside the window is counted
(all pairs, not start-stop), binned by tau = t_D - t_C. Timestamps and bin
edges are integer picoseconds, so binning is exact and platform independent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .errors import DomainError
from .mc import ClickStream

__all__ = ["CorrelatorConfig", "CorrelationHistogram", "correlate", "correlate_batches",
           "normalize", "rebin", "merge"]

PS = 1e-12


@dataclass(frozen=True)
class CorrelatorConfig:
    bin_width: float = 64e-12
    window: float = 100e-9
    normalization: str = "rate-product"

    def __post_init__(self):
        if not self.bin_width > 0:
            raise DomainError("bin_width must be > 0")
        if round(self.bin_width / PS) < 1:
            raise DomainError("bin_width must be at least 1 ps")
        if not self.window >= self.bin_width:
            raise DomainError("window must be >= bin_width")
        if self.normalization not in ("rate-product", "tail-average"):
            raise DomainError("normalization must be 'rate-product' or 'tail-average'")

    @property
    def bin_ps(self):
        return int(round(self.bin_width / PS))

    @property
    def n_half(self):
        return int(round(self.window / PS)) // self.bin_ps

    @property
    def n_bins(self):
        return 2 * self.n_half + 1


@dataclass
class CorrelationHistogram:
    bin_centers: np.ndarray
    counts: np.ndarray
    duration: float
    rate_C: float
    rate_D: float
    bin_width: float
    normalization: str = "rate-product"
    g2: np.ndarray | None = None
    g2_err: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def tau(self):
        return self.bin_centers

    @property
    def n_C(self):
        return self.rate_C * self.duration

    @property
    def n_D(self):
        return self.rate_D * self.duration

    def to_csv(self, path):
        g2 = self.g2 if self.g2 is not None else np.full(self.counts.shape, np.nan)
        err = self.g2_err if self.g2_err is not None else np.full(self.counts.shape, np.nan)
        with open(path, "w") as fh:
            fh.write("tau_ps,counts,g2,g2_err\n")
            for t, c, g, e in zip(self.bin_centers, self.counts, g2, err):
                fh.write(f"{int(round(t / PS))},{int(c)},{g:.10g},{e:.10g}\n")

    def header(self):
        return {
            "bin_width_ps": int(round(self.bin_width / PS)),
            "window_ps": int(round(self.bin_centers[-1] / PS)),
            "normalization": self.normalization,
            "duration_s": self.duration,
            "rate_C": self.rate_C,
            "rate_D": self.rate_D,
            "total_counts": int(self.counts.sum()),
            **self.meta,
        }

    def write_header(self, path):
        with open(path, "w") as fh:
            json.dump(self.header(), fh, indent=2, sort_keys=True)


def _empty(cfg: CorrelatorConfig, duration, rate_c, rate_d):
    k = np.arange(-cfg.n_half, cfg.n_half + 1)
    return CorrelationHistogram(
        bin_centers=k * cfg.bin_ps * PS,
        counts=np.zeros(cfg.n_bins, dtype=np.int64),
        duration=duration,
        rate_C=rate_c,
        rate_D=rate_d,
        bin_width=cfg.bin_ps * PS,
        normalization=cfg.normalization,
    )


def _count_pairs(t_c, t_d, bin_ps, n_half):
    """Histogram of t_D - t_C over bins k*bin_ps, |k| <= n_half (int64 ps)."""
    counts = np.zeros(2 * n_half + 1, dtype=np.int64)
    if t_c.size == 0 or t_d.size == 0:
        return counts
    # bin k spans [(k - 1/2) b, (k + 1/2) b); in doubled units this is exact
    lo_edge = -(2 * n_half + 1) * bin_ps  # 2*tau >= lo_edge
    hi_edge = (2 * n_half + 1) * bin_ps   # 2*tau < hi_edge
    lo = np.searchsorted(t_d, t_c + (lo_edge + 1) // 2, side="left")
    hi = np.searchsorted(t_d, t_c + (hi_edge + 1) // 2, side="left")
    span = hi - lo
    live = np.flatnonzero(span > 0)
    offset = 0
    while live.size:
        j = lo[live] + offset
        dt = t_d[j] - t_c[live]
        k = (2 * dt + bin_ps) // (2 * bin_ps)
        counts += np.bincount(k + n_half, minlength=counts.size)[: counts.size]
        offset += 1
        live = live[span[live] > offset]
    return counts


def correlate(stream: ClickStream, cfg: CorrelatorConfig = CorrelatorConfig(), normalized=True):
    """Delay histogram of detector D relative to detector C."""
    t_c = stream.times("C")
    t_d = stream.times("D")
    hist = _empty(cfg, stream.duration, t_c.size / stream.duration if stream.duration else 0.0,
                  t_d.size / stream.duration if stream.duration else 0.0)
    hist.counts = _count_pairs(t_c, t_d, cfg.bin_ps, cfg.n_half)
    if stream.seed is not None:
        hist.meta["seed"] = stream.seed
    if normalized:
        hist = normalize(hist)
    return hist


def merge(hists: Iterable[CorrelationHistogram]):
    """Combine histograms of disjoint time segments (order independent)."""
    hists = list(hists)
    if not hists:
        raise DomainError("nothing to merge")
    ref = hists[0]
    for h in hists[1:]:
        if h.bin_width != ref.bin_width or not np.array_equal(h.bin_centers, ref.bin_centers):
            raise DomainError("histograms have different binning")
    duration = sum(h.duration for h in hists)
    n_c = sum(h.n_C for h in hists)
    n_d = sum(h.n_D for h in hists)
    out = replace(
        ref,
        counts=np.sum([h.counts for h in hists], axis=0),
        duration=duration,
        rate_C=n_c / duration,
        rate_D=n_d / duration,
        g2=None,
        g2_err=None,
        meta={k: v for k, v in ref.meta.items() if k != "batch"},
    )
    return out


def correlate_batches(streams: Iterable[ClickStream], cfg: CorrelatorConfig = CorrelatorConfig()):
    """Correlate each stream and merge the raw histograms, then normalize."""
    hists = [correlate(s, cfg, normalized=False) for s in streams]
    return normalize(merge(hists))


def normalize(hist: CorrelationHistogram, normalization=None, tail=(0.8, 1.0)):
    """Attach g2 and Poisson errors.

    'rate-product' divides counts by rate_C rate_D duration bin_width.
    'tail-average' divides by the mean count over tail[0]..tail[1] of the
    window. Empty bins get g2 = 0 and an undefined (NaN) error.
    """
    mode = normalization or hist.normalization
    counts = hist.counts.astype(float)
    if mode == "rate-product":
        denom = hist.rate_C * hist.rate_D * hist.duration * hist.bin_width
        if denom <= 0:
            if counts.sum() > 0:
                raise DomainError("zero rates but nonzero coincidence counts")
            denom = np.nan
    elif mode == "tail-average":
        w = np.abs(hist.bin_centers).max()
        sel = (np.abs(hist.bin_centers) >= tail[0] * w) & (np.abs(hist.bin_centers) <= tail[1] * w)
        denom = counts[sel].mean() if sel.any() else 0.0
        if denom <= 0:
            if counts.sum() > 0:
                raise DomainError("tail region holds no counts")
            denom = np.nan
    else:
        raise DomainError(f"unknown normalization {mode!r}")
    if np.isnan(denom):
        g2 = np.zeros_like(counts)
        err = np.full_like(counts, np.nan)
    else:
        g2 = counts / denom
        with np.errstate(divide="ignore", invalid="ignore"):
            err = np.where(counts > 0, g2 / np.sqrt(counts), np.nan)
    out = replace(hist, normalization=mode, g2=g2, g2_err=err, meta=dict(hist.meta))
    out.meta["norm_factor"] = None if np.isnan(denom) else float(denom)
    return out


def rebin(hist: CorrelationHistogram, factor: int):
    """Sum groups of ``factor`` adjacent bins; the tau = 0 bin stays centered.

    The bin count must be a multiple of ``factor`` (which is then odd).
    """
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise DomainError("factor must be a positive integer")
    n = hist.counts.size
    if n % factor:
        raise DomainError(f"factor {factor} does not divide the {n} bins")
    if factor == 1:
        return normalize(hist) if hist.g2 is not None else replace(hist)
    counts = hist.counts.reshape(-1, factor).sum(axis=1)
    centers = hist.bin_centers.reshape(-1, factor).mean(axis=1)
    mid = centers.size // 2
    centers = (np.arange(centers.size) - mid) * hist.bin_width * factor
    out = replace(hist, counts=counts, bin_centers=centers, bin_width=hist.bin_width * factor,
                  g2=None, g2_err=None, meta=dict(hist.meta))
    return normalize(out) if hist.g2 is not None else out
