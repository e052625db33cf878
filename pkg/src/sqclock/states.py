"""Two-mode bosonic states stored as mixtures of fixed-total-number sectors.

Every operator used by the clock (populations, collective spin components,
the Ramsey rotation and the QND coupling) conserves the total atom number
``N = n_a + n_b``.  A state is therefore kept as a list of blocks, one per
``N``, each holding the amplitudes over the mode-a occupation ``n``
(mode b then holds ``N - n``).  Coherences between different ``N`` never
enter any computed quantity and are dropped.

Inside a block only a window ``[lo, hi]`` of amplitudes is stored; values
outside it are exactly zero.  This keeps states with ~1e5 atoms in memory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

NORM_TOL = 1e-12
# relative |c_n|^2 below which amplitudes are cut from a window
WINDOW_CUT = 1e-30
_LOG_WINDOW_CUT = math.log(WINDOW_CUT)


class StateError(ValueError):
    """Invalid input to a state constructor."""


@dataclass(frozen=True)
class SectorState:
    """Pure state of ``total_n`` atoms distributed over modes a and b.

    ``amps[k]`` is the amplitude of ``|lo + k, total_n - lo - k>``.
    """

    total_n: int
    lo: int
    amps: np.ndarray

    def __post_init__(self):
        amps = np.ascontiguousarray(self.amps, dtype=complex)
        if amps.ndim != 1 or amps.size == 0:
            raise StateError("sector amplitudes must be a non-empty vector")
        if self.lo < 0 or self.lo + amps.size - 1 > self.total_n:
            raise StateError(
                f"window [{self.lo}, {self.lo + amps.size - 1}] outside [0, {self.total_n}]"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amps", amps)

    @property
    def hi(self) -> int:
        return self.lo + self.amps.size - 1

    @property
    def support_lo(self) -> int:
        return self.lo

    @property
    def support_hi(self) -> int:
        return self.hi

    @property
    def occupations(self) -> np.ndarray:
        """Mode-a occupations covered by the stored window."""
        return np.arange(self.lo, self.hi + 1)

    @property
    def norm2(self) -> float:
        return float(np.vdot(self.amps, self.amps).real)

    def amplitudes(self) -> np.ndarray:
        """Full length ``total_n + 1`` amplitude vector (zero outside the window)."""
        full = np.zeros(self.total_n + 1, dtype=complex)
        full[self.lo:self.hi + 1] = self.amps
        return full

    def normalized(self) -> "SectorState":
        nrm = math.sqrt(self.norm2)
        if nrm == 0.0:
            raise StateError(f"sector N={self.total_n} has zero norm")
        return SectorState(self.total_n, self.lo, self.amps / nrm)

    def trimmed(self, cut: float = WINDOW_CUT) -> "SectorState":
        """Shrink the window to amplitudes with |c|^2 >= cut * max |c|^2."""
        prob = np.abs(self.amps) ** 2
        keep = np.nonzero(prob >= cut * prob.max())[0]
        if keep.size == 0:
            return self
        a, b = keep[0], keep[-1]
        if a == 0 and b == self.amps.size - 1:
            return self
        return SectorState(self.total_n, self.lo + int(a), self.amps[a:b + 1])


@dataclass(frozen=True)
class AtomState:
    """Mixture ``sum_N P_N |psi_N><psi_N|`` of sector states.

    ``weights[i]`` is the probability of ``sectors[i]``; the sectors carry
    distinct total numbers in increasing order.
    """

    weights: np.ndarray
    sectors: tuple[SectorState, ...]
    label: str = field(default="", compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).copy()
        if w.ndim != 1 or w.size != len(self.sectors) or w.size == 0:
            raise StateError("need one weight per sector and at least one sector")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise StateError("sector weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > NORM_TOL:
            raise StateError(f"sector weights sum to {w.sum()!r}, not 1")
        totals = [s.total_n for s in self.sectors]
        if any(b <= a for a, b in zip(totals, totals[1:])):
            raise StateError("sector totals must be strictly increasing")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "sectors", tuple(self.sectors))

    @classmethod
    def from_unnormalized(cls, pairs: Iterable[tuple[float, SectorState]], label: str = "",
                          drop_below: float = 0.0) -> "AtomState":
        """Build from (weight, sector) pairs, normalizing sectors and weights.

        Each sector's own norm is folded into its weight.  Sectors whose
        resulting weight is below ``drop_below`` times the largest one are
        discarded.
        """
        items = sorted(pairs, key=lambda t: t[1].total_n)
        ws, secs = [], []
        for w, s in items:
            n2 = s.norm2
            if w <= 0 or n2 == 0.0:
                continue
            ws.append(w * n2)
            secs.append(s)
        if not ws:
            raise StateError("degenerate input: zero total weight")
        ws = np.asarray(ws)
        keep = ws >= drop_below * ws.max()
        ws = ws[keep]
        secs = [s.normalized() for s, k in zip(secs, keep) if k]
        return cls(ws / ws.sum(), tuple(secs), label)

    @property
    def totals(self) -> np.ndarray:
        return np.array([s.total_n for s in self.sectors], dtype=float)

    @cached_property
    def packed(self) -> "PackedSectors":
        return PackedSectors.from_sectors(self.sectors)

    @classmethod
    def from_packed(cls, weights, packed: "PackedSectors", label: str = "") -> "AtomState":
        """Rebuild from per-sector weights and packed (already normalized) amplitudes."""
        secs = tuple(SectorState(int(N), int(lo), packed.amps[a:b])
                     for N, lo, a, b in zip(packed.totals, packed.los, packed.starts, packed.stops))
        return cls(np.asarray(weights, dtype=float), secs, label)

    @property
    def n_mean(self) -> float:
        return float(np.dot(self.weights, self.totals))

    @property
    def n_var(self) -> float:
        d = self.totals - self.n_mean
        return float(np.dot(self.weights, d * d))

    @property
    def max_total(self) -> int:
        return self.sectors[-1].total_n

    def total_norm(self) -> float:
        return float(sum(w * s.norm2 for w, s in zip(self.weights, self.sectors)))

    def populations(self) -> dict[tuple[int, int], float]:
        """Joint distribution of (n_a, n_b) as a dict; intended for small states."""
        out = {}
        for w, s in zip(self.weights, self.sectors):
            for n, c in zip(s.occupations, s.amps):
                p = w * abs(c) ** 2
                if p > 0:
                    out[(int(n), s.total_n - int(n))] = p
        return out


@dataclass(frozen=True)
class PackedSectors:
    """All sector windows laid end to end, for vectorized per-sector work.

    ``amps[starts[i]:stops[i]]`` is sector ``i``; ``sector[j]``, ``occ[j]``
    and ``total[j]`` give the sector index, mode-a occupation and total
    number of entry ``j``.
    """

    totals: np.ndarray
    los: np.ndarray
    starts: np.ndarray
    stops: np.ndarray
    amps: np.ndarray
    sector: np.ndarray
    occ: np.ndarray
    total: np.ndarray

    @classmethod
    def from_sectors(cls, sectors) -> "PackedSectors":
        sizes = np.array([s.amps.size for s in sectors])
        stops = np.cumsum(sizes)
        starts = stops - sizes
        totals = np.array([s.total_n for s in sectors])
        los = np.array([s.lo for s in sectors])
        sector = np.repeat(np.arange(len(sectors)), sizes)
        occ = np.arange(stops[-1]) - starts[sector] + los[sector]
        amps = np.concatenate([s.amps for s in sectors])
        return cls(totals, los, starts, stops, amps, sector, occ, totals[sector])

    def sector_sum(self, values) -> np.ndarray:
        return np.add.reduceat(values, self.starts)

    def trimmed(self, amps, cut: float = WINDOW_CUT) -> "PackedSectors":
        """Shrink every window to entries with |c|^2 >= cut * (sector max)."""
        prob = np.abs(amps) ** 2
        peak = np.maximum.reduceat(prob, self.starts)
        keep = prob >= cut * peak[self.sector]
        idx = np.nonzero(keep)[0]
        sec = self.sector[idx]
        first = np.zeros(self.totals.size, dtype=int)
        last = np.zeros(self.totals.size, dtype=int)
        # idx is sorted: assigning in order leaves the last hit, reversed the first
        last[sec] = idx
        first[sec[::-1]] = idx[::-1]
        j = np.arange(amps.size)
        take = np.nonzero((j >= first[self.sector]) & (j <= last[self.sector]))[0]
        sizes = last - first + 1
        stops = np.cumsum(sizes)
        starts = stops - sizes
        los = self.occ[first]
        return PackedSectors(self.totals, los, starts, stops, amps[take], self.sector[take],
                             self.occ[take], self.total[take])

    def subset(self, mask) -> "PackedSectors":
        secs = np.nonzero(mask)[0]
        entry = np.isin(self.sector, secs)
        sizes = (self.stops - self.starts)[secs]
        stops = np.cumsum(sizes)
        remap = np.full(self.totals.size, -1)
        remap[secs] = np.arange(secs.size)
        return PackedSectors(self.totals[secs], self.los[secs], stops - sizes, stops, self.amps[entry],
                             remap[self.sector[entry]], self.occ[entry], self.total[entry])


@dataclass(frozen=True)
class NumberDistribution:
    """Distribution of the total atom number N.

    ``kind`` is ``"gaussian"``, ``"delta"`` or ``"custom"``.  For custom
    distributions ``custom_weights[k]`` is the probability of ``N = k``.
    """

    kind: str
    mean: float
    variance: float
    truncation_halfwidth: float = 6.0
    custom_weights: tuple[float, ...] | None = None

    def weights(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(N values, P_N)`` with P_N normalized to 1."""
        if self.kind == "delta":
            return np.array([int(round(self.mean))]), np.array([1.0])
        if self.kind == "custom":
            p = np.asarray(self.custom_weights, dtype=float)
            ns = np.nonzero(p > 0)[0]
            return ns, p[ns] / p[ns].sum()
        sd = math.sqrt(self.variance)
        lo = max(0, math.ceil(self.mean - self.truncation_halfwidth * sd))
        hi = math.floor(self.mean + self.truncation_halfwidth * sd)
        if hi < lo:
            raise StateError("truncation window contains no integer")
        ns = np.arange(lo, hi + 1)
        logp = -((ns - self.mean) ** 2) / (2.0 * self.variance)
        p = np.exp(logp - logp.max())
        return ns, p / p.sum()


def make_number_distribution(kind: str, mean: float, variance: float = 0.0,
                             truncation_halfwidth: float = 6.0,
                             custom_weights: Sequence[float] | None = None) -> NumberDistribution:
    """Gaussian, point-mass or tabulated distribution of the total atom number.

    A Gaussian with zero variance is returned as a point mass at the integer
    nearest to ``mean``.
    """
    if mean < 0 or variance < 0:
        raise StateError("mean and variance must be nonnegative")
    if kind == "custom":
        p = np.asarray(custom_weights, dtype=float)
        if p.ndim != 1 or p.size == 0 or np.any(p < 0) or p.sum() <= 0:
            raise StateError("custom weights must be a nonnegative, non-zero vector")
        p = p / p.sum()
        ns = np.arange(p.size)
        m = float(np.dot(p, ns))
        v = float(np.dot(p, (ns - m) ** 2))
        return NumberDistribution("custom", m, v, truncation_halfwidth, tuple(p))
    if kind not in ("gaussian", "delta"):
        raise StateError(f"unknown distribution kind {kind!r}")
    if kind == "gaussian" and variance == 0.0:
        kind = "delta"
    if kind == "delta":
        variance = 0.0
    return NumberDistribution(kind, float(mean), float(variance), truncation_halfwidth)


def binomial_sector_state(total_n: int) -> SectorState:
    """Coherent spin state reached from ``|N, 0>`` by a pi/2 pulse.

    ``c_n = 2^{-N/2} sqrt(binom(N, n))``, evaluated in log space and windowed
    where |c_n|^2 drops below ``WINDOW_CUT`` of the peak.
    """
    if total_n < 0:
        raise StateError("total_n must be nonnegative")
    N = int(total_n)
    half = math.sqrt(-_LOG_WINDOW_CUT / 2.0 * N) + 10
    lo = max(0, int(math.floor(N / 2 - half)))
    hi = min(N, int(math.ceil(N / 2 + half)))
    n = np.arange(lo, hi + 1)
    # log c_{k+1} - log c_k = log((N - k) / (k + 1)) / 2, accumulated from the
    # centre; lgamma differences lose ~1e-10 absolute accuracy at N ~ 1e5
    mid = N // 2 - lo
    steps = 0.5 * (np.log(N - n[:-1]) - np.log(n[:-1] + 1.0))
    logc = np.zeros(n.size)
    logc[mid + 1:] = np.cumsum(steps[mid:])
    logc[:mid] = -np.cumsum(steps[:mid][::-1])[::-1]
    keep = np.nonzero(2.0 * (logc - logc.max()) >= _LOG_WINDOW_CUT)[0]
    n, logc = n[keep[0]:keep[-1] + 1], logc[keep[0]:keep[-1] + 1]
    amps = np.exp(logc - logc.max())
    return SectorState(N, int(n[0]), amps / np.linalg.norm(amps))


def prepared_clock_state(dist: NumberDistribution) -> AtomState:
    """Mixture of binomial sectors weighted by the total-number distribution."""
    ns, ps = dist.weights()
    secs = tuple(binomial_sector_state(int(N)) for N in ns)
    return AtomState(ps / ps.sum(), secs, label=f"prepared({dist.kind}, {dist.mean:g}, {dist.variance:g})")


def _mode_amplitudes(center: float, sigma: float) -> tuple[int, np.ndarray]:
    """Real amplitudes ~ exp(-(n - center)^2 / (4 sigma^2)) for n >= 0."""
    if sigma == 0.0:
        return int(round(center)), np.ones(1)
    half = math.sqrt(-2.0 * _LOG_WINDOW_CUT) * sigma + 2
    lo = max(0, int(math.floor(center - half)))
    hi = max(lo, int(math.ceil(center + half)))
    n = np.arange(lo, hi + 1)
    amps = np.exp(-((n - center) ** 2) / (4.0 * sigma * sigma))
    return lo, amps


def gaussian_product_state(mean_total: float, sigma_a: float, sigma_b: float) -> AtomState:
    """Product of two number-Gaussian pure states centred at ``mean_total / 2``.

    Amplitudes are ``exp(-(n - mean_total/2)^2 / (4 sigma^2))`` per mode, so
    each mode's number variance is ``sigma^2``.  A width of zero gives a Fock
    state at the nearest integer.  The product is split into total-number
    sectors; cross-sector coherences are dropped.
    """
    if sigma_a < 0 or sigma_b < 0 or mean_total < 0:
        raise StateError("widths and mean must be nonnegative")
    center = mean_total / 2.0
    lo_a, a = _mode_amplitudes(center, sigma_a)
    lo_b, b = _mode_amplitudes(center, sigma_b)
    pairs = []
    for N in range(lo_a + lo_b, lo_a + lo_b + a.size + b.size - 1):
        # n ranges over mode-a indices with N - n inside b's window
        n_lo = max(lo_a, N - (lo_b + b.size - 1))
        n_hi = min(lo_a + a.size - 1, N - lo_b)
        if n_hi < n_lo:
            continue
        ia = np.arange(n_lo, n_hi + 1) - lo_a
        ib = N - np.arange(n_lo, n_hi + 1) - lo_b
        amps = a[ia] * b[ib]
        w = float(np.dot(amps, amps))
        if w > 0:
            pairs.append((1.0, SectorState(N, n_lo, amps)))
    if not pairs:
        raise StateError("degenerate input: zero total weight after truncation")
    peak = max(s.norm2 for _, s in pairs)
    pairs = [(w, s.trimmed()) for w, s in pairs if s.norm2 >= WINDOW_CUT * peak]
    return AtomState.from_unnormalized(
        pairs, label=f"gaussian_product({mean_total:g}, {sigma_a:g}, {sigma_b:g})")


def fock_mixture_state(n_a: int, rho_b: Sequence[float]) -> AtomState:
    """``|n_a><n_a| (x) sum_n rho_b[n] |n><n|`` as a sector mixture."""
    p = np.asarray(rho_b, dtype=float)
    if n_a < 0 or p.ndim != 1 or p.size == 0:
        raise StateError("need n_a >= 0 and a non-empty probability vector")
    if np.any(p < 0) or abs(p.sum() - 1.0) > NORM_TOL:
        raise StateError("rho_b must be a probability vector")
    idx = np.nonzero(p > 0)[0]
    secs = tuple(SectorState(int(n_a + k), int(n_a), np.ones(1)) for k in idx)
    return AtomState(p[idx] / p[idx].sum(), secs, label=f"fock_mixture({n_a})")


def twin_fock_state(n: int) -> AtomState:
    return fock_mixture_state(n, np.eye(n + 1)[n])
