"""Moments of number and collective-spin operators on sector mixtures.

Spin convention used throughout the package::

    Jx = (a^dag b + b^dag a) / 2
    Jy = (a^dag b - b^dag a) / 2i
    Jz = (n_a - n_b) / 2

so that ``a^dag b = Jx + i Jy`` and the interferometric coherence
``<a^dag b + b^dag a>`` equals ``2 <Jx>``.  Some texts call the operator
``(a^dag b + b^dag a)/2`` "Jy"; only the physical quantities (populations,
coherence) are compared against such formulas.

Per-sector means and *centred* second moments are kept alongside the
aggregated values.  Output-port variances are formed from those centred
pieces, which avoids the catastrophic cancellation that raw moments suffer
near operating points where the output number is sharp (e.g. a coherent
spin state read out at theta = pi/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .states import AtomState


_PACKED_MAX_PER_SECTOR = 256


@dataclass(frozen=True)
class MomentSet:
    # per-sector data, one entry per total number N
    weights: np.ndarray
    totals: np.ndarray
    jz_s: np.ndarray
    jx_s: np.ndarray
    jy_s: np.ndarray
    vzz_s: np.ndarray
    vxx_s: np.ndarray
    cxz_s: np.ndarray  # Re<dJx dJz>, i.e. <{Jx,Jz}>/2 - <Jx><Jz>
    # aggregated moments
    jx: float
    jy: float
    jz: float
    jx2: float
    jz2: float
    jxjz_sym: float  # <Jx Jz + Jz Jx>
    n_mean: float
    n2_mean: float
    n_jz: float
    n_jx: float
    na_mean: float
    na_var: float
    coherence: float

    @classmethod
    def from_sector_arrays(cls, weights, totals, jz_s, jx_s, jy_s, vzz_s, vxx_s, cxz_s) -> "MomentSet":
        arrs = [np.asarray(x, dtype=float) for x in
                (weights, totals, jz_s, jx_s, jy_s, vzz_s, vxx_s, cxz_s)]
        for a in arrs:
            a.setflags(write=False)
        w, N, jz_s, jx_s, jy_s, vzz_s, vxx_s, cxz_s = arrs
        jx = float(np.sum(w * jx_s))
        jz = float(np.sum(w * jz_s))
        n_mean = float(np.sum(w * N))
        dn = N - n_mean
        na_s = N / 2 + jz_s
        na_mean = float(np.sum(w * na_s))
        na_var = float(np.sum(w * vzz_s) + np.sum(w * (na_s - na_mean) ** 2))
        return cls(
            weights=w, totals=N, jz_s=jz_s, jx_s=jx_s, jy_s=jy_s,
            vzz_s=vzz_s, vxx_s=vxx_s, cxz_s=cxz_s,
            jx=jx,
            jy=float(np.sum(w * jy_s)),
            jz=jz,
            jx2=float(np.sum(w * (vxx_s + jx_s ** 2))),
            jz2=float(np.sum(w * (vzz_s + jz_s ** 2))),
            jxjz_sym=float(np.sum(w * 2 * (cxz_s + jx_s * jz_s))),
            n_mean=n_mean,
            n2_mean=float(np.sum(w * N ** 2)),
            n_jz=float(np.sum(w * N * jz_s)),
            n_jx=float(np.sum(w * N * jx_s)),
            na_mean=na_mean,
            na_var=na_var,
            coherence=2.0 * jx,
        )

    @property
    def n_var(self) -> float:
        return float(np.sum(self.weights * (self.totals - self.n_mean) ** 2))

    @property
    def jz_var(self) -> float:
        return self.linear_variance(0.0, 1.0, 0.0)

    def linear_variance(self, a, b, c):
        """Variance of ``a*n + b*Jz + c*Jx`` over the mixture.

        ``a``, ``b``, ``c`` may be scalars or broadcastable arrays (e.g. one
        entry per phase value); the sector axis is the last one.
        """
        a = np.asarray(a, dtype=float)[..., None]
        b = np.asarray(b, dtype=float)[..., None]
        c = np.asarray(c, dtype=float)[..., None]
        w = self.weights
        within = b * b * self.vzz_s + c * c * self.vxx_s + 2 * b * c * self.cxz_s
        means = a * self.totals + b * self.jz_s + c * self.jx_s
        centre = np.sum(w * means, axis=-1, keepdims=True)
        out = np.sum(w * within, axis=-1) + np.sum(w * (means - centre) ** 2, axis=-1)
        return np.maximum(out, 0.0)


def _one_sector_moments(s) -> tuple[float, ...]:
    N = s.total_n
    m = np.arange(s.lo - 1, s.hi + 2, dtype=float)
    cg = np.zeros(m.size, dtype=complex)
    cg[1:-1] = s.amps
    cm1 = np.concatenate(([0.0], cg[:-1]))
    cp1 = np.concatenate((cg[1:], [0.0]))
    k_up = np.sqrt(np.clip(m * (N - m + 1), 0.0, None))
    k_dn = np.sqrt(np.clip((m + 1) * (N - m), 0.0, None))
    raise_part = k_up * cm1
    jx_psi = 0.5 * (raise_part + k_dn * cp1)
    adag_b = np.vdot(cg, raise_part)
    jx, jy = adag_b.real, adag_b.imag
    dz = m - N / 2
    jz = float(np.dot(np.abs(cg) ** 2, dz))
    u = (dz - jz) * cg
    v = jx_psi - jx * cg
    return (jz, jx, jy, float(np.vdot(u, u).real), float(np.vdot(v, v).real),
            float(np.vdot(u, v).real))


def _sector_moments(packed) -> tuple[np.ndarray, ...]:
    """Per-sector (jz, jx, jy, vzz, vxx, cxz) for normalized packed sectors.

    Each window is padded with one zero on either side so that the shifted
    copies used for ``a^dag b`` and ``b^dag a`` never mix neighbouring sectors.
    """
    sizes = packed.stops - packed.starts
    psz = sizes + 2
    pstops = np.cumsum(psz)
    pstarts = pstops - psz
    sec = np.repeat(np.arange(sizes.size), psz)
    cg = np.zeros(int(pstops[-1]), dtype=complex)
    cg[np.arange(packed.amps.size) + 2 * packed.sector + 1] = packed.amps
    m = (np.arange(cg.size) - pstarts[sec] + packed.los[sec] - 1).astype(float)
    N = packed.totals[sec].astype(float)
    cm1 = np.concatenate(([0.0], cg[:-1]))
    cp1 = np.concatenate((cg[1:], [0.0]))
    k_up = np.sqrt(np.clip(m * (N - m + 1), 0.0, None))    # <m|a^dag b|m-1>
    k_dn = np.sqrt(np.clip((m + 1) * (N - m), 0.0, None))  # <m|b^dag a|m+1>
    raise_part = k_up * cm1            # (a^dag b psi)_m
    jx_psi = 0.5 * (raise_part + k_dn * cp1)
    adag_b = np.add.reduceat(cg.conj() * raise_part, pstarts)
    jx, jy = adag_b.real, adag_b.imag
    dz = m - N / 2
    jz = np.add.reduceat(np.abs(cg) ** 2 * dz, pstarts)
    u = (dz - jz[sec]) * cg
    v = jx_psi - jx[sec] * cg
    return (jz, jx, jy, np.add.reduceat(np.abs(u) ** 2, pstarts),
            np.add.reduceat(np.abs(v) ** 2, pstarts), np.add.reduceat((u.conj() * v).real, pstarts))


def moments(state: AtomState) -> MomentSet:
    """First and second moments of n, Jz, Jx (and <Jy>) for a normalized state."""
    if sum(s.amps.size for s in state.sectors) > _PACKED_MAX_PER_SECTOR * len(state.sectors):
        # long windows: a loop over cache-sized sectors beats one huge pass
        per = np.array([_one_sector_moments(s) for s in state.sectors]).T
    else:
        per = _sector_moments(state.packed)
    return MomentSet.from_sector_arrays(state.weights, state.totals, *per)


def xi_squared(state_or_moments) -> float:
    """Var(Jz) / (<Jx>^2 + <Jy>^2), evaluated as written.

    No factor of the particle number is included, so a coherent spin state of
    N atoms gives 1/N rather than 1.  Returns ``math.inf`` when the
    denominator vanishes against a finite variance and ``math.nan`` for the
    0/0 case (both quantities below 1e-15).
    """
    moms = state_or_moments if isinstance(state_or_moments, MomentSet) else moments(state_or_moments)
    num = moms.jz_var
    den = moms.jx ** 2 + moms.jy ** 2
    if num < 1e-15 and den < 1e-15:
        return math.nan
    if num > 0 and den < 1e-12 * num:
        return math.inf
    return float(num / den)
