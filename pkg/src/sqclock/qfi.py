"""Fisher information of the clock rotation for number-diagonal inputs.

The quantum Fisher information uses the generator ``Jx = (a^dag b + b^dag a)/2``.
For states diagonal in the two-mode Fock basis it coincides with the one for
``Jy`` (the two differ by a Jz phase rotation that leaves such states
invariant), so the same number bounds the Ramsey rotation modelled in
:mod:`sqclock.ramsey`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .states import AtomState

N_ROT_MAX = 200


@dataclass(frozen=True)
class FisherReport:
    f_q: float
    cr_delta_theta: float
    witness: bool
    f_classical: float | None = None
    m: int = 1


def _diagonal_populations(state: AtomState) -> dict[tuple[int, int], float]:
    pops = {}
    for w, s in zip(state.weights, state.sectors):
        nz = np.nonzero(np.abs(s.amps) > 0)[0]
        if nz.size != 1:
            raise ValueError(
                f"sector N={s.total_n} is not a single Fock state; only number-diagonal inputs are supported")
        na = s.lo + int(nz[0])
        pops[(na, s.total_n - na)] = float(w)
    return pops


def qfi_diagonal(state: AtomState) -> float:
    """``2 sum_kl (p_k - p_l)^2 / (p_k + p_l) |<k|Jx|l>|^2`` over the Fock basis.

    Basis states reached by Jx but carrying no weight contribute with p = 0;
    leaving them out would miss most of the information.
    """
    pops = _diagonal_populations(state)
    total = 0.0
    for (na, nb), pk in pops.items():
        # <na+1, nb-1| Jx |na, nb> and <na-1, nb+1| Jx |na, nb>
        for l, g2 in (((na + 1, nb - 1), 0.25 * (na + 1) * nb),
                      ((na - 1, nb + 1), 0.25 * na * (nb + 1))):
            if g2 == 0.0:
                continue
            pl = pops.get(l)
            if pl is None:
                # ordered pairs (k, l) and (l, k) with p_l = 0
                total += 2.0 * 2.0 * pk * g2
            else:
                # (l, k) is added when l is visited
                total += 2.0 * (pk - pl) ** 2 / (pk + pl) * g2
    return total


def eq5_sensitivity(n_a: float, nb_mean: float, m: int = 1) -> float:
    """``1 / sqrt(m (2 N <n_b> + N + <n_b>))`` for ``|N>_a`` times a diagonal mode-b state."""
    return 1.0 / math.sqrt(m * (2.0 * n_a * nb_mean + n_a + nb_mean))


def entanglement_witness(state: AtomState, f_q: float) -> bool:
    """True when ``f_q`` exceeds the mean atom number (sub shot-noise, entangled)."""
    n_mean = state.n_mean
    return bool(f_q > n_mean * (1.0 + 1e-12) and n_mean > 0)


@lru_cache(maxsize=256)
def _jy_eigen(total_n: int) -> tuple[np.ndarray, np.ndarray]:
    n = np.arange(total_n)
    k = np.sqrt((n + 1.0) * (total_n - n))
    jy = np.zeros((total_n + 1, total_n + 1), dtype=complex)
    jy[n + 1, n] = -0.5j * k
    jy[n, n + 1] = 0.5j * k
    lam, vec = np.linalg.eigh(jy)
    return lam, vec


def rotate_sector(amps_full: np.ndarray, theta: float) -> np.ndarray:
    """Apply ``exp(-i theta Jy)`` to a full-length sector amplitude vector."""
    lam, vec = _jy_eigen(amps_full.size - 1)
    return vec @ (np.exp(-1j * theta * lam) * (vec.conj().T @ amps_full))


def output_distribution(state: AtomState, theta: float, n_rot_max: int = N_ROT_MAX) -> np.ndarray:
    """``p(n_a | theta)`` after the Ramsey rotation, indexed by n_a."""
    if state.max_total > n_rot_max:
        raise ValueError(f"total number {state.max_total} exceeds rotation limit {n_rot_max}")
    p = np.zeros(state.max_total + 1)
    for w, s in zip(state.weights, state.sectors):
        out = rotate_sector(s.amplitudes(), theta)
        p[:s.total_n + 1] += w * np.abs(out) ** 2
    return p


def classical_fisher_single_port(state: AtomState, theta: float, epsilon: float = 1e-5,
                                 floor: float = 1e-15, n_rot_max: int = N_ROT_MAX) -> float:
    """Fisher information of the mode-a count at ``theta`` (central differences)."""
    p = output_distribution(state, theta, n_rot_max)
    dp = (output_distribution(state, theta + epsilon, n_rot_max)
          - output_distribution(state, theta - epsilon, n_rot_max)) / (2.0 * epsilon)
    ok = p > floor
    return float(np.sum(dp[ok] ** 2 / p[ok]))


def fisher_report(state: AtomState, m: int = 1, theta: float | None = None, **cfi_kw) -> FisherReport:
    f_q = qfi_diagonal(state)
    cr = 1.0 / math.sqrt(m * f_q) if f_q > 0 else math.inf
    f_c = None if theta is None else classical_fisher_single_port(state, theta, **cfi_kw)
    return FisherReport(f_q, cr, entanglement_witness(state, f_q), f_c, m)
