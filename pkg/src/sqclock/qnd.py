"""QND atom-light coupling, homodyne read-out and measurement back-action.

The light mode interacts with the mode-a atoms through ``H = hbar g c^dag c n_a``.
A coherent probe ``|alpha>`` (alpha real) is rotated to ``|alpha e^{-i Omega n}>``
when ``n`` atoms sit in mode a, with ``Omega = g t``.  The p quadrature
``p = (c - c^dag) / 2i`` is then measured.  Its overlap with a coherent state
``beta = x0 + i p0`` is

    <p|beta> = (2/pi)^{1/4} exp(-(p - p0)^2 - 2i x0 p + i x0 p0)

so the homodyne density is a sum of Gaussians of variance 1/4 centred at
``q_n = -alpha sin(Omega n)``, and conditioning on an outcome multiplies
each amplitude ``c_n`` by ``<p|alpha e^{-i Omega n}>``.

Outcomes of successive rounds are conditionally independent given ``n``
(the coupling commutes with ``n_a``).  The joint record of ``M`` rounds is
therefore sampled exactly by drawing the hidden ``(N, n)`` once from the
prior and then ``M`` Gaussian outcomes, and the posterior depends on the
record only through ``M`` and ``sum(p_i)``.  The literal round-by-round
loop is kept as ``sequential=True`` for cross-checks.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace

import numpy as np

from .observables import MomentSet
from .states import WINDOW_CUT, AtomState

_LOG_NORM = 0.5 * math.log(2.0 / math.pi)  # log of sqrt(2/pi)
HOMODYNE_SD = 0.5
# printed prefactor of the post-QND coherence formula, and the value the
# full simulation actually produces (see coherence_after_qnd)
PRINTED_COHERENCE_PREFACTOR = 2.0
SIMULATED_COHERENCE_PREFACTOR = 1.0
VALIDITY_LIMIT = 0.1


class QndUnderflowError(ArithmeticError):
    """Homodyne outcome has vanishing likelihood on the state's support."""


@dataclass(frozen=True)
class QndConfig:
    alpha: float
    omega: float
    rounds: int = 1
    seed: int = 0
    phase_tuning: str = "none"  # or "snap_to_pi_multiple"

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.phase_tuning not in ("none", "snap_to_pi_multiple"):
            raise ValueError(f"unknown phase tuning {self.phase_tuning!r}")

    @property
    def gamma(self) -> float:
        return self.alpha ** 2 * self.omega ** 2 * self.rounds

    @property
    def rotation_phase(self) -> float:
        """Accumulated linear phase ``M alpha^2 Omega``."""
        return self.rounds * self.alpha ** 2 * self.omega

    def tuned(self) -> "QndConfig":
        """Config with Omega moved so ``M alpha^2 Omega`` is a nonzero multiple of pi."""
        if self.phase_tuning != "snap_to_pi_multiple" or self.omega == 0 or self.alpha == 0:
            return self
        k = max(1, round(abs(self.rotation_phase) / math.pi))
        omega = math.copysign(k * math.pi / (self.rounds * self.alpha ** 2), self.omega)
        return replace(self, omega=omega)

    def validity(self, state: AtomState) -> float:
        """``Omega * n_max`` over the state's support; the Gaussian-sum regime needs this << 1."""
        return abs(self.omega) * max(s.hi for s in state.sectors)

    def is_valid_for(self, state: AtomState) -> bool:
        return self.validity(state) <= VALIDITY_LIMIT

    @classmethod
    def for_gamma(cls, gamma: float, n_max: float, alpha: float | None = None, rounds: int | None = None,
                  validity: float = 0.01, seed: int = 0, even: bool = True) -> "QndConfig":
        """Probe settings realising squeezing strength ``gamma`` with the phase tuned.

        ``Omega`` is kept below ``validity / n_max``.  Fix either ``alpha``
        (rounds are derived) or ``rounds`` (alpha is derived); with neither,
        ``alpha = 10``.  Tuning ``M alpha^2 Omega = k pi`` together with
        ``gamma = alpha^2 Omega^2 M`` gives ``Omega = gamma / (k pi)``.
        With ``even`` the multiple is even, so the coherence keeps its sign.
        """
        if gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if gamma == 0:
            return cls(alpha=0.0 if alpha is None else alpha, omega=0.0, rounds=rounds or 1, seed=seed)
        omega_max = validity / max(n_max, 1.0)
        k = max(1, math.ceil(gamma / (math.pi * omega_max)))
        if even:
            k += k % 2
        omega = gamma / (k * math.pi)
        if rounds is not None:
            alpha = math.sqrt(gamma / (omega ** 2 * rounds))
            return cls(alpha=alpha, omega=omega, rounds=rounds, seed=seed)
        alpha = 10.0 if alpha is None else alpha
        rounds = max(1, round(gamma / (alpha ** 2 * omega ** 2)))
        # integer rounds: re-solve Omega on the same multiple of pi
        omega = k * math.pi / (rounds * alpha ** 2)
        return cls(alpha=alpha, omega=omega, rounds=rounds, seed=seed)


@dataclass(frozen=True)
class QndRecord:
    outcomes: tuple[float, ...]
    gamma: float
    posterior_state_digest: str
    hidden: tuple[int, int] | None = None  # (N, n_a) drawn for the record, if known


def kernel_mean(n, alpha: float, omega: float):
    """Centre ``q_n = -alpha sin(Omega n)`` of the homodyne Gaussian for n atoms in a."""
    return -alpha * np.sin(omega * np.asarray(n, dtype=float))


def kernel(p, n, alpha: float, omega: float):
    """Overlap ``<p | alpha e^{-i Omega n}>`` of the p eigenstate and the rotated probe."""
    n = np.asarray(n, dtype=float)
    x0 = alpha * np.cos(omega * n)
    p0 = -alpha * np.sin(omega * n)
    return (2.0 / np.pi) ** 0.25 * np.exp(-(p - p0) ** 2 - 2j * x0 * p + 1j * x0 * p0)


class HomodyneDensity:
    """Gaussian mixture ``P0(p) = sum_k w_k sqrt(2/pi) exp(-2 (p - q_k)^2)``."""

    def __init__(self, means: np.ndarray, weights: np.ndarray):
        self.means = np.asarray(means, dtype=float)
        self.weights = np.asarray(weights, dtype=float)

    @property
    def components(self) -> list[tuple[float, float, float]]:
        """(weight, mean, variance) triples."""
        return [(float(w), float(q), HOMODYNE_SD ** 2) for w, q in zip(self.weights, self.means)]

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        d = p[..., None] - self.means
        out = np.sum(self.weights * np.exp(_LOG_NORM - 2.0 * d * d), axis=-1)
        return float(out) if out.ndim == 0 else out

    def mean(self) -> float:
        return float(np.dot(self.weights, self.means))


def _occupation_marginal(state: AtomState) -> tuple[np.ndarray, np.ndarray]:
    lo = min(s.lo for s in state.sectors)
    hi = max(s.hi for s in state.sectors)
    p = np.zeros(hi - lo + 1)
    for w, s in zip(state.weights, state.sectors):
        p[s.lo - lo:s.hi - lo + 1] += w * np.abs(s.amps) ** 2
    return np.arange(lo, hi + 1), p / p.sum()


def homodyne_distribution(state: AtomState, cfg: QndConfig) -> HomodyneDensity:
    """Outcome density of one homodyne round on ``state``.

    Components sharing a centre (same mode-a occupation, or no coupling at
    all) are merged.
    """
    n, p = _occupation_marginal(state)
    keep = p > 0
    centres, inverse = np.unique(kernel_mean(n[keep], cfg.alpha, cfg.omega), return_inverse=True)
    return HomodyneDensity(centres, np.bincount(inverse, weights=p[keep]))


def _draw_hidden(state: AtomState, rng: np.random.Generator) -> tuple[int, int]:
    i = rng.choice(len(state.sectors), p=state.weights)
    s = state.sectors[i]
    prob = np.abs(s.amps) ** 2
    k = rng.choice(prob.size, p=prob / prob.sum())
    return s.total_n, s.lo + int(k)


def sample_homodyne(state: AtomState, cfg: QndConfig, rng: np.random.Generator) -> float:
    """Exact draw from the homodyne mixture: pick (N, n), then a Gaussian outcome."""
    _, n = _draw_hidden(state, rng)
    return float(kernel_mean(n, cfg.alpha, cfg.omega) + HOMODYNE_SD * rng.standard_normal())


def _conditioned(state: AtomState, count: int, p_sum: float, alpha: float, omega: float) -> AtomState:
    """Posterior after ``count`` rounds whose outcomes sum to ``p_sum``."""
    pk = state.packed
    # trig tables over the occupied range of n, then gathered per entry
    n0 = int(pk.occ.min())
    n = np.arange(n0, int(pk.occ.max()) + 1, dtype=float)
    sin, cos = np.sin(omega * n), np.cos(omega * n)
    q = -alpha * sin
    # n-dependent part of sum_i [-2 (p_i - q_n)^2] and of sum_i arg K(p_i, n)
    loglik = (4.0 * q * p_sum - 2.0 * count * q * q)[pk.occ - n0]
    phase = (-2.0 * alpha * p_sum * cos - count * alpha * alpha * sin * cos)[pk.occ - n0]
    with np.errstate(divide="ignore"):
        shifted = np.log(state.weights)[pk.sector] + loglik
    # sectors are normalized, so |c| <= 1 and this shift cannot overflow
    top = float(np.max(shifted[pk.amps != 0]))
    if not math.isfinite(top):
        raise QndUnderflowError("outcome likelihood is not finite on the state's support")
    # fold the sector weight into the amplitudes so one shift normalizes all
    amps = pk.amps * np.exp(0.5 * (shifted - top) + 1j * phase)
    sector_w = pk.sector_sum(np.abs(amps) ** 2)
    keep = sector_w >= WINDOW_CUT * sector_w.max()
    if not keep.all():
        pk = replace(pk, amps=amps).subset(keep)
        amps, sector_w = pk.amps, sector_w[keep]
    pk = pk.trimmed(amps)
    sector_w = pk.sector_sum(np.abs(pk.amps) ** 2)
    pk = replace(pk, amps=pk.amps / np.sqrt(sector_w)[pk.sector])
    return AtomState.from_packed(sector_w / sector_w.sum(), pk, label=state.label)


def qnd_update(state: AtomState, p0: float, cfg: QndConfig) -> AtomState:
    """Condition ``state`` on a single homodyne outcome ``p0``.

    Raises ``QndUnderflowError`` when ``P0(p0)`` underflows, i.e. the
    outcome is inconsistent with the truncated support.
    """
    if homodyne_distribution(state, cfg)(p0) <= 0.0:
        raise QndUnderflowError(f"P0({p0!r}) underflows to zero")
    return _conditioned(state, 1, float(p0), cfg.alpha, cfg.omega)


def apply_outcomes(state: AtomState, outcomes, cfg: QndConfig) -> AtomState:
    """Condition on a whole record at once (fresh probe each round)."""
    outcomes = np.asarray(outcomes, dtype=float)
    return _conditioned(state, outcomes.size, float(np.sum(outcomes)), cfg.alpha, cfg.omega)


def state_digest(state: AtomState) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(state.weights).tobytes())
    for s in state.sectors:
        h.update(np.int64([s.total_n, s.lo]).tobytes())
        h.update(s.amps.tobytes())
    return h.hexdigest()


def _rng(rng, cfg: QndConfig) -> np.random.Generator:
    if rng is None:
        return np.random.default_rng(cfg.seed)
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def run_protocol(state: AtomState, cfg: QndConfig, rng=None,
                 sequential: bool = False) -> tuple[AtomState, QndRecord]:
    """``cfg.rounds`` homodyne rounds with back-action on ``state``.

    ``rng`` may be a Generator, a seed, or None (use ``cfg.seed``).
    """
    cfg = cfg.tuned()
    gen = _rng(rng, cfg)
    if sequential:
        cur, outs = state, []
        for _ in range(cfg.rounds):
            p = sample_homodyne(cur, cfg, gen)
            cur = qnd_update(cur, p, cfg)
            outs.append(p)
        return cur, QndRecord(tuple(outs), cfg.gamma, state_digest(cur))
    N, n = _draw_hidden(state, gen)
    outs = kernel_mean(n, cfg.alpha, cfg.omega) + HOMODYNE_SD * gen.standard_normal(cfg.rounds)
    post = apply_outcomes(state, outs, cfg)
    return post, QndRecord(tuple(float(x) for x in outs), cfg.gamma, state_digest(post), (N, n))


def variance_after_qnd(n_mean: float, sigma2: float, gamma: float) -> float:
    """Mode-a number variance after squeezing: ``((s2 + n)/4) / (1 + gamma (s2 + n))``."""
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    v = sigma2 + n_mean
    return (v / 4.0) / (1.0 + gamma * v)


def coherence_after_qnd(n_mean: float, alpha: float, omega: float, rounds: int,
                        prefactor: float = SIMULATED_COHERENCE_PREFACTOR) -> float:
    """Coherence ``prefactor * <n> * cos(M alpha^2 Omega)`` after the QND rounds.

    The printed form uses ``prefactor = 2`` (``PRINTED_COHERENCE_PREFACTOR``);
    simulation gives 1, which is also what the small-angle sensitivity
    formula needs at zero squeezing.
    """
    return prefactor * n_mean * math.cos(rounds * alpha * alpha * omega)


def analytic_post_qnd_moments(n_mean: float, sigma2: float, gamma: float,
                              coherence: float | None = None, nodes: int = 21) -> MomentSet:
    """Moment model of the squeezed state, for the analytic sensitivity route.

    The prior ``(n, Jz)`` is Gaussian with variances ``(sigma2, n/4)``; the
    record acts as a measurement of ``n_a = n/2 + Jz`` with noise variance
    ``1/(4 gamma)``.  The posterior is centred on the prior means (a
    typical record), spread over total-number sectors with the conditional
    mean and variance of Jz in each, and ``Jx = (coherence / 2<n>) N``.
    Mode-a variance reproduces ``variance_after_qnd`` exactly.
    """
    if coherence is None:
        coherence = n_mean
    k = 4.0 * gamma / (1.0 + gamma * (sigma2 + n_mean))
    var_n = sigma2 - (sigma2 / 2.0) ** 2 * k
    var_z = n_mean / 4.0 - (n_mean / 4.0) ** 2 * k
    cov = -(sigma2 / 2.0) * (n_mean / 4.0) * k
    if var_n <= 0.0:
        N = np.array([n_mean])
        w = np.ones(1)
        jz = np.zeros(1)
        vzz = np.array([var_z])
    else:
        # Gauss-Hermite nodes: the sensitivity only needs moments up to
        # second order in N, which this integrates exactly
        x, w = np.polynomial.hermite.hermgauss(nodes)
        N = n_mean + math.sqrt(2.0 * var_n) * x
        w = w / w.sum()
        jz = cov / var_n * (N - n_mean)
        vzz = np.full(N.size, var_z - cov * cov / var_n)
    jx = coherence / (2.0 * n_mean) * N
    zeros = np.zeros(N.size)
    return MomentSet.from_sector_arrays(w, N, jz, jx, zeros, np.maximum(vzz, 0.0), zeros, zeros)
