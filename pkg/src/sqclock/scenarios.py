"""Scenario runners behind the command line: phase and squeezing sweeps, QND demo, QFI table.

Every runner returns a :class:`Table`.  Curve-like scenarios share the column
layout ``CURVE_COLUMNS``; the ``route`` column says where a row comes from:

``analytic``                  post-QND moment model with the full error propagation
``montecarlo``                record average of simulated QND protocols
``closed_form``               unsqueezed closed form (``eq6_sensitivity``)
``closed_form_squeezed``      small-angle squeezed closed form (``eq8_sensitivity``)
``closed_form_fixed_number``  the same with sigma2 = 0
``sql``, ``heisenberg``       reference limits
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import poisson

from . import qfi, qnd, ramsey
from .observables import moments
from .states import fock_mixture_state, make_number_distribution, prepared_clock_state

CURVE_COLUMNS = ("theta", "delta_theta", "gamma", "n_mean", "sigma2", "m", "route")
FULL_N_MEAN = 1e5
DESK_N_MEAN = 1e4
FIG1_GAMMAS = tuple(math.pi * g for g in (0.0, 1e-5, 1e-4, 1e-3, 1e-2))
SCENARIOS = ("fig1", "fig2", "qnd-demo", "qfi-table", "sweep")


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    scenario: str = "sweep"
    n_mean: float = FULL_N_MEAN
    sigma2: float | None = None  # defaults to n_mean (Poissonian total number)
    gamma_list: tuple[float, ...] = ()
    theta_grid: tuple[float, float, int] = (-math.pi / 2, math.pi, 361)
    m: int = 1
    records: int = 0
    alpha: float | None = None
    rounds: int = 100
    seed: int = 0
    paper_scale: bool = False
    workers: int = 1
    output_path: str | None = None
    format: str = "csv"

    def __post_init__(self):
        if self.sigma2 is None:
            self.sigma2 = self.n_mean
        self.gamma_list = tuple(float(g) for g in self.gamma_list)
        self.theta_grid = (float(self.theta_grid[0]), float(self.theta_grid[1]), int(self.theta_grid[2]))

    def validate(self) -> "ScenarioConfig":
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if not self.n_mean > 0:
            raise ConfigError("n_mean must be positive")
        if self.sigma2 < 0:
            raise ConfigError("sigma2 must be nonnegative")
        if any(g < 0 or not math.isfinite(g) for g in self.gamma_list):
            raise ConfigError("gamma values must be finite and nonnegative")
        lo, hi, count = self.theta_grid
        if count < 1 or (count > 1 and not hi > lo):
            raise ConfigError("theta grid must be non-empty and increasing")
        if self.m < 1:
            raise ConfigError("m must be >= 1")
        if self.records < 0:
            raise ConfigError("records must be >= 0")
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if self.alpha is not None and not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"unknown format {self.format!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self

    def thetas(self) -> np.ndarray:
        lo, hi, count = self.theta_grid
        return np.linspace(lo, hi, count) if count > 1 else np.array([lo])

    def mc_scale(self) -> tuple[float, float]:
        """(n_mean, sigma2) for Monte Carlo runs; desk scale unless paper_scale."""
        if self.paper_scale or self.n_mean <= DESK_N_MEAN:
            return self.n_mean, self.sigma2
        r = DESK_N_MEAN / self.n_mean
        return DESK_N_MEAN, self.sigma2 * r


@dataclass
class Table:
    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def where(self, **match) -> "Table":
        idx = {self.columns.index(k): v for k, v in match.items()}
        rows = [r for r in self.rows if all(r[i] == v for i, v in idx.items())]
        return Table(self.columns, rows, self.config, self.checks)


# -- Monte Carlo plumbing ---------------------------------------------------

_WORKER_STATE = {}


def _init_worker(prior, qcfg, thetas, m):
    _WORKER_STATE.update(prior=prior, qcfg=qcfg, thetas=thetas, m=m)


def _one_record(seed_key):
    st = _WORKER_STATE
    post, rec = qnd.run_protocol(st["prior"], st["qcfg"], rng=np.random.default_rng(list(seed_key)))
    moms = moments(post)
    curve = None
    if st["thetas"] is not None:
        curve = ramsey.sensitivity_curve(moms, st["thetas"], st["m"]).delta_thetas
    try:
        th_opt, dt_opt = ramsey.optimal_theta(moms, st["m"])
    except ramsey.NoMinimumError:
        th_opt, dt_opt = math.nan, math.inf
    return {
        "curve": curve, "theta_opt": th_opt, "delta_theta_opt": dt_opt,
        "na_var": moms.na_var, "coherence": moms.coherence,
        "delta_theta_0": ramsey.delta_theta(moms, 0.0, st["m"]).delta_theta,
        "digest": rec.posterior_state_digest, "gamma": rec.gamma,
    }


def run_records(prior, qcfg, seed_keys, thetas=None, m=1, workers=1) -> list[dict]:
    """Run independent QND records; results come back in ``seed_keys`` order.

    Each record draws from its own stream ``default_rng(seed_key)``, so the
    output does not depend on how records are spread over workers.
    """
    seed_keys = [tuple(int(k) for k in key) for key in seed_keys]
    if workers <= 1:
        _init_worker(prior, qcfg, thetas, m)
        try:
            return [_one_record(k) for k in seed_keys]
        finally:
            _WORKER_STATE.clear()
    with ProcessPoolExecutor(workers, initializer=_init_worker,
                             initargs=(prior, qcfg, thetas, m)) as pool:
        return list(pool.map(_one_record, seed_keys, chunksize=max(1, len(seed_keys) // (4 * workers))))


def _mc_prior(n_mean, sigma2):
    return prepared_clock_state(make_number_distribution("gaussian", n_mean, sigma2))


def _qnd_config(cfg: ScenarioConfig, gamma: float, prior) -> qnd.QndConfig:
    n_max = max(s.hi for s in prior.sectors)
    if cfg.alpha is not None:
        return qnd.QndConfig.for_gamma(gamma, n_max, alpha=cfg.alpha, seed=cfg.seed)
    return qnd.QndConfig.for_gamma(gamma, n_max, rounds=cfg.rounds, seed=cfg.seed)


def _desk_gamma(gamma, cfg, n_mc, s2_mc):
    # keep gamma (sigma2 + <n>) fixed when moving to desk scale
    return gamma * (cfg.sigma2 + cfg.n_mean) / (s2_mc + n_mc)


# -- scenarios --------------------------------------------------------------

def _curve_rows(cfg: ScenarioConfig, gammas) -> Table:
    thetas = cfg.thetas()
    n, s2, m = cfg.n_mean, cfg.sigma2, cfg.m
    table = Table(CURVE_COLUMNS, config=config_echo(cfg))
    for g in gammas:
        moms = qnd.analytic_post_qnd_moments(n, s2, g)
        curve = ramsey.sensitivity_curve(moms, thetas, m)
        table.rows += [(t, d, g, n, s2, m, "analytic") for t, d in zip(thetas, curve.delta_thetas)]
        if g == 0:
            with np.errstate(all="ignore"):
                closed = [_safe_unsqueezed(n, s2, t, m) for t in thetas]
            table.rows += [(t, d, 0.0, n, s2, m, "closed_form") for t, d in zip(thetas, closed)]
    if cfg.records > 0:
        n_mc, s2_mc = cfg.mc_scale()
        prior = _mc_prior(n_mc, s2_mc)
        for gi, g in enumerate(gammas):
            g_mc = _desk_gamma(g, cfg, n_mc, s2_mc)
            qcfg = _qnd_config(cfg, g_mc, prior)
            res = run_records(prior, qcfg, [(cfg.seed, gi, r) for r in range(cfg.records)],
                              thetas, m, cfg.workers)
            avg = np.mean([r["curve"] for r in res], axis=0)
            table.rows += [(t, d, qcfg.gamma, n_mc, s2_mc, m, "montecarlo") for t, d in zip(thetas, avg)]
    sql, hl = ramsey.sql_limit(n, m), ramsey.heisenberg_limit(n, m)
    table.rows += [(t, sql, math.nan, n, s2, m, "sql") for t in thetas]
    table.rows += [(t, hl, math.nan, n, s2, m, "heisenberg") for t in thetas]
    return table


def _safe_unsqueezed(n, s2, t, m):
    try:
        return ramsey.eq6_sensitivity(n, s2, t, m)
    except ValueError:
        return math.inf


def run_fig1(cfg: ScenarioConfig) -> Table:
    """Sensitivity versus phase for the default squeezing strengths."""
    gammas = cfg.gamma_list or FIG1_GAMMAS
    return _curve_rows(cfg, gammas)


def run_sweep(cfg: ScenarioConfig) -> Table:
    """Sensitivity versus phase for user-chosen gammas (default: gamma = 0)."""
    return _curve_rows(cfg, cfg.gamma_list or (0.0,))


def default_fig2_gammas(n_mean: float, sigma2: float) -> tuple[float, ...]:
    # gamma (sigma2 + <n>) from 1e-2 to 1e5, two points per decade
    v = sigma2 + n_mean
    return tuple(float(x) / v for x in np.logspace(-2, 5, 15))


def run_fig2(cfg: ScenarioConfig) -> Table:
    """Optimal phase and optimal sensitivity versus gamma.

    The ``theta`` column holds theta_opt and ``delta_theta`` the sensitivity
    there.  ``checks`` records how closely the sigma2 = <n> results follow
    the fixed-number (sigma = 0) closed form where ``gamma (sigma2 + <n>) >= 1``.
    """
    n, s2, m = cfg.n_mean, cfg.sigma2, cfg.m
    gammas = cfg.gamma_list or default_fig2_gammas(n, s2)
    table = Table(CURVE_COLUMNS, config=config_echo(cfg))
    gaps = []
    for g in gammas:
        th, dt = ramsey.optimal_theta(qnd.analytic_post_qnd_moments(n, s2, g), m)
        e8 = ramsey.eq8_sensitivity(n, s2, g, m)
        e8_0 = ramsey.eq8_sensitivity(n, 0.0, g, m)
        table.rows += [(th, dt, g, n, s2, m, "analytic"),
                       (0.0, e8, g, n, s2, m, "closed_form_squeezed"),
                       (0.0, e8_0, g, n, 0.0, m, "closed_form_fixed_number")]
        if g * (s2 + n) >= 1:
            gaps.append(("analytic", g, abs(dt / e8_0 - 1)))
    if cfg.records > 0:
        n_mc, s2_mc = cfg.mc_scale()
        prior = _mc_prior(n_mc, s2_mc)
        for gi, g in enumerate(gammas):
            g_mc = _desk_gamma(g, cfg, n_mc, s2_mc)
            qcfg = _qnd_config(cfg, g_mc, prior)
            res = run_records(prior, qcfg, [(cfg.seed, gi, r) for r in range(cfg.records)],
                              None, m, cfg.workers)
            th = float(np.mean([r["theta_opt"] for r in res]))
            dt = float(np.mean([r["delta_theta_opt"] for r in res]))
            table.rows.append((th, dt, qcfg.gamma, n_mc, s2_mc, m, "montecarlo"))
            if qcfg.gamma * (s2_mc + n_mc) >= 1:
                e8_0 = ramsey.eq8_sensitivity(n_mc, 0.0, qcfg.gamma, m)
                gaps.append(("montecarlo", qcfg.gamma, abs(dt / e8_0 - 1)))
    table.rows += [(math.nan, ramsey.sql_limit(n, m), math.nan, n, s2, m, "sql"),
                   (math.nan, ramsey.heisenberg_limit(n, m), math.nan, n, s2, m, "heisenberg")]
    worst = max((gap for *_, gap in gaps), default=0.0)
    table.checks = {"fixed_number_max_rel_gap": worst, "fixed_number_agree_5pct": worst <= 0.05}
    return table


def _poisson(mean: float) -> np.ndarray:
    if mean == 0:
        return np.array([1.0])
    k = np.arange(int(mean + 12 * math.sqrt(mean) + 20))
    p = poisson.pmf(k, mean)
    return p / p.sum()


def run_qfi_table(cfg: ScenarioConfig) -> Table:
    """QFI, Cramer-Rao bound and witness for ``|N>_a`` times a Poissonian mode b.

    Rows cover ``<n_b>/N`` in {0, 0.01, 0.1, 1} for N in ``{10, 100, 1000}``
    (or ``--nbar`` as the single N when it is below 1e4).
    """
    ns = (int(cfg.n_mean),) if cfg.n_mean < DESK_N_MEAN else (10, 100, 1000)
    cols = ("n_a", "nb_mean", "f_q", "delta_theta", "closed_form", "sql", "witness", "m")
    table = Table(cols, config=config_echo(cfg))
    for N in ns:
        for frac in (0.0, 0.01, 0.1, 1.0):
            rho_b = _poisson(frac * N)
            state = fock_mixture_state(N, rho_b)
            nb = float(np.dot(np.arange(rho_b.size), rho_b))
            rep = qfi.fisher_report(state, cfg.m)
            table.rows.append((N, nb, rep.f_q, rep.cr_delta_theta, qfi.eq5_sensitivity(N, nb, cfg.m),
                               ramsey.sql_limit(state.n_mean, cfg.m), rep.witness, cfg.m))
    return table


def run_qnd_demo(cfg: ScenarioConfig) -> Table:
    """Per-record summary of simulated QND squeezing at Monte Carlo scale."""
    n_mc, s2_mc = cfg.mc_scale()
    prior = _mc_prior(n_mc, s2_mc)
    prior_moms = moments(prior)
    gammas = cfg.gamma_list or (10.0 / (n_mc + s2_mc),)
    records = cfg.records or 1
    cols = ("record", "gamma", "n_mean", "sigma2", "rounds", "alpha", "omega", "na_var_prior",
            "na_var_post", "na_var_analytic", "coherence_post", "theta_opt", "delta_theta_opt",
            "delta_theta_0", "closed_form_squeezed", "digest")
    table = Table(cols, config=config_echo(cfg))
    for gi, g in enumerate(gammas):
        qcfg = _qnd_config(cfg, g, prior)
        res = run_records(prior, qcfg, [(cfg.seed, gi, r) for r in range(records)], None,
                          cfg.m, cfg.workers)
        for r, out in enumerate(res):
            table.rows.append((r, qcfg.gamma, n_mc, s2_mc, qcfg.rounds, qcfg.alpha, qcfg.omega,
                               prior_moms.na_var, out["na_var"],
                               qnd.variance_after_qnd(n_mc, s2_mc, qcfg.gamma), out["coherence"],
                               out["theta_opt"], out["delta_theta_opt"], out["delta_theta_0"],
                               ramsey.eq8_sensitivity(n_mc, s2_mc, qcfg.gamma, cfg.m), out["digest"]))
    return table


RUNNERS = {"fig1": run_fig1, "fig2": run_fig2, "qnd-demo": run_qnd_demo,
           "qfi-table": run_qfi_table, "sweep": run_sweep}


def run(cfg: ScenarioConfig) -> Table:
    return RUNNERS[cfg.validate().scenario](cfg)


# -- output -----------------------------------------------------------------

def config_echo(cfg: ScenarioConfig) -> dict:
    d = asdict(cfg)
    d.pop("output_path", None)
    d.pop("workers", None)
    d["theta_grid"] = list(d["theta_grid"])
    d["gamma_list"] = list(d["gamma_list"])
    return d


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _json_value(x):
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    return x


def render(table: Table, fmt: str = "csv") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(table.columns)
        w.writerows([_fmt(v) for v in row] for row in table.rows)
        return buf.getvalue()
    if fmt == "json":
        doc = {
            "columns": list(table.columns),
            "rows": [[_json_value(v) for v in row] for row in table.rows],
            "config": table.config,
            "seed": table.config.get("seed"),
            "checks": table.checks,
        }
        return json.dumps(doc, indent=1) + "\n"
    raise ConfigError(f"unknown format {fmt!r}")


def emit(table: Table, fmt: str = "csv", path: str | os.PathLike | None = None) -> str:
    """Serialize ``table``; write to ``path`` when given.  Returns the text."""
    text = render(table, fmt)
    if path is not None:
        try:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        except OSError as e:
            raise OSError(f"cannot write output file {os.fspath(path)!r}: {e.strerror or e}") from e
    return text


def load_json_table(text: str) -> Table:
    doc = json.loads(text)
    return Table(tuple(doc["columns"]), [tuple(r) for r in doc["rows"]], doc["config"], doc["checks"])
