"""The three channel studies: length sweeps, missing spins, coupling disorder.

Every study reduces to many independent single-channel simulations plus an
aggregation step.  Work items are dispatched through one helper so that the
dense/tensor backend choice, time step, and measurement window are uniform
inside a study, and aggregation is done from stably ordered result lists so
the outputs are deterministic for a given (spec, seed, settings) regardless
of how the items were scheduled.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CapabilityError
from .model import (NV_LEFT, NV_RIGHT, build_hamiltonian, channel_spin,
                    uniform_spec)
from .dense import evolve_dense, simulated_spins
from .observables import max_entanglement
from .tebd import converge_chi, evolve_tebd

DENSE_SPIN_LIMIT = 11
WINDOW_PER_SITE = 12.0          # measurement window: 12 (n+1) / g_min
MISSING_ENUM_LIMIT = 14         # refuse > 2^14 configurations


@dataclass(frozen=True)
class SolverSettings:
    """How a study runs its individual simulations.

    solver "auto" picks dense when the simulated spin count fits the dense
    limit and the tensor backend otherwise.  dt=None uses the backend
    default (0.01 / max coupling); dt_scaled sets dt = dt_scaled / max
    coupling of the concrete (possibly disordered) spec, which keeps the
    step proportional to the fastest local timescale across realizations.
    A chi_schedule makes tensor runs go through converge_chi.
    """

    solver: str = "auto"
    dt: float | None = None
    dt_scaled: float | None = None
    sample_every: int | None = None
    chi_max: int = 64
    cutoff: float = 1e-12
    chi_schedule: tuple | None = None
    converge_tol: float = 1e-4
    order: int = 2
    abort_discard: float = 1e-3
    spin_limit: int = DENSE_SPIN_LIMIT
    workers: int = 1

    def __post_init__(self):
        if self.solver not in ("auto", "dense", "tebd"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.dt is not None and self.dt_scaled is not None:
            raise ValueError("give dt or dt_scaled, not both")


def pick_solver(spec, settings):
    """Resolve 'auto' to a concrete backend for this spec."""
    if settings.solver != "auto":
        return settings.solver
    if len(simulated_spins(spec)) <= settings.spin_limit:
        return "dense"
    return "tebd"


def resolve_dt(spec, settings):
    if settings.dt is not None:
        return settings.dt
    if settings.dt_scaled is not None:
        w = spec.max_coupling()
        if w > 0:
            return settings.dt_scaled / w
    return None                      # backend default


def run_dynamics(spec, t_max, settings=SolverSettings()):
    """One simulation under the study-wide solver settings."""
    solver = pick_solver(spec, settings)
    dt = resolve_dt(spec, settings)
    if solver == "dense":
        return evolve_dense(spec, t_max, dt=dt,
                            sample_every=settings.sample_every,
                            spin_limit=settings.spin_limit)
    if settings.chi_schedule is not None:
        traj, _report = converge_chi(
            spec, t_max, dt=dt, chi_schedule=settings.chi_schedule,
            tol=settings.converge_tol, cutoff=settings.cutoff,
            sample_every=settings.sample_every, order=settings.order,
            abort_discard=settings.abort_discard)
        return traj
    return evolve_tebd(spec, t_max, dt=dt, chi_max=settings.chi_max,
                       cutoff=settings.cutoff,
                       sample_every=settings.sample_every,
                       order=settings.order,
                       abort_discard=settings.abort_discard)


def default_window(spec):
    """Measurement window t_max = 12 (n+1) / g_min.

    g_min is the smallest nonzero coupling of the channel, so the window covers
    about six round trips of the slowest propagation mode; measured peak
    times (both geometries, n up to 6) sit well inside half of it.  Studies
    may pass tighter documented windows where the peak location is known.
    """
    strengths = [abs(s) for _, _, _, s in build_hamiltonian(spec).two_site]
    strengths = [s for s in strengths if s > 0]
    if not strengths:
        return 1.0
    return WINDOW_PER_SITE * (spec.geometry.n + 1) / min(strengths)


def _run_item(args):
    spec, t_max, settings = args
    traj = run_dynamics(spec, t_max, settings)
    e, t_at = max_entanglement(traj, refine=True)
    return e, t_at, traj


def _map_items(items, settings):
    """Ordered map over work items, optionally via a process pool."""
    if settings.workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=settings.workers) as ex:
            return list(ex.map(_run_item, items))
    return [_run_item(it) for it in items]


# ---------------------------------------------------------------------------
# length sweep


@dataclass(frozen=True)
class SweepPoint:
    geometry: str
    n: int
    gamma_c: float              # 1/us
    e_max: float
    t_at_max: float             # us


def sweep_length(kind, n_list, separation_nm=40.0, gamma_c_list=(2e-3,),
                 settings=SolverSettings(), nv_noise_rate=1e-4,
                 t_max=None, keep_trajectories=False):
    """E_max versus channel length at fixed NV separation.

    The NVs stay `separation_nm` apart, so the spin spacing shrinks as
    separation/(n+1) and the couplings grow with n.  Returns the list of
    SweepPoint rows (ordered by the input grids) and, optionally, the full
    trajectories keyed by (n, gamma_c).
    """
    rows, trajs = [], {}
    for n in n_list:
        for gc in gamma_c_list:
            spec = uniform_spec(kind, n, nv_separation_nm=separation_nm,
                                channel_noise_rate=gc,
                                nv_noise_rate=nv_noise_rate)
            window = t_max if t_max is not None else default_window(spec)
            try:
                e, t_at, traj = _run_item((spec, window, settings))
            except Exception as exc:
                exc.args = (f"sweep point kind={kind} n={n} "
                            f"gamma_c={gc}: {exc}",)
                raise
            rows.append(SweepPoint(kind, n, gc, e, t_at))
            if keep_trajectories:
                trajs[(n, gc)] = traj
    return (rows, trajs) if keep_trajectories else (rows, None)


# ---------------------------------------------------------------------------
# missing spins


@dataclass(frozen=True)
class MaskResult:
    mask: int
    m_missing: int
    multiplicity: int
    e_max: float
    t_at_max: float
    simulated: bool             # False when short-circuited by connectivity


@dataclass(frozen=True)
class MissingSpinEnsemble:
    base_spec: object
    p_grid: tuple
    n_sites: int                # M = number of channel spins
    results: tuple              # MaskResult per equivalence class
    averages: tuple             # <E_max>(P) on p_grid

    def average(self, p):
        """Exact binomial reweighting of the per-configuration maxima."""
        total = 0.0
        for r in self.results:
            w = p ** r.m_missing * (1.0 - p) ** (self.n_sites - r.m_missing)
            total += r.multiplicity * w * r.e_max
        return total

    def weight_sum(self, p):
        return sum(r.multiplicity * p ** r.m_missing
                   * (1.0 - p) ** (self.n_sites - r.m_missing)
                   for r in self.results)


def mask_spin_order(geometry):
    """Bit order of missing-spin masks: site-major, rail B before T.

    Bit 0 is the leftmost channel position; a set bit means the spin is
    absent.  Chains use one bit per site; ladders two (B then T).
    """
    out = []
    for i in range(1, geometry.n + 1):
        for rail in geometry.rails:
            out.append((i, rail))
    return tuple(out)


def mask_to_missing(mask, order):
    return frozenset(pos for b, pos in enumerate(order) if mask >> b & 1)


def mask_to_bits(mask, width):
    return format(mask, f"0{width}b")[::-1]


def reflect_mask(mask, geometry):
    """Swap the B and T rails of a ladder mask (identity for chains)."""
    if len(geometry.rails) == 1:
        return mask
    out = 0
    for i in range(geometry.n):
        pair = mask >> (2 * i) & 0b11
        out |= ((pair >> 1) | ((pair & 1) << 1)) << (2 * i)
    return out


def is_connected(spec):
    """True when NV_L can reach NV_R through present couplings."""
    edges = build_hamiltonian(spec).coupling_graph_edges()
    adj = {}
    for a, b in edges:
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    seen, frontier = {NV_LEFT}, [NV_LEFT]
    while frontier:
        node = frontier.pop()
        for nxt in adj.get(node, ()):
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return NV_RIGHT in seen


def missing_spin_average(base_spec, p_grid, settings=SolverSettings(),
                         t_max=None, deduplicate=True):
    """Enumerate every missing-spin configuration and reweight binomially.

    Simulations are probability-independent, so each configuration runs
    once and <E_max>(P) is assembled for the whole grid.  Configurations
    whose coupling graph disconnects the NVs contribute exactly zero and
    are short-circuited.  Ladder configurations that map onto each other
    under swapping the two rails share one simulation, with multiplicity
    bookkeeping restoring the full 2^M sum.
    """
    if base_spec.missing:
        raise ValueError("base spec must not itself have missing spins")
    geometry = base_spec.geometry
    order = mask_spin_order(geometry)
    m_total = len(order)
    if m_total > MISSING_ENUM_LIMIT:
        raise CapabilityError(
            f"2^{m_total} missing-spin configurations exceed the "
            f"enumeration guard (2^{MISSING_ENUM_LIMIT})")

    classes = {}                # canonical mask -> multiplicity
    for mask in range(2 ** m_total):
        canon = min(mask, reflect_mask(mask, geometry)) if deduplicate \
            else mask
        classes[canon] = classes.get(canon, 0) + 1

    reps = sorted(classes)
    work, placed = [], []
    for mask in reps:
        missing = mask_to_missing(mask, order)
        spec = replace(base_spec, missing=missing)
        if is_connected(spec):
            window = t_max if t_max is not None else default_window(base_spec)
            work.append((spec, window, settings))
            placed.append(mask)
        else:
            placed.append(None)     # marks a short-circuited class

    outputs = iter(_map_items(work, settings))
    results = []
    for mask, tag in zip(reps, placed):
        if tag is None:
            e, t_at, simulated = 0.0, 0.0, False
        else:
            e, t_at, _traj = next(outputs)
            simulated = True
        results.append(MaskResult(mask, bin(mask).count("1"),
                                  classes[mask], e, t_at, simulated))

    ens = MissingSpinEnsemble(base_spec, tuple(float(p) for p in p_grid),
                              m_total, tuple(results), ())
    averages = tuple(ens.average(p) for p in ens.p_grid)
    return replace(ens, averages=averages)


def fig_ratio(chain_ensemble, ladder_ensemble, floor=1e-12):
    """Pointwise ladder:chain ratio of <E_max>(P) where the chain is alive."""
    if chain_ensemble.p_grid != ladder_ensemble.p_grid:
        raise ValueError("ensembles use different probability grids")
    out = []
    for p, ec, el in zip(chain_ensemble.p_grid, chain_ensemble.averages,
                         ladder_ensemble.averages):
        if ec > floor:
            out.append((p, el / ec))
    return out


# ---------------------------------------------------------------------------
# coupling disorder


@dataclass(frozen=True)
class DisorderEnsemble:
    base_spec: object
    sigma: float                # coupling SD, same units as the couplings
    k: int
    seed: int
    e_values: tuple             # E_max per realization, in index order
    mean: float
    std_err: float


def lognormal_params(mean, sd):
    """Underlying (mu, s) of a log-normal with the given mean and SD."""
    if mean <= 0:
        raise ValueError("log-normal mean must be positive")
    s2 = math.log(1.0 + (sd / mean) ** 2)
    mu = math.log(mean) - 0.5 * s2
    return mu, math.sqrt(s2)


def realization_rng(seed, index):
    """Counter-based stream so realization `index` is reproducible alone."""
    return np.random.Generator(np.random.Philox(key=(seed, index)))


def draw_couplings(base_spec, sigma, rng, include_nv=False, relative=False):
    """One disordered spec: every intra-channel coupling drawn log-normally.

    Draw order (documented; fixed): rail couplings bond by bond, B rail
    then T rail inside each bond; then rung couplings left to right; then,
    only when include_nv is set, left NV (B, T) and right NV (B, T).  Each
    value is log-normal with mean equal to its ideal value and standard
    deviation sigma (or sigma times the ideal value when relative is set).
    """
    def draw(ideal):
        sd = sigma * ideal if relative else sigma
        mu, s = lognormal_params(ideal, sd)
        return float(rng.lognormal(mean=mu, sigma=s))

    two_rails = len(base_spec.geometry.rails) == 2
    rails = []
    for wb, wt in base_spec.rail_couplings:
        nb = draw(wb)
        nt = draw(wt) if two_rails else 0.0
        rails.append((nb, nt))
    rungs = tuple(draw(a) for a in base_spec.rung_couplings)
    spec = replace(base_spec, rail_couplings=tuple(rails),
                   rung_couplings=rungs)
    if include_nv:
        def draw_pair(pair):
            nb = draw(pair[0])
            nt = draw(pair[1]) if two_rails else 0.0
            return (nb, nt)
        spec = replace(spec, left_nv_coupling=draw_pair(spec.left_nv_coupling),
                       right_nv_coupling=draw_pair(spec.right_nv_coupling))
    return spec


def disorder_average(base_spec, sigma, k, seed, settings=SolverSettings(),
                     t_max=None, include_nv=False, sigma_relative=False):
    """Mean and standard error of E_max over k disorder realizations.

    sigma_relative interprets sigma as a fraction of each coupling's ideal
    value instead of an absolute SD.  sigma = 0 bypasses sampling entirely
    and returns the ideal run with zero error.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if k < 1:
        raise ValueError("k must be at least 1")
    window = t_max if t_max is not None else default_window(base_spec)

    if sigma == 0.0:
        e, _t, _traj = _run_item((base_spec, window, settings))
        return DisorderEnsemble(base_spec, 0.0, k, seed, (e,), e, 0.0)

    items = []
    for idx in range(k):
        rng = realization_rng(seed, idx)
        spec = draw_couplings(base_spec, sigma, rng, include_nv=include_nv,
                              relative=sigma_relative)
        items.append((spec, window, settings))
    outs = _map_items(items, settings)
    e_values = tuple(e for e, _t, _traj in outs)
    mean = float(np.mean(e_values))
    std_err = float(np.std(e_values, ddof=1) / math.sqrt(k)) if k > 1 else 0.0
    return DisorderEnsemble(base_spec, float(sigma), k, seed, e_values,
                            mean, std_err)
