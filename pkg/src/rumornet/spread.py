"""Iterative Monte Carlo rumor spreading with an uncritical senders group (USG).

Every iteration each burned individual tries each of its channels (one per
person-to-person out-edge, one per group membership) independently with
probability ``p_ip``; USG members succeed with probability 1. A successful
group send reaches all members at once. Updates are synchronous.

Two engines produce the same law for the burn series:

* ``method="naive"``: literal per-iteration Bernoulli trials via :func:`step`.
* ``method="fast"``: each channel's first success is geometric, so burn times
  are shortest paths with geometric edge weights, settled bucket by bucket.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .netgen import Network, PopulationConfig, build_network

# spawn_key tags for the counter-based stream derivation
_NET, _INIT, _RUN = 0, 1, 2


@dataclass(frozen=True)
class SpreadParams:
    p_ii: float
    p_ip: float
    p_usg: float = 0.0

    def __post_init__(self):
        for name in ("p_ii", "p_ip", "p_usg"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")


@dataclass
class SpreadState:
    """Boolean masks over individual ids plus the burned-group mask."""

    burned: np.ndarray
    usg: np.ndarray
    burned_groups: np.ndarray
    iteration: int = 0

    @classmethod
    def initial(cls, net: Network, seed_ids, usg_ids) -> "SpreadState":
        burned = np.zeros(net.n_total, dtype=bool)
        burned[np.asarray(seed_ids, dtype=np.int64)] = True
        usg = np.zeros(net.n_total, dtype=bool)
        usg[np.asarray(usg_ids, dtype=np.int64)] = True
        return cls(burned, usg, np.zeros(len(net.groups), dtype=bool), 0)

    @property
    def n_burned(self) -> int:
        return int(self.burned.sum())


@dataclass
class BurnSeries:
    """Burned fraction f(n), n = 0..T, with optional across-sample spread."""

    f: np.ndarray
    normalizer: int
    f_std: Optional[np.ndarray] = None
    n_samples: int = 1

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float)
        if self.f_std is None:
            self.f_std = np.zeros_like(self.f)

    @property
    def T(self) -> int:
        return len(self.f) - 1

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "f_mean", "f_std", "n_samples"])
        for n, (m, s) in enumerate(zip(self.f, self.f_std)):
            w.writerow([n, repr(float(m)), repr(float(s)), self.n_samples])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, normalizer: int = 0) -> "BurnSeries":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty series CSV")
        rows.sort(key=lambda r: int(r["n"]))
        f = np.array([float(r["f_mean"]) for r in rows])
        std = np.array([float(r.get("f_std") or 0.0) for r in rows])
        return cls(f, normalizer, std, int(rows[0].get("n_samples") or 1))


@dataclass(frozen=True)
class EnsembleSpec:
    n_populations: int = 30
    runs_per_population: int = 50
    iterations: int = 100
    master_seed: int = 0

    def __post_init__(self):
        if min(self.n_populations, self.runs_per_population, self.iterations) < 1:
            raise ValueError("ensemble counts must be >= 1")


def child_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Independent stream for ``key`` under ``master_seed``, schedule-independent."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


def _bernoulli_subset(net: Network, p: float, rng: np.random.Generator) -> np.ndarray:
    if not 0.0 <= p <= 1.0:
        raise ValueError("probability outside [0, 1]")
    return net.connected[rng.random(net.n_connected) < p]


def select_seed(net: Network, p_ii: float, rng: np.random.Generator) -> np.ndarray:
    """Each connected individual starts burned with probability p_ii."""
    return _bernoulli_subset(net, p_ii, rng)


def select_usg(net: Network, p_usg: float, rng: np.random.Generator) -> np.ndarray:
    """Each connected individual joins the USG with probability p_usg.

    Uses one uniform per connected individual, so with a shared stream the
    sets are nested in p_usg.
    """
    return _bernoulli_subset(net, p_usg, rng)


def step(net: Network, state: SpreadState, p_ip: float, rng: np.random.Generator) -> SpreadState:
    """Advance one synchronous iteration.

    One uniform is drawn for every channel, burned source or not, so runs that
    share a stream are coupled channel by channel.
    """
    ch = net.channels
    b0 = state.burned
    u_p2p = rng.random(len(ch.p2p_src))
    u_mem = rng.random(len(ch.mem_ind))

    burned = b0.copy()
    send = b0[ch.p2p_src] & (state.usg[ch.p2p_src] | (u_p2p < p_ip))
    burned[ch.p2p_dst[send]] = True

    send = b0[ch.mem_ind] & (state.usg[ch.mem_ind] | (u_mem < p_ip))
    hit = np.zeros(ch.n_groups, dtype=bool)
    hit[ch.mem_grp[send]] = True
    if hit.any():
        sizes = np.diff(ch.grp_ptr)
        burned[ch.grp_members[np.repeat(hit, sizes)]] = True

    return SpreadState(burned, state.usg, state.burned_groups | hit, state.iteration + 1)


def _csr_slices(ptr: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """Concatenated index ranges ptr[i]:ptr[i+1] for i in ids."""
    starts, stops = ptr[ids], ptr[ids + 1]
    lens = stops - starts
    total = int(lens.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    offs = np.repeat(starts - np.cumsum(lens) + lens, lens)
    return offs + np.arange(total)


def _geometric_delays(p: float, n: int, rng: np.random.Generator) -> np.ndarray:
    if p <= 0.0:
        return np.full(n, np.iinfo(np.int64).max // 4, dtype=np.int64)
    return rng.geometric(p, size=n).astype(np.int64)


def _arrival(n: int, delay: np.ndarray, T: int, never: int) -> np.ndarray:
    t = n + delay
    return np.where(t > T, never, t)


def burn_times(net: Network, seed_ids, usg_ids, p_ip: float,
               rng: np.random.Generator, T: int) -> tuple[np.ndarray, np.ndarray]:
    """Burn iteration of every individual and group (``-1`` if not within T).

    A channel whose source burns at iteration k first succeeds at k + G with
    G ~ Geometric(p_ip), or k + 1 for USG sources.
    """
    ch = net.channels
    never = np.iinfo(np.int64).max // 2
    d_p2p = _geometric_delays(p_ip, len(ch.p2p_src), rng)
    d_mem = _geometric_delays(p_ip, len(ch.mem_ind), rng)
    usg = np.zeros(net.n_total, dtype=bool)
    usg[np.asarray(usg_ids, dtype=np.int64)] = True
    d_p2p[usg[ch.p2p_src]] = 1
    d_mem[usg[ch.mem_ind]] = 1

    t_ind = np.full(net.n_total, never, dtype=np.int64)
    t_grp = np.full(ch.n_groups, never, dtype=np.int64)
    arr_ind = np.full(net.n_total, never, dtype=np.int64)
    arr_grp = np.full(ch.n_groups, never, dtype=np.int64)

    frontier = np.unique(np.asarray(seed_ids, dtype=np.int64))
    t_ind[frontier] = 0
    for n in range(T + 1):
        if n > 0:
            g_new = np.flatnonzero((arr_grp == n) & (t_grp == never))
            if len(g_new):
                t_grp[g_new] = n
                members = ch.grp_members[_csr_slices(ch.grp_ptr, g_new)]
                np.minimum.at(arr_ind, members, n)
            frontier = np.flatnonzero((arr_ind == n) & (t_ind == never))
            t_ind[frontier] = n
        if n == T:
            break
        if len(frontier):
            e = _csr_slices(ch.p2p_ptr, frontier)
            np.minimum.at(arr_ind, ch.p2p_dst[e], _arrival(n, d_p2p[e], T, never))
            m = _csr_slices(ch.mem_ptr, frontier)
            np.minimum.at(arr_grp, ch.mem_grp[m], _arrival(n, d_mem[m], T, never))
            # settled entries are dead; clearing them keeps the pending test exact
            arr_ind[t_ind != never] = never
            arr_grp[t_grp != never] = never
        elif not ((arr_ind < never).any() or (arr_grp < never).any()):
            break

    t_ind[t_ind == never] = -1
    t_grp[t_grp == never] = -1
    return t_ind, t_grp


def run(net: Network, params: SpreadParams, seed_ids, usg_ids,
        rng: np.random.Generator, T: int = 100, method: str = "fast") -> BurnSeries:
    """One spreading run; returns f(n) = burned / |connected| for n = 0..T."""
    n_p = net.n_connected
    if n_p == 0:
        raise ValueError("network has no connected individuals")
    conn = np.zeros(net.n_total, dtype=bool)
    conn[net.connected] = True
    seed_ids = np.asarray(seed_ids, dtype=np.int64)
    usg_ids = np.asarray(usg_ids, dtype=np.int64)
    if not (conn[seed_ids].all() and conn[usg_ids].all()):
        raise ValueError("seed and USG must be subsets of the connected set")

    if method == "fast":
        t_ind, _ = burn_times(net, seed_ids, usg_ids, params.p_ip, rng, T)
        counts = np.bincount(t_ind[t_ind >= 0], minlength=T + 1)[:T + 1]
        f = np.cumsum(counts) / n_p
    elif method == "naive":
        state = SpreadState.initial(net, seed_ids, usg_ids)
        f = np.empty(T + 1)
        f[0] = state.n_burned / n_p
        for n in range(1, T + 1):
            state = step(net, state, params.p_ip, rng)
            f[n] = state.n_burned / n_p
    else:
        raise ValueError(f"unknown method {method!r}")
    return BurnSeries(f, n_p)


@dataclass
class EnsembleResult:
    series: BurnSeries
    per_population: list = field(default_factory=list)
    seed_sizes: list = field(default_factory=list)
    usg_sizes: list = field(default_factory=list)


def run_population(pop_config: PopulationConfig, spec: EnsembleSpec, params: SpreadParams,
                   pop_index: int, key: Sequence[int] = (), method: str = "fast"):
    """All runs on one freshly generated population.

    Returns ``(runs, seed_size, usg_size)`` where ``runs`` has shape (runs, T+1).

    The seed and USG sets are drawn once and shared by every run.
    """
    key = tuple(key)
    net = build_network(pop_config, child_rng(spec.master_seed, *key, _NET, pop_index))
    init_rng = child_rng(spec.master_seed, *key, _INIT, pop_index)
    seed_ids = select_seed(net, params.p_ii, init_rng)
    usg_ids = select_usg(net, params.p_usg, init_rng)
    out = np.empty((spec.runs_per_population, spec.iterations + 1))
    for r in range(spec.runs_per_population):
        rng = child_rng(spec.master_seed, *key, _RUN, pop_index, r)
        out[r] = run(net, params, seed_ids, usg_ids, rng, spec.iterations, method).f
    return out, len(seed_ids), len(usg_ids)


def run_ensemble(pop_config: PopulationConfig, spec: EnsembleSpec, params: SpreadParams,
                 key: Sequence[int] = (), method: str = "fast") -> EnsembleResult:
    """Average burn series over populations and runs.

    ``key`` prefixes every derived stream; sweeps pass the grid-point index.
    """
    per_pop, all_runs, seeds, usgs = [], [], [], []
    for p in range(spec.n_populations):
        runs, ns, nu = run_population(pop_config, spec, params, p, key, method)
        per_pop.append(BurnSeries(runs.mean(axis=0), pop_config.n_connected,
                                  runs.std(axis=0), len(runs)))
        all_runs.append(runs)
        seeds.append(ns)
        usgs.append(nu)
    stacked = np.concatenate(all_runs, axis=0)
    # equal runs per population, so the grand mean equals the mean of means
    series = BurnSeries(stacked.mean(axis=0), pop_config.n_connected,
                        stacked.std(axis=0), len(stacked))
    return EnsembleResult(series, per_pop, seeds, usgs)


def first_passage(series, x: float) -> Optional[int]:
    """Smallest n with f(n) >= x, or None."""
    if not 0.0 < x < 1.0:
        raise ValueError("x must be in (0, 1)")
    f = series.f if isinstance(series, BurnSeries) else np.asarray(series, dtype=float)
    hits = np.flatnonzero(f >= x)
    return int(hits[0]) if len(hits) else None
