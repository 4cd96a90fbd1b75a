"""Population generator for messaging-app style contact networks.

Individuals are linked in two ways: directed person-to-person channels whose
out-degree follows a discretized normal law, and groups of 3..30 members whose
sizes follow a shifted exponential CDF. Only a fraction of the population
(the penetration) is connected at all.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class SurveyDistributions:
    """Fitted survey parameters for degrees and group sizes."""

    mu: float = 7.35
    sigma: float = 4.38
    lam: float = 0.1113
    a_shift: float = 1.41
    min_group_size: int = 3
    max_group_size: int = 30
    max_p2p: int = 30

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.min_group_size < 3:
            raise ValueError("groups have at least 3 members")
        if self.max_group_size < self.min_group_size:
            raise ValueError("max_group_size < min_group_size")
        if self.max_p2p < 0:
            raise ValueError("max_p2p must be >= 0")

    def group_cdf_raw(self, n) -> np.ndarray:
        """E(N) = 1 - exp(-lam (N - a_shift)), unnormalized."""
        return 1.0 - np.exp(-self.lam * (np.asarray(n, dtype=float) - self.a_shift))

    def group_size_support(self) -> np.ndarray:
        return np.arange(self.min_group_size, self.max_group_size + 1)

    def group_size_pmf(self) -> np.ndarray:
        """Probabilities of sizes min..max, normalized over that window."""
        sizes = self.group_size_support()
        w = self.group_cdf_raw(sizes) - self.group_cdf_raw(sizes - 1)
        return w / w.sum()

    def group_size_cdf(self, n) -> np.ndarray:
        """Target CDF restricted to [min_group_size, max_group_size]."""
        n = np.asarray(n, dtype=float)
        lo = self.group_cdf_raw(self.min_group_size - 1)
        hi = self.group_cdf_raw(self.max_group_size)
        n = np.clip(np.floor(n), self.min_group_size - 1, self.max_group_size)
        return (self.group_cdf_raw(n) - lo) / (hi - lo)

    def mean_group_size(self) -> float:
        return float(np.dot(self.group_size_support(), self.group_size_pmf()))

    def p2p_degree_pmf(self) -> np.ndarray:
        """Normal mass on half-integer bins, m = 0..max_p2p, tail folded into the last bin."""
        m = np.arange(self.max_p2p + 1)
        upper = np.array([_norm_cdf(k + 0.5, self.mu, self.sigma) for k in m])
        upper[-1] = 1.0
        lower = np.concatenate(([0.0], upper[:-1]))
        w = upper - lower
        return w / w.sum()


def _norm_cdf(x: float, mu: float, sigma: float) -> float:
    return 0.5 * math.erfc(-(x - mu) / (sigma * math.sqrt(2.0)))


def largest_remainder(weights, total: int) -> np.ndarray:
    """Integer apportionment of ``total`` proportional to ``weights`` (Hamilton method).

    Ties in the remainders are broken by index so the result is deterministic.
    """
    w = np.asarray(weights, dtype=float)
    if total < 0:
        raise ValueError("total must be >= 0")
    if total == 0 or w.sum() <= 0:
        return np.zeros(len(w), dtype=np.int64)
    quota = w / w.sum() * total
    base = np.floor(quota).astype(np.int64)
    short = total - int(base.sum())
    if short > 0:
        order = np.lexsort((np.arange(len(w)), -(quota - base)))
        base[order[:short]] += 1
    return base


def p2p_degree_counts(dist: SurveyDistributions, n_connected: int) -> np.ndarray:
    """Number of individuals having m person-to-person contacts, m = 0..max_p2p."""
    if n_connected < 0:
        raise ValueError("n_connected must be >= 0")
    return largest_remainder(dist.p2p_degree_pmf(), n_connected)


def group_size_counts(dist: SurveyDistributions, n_groups: int) -> np.ndarray:
    """Number of groups of each size min_group_size..max_group_size."""
    if n_groups < 0:
        raise ValueError("n_groups must be >= 0")
    if n_groups == 0:
        return np.zeros(0, dtype=np.int64)
    return largest_remainder(dist.group_size_pmf(), n_groups)


@dataclass(frozen=True)
class PopulationConfig:
    n_total: int = 10000
    penetration: float = 0.70
    # memberships per connected individual; 0.1 reproduces the tabulated
    # characteristic times (a ~ 31 at P_II = 2%, P_IP = 1%)
    groups_per_capita: float = 0.1
    rng_seed: int = 0
    distributions: SurveyDistributions = field(default_factory=SurveyDistributions)

    def __post_init__(self):
        if self.n_total < 2:
            raise ValueError("n_total must be >= 2")
        if not 0.0 < self.penetration <= 1.0:
            raise ValueError("penetration must be in (0, 1]")
        if self.groups_per_capita < 0:
            raise ValueError("groups_per_capita must be >= 0")

    @property
    def n_connected(self) -> int:
        return int(round(self.penetration * self.n_total))

    def n_groups(self) -> int:
        return int(round(self.groups_per_capita * self.n_connected
                         / self.distributions.mean_group_size()))


@dataclass
class Channels:
    """Flattened channel arrays used by the spreading engine.

    p2p edges are sorted by source; memberships are sorted by individual.
    ``p2p_ptr``/``mem_ptr`` index them CSR-style by individual id, and
    ``grp_ptr`` indexes ``grp_members`` by group.
    """

    p2p_src: np.ndarray
    p2p_dst: np.ndarray
    p2p_ptr: np.ndarray
    mem_ind: np.ndarray
    mem_grp: np.ndarray
    mem_ptr: np.ndarray
    grp_members: np.ndarray
    grp_ptr: np.ndarray

    @property
    def n_groups(self) -> int:
        return len(self.grp_ptr) - 1


@dataclass
class Network:
    n_total: int
    connected: np.ndarray
    p2p_src: np.ndarray
    p2p_dst: np.ndarray
    groups: list = field(default_factory=list)

    def __post_init__(self):
        self.connected = np.asarray(self.connected, dtype=np.int64)
        self.p2p_src = np.asarray(self.p2p_src, dtype=np.int64)
        self.p2p_dst = np.asarray(self.p2p_dst, dtype=np.int64)
        self.groups = [np.asarray(g, dtype=np.int64) for g in self.groups]

    @property
    def n_connected(self) -> int:
        return len(self.connected)

    @property
    def group_sizes(self) -> np.ndarray:
        return np.array([len(g) for g in self.groups], dtype=np.int64)

    def out_degrees(self) -> np.ndarray:
        return np.bincount(self.p2p_src, minlength=self.n_total)

    @cached_property
    def channels(self) -> Channels:
        n = self.n_total
        order = np.argsort(self.p2p_src, kind="stable")
        src, dst = self.p2p_src[order], self.p2p_dst[order]
        p2p_ptr = np.concatenate(([0], np.cumsum(np.bincount(src, minlength=n))))

        sizes = self.group_sizes
        grp_members = (np.concatenate(self.groups) if self.groups
                       else np.zeros(0, dtype=np.int64))
        grp_ptr = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
        grp_of = np.repeat(np.arange(len(self.groups)), sizes)
        order = np.argsort(grp_members, kind="stable")
        mem_ind, mem_grp = grp_members[order], grp_of[order]
        mem_ptr = np.concatenate(([0], np.cumsum(np.bincount(mem_ind, minlength=n))))
        return Channels(src, dst, p2p_ptr.astype(np.int64), mem_ind, mem_grp,
                        mem_ptr.astype(np.int64), grp_members, grp_ptr)

    def check(self, dist: Optional[SurveyDistributions] = None) -> None:
        """Raise ValueError if any structural invariant is violated."""
        conn = np.zeros(self.n_total, dtype=bool)
        conn[self.connected] = True
        if len(self.p2p_src):
            if not (conn[self.p2p_src].all() and conn[self.p2p_dst].all()):
                raise ValueError("p2p endpoint outside connected set")
            if np.any(self.p2p_src == self.p2p_dst):
                raise ValueError("self-link")
            pairs = self.p2p_src * self.n_total + self.p2p_dst
            if len(np.unique(pairs)) != len(pairs):
                raise ValueError("duplicate p2p edge")
        for g in self.groups:
            if not conn[g].all():
                raise ValueError("group member outside connected set")
            if len(np.unique(g)) != len(g):
                raise ValueError("duplicate member in group")
        if dist is not None:
            sizes = self.group_sizes
            if len(sizes) and (sizes.min() < dist.min_group_size
                               or sizes.max() > dist.max_group_size):
                raise ValueError("group size out of range")
            if len(self.p2p_src) and self.out_degrees().max() > dist.max_p2p:
                raise ValueError("out-degree above max_p2p")

    def to_dict(self) -> dict:
        order = np.lexsort((self.p2p_dst, self.p2p_src))
        return {
            "n_total": int(self.n_total),
            "connected": sorted(int(i) for i in self.connected),
            "p2p": [[int(self.p2p_src[k]), int(self.p2p_dst[k])] for k in order],
            "groups": [[int(i) for i in g] for g in self.groups],
        }

    def to_json(self) -> str:
        """Canonical serialization; equal networks give equal strings."""
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "Network":
        p2p = np.asarray(d.get("p2p", []), dtype=np.int64).reshape(-1, 2)
        return cls(n_total=int(d["n_total"]), connected=d["connected"],
                   p2p_src=p2p[:, 0], p2p_dst=p2p[:, 1],
                   groups=d.get("groups", []))

    @classmethod
    def from_json(cls, text: str) -> "Network":
        return cls.from_dict(json.loads(text))


def build_network(config: PopulationConfig, rng: Optional[np.random.Generator] = None) -> Network:
    """Generate one random population.

    With ``rng=None`` a generator seeded from ``config.rng_seed`` is used, so
    the same config always yields the same network.
    """
    if rng is None:
        rng = np.random.default_rng(config.rng_seed)
    dist = config.distributions
    n_conn = config.n_connected
    connected = np.sort(rng.choice(config.n_total, size=n_conn, replace=False))

    deg_counts = p2p_degree_counts(dist, n_conn)
    max_deg = int(np.flatnonzero(deg_counts)[-1]) if deg_counts.any() else 0
    if max_deg > n_conn - 1:
        raise ValueError(f"degree {max_deg} needs more than {n_conn} connected individuals")
    degrees = np.repeat(np.arange(len(deg_counts)), deg_counts)
    holders = rng.permutation(n_conn)

    srcs, dsts = [], []
    for pos, m in zip(holders, degrees):
        if m == 0:
            continue
        # sample from the n_conn - 1 others, then skip over self
        picks = rng.choice(n_conn - 1, size=m, replace=False)
        picks[picks >= pos] += 1
        srcs.append(np.full(m, connected[pos]))
        dsts.append(connected[picks])
    p2p_src = np.concatenate(srcs) if srcs else np.zeros(0, dtype=np.int64)
    p2p_dst = np.concatenate(dsts) if dsts else np.zeros(0, dtype=np.int64)

    n_groups = config.n_groups()
    size_counts = group_size_counts(dist, n_groups)
    sizes = np.repeat(dist.group_size_support(), size_counts) if n_groups else np.zeros(0, int)
    if len(sizes) and sizes.max() > n_conn:
        raise ValueError(f"group size {sizes.max()} exceeds {n_conn} connected individuals")
    sizes = rng.permutation(sizes)
    groups = [np.sort(connected[rng.choice(n_conn, size=s, replace=False)]) for s in sizes]

    return Network(config.n_total, connected, p2p_src, p2p_dst, groups)


@dataclass
class ValidationReport:
    n_connected: int
    n_groups: int
    degree_histogram: list
    mean_out_degree: float
    group_size_ecdf: dict = field(default_factory=dict)
    max_cdf_deviation: Optional[float] = None
    fitted_lam: Optional[float] = None
    r_squared: Optional[float] = None
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def validate_network(net: Network, dist: SurveyDistributions) -> ValidationReport:
    """Compare a generated network with the target distributions."""
    if net.n_total == 0:
        raise ValueError("empty network")
    deg = net.out_degrees()[net.connected]
    hist = np.bincount(deg, minlength=dist.max_p2p + 1)
    report = ValidationReport(
        n_connected=net.n_connected,
        n_groups=len(net.groups),
        degree_histogram=[int(x) for x in hist],
        mean_out_degree=float(deg.mean()) if len(deg) else 0.0,
    )
    if not net.groups:
        report.flags.append("no groups")
        return report

    from .fit import fit_group_size_cdf

    sizes = net.group_sizes
    support = dist.group_size_support()
    ecdf = np.searchsorted(np.sort(sizes), support, side="right") / len(sizes)
    report.group_size_ecdf = {int(s): float(c) for s, c in zip(support, ecdf)}
    report.max_cdf_deviation = float(np.max(np.abs(ecdf - dist.group_size_cdf(support))))
    try:
        res = fit_group_size_cdf(sizes, dist)
        report.fitted_lam = res.coefficients["lam"]
        report.r_squared = res.r_squared
        report.flags.extend(res.flags)
    except ValueError as exc:
        report.flags.append(f"group size fit failed: {exc}")
    return report
