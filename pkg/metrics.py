"""
Graph statistics and analytic bounds.
Path-length distributions, bisection and diameter bounds for random regular
graphs, fat-tree closed forms, link localization and pairwise connectivity.
"""

import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import pandas as pd
from networkx.algorithms.connectivity import build_auxiliary_edge_connectivity, local_edge_connectivity
from networkx.algorithms.flow import build_residual_network
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from logging_config import get_logger, log_function_call
from models import ParameterError, PathLengthDistribution, PathLevel, Topology, TopologyError
from settings import get_section
from topo import make_rng

logger = get_logger('metrics')


def adjacency_matrix(topology: Topology) -> csr_matrix:
    """Symmetric 0/1 switch adjacency as a sparse matrix."""
    n = topology.num_switches
    if not topology.links:
        return csr_matrix((n, n), dtype=np.float64)
    links = np.asarray(topology.links, dtype=np.int64)
    rows = np.concatenate([links[:, 0], links[:, 1]])
    cols = np.concatenate([links[:, 1], links[:, 0]])
    return csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))


@log_function_call
def path_lengths(topology: Topology, level: PathLevel = PathLevel.SWITCH) -> PathLengthDistribution:
    """
    All-pairs shortest path histogram (BFS from every switch).

    Server pairs on different switches a, b are dist(a, b) + 2 apart; servers
    sharing a switch are 2 apart; a server is never paired with itself.
    """
    level = PathLevel(level)
    n = topology.num_switches
    graph = adjacency_matrix(topology)
    block = int(get_section('metrics').get('block_size', 256))
    if level is PathLevel.SERVER:
        weight = np.asarray(topology.servers, dtype=np.float64)
    else:
        weight = np.ones(n)

    histogram = np.zeros(n + 3)
    for start in range(0, n, block):
        rows = np.arange(start, min(start + block, n))
        dist = shortest_path(graph, directed=False, unweighted=True, indices=rows)
        pair_weight = np.outer(weight[rows], weight)
        reachable = np.isfinite(dist)
        if not reachable[pair_weight > 0].all():
            raise TopologyError("topology is disconnected; path lengths are infinite")
        hops = np.where(reachable, dist, 0).astype(np.int64)
        local = np.arange(len(rows))
        if level is PathLevel.SERVER:
            hops += 2
            pair_weight[local, rows] = weight[rows] * (weight[rows] - 1)
        else:
            pair_weight[local, rows] = 0
        histogram += np.bincount(hops.ravel(), weights=pair_weight.ravel(), minlength=len(histogram))

    counts = {h: int(round(c)) for h, c in enumerate(histogram) if round(c) > 0}
    pair_count = sum(counts.values())
    mean = sum(h * c for h, c in counts.items()) / pair_count if pair_count else 0.0
    diameter = max(counts) if counts else 0
    logger.debug(f"{level.value} path lengths over {pair_count} pairs: mean={mean:.3f} diameter={diameter}")
    return PathLengthDistribution(level=level, histogram=counts, mean=mean, diameter=diameter,
                                  pair_count=pair_count)


def bisection_lower_bound(num_switches: int, degree: int) -> float:
    """
    Lower bound on the links crossing any balanced bisection of RRG(N, *, r):
    N (r/4 - sqrt(r ln 2) / 2). Negative for small r; returned unclamped.
    """
    if degree < 1 or num_switches < 2:
        raise ParameterError(f"bound needs r >= 1 and N >= 2, got r={degree} N={num_switches}")
    return num_switches * (degree / 4 - math.sqrt(degree * math.log(2)) / 2)


def normalized_bisection_bound(num_switches: int, ports: int, degree: int) -> float:
    """Bisection bound divided by the server line rate of one half, N(k - r)/2."""
    if ports <= degree:
        raise ParameterError(f"no servers attached (k={ports}, r={degree})")
    return bisection_lower_bound(num_switches, degree) / (num_switches * (ports - degree) / 2)


def diameter_upper_bound(num_switches: int, degree: int, eps: Optional[float] = None,
                         level: PathLevel = PathLevel.SWITCH) -> int:
    """
    1 + ceil(log_{r-1}((2 + eps) r N ln N)) hops between switches; two more
    between servers.
    """
    if eps is None:
        eps = float(get_section('metrics').get('diameter_epsilon', 0.1))
    if degree < 3:
        raise ParameterError(f"diameter bound needs r >= 3, got {degree}")
    if num_switches < 2 or eps <= 0:
        raise ParameterError(f"diameter bound needs N >= 2 and eps > 0, got N={num_switches} eps={eps}")
    n = num_switches
    bound = 1 + math.ceil(math.log((2 + eps) * degree * n * math.log(n)) / math.log(degree - 1))
    return bound + 2 if PathLevel(level) is PathLevel.SERVER else bound


@dataclass(frozen=True)
class FatTreeStats:
    servers: int
    switches: int
    switch_links: int
    bisection_links: int
    local_fraction: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def fat_tree_stats(kp: int) -> FatTreeStats:
    """Closed-form counts of a fat-tree built from kp-port switches."""
    if kp < 2 or kp % 2:
        raise ParameterError(f"fat-tree port count must be even and >= 2, got {kp}")
    return FatTreeStats(servers=kp ** 3 // 4, switches=5 * kp * kp // 4, switch_links=kp ** 3 // 2,
                        bisection_links=kp ** 3 // 8, local_fraction=0.5 * (1 + 1 / kp))


def local_fraction(topology: Topology, containers: Optional[Sequence[int]] = None) -> float:
    """Fraction of switch-switch links whose endpoints share a container."""
    containers = topology.containers if containers is None else tuple(containers)
    if containers is None:
        raise ParameterError("topology has no container assignment")
    if len(containers) != topology.num_switches:
        raise ParameterError(f"container assignment covers {len(containers)} of {topology.num_switches} switches")
    if not topology.links:
        return 0.0
    local = sum(1 for a, b in topology.links if containers[a] == containers[b])
    return local / topology.num_links


def pair_connectivity(topology: Topology, pairs: Sequence[Tuple[int, int]]) -> List[int]:
    """Minimum s-t cut (unit link capacities) for each switch pair."""
    graph = topology.to_networkx()
    auxiliary = build_auxiliary_edge_connectivity(graph)
    residual = build_residual_network(auxiliary, 'capacity')
    return [local_edge_connectivity(graph, s, t, auxiliary=auxiliary, residual=residual) for s, t in pairs]


def sample_pair_connectivity(topology: Topology, count: int, seed: int) -> List[Tuple[int, int, int]]:
    """Connectivity of `count` random distinct switch pairs: (s, t, cut) rows."""
    if topology.num_switches < 2:
        raise ParameterError("need at least two switches")
    rng = make_rng(seed)
    pairs = []
    for _ in range(count):
        s, t = rng.choice(topology.num_switches, size=2, replace=False)
        pairs.append((int(s), int(t)))
    return [(s, t, cut) for (s, t), cut in zip(pairs, pair_connectivity(topology, pairs))]


def scalar_frame(values: Dict[str, float]) -> pd.DataFrame:
    """`metric,value` table."""
    return pd.DataFrame({'metric': list(values), 'value': list(values.values())})
