"""
Data models for jellynet.
Contains the topology, routing, traffic and report dataclasses plus the error types.
"""

from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Tuple

import networkx as nx
import numpy as np
import pandas as pd

from logging_config import get_logger

logger = get_logger('models')

Link = Tuple[int, int]
Path = Tuple[int, ...]

RNG_ID = "pcg64"


class JellynetError(Exception):
    """Root of all jellynet errors."""


class ParameterError(JellynetError, ValueError):
    """An argument is outside the accepted range."""


class TopologyError(JellynetError):
    """A topology violates its invariants (or is unusable, e.g. disconnected)."""


class FormatError(TopologyError):
    """Malformed topology or expansion-log text."""

    def __init__(self, message: str, line_no: Optional[int] = None):
        self.line_no = line_no
        prefix = f"line {line_no}: " if line_no is not None else ""
        super().__init__(prefix + message)


class ExpansionError(JellynetError):
    """A switch cannot be wired into the existing network."""


class RoutingError(JellynetError):
    """Destination switch is unreachable from the source switch."""


class ExperimentError(JellynetError):
    """Unknown experiment or missing experiment input."""


class TopologyKind(Enum):
    """Families of topologies jellynet can build or import."""
    RRG = "rrg"
    FAT_TREE = "fat_tree"
    SWDC_RING = "swdc_ring"
    SWDC_TORUS2D = "swdc_torus2d"
    SWDC_HEX3D = "swdc_hex3d"
    LAYERED_RRG = "layered_rrg"
    IMPORTED = "imported"


def normalize_link(a: int, b: int) -> Link:
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True, repr=False)
class Topology:
    """Switch-level graph with per-switch port budget and attached servers."""
    kind: TopologyKind
    ports: Tuple[int, ...]
    servers: Tuple[int, ...]
    links: Tuple[Link, ...]
    seed: int = 0
    rng: str = RNG_ID
    meta: Tuple[Tuple[str, str], ...] = ()
    containers: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        ports = tuple(int(k) for k in self.ports)
        servers = tuple(int(s) for s in self.servers)
        if len(ports) != len(servers):
            raise TopologyError(f"{len(ports)} port budgets but {len(servers)} server counts")
        if not ports:
            raise TopologyError("a topology needs at least one switch")
        n = len(ports)

        seen = set()
        for a, b in self.links:
            a, b = int(a), int(b)
            if a == b:
                raise TopologyError(f"self-loop on switch {a}")
            if not (0 <= a < n and 0 <= b < n):
                raise TopologyError(f"link ({a}, {b}) references a switch outside 0..{n - 1}")
            link = normalize_link(a, b)
            if link in seen:
                raise TopologyError(f"duplicate link {link}")
            seen.add(link)
        links = tuple(sorted(seen))

        degree = [0] * n
        for a, b in links:
            degree[a] += 1
            degree[b] += 1
        for i in range(n):
            if ports[i] < 1 or servers[i] < 0:
                raise TopologyError(f"switch {i}: invalid ports={ports[i]} servers={servers[i]}")
            if degree[i] + servers[i] > ports[i]:
                raise TopologyError(
                    f"switch {i}: degree {degree[i]} + servers {servers[i]} exceeds {ports[i]} ports")

        containers = self.containers
        if containers is not None:
            containers = tuple(int(c) for c in containers)
            if len(containers) != n:
                raise TopologyError(f"container assignment covers {len(containers)} of {n} switches")

        object.__setattr__(self, 'ports', ports)
        object.__setattr__(self, 'servers', servers)
        object.__setattr__(self, 'links', links)
        object.__setattr__(self, 'seed', int(self.seed))
        object.__setattr__(self, 'meta', tuple(sorted((str(k), str(v)) for k, v in dict(self.meta).items())))
        object.__setattr__(self, 'containers', containers)

    def __repr__(self) -> str:
        return (f"Topology(kind={self.kind.value}, switches={self.num_switches}, "
                f"servers={self.num_servers}, links={self.num_links}, seed={self.seed})")

    @property
    def num_switches(self) -> int:
        return len(self.ports)

    @property
    def num_servers(self) -> int:
        return sum(self.servers)

    @property
    def num_links(self) -> int:
        return len(self.links)

    @cached_property
    def degrees(self) -> Tuple[int, ...]:
        degree = [0] * self.num_switches
        for a, b in self.links:
            degree[a] += 1
            degree[b] += 1
        return tuple(degree)

    @cached_property
    def adjacency(self) -> Tuple[FrozenSet[int], ...]:
        neighbors: List[set] = [set() for _ in range(self.num_switches)]
        for a, b in self.links:
            neighbors[a].add(b)
            neighbors[b].add(a)
        return tuple(frozenset(s) for s in neighbors)

    @cached_property
    def sorted_neighbors(self) -> Tuple[Tuple[int, ...], ...]:
        return tuple(tuple(sorted(s)) for s in self.adjacency)

    @cached_property
    def server_switch(self) -> np.ndarray:
        """Switch hosting each server; servers are numbered switch-major."""
        return np.repeat(np.arange(self.num_switches), self.servers)

    @property
    def meta_dict(self) -> Dict[str, str]:
        return dict(self.meta)

    @property
    def free_ports(self) -> Tuple[int, ...]:
        return tuple(k - s - d for k, s, d in zip(self.ports, self.servers, self.degrees))

    def has_link(self, a: int, b: int) -> bool:
        return b in self.adjacency[a]

    def degree_label(self) -> str:
        """Network degree as printed in summaries: 'r' or 'lo-hi'."""
        lo, hi = min(self.degrees), max(self.degrees)
        return str(lo) if lo == hi else f"{lo}-{hi}"

    def summary(self) -> str:
        return (f"switches={self.num_switches} servers={self.num_servers} "
                f"links={self.num_links} degree={self.degree_label()}")

    def is_connected(self) -> bool:
        return nx.is_connected(self.to_networkx())

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(self.num_switches))
        graph.add_edges_from(self.links)
        return graph

    def with_links(self, links: Iterable[Link], **meta: Any) -> 'Topology':
        """Copy with a new link set (and optional extra metadata)."""
        merged = {**self.meta_dict, **{k: str(v) for k, v in meta.items()}}
        return replace(self, links=tuple(links), meta=tuple(merged.items()))

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for JSON serialization."""
        return {
            'kind': self.kind.value,
            'switches': self.num_switches,
            'servers': self.num_servers,
            'links': self.num_links,
            'seed': self.seed,
            'rng': self.rng,
            'meta': self.meta_dict,
        }


class ExpansionKind(Enum):
    """How a new switch joins the network."""
    ADD_RACK = "add_rack"
    ADD_SWITCH = "add_switch"


@dataclass
class ExpansionStep:
    """Rewiring log of one incremental expansion."""
    kind: ExpansionKind
    new_switch: int
    new_switch_ports: int
    new_switch_servers: int
    links_removed: List[Link] = field(default_factory=list)
    links_added: List[Link] = field(default_factory=list)

    @property
    def ports_consumed(self) -> int:
        """Network ports of the new switch used by this step."""
        return len(self.links_added)

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for JSON serialization."""
        return {
            'kind': self.kind.value,
            'new_switch': self.new_switch,
            'new_switch_ports': self.new_switch_ports,
            'new_switch_servers': self.new_switch_servers,
            'links_removed': [list(l) for l in self.links_removed],
            'links_added': [list(l) for l in self.links_added],
        }


class PathLevel(Enum):
    """Endpoints of a path-length measurement."""
    SWITCH = "switch"
    SERVER = "server"


@dataclass
class PathLengthDistribution:
    """Histogram of shortest-path hop counts over ordered endpoint pairs."""
    level: PathLevel
    histogram: Dict[int, int]
    mean: float
    diameter: int
    pair_count: int

    def fraction_within(self, hops: int) -> float:
        """Fraction of pairs whose distance is at most `hops`."""
        if not self.pair_count:
            return 0.0
        return sum(c for h, c in self.histogram.items() if h <= hops) / self.pair_count

    def to_frame(self) -> pd.DataFrame:
        hops = sorted(self.histogram)
        return pd.DataFrame({'hops': hops, 'pairs': [self.histogram[h] for h in hops]})

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for JSON serialization."""
        return {
            'level': self.level.value,
            'histogram': {str(h): c for h, c in sorted(self.histogram.items())},
            'mean': self.mean,
            'diameter': self.diameter,
            'pair_count': self.pair_count,
        }


class RoutingMode(Enum):
    """Path selection schemes."""
    ECMP = "ecmp"
    KSP = "ksp"


@dataclass(frozen=True)
class PathSet:
    """Ordered loop-free switch paths for one source/destination switch pair."""
    src: int
    dst: int
    paths: Tuple[Path, ...]
    mode: RoutingMode
    limit: int

    def __len__(self) -> int:
        return len(self.paths)

    @property
    def lengths(self) -> List[int]:
        """Hop counts of the paths."""
        return [len(p) - 1 for p in self.paths]

    def directed_links(self) -> Counter:
        """How many paths of this set cross each directed link."""
        counts: Counter = Counter()
        for path in self.paths:
            counts.update(zip(path, path[1:]))
        return counts


@dataclass(frozen=True)
class TrafficMatrix:
    """Server-level permutation traffic: server i sends one unit to dst[i]."""
    servers: int
    dst: Tuple[int, ...]
    seed: int = 0

    def __post_init__(self):
        dst = tuple(int(d) for d in self.dst)
        if len(dst) != self.servers:
            raise ParameterError(f"permutation has {len(dst)} entries for {self.servers} servers")
        if sorted(dst) != list(range(self.servers)):
            raise ParameterError("destination map is not a permutation")
        if any(d == i for i, d in enumerate(dst)):
            raise ParameterError("permutation traffic must not contain self-traffic")
        object.__setattr__(self, 'dst', dst)

    def pairs(self) -> List[Tuple[int, int]]:
        return list(enumerate(self.dst))


@dataclass
class FlowSolution:
    """Result of a concurrent-flow computation."""
    lambda_: float
    per_flow: np.ndarray
    link_util: Dict[Link, float]
    epsilon: float
    iterations: int
    upper_bound: float = float('inf')
    group_flow: Optional[Dict[int, Dict[Link, float]]] = None

    @property
    def normalized_flows(self) -> np.ndarray:
        return np.clip(self.per_flow, 0.0, 1.0)

    @property
    def mean_flow(self) -> float:
        return float(self.normalized_flows.mean()) if len(self.per_flow) else 0.0

    @property
    def min_flow(self) -> float:
        return float(self.normalized_flows.min()) if len(self.per_flow) else 0.0

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for JSON serialization."""
        return {
            'lambda': self.lambda_,
            'mean_flow': self.mean_flow,
            'min_flow': self.min_flow,
            'epsilon': self.epsilon,
            'iterations': self.iterations,
            'upper_bound': self.upper_bound,
        }


@dataclass
class ExperimentReport:
    """Tabular results of one named experiment, with its configuration echo."""
    name: str
    config: Dict[str, Any]
    rows: pd.DataFrame
    wall_time: float = 0.0

    def to_csv(self, float_format: str = "%.6f") -> str:
        return self.rows.to_csv(index=False, float_format=float_format, lineterminator='\n')

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for JSON serialization."""
        return {
            'name': self.name,
            'config': self.config,
            'rows': self.rows.to_dict(orient='records'),
            'wall_time': self.wall_time,
        }
