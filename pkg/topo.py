"""
Topology construction.
Builds Jellyfish random graphs, fat-trees, small-world lattices and 2-layer
(container-localized) random graphs. All builders are deterministic in their seed.
"""

import math
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

import networkx as nx
import numpy as np

from logging_config import get_logger, log_function_call
from models import (Link, ParameterError, RNG_ID, Topology, TopologyError,
                    TopologyKind, normalize_link)
from settings import get_section
from topology_parser import TopologyParser

logger = get_logger('topo')

SEED_MASK = (1 << 63) - 1

LinkFilter = Callable[[int, int], bool]


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator; its algorithm id is written into serialized output."""
    return np.random.Generator(np.random.PCG64(int(seed) & SEED_MASK))


def derive_seed(base: int, *labels: int) -> int:
    """
    Derive an independent seed from a base seed and integer labels
    (trial number, server count, ...) via numpy's SeedSequence spawn keys.
    """
    sequence = np.random.SeedSequence(entropy=int(base) & SEED_MASK,
                                      spawn_key=tuple(int(l) for l in labels))
    return int(sequence.generate_state(1, dtype=np.uint64)[0]) & SEED_MASK


class PortMatcher:
    """
    Random free-port matching with link-swap repair.

    Switches with free ports are joined at random (never twice, never to
    themselves, and only where `allowed` permits). When no joinable pair is
    left but ports remain, an existing link (x, y) is removed and replaced by
    (a, x) and (b, y), where a and b hold the leftover ports.
    """

    def __init__(self, num_switches: int, targets: Sequence[int], rng: np.random.Generator,
                 links: Optional[Set[Link]] = None, allowed: Optional[LinkFilter] = None,
                 repair_limit: int = 0, stall_samples: int = 64):
        self.n = num_switches
        self.rng = rng
        self.allowed = allowed
        self.links: Set[Link] = set(links or ())
        self.adjacency: List[Set[int]] = [set() for _ in range(num_switches)]
        for a, b in self.links:
            self.adjacency[a].add(b)
            self.adjacency[b].add(a)
        self.free = [int(t) for t in targets]
        self.repair_limit = repair_limit or 100 * num_switches
        self.stall_samples = stall_samples
        self.repairs = 0
        self._new_links: List[Link] = []

        self._pool: List[int] = []
        self._pos: Dict[int, int] = {}
        for i in range(num_switches):
            if self.free[i] > 0:
                self._pos[i] = len(self._pool)
                self._pool.append(i)

    @property
    def total_free(self) -> int:
        return sum(self.free)

    def _can_link(self, a: int, b: int) -> bool:
        if a == b or b in self.adjacency[a]:
            return False
        return self.allowed is None or self.allowed(a, b)

    def _use_port(self, a: int) -> None:
        self.free[a] -= 1
        if self.free[a] == 0:
            idx = self._pos.pop(a)
            last = self._pool.pop()
            if last != a:
                self._pool[idx] = last
                self._pos[last] = idx

    def _add(self, a: int, b: int) -> None:
        self.links.add(normalize_link(a, b))
        self.adjacency[a].add(b)
        self.adjacency[b].add(a)

    def _remove(self, a: int, b: int) -> None:
        self.links.discard(normalize_link(a, b))
        self.adjacency[a].discard(b)
        self.adjacency[b].discard(a)

    def _eligible_pairs(self) -> List[Link]:
        pool = sorted(self._pool)
        return [(a, b) for i, a in enumerate(pool) for b in pool[i + 1:] if self._can_link(a, b)]

    def join_random(self) -> None:
        """Join uniformly random joinable pairs of switches until none is left."""
        misses = 0
        while len(self._pool) >= 2:
            i, j = self.rng.integers(len(self._pool), size=2)
            a, b = self._pool[i], self._pool[j]
            if not self._can_link(a, b):
                misses += 1
                if misses < self.stall_samples:
                    continue
                candidates = self._eligible_pairs()
                if not candidates:
                    return
                a, b = candidates[self.rng.integers(len(candidates))]
            misses = 0
            self._add(a, b)
            self._use_port(a)
            self._use_port(b)

    def _repair_once(self) -> bool:
        """Swap one existing link to absorb two leftover ports."""
        pool = sorted(self._pool)
        crowded = [p for p in pool if self.free[p] >= 2]
        if crowded:
            a = b = crowded[self.rng.integers(len(crowded))]
        else:
            i, j = self.rng.choice(len(pool), size=2, replace=False)
            a, b = pool[i], pool[j]

        existing = sorted(self.links)
        while self.repairs < self.repair_limit:
            self.repairs += 1
            x, y = existing[self.rng.integers(len(existing))]
            if self.rng.integers(2):
                x, y = y, x
            if x == a or y == b:
                continue
            # only links of the current stage may be swapped (keeps layered degrees)
            if self.allowed is not None and not self.allowed(x, y):
                continue
            if not (self._can_link(a, x) and self._can_link(b, y)):
                continue
            self._remove(x, y)
            self._add(a, x)
            self._add(b, y)
            self._use_port(a)
            self._use_port(b)
            return True
        return False

    def run(self) -> bool:
        """Match ports until at most one stays free; False if repairs run out."""
        while True:
            self.join_random()
            if self.total_free <= 1:
                return True
            if not self.links or not self._repair_once():
                return False


def _construction_settings() -> Dict[str, int]:
    section = get_section('construction')
    return {
        'repair_factor': int(section.get('repair_factor', 100)),
        'max_reseeds': int(section.get('max_reseeds', 100)),
        'stall_samples': int(section.get('stall_samples', 64)),
    }


def _is_connected(num_switches: int, links: Set[Link]) -> bool:
    graph = nx.Graph()
    graph.add_nodes_from(range(num_switches))
    graph.add_edges_from(links)
    return nx.is_connected(graph)


def _random_graph(num_switches: int, targets: Sequence[int], seed: int,
                  stages: Optional[Sequence[Tuple[Sequence[int], Optional[LinkFilter]]]] = None
                  ) -> Tuple[Set[Link], int]:
    """
    Run one or more matching stages; re-seed (seed+1, seed+2, ...) until the
    result is connected and every stage completed.

    Returns:
        (links, attempts) where attempts counts constructions tried
    """
    settings = _construction_settings()
    stages = stages or [(targets, None)]
    for attempt in range(settings['max_reseeds']):
        rng = make_rng(seed + attempt)
        links: Set[Link] = set()
        complete = True
        for stage_targets, allowed in stages:
            matcher = PortMatcher(num_switches, stage_targets, rng, links=links, allowed=allowed,
                                  repair_limit=settings['repair_factor'] * num_switches,
                                  stall_samples=settings['stall_samples'])
            if not matcher.run():
                complete = False
                break
            links = matcher.links
        if complete and _is_connected(num_switches, links):
            if attempt:
                logger.debug(f"Construction with seed {seed} needed {attempt + 1} attempts")
            return links, attempt + 1
        logger.debug(f"Construction attempt {attempt + 1} (seed {seed + attempt}) rejected "
                     f"({'disconnected' if complete else 'repair limit reached'})")
    raise TopologyError(f"could not build a connected topology from seed {seed} "
                        f"in {settings['max_reseeds']} attempts")


@log_function_call
def build_jellyfish(ports: Sequence[int], servers: Sequence[int], seed: int,
                    kind: TopologyKind = TopologyKind.RRG) -> Topology:
    """
    Build a Jellyfish topology for arbitrary (possibly heterogeneous) switches.

    Switch i dedicates servers[i] ports to servers and wires the remaining
    ports (at most S-1 of them) into the random graph.
    """
    if len(ports) != len(servers) or not ports:
        raise ParameterError("ports and servers must be equally long and non-empty")
    n = len(ports)
    targets = []
    for i, (k, s) in enumerate(zip(ports, servers)):
        if k < 1 or s < 0 or s > k:
            raise ParameterError(f"switch {i}: cannot host {s} servers on {k} ports")
        targets.append(min(k - s, n - 1))
    if n > 1 and sum(targets) < 2 * (n - 1):
        raise ParameterError(f"{sum(targets)} network ports cannot connect {n} switches")
    links, attempts = _random_graph(n, targets, seed) if n > 1 else (set(), 1)
    return Topology(kind=kind, ports=tuple(ports), servers=tuple(servers), links=tuple(links),
                    seed=seed, rng=RNG_ID, meta=(('attempts', attempts),))


def spread_servers(num_switches: int, total: int) -> List[int]:
    """Servers per switch for `total` servers, as even as possible (extras on the lowest ids)."""
    base, extra = divmod(total, num_switches)
    return [base + 1 if i < extra else base for i in range(num_switches)]


def build_fat_tree_equipment(kp: int, seed: int) -> Topology:
    """
    Jellyfish on the equipment of fat_tree(kp): 5kp^2/4 switches of kp ports
    and the fat-tree's kp^3/4 servers spread over them.
    """
    if kp < 2 or kp % 2:
        raise ParameterError(f"fat-tree port count must be even and >= 2, got {kp}")
    switches = 5 * kp * kp // 4
    topology = build_jellyfish([kp] * switches, spread_servers(switches, kp ** 3 // 4), seed)
    logger.info(f"Built Jellyfish on fat-tree({kp}) equipment seed={seed}: {topology.summary()}")
    return topology


@log_function_call
def build_rrg(num_switches: int, ports: int, degree: int, seed: int) -> Topology:
    """
    Build RRG(N, k, r): N switches with k ports, r of them wired into a random
    regular graph and k - r attached to servers.
    """
    if num_switches < 1:
        raise ParameterError(f"need at least one switch, got {num_switches}")
    if degree < 0 or degree > ports:
        raise ParameterError(f"network degree {degree} must be within 0..{ports} ports")
    if degree >= num_switches and not (num_switches == 1 and degree == 0):
        raise ParameterError(f"degree {degree} >= {num_switches} switches needs parallel links")
    if num_switches > 1 and (degree == 0 or (degree == 1 and num_switches > 2)):
        raise ParameterError(f"degree {degree} cannot connect {num_switches} switches")
    topology = build_jellyfish([ports] * num_switches, [ports - degree] * num_switches, seed)
    logger.info(f"Built RRG({num_switches}, {ports}, {degree}) seed={seed}: {topology.summary()}")
    return topology


def fat_tree_pods(kp: int) -> Tuple[int, ...]:
    """Pod of every fat-tree switch; core switch c is placed in pod c mod kp."""
    half = kp // 2
    pods = [p for p in range(kp) for _ in range(kp)]
    pods.extend(c % kp for c in range(half * half))
    return tuple(pods)


@log_function_call
def build_fat_tree(kp: int) -> Topology:
    """
    Standard 3-level fat-tree from kp-port switches.

    Switch numbering: pod p owns ids p*kp .. p*kp+kp-1 (edge switches first,
    then aggregation); core switches follow from kp*kp.
    """
    if kp < 2 or kp % 2:
        raise ParameterError(f"fat-tree port count must be even and >= 2, got {kp}")
    half = kp // 2
    core_base = kp * kp
    links: List[Link] = []
    for pod in range(kp):
        edges = [pod * kp + e for e in range(half)]
        aggs = [pod * kp + half + a for a in range(half)]
        links.extend((e, a) for e in edges for a in aggs)
        for a_idx, agg in enumerate(aggs):
            links.extend((agg, core_base + a_idx * half + m) for m in range(half))

    num_switches = core_base + half * half
    servers = [0] * num_switches
    for pod in range(kp):
        for e in range(half):
            servers[pod * kp + e] = half
    topology = Topology(kind=TopologyKind.FAT_TREE, ports=(kp,) * num_switches, servers=tuple(servers),
                        links=tuple(links), seed=0, meta=(('kp', kp),), containers=fat_tree_pods(kp))
    logger.info(f"Built fat-tree({kp}): {topology.summary()}")
    return topology


class Lattice:
    """Deterministic lattice underlying a small-world topology."""

    DEGREE = {'ring': 2, 'torus2d': 4, 'hex3d': 6}

    def __init__(self, variant: str, num_switches: int):
        if variant not in self.DEGREE:
            raise ParameterError(f"unknown lattice variant '{variant}' (ring, torus2d, hex3d)")
        self.variant = variant
        self.n = num_switches
        if variant == 'ring':
            if num_switches < 3:
                raise ParameterError("a ring lattice needs at least 3 switches")
            self.dims: Tuple[int, ...] = (num_switches,)
        elif variant == 'torus2d':
            side = math.isqrt(num_switches)
            if side * side != num_switches or side < 3:
                raise ParameterError(f"torus2d needs a square switch count >= 9, got {num_switches}")
            self.dims = (side, side)
        else:
            self.dims = self._cube_dims(num_switches)
        self.degree = self.DEGREE[variant]
        self.coords = np.array(np.unravel_index(np.arange(num_switches), self.dims)).T

    @staticmethod
    def _cube_dims(n: int) -> Tuple[int, int, int]:
        best = None
        for a in range(3, int(round(n ** (1 / 3))) + 2):
            if n % a:
                continue
            for b in range(a, math.isqrt(n // a) + 1):
                if (n // a) % b:
                    continue
                c = n // (a * b)
                if c < b:
                    continue
                if best is None or c - a < best[2] - best[0]:
                    best = (a, b, c)
        if best is None:
            raise ParameterError(f"{n} switches do not form a 3D torus with every side >= 3")
        return best

    @property
    def label(self) -> str:
        return 'x'.join(str(d) for d in self.dims)

    def links(self) -> List[Link]:
        result = set()
        for u in range(self.n):
            for axis, size in enumerate(self.dims):
                coord = self.coords[u].copy()
                coord[axis] = (coord[axis] + 1) % size
                v = int(np.ravel_multi_index(tuple(coord), self.dims))
                result.add(normalize_link(u, v))
        return sorted(result)

    def distances(self, u: int) -> np.ndarray:
        """Wrap-around Manhattan distance from u to every switch."""
        delta = np.abs(self.coords - self.coords[u])
        sizes = np.array(self.dims)
        return np.minimum(delta, sizes - delta).sum(axis=1)


_SWDC_KINDS = {
    'ring': TopologyKind.SWDC_RING,
    'torus2d': TopologyKind.SWDC_TORUS2D,
    'hex3d': TopologyKind.SWDC_HEX3D,
}


@log_function_call
def build_swdc(variant: str, num_switches: int, degree: int, servers_per_switch: int,
               seed: int) -> Topology:
    """
    Small-world topology: a lattice plus (degree - lattice degree) random links
    per switch, the far endpoint drawn with probability proportional to
    1 / lattice distance.
    """
    lattice = Lattice(variant, num_switches)
    if degree < lattice.degree:
        raise ParameterError(f"degree {degree} is below the {variant} lattice degree {lattice.degree}")
    if servers_per_switch < 0:
        raise ParameterError("servers per switch must be non-negative")

    rng = make_rng(seed)
    links = set(lattice.links())
    adjacency: List[Set[int]] = [set() for _ in range(num_switches)]
    for a, b in links:
        adjacency[a].add(b)
        adjacency[b].add(a)
    free = np.full(num_switches, degree - lattice.degree, dtype=np.int64)

    for u in rng.permutation(num_switches):
        u = int(u)
        weights = 1.0 / np.maximum(lattice.distances(u), 1)
        while free[u] > 0:
            mask = free > 0
            mask[u] = False
            if adjacency[u]:
                mask[list(adjacency[u])] = False
            candidates = np.flatnonzero(mask)
            if not len(candidates):
                break
            p = weights[candidates]
            v = int(rng.choice(candidates, p=p / p.sum()))
            links.add(normalize_link(u, v))
            adjacency[u].add(v)
            adjacency[v].add(u)
            free[u] -= 1
            free[v] -= 1

    if free.sum() > 1:
        # swap random links (never lattice links) to absorb the leftover ports
        lattice_links = set(lattice.links())
        matcher = PortMatcher(num_switches, free.tolist(), rng, links=links,
                              allowed=lambda a, b: normalize_link(a, b) not in lattice_links,
                              repair_limit=_construction_settings()['repair_factor'] * num_switches)
        matcher.run()
        links = matcher.links
        logger.debug(f"SWDC {variant} seed={seed}: {matcher.repairs} repair samples")

    topology = Topology(kind=_SWDC_KINDS[variant], ports=(degree + servers_per_switch,) * num_switches,
                        servers=(servers_per_switch,) * num_switches, links=tuple(links), seed=seed,
                        meta=(('lattice', lattice.label),))
    unmatched = sum(degree - d for d in topology.degrees)
    if unmatched > 1:
        logger.warning(f"SWDC {variant} seed={seed}: {unmatched} random ports left unmatched")
    logger.info(f"Built SWDC-{variant} seed={seed}: {topology.summary()}")
    return topology


@log_function_call
def build_layered_rrg(containers: int, per_container: int, ports: int, r_local: int, r_global: int,
                      servers_per_switch: int, seed: int) -> Topology:
    """
    2-layer random graph: an RRG inside every container plus a random graph
    whose links always join switches of different containers.
    """
    if containers < 1 or per_container < 1:
        raise ParameterError("need at least one container with at least one switch")
    if r_local < 0 or r_global < 0 or servers_per_switch < 0:
        raise ParameterError("degrees and server counts must be non-negative")
    if r_local >= per_container and not (per_container == 1 and r_local == 0):
        raise ParameterError(f"local degree {r_local} needs more than {per_container} switches per container")
    if r_local + r_global + servers_per_switch > ports:
        raise ParameterError(f"{r_local}+{r_global} links and {servers_per_switch} servers exceed {ports} ports")
    if containers > 1 and (per_container * r_local) % 2:
        raise ParameterError(f"local degree {r_local} on {per_container} switches per container leaves a "
                             f"port unmatched (odd total)")
    if r_global > (containers - 1) * per_container:
        raise ParameterError(f"global degree {r_global} exceeds the switches outside a container")
    if containers == 1:
        if r_global:
            raise ParameterError("global links need at least two containers")
        logger.warning("Single container without global links: this is a plain RRG")
    elif r_global == 0:
        raise ParameterError("several containers without global links cannot be connected")

    n = containers * per_container
    assignment = tuple(i // per_container for i in range(n))
    stages = [([r_local] * n, lambda a, b: assignment[a] == assignment[b]),
              ([r_global] * n, lambda a, b: assignment[a] != assignment[b])]
    links, attempts = _random_graph(n, [], seed, stages=stages) if n > 1 else (set(), 1)
    topology = Topology(kind=TopologyKind.LAYERED_RRG, ports=(ports,) * n,
                        servers=(servers_per_switch,) * n, links=tuple(links), seed=seed,
                        meta=(('attempts', attempts), ('container_size', per_container)),
                        containers=assignment)
    logger.info(f"Built layered RRG {containers}x{per_container} (local {r_local}, global {r_global}) "
                f"seed={seed}: {topology.summary()}")
    return topology


_parser = TopologyParser()


def load_edge_list(path: str, ports: int, servers_per_switch: int) -> Topology:
    """Import a topology file or bare 0-based edge list (degree-diameter graphs)."""
    return _parser.load_edge_list(path, ports, servers_per_switch)


def serialize(topology: Topology) -> str:
    return _parser.serialize(topology)


def deserialize(text: str) -> Topology:
    return _parser.deserialize(text)
