"""
Routing-layer path computation.
ECMP equal-cost path sets, Yen's k shortest loop-free paths and per-link
path-diversity counts. Ties are always broken lexicographically by switch id
sequence so results are reproducible.
"""

import heapq
from collections import deque
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

import pandas as pd

from logging_config import get_logger, log_function_call
from models import Link, ParameterError, Path, PathSet, RoutingError, RoutingMode, Topology, TrafficMatrix
from settings import get_section

logger = get_logger('route')

FlowPair = Tuple[int, int]


def _bfs_distances(neighbors: Sequence[Sequence[int]], root: int,
                   blocked: FrozenSet[int] = frozenset(),
                   removed: FrozenSet[Link] = frozenset()) -> List[int]:
    """Hop distance to `root` (-1 if unreachable), skipping blocked nodes and removed links."""
    dist = [-1] * len(neighbors)
    dist[root] = 0
    queue = deque([root])
    while queue:
        x = queue.popleft()
        for y in neighbors[x]:
            if dist[y] >= 0 or y in blocked or (min(x, y), max(x, y)) in removed:
                continue
            dist[y] = dist[x] + 1
            queue.append(y)
    return dist


def _lex_min_path(neighbors: Sequence[Sequence[int]], dist: List[int], src: int,
                  removed: FrozenSet[Link] = frozenset()) -> Path:
    """Lexicographically smallest shortest path, walking down the distance field."""
    path = [src]
    x = src
    while dist[x] > 0:
        x = next(y for y in neighbors[x]
                 if dist[y] == dist[x] - 1 and (min(x, y), max(x, y)) not in removed)
        path.append(x)
    return tuple(path)


def _check_pair(topology: Topology, src: int, dst: int, limit: int) -> None:
    n = topology.num_switches
    if not (0 <= src < n and 0 <= dst < n):
        raise ParameterError(f"switch ids must be within 0..{n - 1}")
    if src == dst:
        raise ParameterError("source and destination switch must differ")
    if limit < 1:
        raise ParameterError(f"path limit must be positive, got {limit}")


def ecmp_paths(topology: Topology, src: int, dst: int, limit: Optional[int] = None) -> PathSet:
    """
    Equal-cost shortest paths from src to dst, at most `limit` of them,
    enumerated in lexicographic order over the BFS distance field.
    """
    if limit is None:
        limit = int(get_section('routing').get('ecmp_limit', 8))
    _check_pair(topology, src, dst, limit)
    neighbors = topology.sorted_neighbors
    dist = _bfs_distances(neighbors, dst)
    if dist[src] < 0:
        raise RoutingError(f"switch {dst} is unreachable from switch {src}")

    paths: List[Path] = []
    stack = [(src,)]
    while stack and len(paths) < limit:
        path = stack.pop()
        x = path[-1]
        if x == dst:
            paths.append(path)
            continue
        nexts = [y for y in neighbors[x] if dist[y] == dist[x] - 1]
        stack.extend(path + (y,) for y in reversed(nexts))
    return PathSet(src=src, dst=dst, paths=tuple(paths), mode=RoutingMode.ECMP, limit=limit)


def k_shortest_paths(topology: Topology, src: int, dst: int, k: Optional[int] = None) -> PathSet:
    """
    Yen's k shortest loop-free paths under unit link weights; ties by
    switch-id sequence. Fewer than k are returned when the graph has fewer.
    """
    if k is None:
        k = int(get_section('routing').get('ksp_limit', 8))
    _check_pair(topology, src, dst, k)
    neighbors = topology.sorted_neighbors
    dist = _bfs_distances(neighbors, dst)
    if dist[src] < 0:
        raise RoutingError(f"switch {dst} is unreachable from switch {src}")

    found: List[Path] = [_lex_min_path(neighbors, dist, src)]
    seen: Set[Path] = set(found)
    candidates: List[Tuple[int, Path]] = []
    while len(found) < k:
        previous = found[-1]
        for i in range(len(previous) - 1):
            spur = previous[i]
            root = previous[:i + 1]
            removed = frozenset(
                (min(p[i], p[i + 1]), max(p[i], p[i + 1]))
                for p in found if len(p) > i + 1 and p[:i + 1] == root)
            blocked = frozenset(root[:-1])
            spur_dist = _bfs_distances(neighbors, dst, blocked=blocked, removed=removed)
            if spur_dist[spur] < 0:
                continue
            path = root[:-1] + _lex_min_path(neighbors, spur_dist, spur, removed=removed)
            if path not in seen:
                seen.add(path)
                heapq.heappush(candidates, (len(path), path))
        if not candidates:
            break
        found.append(heapq.heappop(candidates)[1])
    return PathSet(src=src, dst=dst, paths=tuple(found), mode=RoutingMode.KSP, limit=k)


def compute_paths(topology: Topology, src: int, dst: int, mode: RoutingMode, limit: int) -> PathSet:
    if RoutingMode(mode) is RoutingMode.ECMP:
        return ecmp_paths(topology, src, dst, limit)
    return k_shortest_paths(topology, src, dst, limit)


def switch_flows(topology: Topology, traffic: TrafficMatrix) -> List[FlowPair]:
    """Server flows as (src ToR, dst ToR); flows inside one switch are dropped."""
    switch_of = topology.server_switch
    flows = [(int(switch_of[s]), int(switch_of[d])) for s, d in traffic.pairs()]
    return [(a, b) for a, b in flows if a != b]


def path_sets(topology: Topology, flows: Iterable[FlowPair], mode: RoutingMode,
              limit: int) -> Dict[FlowPair, PathSet]:
    """PathSet per distinct switch pair (computed once per pair)."""
    result: Dict[FlowPair, PathSet] = {}
    for src, dst in flows:
        if src != dst and (src, dst) not in result:
            result[src, dst] = compute_paths(topology, src, dst, mode, limit)
    return result


@log_function_call
def link_path_counts(topology: Topology, flows: Sequence[FlowPair], mode: RoutingMode,
                     limit: int) -> Dict[Link, int]:
    """
    Number of flow paths crossing each directed inter-switch link. Every cable
    appears twice (one entry per direction), unused directions with count 0.
    """
    if not flows:
        raise ParameterError("need at least one flow")
    counts: Dict[Link, int] = {}
    for a, b in topology.links:
        counts[a, b] = 0
        counts[b, a] = 0
    sets = path_sets(topology, flows, mode, limit)
    for src, dst in flows:
        if src == dst:
            continue
        for link, used in sets[src, dst].directed_links().items():
            counts[link] += used
    logger.debug(f"{RoutingMode(mode).value}-{limit}: {len(sets)} switch pairs over "
                 f"{len(counts)} directed links")
    return dict(sorted(counts.items()))


def path_count_ranking(counts: Dict[Link, int]) -> pd.DataFrame:
    """`rank,count` table with links ordered by ascending path count."""
    ordered = sorted(counts.values())
    return pd.DataFrame({'rank': range(len(ordered)), 'count': ordered})


def fraction_at_most(counts: Dict[Link, int], threshold: int) -> float:
    """Share of directed links carrying at most `threshold` paths."""
    if not counts:
        return 0.0
    return sum(1 for c in counts.values() if c <= threshold) / len(counts)
