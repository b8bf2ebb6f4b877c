"""
Flow-level throughput evaluation.
Random permutation traffic, an approximate maximum concurrent multi-commodity
flow solver (unrestricted or restricted to routing path sets), the
full-capacity binary search and fairness statistics.

The solver is a Garg-Koenemann style multiplicative-length method with
Karakostas' per-source grouping. Each phase routes every commodity's demand
along currently shortest paths and lengthens the links it used. After every
phase the primal solution (scaled to fit capacities) is compared with the
dual bound D(l)/alpha(l); the run ends once the primal is within (1 - eps)
of the best bound, so the reported lambda is certified.
"""

import math
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from logging_config import LoggedOperation, get_logger, log_function_call
from models import (ExperimentReport, FlowSolution, Link, ParameterError, RoutingError, RoutingMode,
                    Topology, TopologyError, TrafficMatrix)
from route import path_sets
from settings import get_section
from topo import build_jellyfish, derive_seed, make_rng, spread_servers
from expand import fail_links

logger = get_logger('flow')

_TINY = 1e-12


def _solver_settings() -> Dict[str, float]:
    section = get_section('solver')
    return {
        'epsilon': float(section.get('epsilon', 0.05)),
        'max_phases': int(section.get('max_phases', 20000)),
        'check_every': int(section.get('check_every', 1)),
    }


@log_function_call
def random_permutation(servers: int, seed: int) -> TrafficMatrix:
    """Uniform random derangement: uniform permutations are redrawn until none maps a server to itself."""
    if servers < 2:
        raise ParameterError(f"permutation traffic needs at least 2 servers, got {servers}")
    rng = make_rng(seed)
    while True:
        dst = rng.permutation(servers)
        if not np.any(dst == np.arange(servers)):
            return TrafficMatrix(servers=servers, dst=tuple(int(d) for d in dst), seed=seed)


class FlowNetwork:
    """
    Directed capacitated network of one topology and one traffic matrix.

    Edge indices: directed switch links first (sorted by (u, v)), then one
    uplink per server, then one downlink per server. Commodity j is the flow
    of server j to traffic.dst[j].
    """

    def __init__(self, topology: Topology, traffic: TrafficMatrix, link_capacity: float = 1.0,
                 server_capacity: float = 1.0, demand: float = 1.0):
        if traffic.servers != topology.num_servers:
            raise ParameterError(f"traffic matrix has {traffic.servers} servers, topology {topology.num_servers}")
        if min(link_capacity, server_capacity, demand) <= 0:
            raise ParameterError("capacities and demand must be positive")
        self.topology = topology
        self.num_switches = topology.num_switches
        arcs = sorted([(a, b) for a, b in topology.links] + [(b, a) for a, b in topology.links])
        self.arcs: List[Link] = arcs
        self.num_arcs = len(arcs)
        self.arc_index: Dict[Link, int] = {arc: i for i, arc in enumerate(arcs)}
        tails = np.array([a for a, _ in arcs], dtype=np.int64)
        self.heads = np.array([b for _, b in arcs], dtype=np.int32)
        self.indptr = np.searchsorted(tails, np.arange(self.num_switches + 1)).astype(np.int32)

        n = traffic.servers
        self.num_commodities = n
        self.capacity = np.concatenate([np.full(self.num_arcs, float(link_capacity)),
                                        np.full(2 * n, float(server_capacity))])
        self.demand = np.full(n, float(demand))
        self.dst = np.asarray(traffic.dst, dtype=np.int64)
        self.src_switch = topology.server_switch.astype(np.int64)
        self.dst_switch = self.src_switch[self.dst]
        self.uplink = self.num_arcs + np.arange(n)
        self.downlink = self.num_arcs + n + self.dst

        _, component = connected_components(self.graph(np.ones(self.num_arcs)), directed=False)
        self.reachable = component[self.src_switch] == component[self.dst_switch]

    @property
    def num_edges(self) -> int:
        return len(self.capacity)

    def graph(self, arc_lengths: np.ndarray) -> csr_matrix:
        return csr_matrix((arc_lengths, self.heads, self.indptr),
                          shape=(self.num_switches, self.num_switches))

    def groups(self, commodities: np.ndarray) -> List[Tuple[int, np.ndarray]]:
        """Commodities bucketed by source switch, in switch order."""
        sources = self.src_switch[commodities]
        return [(int(s), commodities[sources == s]) for s in np.unique(sources)]


class _ShortestPathOracle:
    """Unrestricted routing: shortest paths over the whole switch graph."""

    def __init__(self, network: FlowNetwork):
        self.net = network

    def paths(self, source: int, commodities: np.ndarray, lengths: np.ndarray) -> List[np.ndarray]:
        net = self.net
        _, pred = dijkstra(net.graph(lengths[:net.num_arcs]), directed=True, indices=source,
                           return_predecessors=True)
        walks: Dict[int, List[int]] = {}
        result = []
        for j in commodities:
            target = int(net.dst_switch[j])
            if target not in walks:
                arcs = []
                node = target
                while node != source:
                    prev = int(pred[node])
                    arcs.append(net.arc_index[prev, node])
                    node = prev
                walks[target] = arcs
            result.append(np.array(walks[target] + [net.uplink[j], net.downlink[j]], dtype=np.int64))
        return result

    def distances(self, commodities: np.ndarray, lengths: np.ndarray) -> np.ndarray:
        net = self.net
        sources = np.unique(net.src_switch[commodities])
        dist = dijkstra(net.graph(lengths[:net.num_arcs]), directed=True, indices=sources)
        rows = np.searchsorted(sources, net.src_switch[commodities])
        return (dist[rows, net.dst_switch[commodities]]
                + lengths[net.uplink[commodities]] + lengths[net.downlink[commodities]])


class _PathSetOracle:
    """Restricted routing: each commodity may only use its own candidate paths."""

    def __init__(self, network: FlowNetwork, candidates: Dict[int, List[np.ndarray]]):
        self.net = network
        zero = network.num_edges
        self.pad_zero, self.pad_inf = zero, zero + 1
        self.tables: Dict[int, np.ndarray] = {}
        for j, paths in candidates.items():
            width = max(len(p) for p in paths)
            table = np.full((len(paths), width), self.pad_zero, dtype=np.int64)
            for row, path in enumerate(paths):
                table[row, :len(path)] = path
            self.tables[j] = table

    def _extended(self, lengths: np.ndarray) -> np.ndarray:
        return np.concatenate([lengths, [0.0, np.inf]])

    def _stack(self, commodities: np.ndarray) -> np.ndarray:
        tables = [self.tables[int(j)] for j in commodities]
        rows = max(t.shape[0] for t in tables)
        width = max(t.shape[1] for t in tables)
        stacked = np.full((len(tables), rows, width), self.pad_zero, dtype=np.int64)
        for i, t in enumerate(tables):
            stacked[i, :t.shape[0], :t.shape[1]] = t
            stacked[i, t.shape[0]:, 0] = self.pad_inf
        return stacked

    def paths(self, source: int, commodities: np.ndarray, lengths: np.ndarray) -> List[np.ndarray]:
        stacked = self._stack(commodities)
        costs = self._extended(lengths)[stacked].sum(axis=2)
        best = costs.argmin(axis=1)
        result = []
        for i, row in enumerate(best):
            path = stacked[i, row]
            result.append(path[path != self.pad_zero])
        return result

    def distances(self, commodities: np.ndarray, lengths: np.ndarray) -> np.ndarray:
        stacked = self._stack(commodities)
        return self._extended(lengths)[stacked].sum(axis=2).min(axis=1)


class ConcurrentFlowSolver:
    """Approximate maximum concurrent flow on a FlowNetwork."""

    def __init__(self, eps: Optional[float] = None, max_phases: Optional[int] = None,
                 check_every: Optional[int] = None):
        settings = _solver_settings()
        self.eps = settings['epsilon'] if eps is None else float(eps)
        if not 0 < self.eps <= 0.5:
            raise ParameterError(f"epsilon must be within (0, 0.5], got {self.eps}")
        self.max_phases = settings['max_phases'] if max_phases is None else int(max_phases)
        self.check_every = max(1, settings['check_every'] if check_every is None else int(check_every))
        self.logger = get_logger('flow.solver')

    def solve(self, network: FlowNetwork, oracle, stop_at: Optional[float] = None,
              record_groups: bool = False) -> FlowSolution:
        eps = self.eps
        active = np.flatnonzero(network.reachable)
        per_flow = np.zeros(network.num_commodities)
        if not len(active):
            return FlowSolution(lambda_=0.0, per_flow=per_flow, link_util={}, epsilon=eps, iterations=0,
                                upper_bound=0.0, group_flow={} if record_groups else None)

        capacity = network.capacity
        demand = network.demand
        groups = network.groups(active)
        lengths = 1.0 / capacity
        flow = np.zeros(network.num_edges)
        group_flow = np.zeros((len(groups), network.num_arcs)) if record_groups else None
        routed = np.zeros(network.num_commodities)

        best = (-1.0, None, None, None)
        best_bound = math.inf
        phase = 0
        while phase < self.max_phases:
            phase += 1
            for g, (source, members) in enumerate(groups):
                remaining = demand[members].copy()
                pending = np.ones(len(members), dtype=bool)
                while pending.any():
                    chosen = members[pending]
                    paths = oracle.paths(source, chosen, lengths)
                    edges = np.concatenate(paths)
                    amounts = np.repeat(remaining[pending], [len(p) for p in paths])
                    load = np.bincount(edges, weights=amounts, minlength=network.num_edges)
                    used = load > 0
                    sigma = min(1.0, float(np.min(capacity[used] / load[used])))
                    flow += sigma * load
                    if group_flow is not None:
                        group_flow[g] += sigma * load[:network.num_arcs]
                    routed[chosen] += sigma * remaining[pending]
                    lengths *= 1.0 + eps * sigma * load / capacity
                    remaining[pending] *= 1.0 - sigma
                    if sigma >= 1.0:
                        break
                    pending = remaining > _TINY * demand[members]

            # rescaling lengths changes neither shortest paths nor D/alpha
            lengths /= lengths.max()
            np.maximum(lengths, 1e-250, out=lengths)

            if phase % self.check_every and phase < self.max_phases:
                continue
            congestion = float(np.max(flow / capacity))
            primal = float(np.min(routed[active] / demand[active])) / congestion
            if primal > best[0]:
                best = (primal, flow / congestion, None if group_flow is None else group_flow / congestion,
                        routed / demand / congestion)
            bound = float(np.dot(lengths, capacity)) / float(np.dot(demand[active],
                                                                    oracle.distances(active, lengths)))
            best_bound = min(best_bound, bound)
            if best[0] >= (1 - eps) * best_bound:
                break
            if stop_at is not None and (best[0] >= stop_at or best_bound < stop_at):
                break
        else:
            self.logger.warning(f"Solver stopped after {phase} phases with primal {best[0]:.4f} "
                                f"and bound {best_bound:.4f}")

        primal, scaled_flow, scaled_groups, scaled_routed = best
        per_flow[active] = scaled_routed[active]
        lam = primal if network.reachable.all() else 0.0
        link_util = {arc: float(scaled_flow[i]) for i, arc in enumerate(network.arcs)}
        group_flow_map = None
        if scaled_groups is not None:
            group_flow_map = {source: {network.arcs[i]: float(v) for i, v in enumerate(scaled_groups[g]) if v > 0}
                              for g, (source, _) in enumerate(groups)}
        self.logger.debug(f"Concurrent flow: lambda={lam:.4f} bound={best_bound:.4f} phases={phase} "
                          f"commodities={len(active)}/{network.num_commodities}")
        return FlowSolution(lambda_=lam, per_flow=per_flow, link_util=link_util, epsilon=eps,
                            iterations=phase, upper_bound=best_bound, group_flow=group_flow_map)


@log_function_call
def max_concurrent_flow(topology: Topology, traffic: TrafficMatrix, eps: Optional[float] = None,
                        link_capacity: float = 1.0, server_capacity: float = 1.0, demand: float = 1.0,
                        stop_at: Optional[float] = None, record_groups: bool = False) -> FlowSolution:
    """
    (1 - eps)-approximate maximum concurrent flow with splittable flows over
    any links. Server access links are part of the network. Pairs in different
    components get zero throughput and force lambda to 0.
    """
    network = FlowNetwork(topology, traffic, link_capacity, server_capacity, demand)
    solver = ConcurrentFlowSolver(eps)
    return solver.solve(network, _ShortestPathOracle(network), stop_at=stop_at, record_groups=record_groups)


@log_function_call
def restricted_flow(topology: Topology, traffic: TrafficMatrix, mode: RoutingMode, limit: int,
                    eps: Optional[float] = None, link_capacity: float = 1.0, server_capacity: float = 1.0,
                    demand: float = 1.0, record_groups: bool = False) -> FlowSolution:
    """Concurrent flow where each commodity only uses its ECMP / k-shortest PathSet."""
    network = FlowNetwork(topology, traffic, link_capacity, server_capacity, demand)
    pairs = list(zip(network.src_switch.tolist(), network.dst_switch.tolist()))
    sets = path_sets(topology, pairs, RoutingMode(mode), limit)
    candidates: Dict[int, List[np.ndarray]] = {}
    for j, (a, b) in enumerate(pairs):
        access = [network.uplink[j], network.downlink[j]]
        if a == b:
            candidates[j] = [np.array(access, dtype=np.int64)]
            continue
        path_set = sets[a, b]
        if not len(path_set):
            raise RoutingError(f"no path from switch {a} to switch {b}")
        candidates[j] = [np.array([network.arc_index[arc] for arc in zip(p, p[1:])] + access, dtype=np.int64)
                         for p in path_set.paths]
    solver = ConcurrentFlowSolver(eps)
    return solver.solve(network, _PathSetOracle(network, candidates), record_groups=record_groups)


def supports_full_capacity(topology: Topology, traffic: TrafficMatrix, eps: Optional[float] = None) -> bool:
    """True iff every flow can get (1 - eps) of its demand simultaneously."""
    solver_eps = _solver_settings()['epsilon'] if eps is None else eps
    solution = max_concurrent_flow(topology, traffic, solver_eps, stop_at=1 - solver_eps)
    return solution.lambda_ >= 1 - solver_eps


def _probe(num_switches: int, ports: int, servers: int, eps: float, seed: int,
           matrices: int, label: int) -> bool:
    if servers < 2:
        return True
    layout = spread_servers(num_switches, servers)
    if max(layout) > ports:
        return False
    try:
        topology = build_jellyfish([ports] * num_switches, layout, derive_seed(seed, servers))
    except (ParameterError, TopologyError) as e:
        logger.debug(f"No topology for {servers} servers: {e}")
        return False
    for i in range(matrices):
        traffic = random_permutation(servers, derive_seed(seed, servers, label, i))
        if not supports_full_capacity(topology, traffic, eps):
            return False
    return True


@log_function_call
def max_servers_full_capacity(num_switches: int, ports: int, eps: Optional[float] = None,
                              seed: int = 0) -> int:
    """
    Largest server count m a Jellyfish of the given switches serves at full
    capacity: binary search probing 3 random permutations per m, then 10 fresh
    permutations to confirm (stepping down until confirmed).
    """
    if num_switches < 1 or ports < 1:
        raise ParameterError("need at least one switch with at least one port")
    eps = _solver_settings()['epsilon'] if eps is None else eps
    search = get_section('search')
    probes = int(search.get('probe_matrices', 3))
    confirms = int(search.get('confirm_matrices', 10))

    with LoggedOperation(f"full-capacity search S={num_switches} k={ports} seed={seed}", 'flow'):
        lo, hi = 0, num_switches * (ports - 1) + 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if _probe(num_switches, ports, mid, eps, seed, probes, label=0):
                lo = mid
            else:
                hi = mid
            logger.info(f"Probe {mid} servers -> range now [{lo}, {hi})")
        best = lo
        while best >= 2 and not _probe(num_switches, ports, best, eps, seed, confirms, label=1):
            best -= 1
        logger.info(f"S={num_switches} k={ports}: {best} servers at full capacity")
    return best


def jain_index(values: Iterable[float]) -> float:
    """Jain's fairness index (sum x)^2 / (n sum x^2)."""
    x = np.asarray(list(values), dtype=np.float64)
    if not len(x):
        raise ParameterError("fairness index of an empty set")
    if np.any(x < 0):
        raise ParameterError("fairness index needs non-negative values")
    squares = float(np.dot(x, x))
    if squares == 0:
        raise ParameterError("fairness index is undefined when every value is zero")
    return float(x.sum() ** 2 / (len(x) * squares))


def solution_row(solution: FlowSolution) -> Dict[str, float]:
    """lambda / mean / min / jain columns of an experiment row."""
    flows = solution.normalized_flows
    return {
        'lambda': solution.lambda_,
        'mean_flow': solution.mean_flow,
        'min_flow': solution.min_flow,
        'jain': jain_index(flows) if np.any(flows > 0) else float('nan'),
    }


def failure_trial(topology: Topology, fraction: float, trial: int, eps: float, seed: int) -> Dict[str, float]:
    """One failed-topology throughput sample (shared permutation per trial)."""
    fail_seed = derive_seed(seed, trial, 0)
    perm_seed = derive_seed(seed, trial, 1)
    damaged = fail_links(topology, fraction, fail_seed)
    traffic = random_permutation(topology.num_servers, perm_seed)
    row = {'param': fraction, 'trial': trial, 'seed': fail_seed, 'perm_seed': perm_seed}
    row.update(solution_row(max_concurrent_flow(damaged, traffic, eps)))
    return row


@log_function_call
def throughput_vs_failures(topology: Topology, fractions: Sequence[float], trials: int,
                           eps: Optional[float] = None, seed: int = 0,
                           map_fn: Callable = map) -> ExperimentReport:
    """
    Normalized per-server throughput after failing each fraction of links;
    one row per (fraction, trial). Within a trial the permutation is shared and
    failure sets are nested, so larger fractions never fail fewer links.
    """
    eps = _solver_settings()['epsilon'] if eps is None else eps
    for fraction in fractions:
        if not 0 <= fraction <= 1:
            raise ParameterError(f"failure fraction must be within [0, 1], got {fraction}")
    jobs = [(fraction, trial) for fraction in fractions for trial in range(trials)]
    with LoggedOperation(f"throughput vs failures ({len(jobs)} solves)", 'flow') as op:
        rows = list(map_fn(_FailureJob(topology, eps, seed), jobs))
    frame = pd.DataFrame(rows).sort_values(['param', 'trial'], kind='stable').reset_index(drop=True)
    config = {'topology': topology.to_dict(), 'fractions': list(fractions), 'trials': trials,
              'eps': eps, 'seed': seed}
    return ExperimentReport(name='failures', config=config, rows=frame, wall_time=op.elapsed)


class _FailureJob:
    """Picklable callable for executor.map."""

    def __init__(self, topology: Topology, eps: float, seed: int):
        self.topology = topology
        self.eps = eps
        self.seed = seed

    def __call__(self, job: Tuple[float, int]) -> Dict[str, float]:
        fraction, trial = job
        return failure_trial(self.topology, fraction, trial, self.eps, self.seed)
