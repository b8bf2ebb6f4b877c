"""
Exact maximum concurrent flow by linear programming over enumerated paths.
Only practical for small instances; used to check the approximate solver.
"""

from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from logging_config import get_logger
from models import JellynetError, Path, Topology, TrafficMatrix

logger = get_logger('flow_oracle')

SwitchPair = Tuple[int, int]


def _candidate_paths(topology: Topology, pairs: Sequence[SwitchPair],
                     paths: Optional[Dict[SwitchPair, Sequence[Path]]]) -> Dict[SwitchPair, List[Path]]:
    graph = topology.to_networkx()
    result: Dict[SwitchPair, List[Path]] = {}
    for a, b in pairs:
        if (a, b) in result:
            continue
        if a == b:
            result[a, b] = [(a,)]
        elif paths is not None:
            result[a, b] = [tuple(p) for p in paths[a, b]]
        else:
            result[a, b] = [tuple(p) for p in nx.all_simple_paths(graph, a, b)]
    return result


def exact_concurrent_flow(topology: Topology, traffic: TrafficMatrix, link_capacity: float = 1.0,
                          server_capacity: float = 1.0, demand: float = 1.0,
                          paths: Optional[Dict[SwitchPair, Sequence[Path]]] = None) -> float:
    """
    Optimal lambda: every server flow gets lambda * demand, links and server
    access links respect their capacities. `paths` restricts each switch pair
    to the given switch paths.
    """
    switch_of = topology.server_switch
    commodities = [(int(switch_of[s]), int(switch_of[d]), s, d) for s, d in traffic.pairs()]
    candidates = _candidate_paths(topology, [(a, b) for a, b, _, _ in commodities], paths)
    if any(not candidates[a, b] for a, b, _, _ in commodities):
        return 0.0

    n = traffic.servers
    arcs = sorted([(a, b) for a, b in topology.links] + [(b, a) for a, b in topology.links])
    arc_index = {arc: i for i, arc in enumerate(arcs)}
    num_edges = len(arcs) + 2 * n
    capacity = np.concatenate([np.full(len(arcs), link_capacity), np.full(2 * n, server_capacity)])

    rows: List[int] = []
    cols: List[int] = []
    vals: List[float] = []
    column = 1  # column 0 is lambda
    for j, (a, b, s, d) in enumerate(commodities):
        rows.append(num_edges + j)
        cols.append(0)
        vals.append(demand)
        for path in candidates[a, b]:
            edges = [arc_index[arc] for arc in zip(path, path[1:])] + [len(arcs) + s, len(arcs) + n + d]
            for e in edges:
                rows.append(e)
                cols.append(column)
                vals.append(1.0)
            rows.append(num_edges + j)
            cols.append(column)
            vals.append(-1.0)
            column += 1

    matrix = coo_matrix((vals, (rows, cols)), shape=(num_edges + n, column)).tocsr()
    bounds_rhs = np.concatenate([capacity, np.zeros(n)])
    objective = np.zeros(column)
    objective[0] = -1.0
    result = linprog(objective, A_ub=matrix, b_ub=bounds_rhs, bounds=(0, None), method='highs')
    if not result.success:
        raise JellynetError(f"reference LP failed: {result.message}")
    logger.debug(f"Reference LP over {column - 1} path variables: lambda={result.x[0]:.6f}")
    return float(result.x[0])
