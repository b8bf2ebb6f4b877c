"""
Incremental expansion and failure injection.
New racks or switches are wired in by splitting random existing links, so every
existing switch keeps its degree; failures remove random switch-switch links.
"""

import math
from dataclasses import replace
from typing import List, Set, Tuple

from logging_config import get_logger, log_function_call
from models import (ExpansionError, ExpansionKind, ExpansionStep, Link, ParameterError, Topology,
                    normalize_link)
from settings import get_section
from topo import derive_seed, make_rng

logger = get_logger('expand')


def apply_step(topology: Topology, step: ExpansionStep) -> Topology:
    """Replay an expansion log entry onto the topology it was recorded against."""
    if step.new_switch != topology.num_switches:
        raise ExpansionError(f"step adds switch {step.new_switch} but topology has "
                             f"{topology.num_switches} switches")
    links: Set[Link] = set(topology.links)
    for v, w in step.links_removed:
        link = normalize_link(v, w)
        if link not in links:
            raise ExpansionError(f"step removes missing link {link}")
        links.discard(link)
    links.update(normalize_link(a, b) for a, b in step.links_added)

    expanded = int(topology.meta_dict.get('expanded', 0)) + 1
    meta = {**topology.meta_dict, 'expanded': str(expanded)}
    if topology.containers is not None:
        logger.debug("Container assignment dropped on expansion")
    return replace(topology,
                   ports=topology.ports + (step.new_switch_ports,),
                   servers=topology.servers + (step.new_switch_servers,),
                   links=tuple(links), meta=tuple(meta.items()), containers=None)


@log_function_call
def add_rack(topology: Topology, ports: int, servers: int, seed: int) -> Tuple[Topology, ExpansionStep]:
    """
    Add one switch with `servers` servers. Random links (v, w) whose endpoints
    are not yet neighbours of the new switch u are replaced by (u, v) and (u, w)
    until u has at most one free network port.
    """
    if ports < 1 or servers < 0:
        raise ParameterError(f"invalid new switch: ports={ports} servers={servers}")
    network_ports = ports - servers
    if network_ports < 2:
        raise ParameterError(f"new switch needs at least 2 network ports to join the network, "
                             f"has {network_ports}")
    if not topology.links:
        raise ExpansionError("cannot expand a topology without links")

    u = topology.num_switches
    kind = ExpansionKind.ADD_RACK if servers else ExpansionKind.ADD_SWITCH
    step = ExpansionStep(kind=kind, new_switch=u, new_switch_ports=ports, new_switch_servers=servers)
    rng = make_rng(seed)
    links: List[Link] = list(topology.links)
    neighbors: Set[int] = set()
    bound = int(get_section('expansion').get('resample_factor', 100)) * len(links)

    free = network_ports
    while free >= 2:
        for _ in range(bound):
            idx = int(rng.integers(len(links)))
            v, w = links[idx]
            if v == u or w == u or v in neighbors or w in neighbors:
                continue
            break
        else:
            raise ExpansionError(f"no link left whose endpoints are both non-neighbours of new switch {u} "
                                 f"after {bound} samples")
        links[idx] = links[-1]
        links.pop()
        links.extend([(v, u), (w, u)])
        neighbors.update((v, w))
        step.links_removed.append((v, w))
        step.links_added.extend([(u, v), (u, w)])
        free -= 2

    logger.debug(f"Switch {u} ({ports} ports, {servers} servers) wired in by splitting "
                 f"{len(step.links_removed)} links, {free} port(s) left free")
    return apply_step(topology, step), step


def add_switch(topology: Topology, ports: int, seed: int) -> Tuple[Topology, ExpansionStep]:
    """Add a server-less switch, connecting all of its ports to the network."""
    return add_rack(topology, ports, 0, seed)


@log_function_call
def grow(topology: Topology, count: int, ports: int, servers: int,
         seed: int) -> Tuple[Topology, List[ExpansionStep]]:
    """Add `count` racks one at a time with seeds derived from `seed`."""
    steps: List[ExpansionStep] = []
    for i in range(count):
        topology, step = add_rack(topology, ports, servers, derive_seed(seed, i))
        steps.append(step)
    return topology, steps


@log_function_call
def fail_links(topology: Topology, fraction: float, seed: int) -> Topology:
    """Remove floor(fraction * links) switch-switch links uniformly at random."""
    if not 0.0 <= fraction <= 1.0:
        raise ParameterError(f"failure fraction must be within [0, 1], got {fraction}")
    count = math.floor(fraction * topology.num_links + 1e-9)
    if count == 0:
        return topology
    # prefix of a seeded permutation: with one seed, larger fractions fail supersets
    order = make_rng(seed).permutation(topology.num_links)
    failed = set(int(i) for i in order[:count])
    survivors = [link for i, link in enumerate(topology.links) if i not in failed]
    logger.debug(f"Failed {count} of {topology.num_links} links (seed {seed})")
    return topology.with_links(survivors, failed=count)
