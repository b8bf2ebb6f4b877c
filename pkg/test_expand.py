"""
Tests for incremental expansion and link failures.
"""

import numpy as np
import pytest

from expand import add_rack, add_switch, apply_step, fail_links, grow
from models import ExpansionError, ExpansionKind, ParameterError, Topology, TopologyKind
from topo import build_rrg


def test_add_rack_preserves_existing_degrees():
    t = build_rrg(20, 8, 5, 3)
    grown, step = add_rack(t, 8, 3, 11)
    assert grown.num_switches == 21
    assert grown.degrees[:20] == t.degrees
    assert grown.degrees[20] == 5 - 1
    assert grown.servers[20] == 3
    assert step.kind is ExpansionKind.ADD_RACK
    assert step.new_switch == 20
    assert len(step.links_removed) == 2
    assert step.ports_consumed == 4
    assert grown.num_links == t.num_links + 2
    assert grown.is_connected()


def test_add_rack_even_ports_uses_all():
    t = build_rrg(30, 10, 6, 1)
    grown, step = add_rack(t, 10, 4, 2)
    assert grown.degrees[30] == 6
    assert set(step.links_added) == {(30, v) for link in step.links_removed for v in link}
    assert all(link in t.links for link in step.links_removed)
    assert not set(step.links_removed) & set(grown.links)


def test_add_switch_has_no_servers():
    t = build_rrg(16, 6, 4, 0)
    grown, step = add_switch(t, 6, 1)
    assert step.kind is ExpansionKind.ADD_SWITCH
    assert grown.servers[16] == 0
    assert grown.degrees[16] == 6


def test_heterogeneous_expansion():
    t = build_rrg(16, 6, 4, 0)
    grown, _ = add_rack(t, 12, 4, 5)
    assert grown.ports[16] == 12
    assert grown.degrees[16] == 8


def test_apply_step_replays_expansion():
    t = build_rrg(24, 8, 5, 7)
    grown, step = add_rack(t, 8, 2, 9)
    assert apply_step(t, step) == grown
    assert grown.meta_dict['expanded'] == '1'


def test_apply_step_rejects_foreign_log():
    t = build_rrg(24, 8, 5, 7)
    _, step = add_rack(t, 8, 2, 9)
    other = build_rrg(24, 8, 5, 8)
    with pytest.raises(ExpansionError):
        apply_step(build_rrg(20, 8, 5, 7), step)
    if any(link not in other.links for link in step.links_removed):
        with pytest.raises(ExpansionError):
            apply_step(other, step)


def test_expansion_is_seed_deterministic():
    t = build_rrg(20, 8, 5, 3)
    assert add_rack(t, 8, 3, 4)[0] == add_rack(t, 8, 3, 4)[0]


def test_grow_many_racks():
    t = build_rrg(20, 12, 8, 1)
    grown, steps = grow(t, 40, 12, 4, 2)
    assert grown.num_switches == 60
    assert len(steps) == 40
    assert set(grown.degrees) == {8}
    assert grown.num_servers == 240
    assert grown.meta_dict['expanded'] == '40'
    assert grown.is_connected()


def test_new_switch_needs_two_network_ports():
    t = build_rrg(10, 6, 4, 0)
    with pytest.raises(ParameterError):
        add_rack(t, 6, 5, 0)


def test_tiny_dense_network_cannot_absorb_switch():
    triangle = Topology(kind=TopologyKind.IMPORTED, ports=(2, 2, 2), servers=(0, 0, 0),
                        links=((0, 1), (1, 2), (0, 2)))
    with pytest.raises(ExpansionError):
        add_switch(triangle, 4, 0)


def test_fail_links_counts_and_metadata():
    t = build_rrg(40, 8, 6, 2)
    damaged = fail_links(t, 0.15, 5)
    assert damaged.num_links == t.num_links - 18
    assert set(damaged.links) <= set(t.links)
    assert damaged.meta_dict['failed'] == '18'
    assert damaged.servers == t.servers


def test_fail_links_zero_fraction_is_identity():
    t = build_rrg(10, 6, 4, 0)
    assert fail_links(t, 0.0, 1) is t


def test_fail_links_nested_for_one_seed():
    t = build_rrg(40, 8, 6, 2)
    small = fail_links(t, 0.05, 9)
    large = fail_links(t, 0.2, 9)
    assert set(large.links) <= set(small.links)


def test_fail_links_rejects_bad_fraction():
    t = build_rrg(10, 6, 4, 0)
    with pytest.raises(ParameterError):
        fail_links(t, 1.5, 0)


@pytest.mark.parametrize("case", range(100))
def test_random_expansion_keeps_existing_degrees(case):
    """Existing switches keep degree and servers; the new switch fills all but an odd port."""
    rng = np.random.default_rng(case)
    n = int(rng.integers(16, 41))
    r = int(rng.integers(3, 6))
    t = build_rrg(n, r + 2, r, case)
    network_ports = int(rng.integers(2, 6))
    servers = int(rng.integers(0, 3))
    grown, step = add_rack(t, network_ports + servers, servers, case + 1)
    assert grown.degrees[:n] == t.degrees
    assert grown.servers[:n] == t.servers
    assert grown.degrees[n] == network_ports - network_ports % 2
    assert grown.num_links == t.num_links + len(step.links_removed)
    assert grown.is_connected()
    assert apply_step(t, step) == grown
