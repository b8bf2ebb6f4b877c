"""
Tests for topology construction.
"""

import numpy as np
import pytest

from metrics import diameter_upper_bound, local_fraction, path_lengths
from models import ParameterError, Topology, TopologyError, TopologyKind
from topo import (Lattice, build_fat_tree, build_fat_tree_equipment, build_jellyfish, build_layered_rrg,
                  build_rrg, build_swdc, derive_seed, fat_tree_pods, serialize, spread_servers)


@pytest.mark.parametrize("n,k,r,seed", [(20, 8, 4, 1), (50, 10, 7, 2), (98, 14, 7, 3), (30, 6, 5, 11)])
def test_rrg_is_regular_and_connected(n, k, r, seed):
    """Every switch gets r links and k - r servers; the graph is connected."""
    t = build_rrg(n, k, r, seed)
    assert t.kind is TopologyKind.RRG
    assert t.num_switches == n
    assert t.servers == (k - r,) * n
    assert set(t.degrees) == {r}
    assert t.num_links == n * r // 2
    assert t.is_connected()


def test_rrg_odd_port_total_leaves_one_port():
    """N*r odd: exactly one network port stays free."""
    t = build_rrg(5, 4, 3, 0)
    assert sum(t.degrees) == 14
    assert sorted(t.free_ports) == [0, 0, 0, 0, 1]


def test_rrg_same_seed_same_bytes():
    """Construction is a pure function of its seed."""
    assert serialize(build_rrg(98, 14, 7, 1)) == serialize(build_rrg(98, 14, 7, 1))
    assert serialize(build_rrg(98, 14, 7, 1)) != serialize(build_rrg(98, 14, 7, 2))


def test_rrg_records_attempts():
    t = build_rrg(40, 8, 5, 4)
    assert int(t.meta_dict['attempts']) >= 1
    assert t.rng == 'pcg64'


@pytest.mark.parametrize("n,k,r", [(4, 3, 4), (5, 6, 5), (0, 4, 2), (6, 4, 0), (6, 4, 1)])
def test_rrg_rejects_bad_parameters(n, k, r):
    with pytest.raises(ParameterError):
        build_rrg(n, k, r, 0)


def test_rrg_complete_graph():
    """r = N - 1 gives the clique."""
    t = build_rrg(6, 6, 5, 0)
    assert t.num_links == 15


def test_single_switch_rrg():
    t = build_rrg(1, 4, 0, 0)
    assert t.num_links == 0
    assert t.num_servers == 4


def test_jellyfish_heterogeneous_switches():
    """Mixed port counts: each switch stays within its own budget."""
    ports = [8] * 10 + [12] * 10
    servers = [3] * 10 + [4] * 10
    t = build_jellyfish(ports, servers, 5)
    for i in range(20):
        assert t.degrees[i] <= ports[i] - servers[i]
    assert sum(t.free_ports) <= 1
    assert t.is_connected()


def test_jellyfish_caps_degree_at_switch_count():
    t = build_jellyfish([10, 10, 10], [1, 1, 1], 0)
    assert set(t.degrees) == {2}


def test_jellyfish_too_few_ports():
    with pytest.raises(ParameterError):
        build_jellyfish([3, 3, 3, 3], [2, 2, 2, 2], 0)


@pytest.mark.parametrize("kp", [4, 6, 8, 10, 12, 14])
def test_fat_tree_closed_forms(kp):
    t = build_fat_tree(kp)
    assert t.num_servers == kp ** 3 // 4
    assert t.num_switches == 5 * kp * kp // 4
    assert t.num_links == kp ** 3 // 2
    assert all(d + s == kp for d, s in zip(t.degrees, t.servers))


def test_fat_tree_four_port_layout():
    t = build_fat_tree(4)
    assert t.num_switches == 20
    assert t.num_servers == 16
    assert t.servers[:4] == (2, 2, 0, 0)
    assert t.degree_label() == '2-4'
    assert t.meta_dict['kp'] == '4'


@pytest.mark.parametrize("kp", [0, 3, 5])
def test_fat_tree_rejects_odd_ports(kp):
    with pytest.raises(ParameterError):
        build_fat_tree(kp)


def test_fat_tree_pods():
    pods = fat_tree_pods(4)
    assert len(pods) == 20
    assert pods[:8] == (0, 0, 0, 0, 1, 1, 1, 1)
    assert pods[16:] == (0, 1, 2, 3)


def test_lattice_shapes():
    assert Lattice('ring', 10).dims == (10,)
    assert Lattice('torus2d', 16).dims == (4, 4)
    assert Lattice('hex3d', 27).dims == (3, 3, 3)
    assert Lattice('hex3d', 450).label == '5x9x10'
    with pytest.raises(ParameterError):
        Lattice('torus2d', 10)
    with pytest.raises(ParameterError):
        Lattice('hex3d', 10)
    with pytest.raises(ParameterError):
        Lattice('mesh', 10)


def test_lattice_degree_and_distance():
    lattice = Lattice('torus2d', 25)
    links = lattice.links()
    assert len(links) == 50
    dist = lattice.distances(0)
    assert dist[0] == 0
    assert dist.max() == 4


@pytest.mark.parametrize("variant,n", [('ring', 30), ('torus2d', 36), ('hex3d', 27)])
def test_swdc_keeps_lattice_and_degree(variant, n):
    t = build_swdc(variant, n, 6, 2, 7)
    lattice = Lattice(variant, n)
    assert set(lattice.links()) <= set(t.links)
    assert set(t.degrees) == {6}
    assert t.servers == (2,) * n
    assert t.meta_dict['lattice'] == lattice.label


def test_swdc_large_ring_fills_every_port():
    """Leftover random ports are absorbed by swapping random links."""
    t = build_swdc('ring', 484, 6, 1, 1)
    assert t.num_links == 484 * 3
    assert set(t.degrees) == {6}
    assert set(Lattice('ring', 484).links()) <= set(t.links)


def test_swdc_degree_below_lattice():
    with pytest.raises(ParameterError):
        build_swdc('hex3d', 27, 4, 1, 0)


def test_layered_rrg_local_and_global_degrees():
    t = build_layered_rrg(4, 6, 8, 2, 3, 3, 9)
    assignment = t.containers
    assert assignment == tuple(i // 6 for i in range(24))
    local = [0] * 24
    remote = [0] * 24
    for a, b in t.links:
        target = local if assignment[a] == assignment[b] else remote
        target[a] += 1
        target[b] += 1
    assert set(local) == {2}
    assert set(remote) == {3}
    assert local_fraction(t) == pytest.approx(2 / 5)
    assert t.is_connected()


def test_layered_rrg_single_container_is_plain_rrg():
    t = build_layered_rrg(1, 10, 6, 3, 0, 2, 0)
    assert set(t.degrees) == {3}


def test_layered_rrg_needs_global_links():
    with pytest.raises(ParameterError):
        build_layered_rrg(3, 5, 6, 2, 0, 2, 0)
    with pytest.raises(ParameterError):
        build_layered_rrg(3, 5, 6, 2, 3, 2, 0)


def test_layered_rrg_rejects_odd_local_total():
    with pytest.raises(ParameterError, match="odd"):
        build_layered_rrg(2, 5, 8, 3, 2, 0, 1)
    t = build_layered_rrg(2, 6, 8, 3, 2, 0, 1)
    assert t.num_switches == 12


def test_topology_rejects_invalid_links():
    with pytest.raises(TopologyError):
        Topology(kind=TopologyKind.IMPORTED, ports=(2, 2), servers=(0, 0), links=((0, 0),))
    with pytest.raises(TopologyError):
        Topology(kind=TopologyKind.IMPORTED, ports=(2, 2), servers=(0, 0), links=((0, 1), (1, 0)))
    with pytest.raises(TopologyError):
        Topology(kind=TopologyKind.IMPORTED, ports=(1, 1), servers=(1, 0), links=((0, 1),))


def test_derive_seed():
    assert derive_seed(1, 2) == derive_seed(1, 2)
    assert derive_seed(1, 2) != derive_seed(1, 3)
    assert derive_seed(1, 2) != derive_seed(2, 2)
    assert 0 <= derive_seed(5, 1, 2, 3) < 2 ** 63


def test_spread_servers():
    assert spread_servers(4, 10) == [3, 3, 2, 2]
    assert spread_servers(3, 0) == [0, 0, 0]


def test_fat_tree_equipment_jellyfish():
    t = build_fat_tree_equipment(14, 2)
    ft = build_fat_tree(14)
    assert t.num_switches == ft.num_switches == 245
    assert t.num_servers == ft.num_servers == 686
    assert t.ports == ft.ports
    assert set(t.servers) == {2, 3}
    assert all(d == 14 - s for d, s in zip(t.degrees, t.servers))
    assert t.is_connected()
    with pytest.raises(ParameterError):
        build_fat_tree_equipment(7, 0)


@pytest.mark.parametrize("case", range(100))
def test_random_rrg_properties(case):
    """Degrees r (one switch may keep a free port), no loops or parallels, connected, diameter within bound."""
    rng = np.random.default_rng(case)
    n = int(rng.integers(8, 41))
    r = int(rng.integers(3, min(n - 2, 10) + 1))
    k = r + int(rng.integers(0, 4))
    t = build_rrg(n, k, r, case)
    short = [r - d for d in t.degrees]
    assert min(short) == 0 and sum(short) == (n * r) % 2
    assert len(set(t.links)) == t.num_links
    assert all(a != b for a, b in t.links)
    assert t.servers == (k - r,) * n
    assert t.is_connected()
    assert path_lengths(t).diameter <= diameter_upper_bound(n, r)
