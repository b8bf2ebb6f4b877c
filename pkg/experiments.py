"""
Named experiment reproductions.
Every experiment expands into independent seeded trials, runs them (optionally
in a process pool) and gathers seed-tagged rows into an ExperimentReport.
Rows are sorted by (param, trial) before they leave the runner, so the CSV
bytes do not depend on the number of workers.
"""

import os
import time
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import partial
from pathlib import Path as FilePath
from typing import Any, Callable, Dict, Iterable, Iterator, List, Optional, Sequence

import pandas as pd

from expand import grow
from flow import (max_concurrent_flow, max_servers_full_capacity, random_permutation, restricted_flow,
                  solution_row, throughput_vs_failures)
from logging_config import LoggedOperation, get_logger
from metrics import diameter_upper_bound, local_fraction, normalized_bisection_bound, path_lengths
from models import ExperimentError, ExperimentReport, PathLevel, ParameterError, RoutingMode, Topology
from progress_tracker import ProgressTracker, progress_tracker
from route import link_path_counts, path_count_ranking, switch_flows
from settings import get_section
from topo import (Lattice, build_fat_tree, build_fat_tree_equipment, build_jellyfish, build_layered_rrg,
                  build_rrg, build_swdc, derive_seed, load_edge_list)

logger = get_logger('experiments')

Row = Dict[str, Any]

# path-length study (large switches)
PATH_PORTS, PATH_DEGREE = 48, 36
PATH_SIZES = (100, 200, 400, 800, 1600, 3200)
BISECTION_PORTS = (24, 32, 48)

# incremental growth study
GROWTH_START, GROWTH_STOP, GROWTH_STEP = 20, 160, 20
GROWTH_PORTS, GROWTH_SERVERS = 12, 4

SWDC_DEGREE, SWDC_SERVERS = 6, 2

DEFAULT_TRIALS = {'fig1c': 10, 'fig2': 3, 'fig3c': 1, 'fig4': 10, 'fig5': 10, 'fig7': 5,
                  'fig10': 10, 'fig11': 10, 'ddg': 10, 'swdc': 10, 'routing': 10}

RESERVED = {'legup': "the LEGUP comparison is not implemented"}


@dataclass
class ExperimentParams:
    """User-visible knobs of an experiment run. None means: take the configured default."""
    seed: int = 1
    perm_seed: int = 2
    trials: Optional[int] = None
    max_ports: Optional[int] = None
    eps: Optional[float] = None
    jobs: Optional[int] = None
    fractions: Optional[List[float]] = None
    containers: Optional[int] = None
    container_size: int = 8
    ports: int = 10
    servers: int = 4
    switches: int = 64
    limit: int = 8
    imports: List[str] = field(default_factory=list)

    def resolved(self, name: str) -> 'ExperimentParams':
        section = get_section('experiments')
        solver = get_section('solver')
        return replace(
            self,
            trials=self.trials if self.trials is not None else DEFAULT_TRIALS.get(name, int(section.get('trials', 10))),
            max_ports=self.max_ports if self.max_ports is not None else int(section.get('max_ports', 14)),
            eps=self.eps if self.eps is not None else float(solver.get('epsilon', 0.05)),
            jobs=self.jobs if self.jobs is not None else int(section.get('jobs', 0)),
            fractions=list(self.fractions if self.fractions is not None
                           else section.get('fail_fractions', [0.0, 0.03, 0.06, 0.09, 0.12, 0.15])),
            containers=self.containers if self.containers is not None else int(section.get('containers', 12)),
        )


# -- trial functions (module level so a process pool can pickle them) ---------------------------

def _distribution_rows(label: str, topology: Topology, trial: int, seed: int) -> List[Row]:
    dist = path_lengths(topology, PathLevel.SERVER)
    rows = []
    cumulative = 0
    for hops, pairs in sorted(dist.histogram.items()):
        cumulative += pairs
        rows.append({'param': hops, 'trial': trial, 'seed': seed, 'topology': label, 'pairs': pairs,
                     'fraction': pairs / dist.pair_count, 'cumulative': cumulative / dist.pair_count})
    return rows


def _server_paths_trial(kp: int, base_seed: int, trial: int) -> List[Row]:
    seed = derive_seed(base_seed, trial)
    rows = _distribution_rows('jellyfish', build_fat_tree_equipment(kp, seed), trial, seed)
    if trial == 0:
        rows.extend(_distribution_rows('fat_tree', build_fat_tree(kp), 0, 0))
    return rows


def _path_scaling_trial(base_seed: int, job) -> List[Row]:
    size, trial = job
    seed = derive_seed(base_seed, trial, size)
    dist = path_lengths(build_rrg(size, PATH_PORTS, PATH_DEGREE, seed))
    return [{'param': size, 'trial': trial, 'seed': seed, 'servers': size * (PATH_PORTS - PATH_DEGREE),
             'mean': dist.mean, 'diameter': dist.diameter,
             'p99': _percentile_hops(dist.histogram, dist.pair_count, 0.99),
             'diameter_bound': diameter_upper_bound(size, PATH_DEGREE)}]


def _percentile_hops(histogram: Dict[int, int], total: int, q: float) -> int:
    seen = 0
    for hops in sorted(histogram):
        seen += histogram[hops]
        if seen >= q * total:
            return hops
    return max(histogram)


def _full_capacity_trial(eps: float, base_seed: int, job) -> List[Row]:
    kp, trial = job
    seed = derive_seed(base_seed, trial, kp)
    switches = 5 * kp * kp // 4
    found = max_servers_full_capacity(switches, kp, eps, seed)
    fat_tree = kp ** 3 // 4
    return [{'param': kp, 'trial': trial, 'seed': seed, 'switches': switches, 'jellyfish_servers': found,
             'fat_tree_servers': fat_tree, 'ratio': found / fat_tree}]


def _growth_trial(measure: str, eps: float, base_seed: int, perm_base: int, trial: int) -> List[Row]:
    """Grow 20 -> 160 switches and compare each size with a from-scratch build."""
    degree = GROWTH_PORTS - GROWTH_SERVERS
    seed = derive_seed(base_seed, trial)
    grown = build_rrg(GROWTH_START, GROWTH_PORTS, degree, seed)
    rows = []
    size = GROWTH_START
    while True:
        scratch_seed = derive_seed(base_seed, trial, size)
        scratch = build_rrg(size, GROWTH_PORTS, degree, scratch_seed)
        row: Row = {'param': size, 'trial': trial, 'seed': seed, 'scratch_seed': scratch_seed}
        if measure == 'paths':
            for label, topology in (('incremental', grown), ('scratch', scratch)):
                dist = path_lengths(topology)
                row[f'{label}_mean'] = dist.mean
                row[f'{label}_diameter'] = dist.diameter
        else:
            perm_seed = derive_seed(perm_base, trial, size)
            traffic = random_permutation(grown.num_servers, perm_seed)
            row['perm_seed'] = perm_seed
            for label, topology in (('incremental', grown), ('scratch', scratch)):
                solution = max_concurrent_flow(topology, traffic, eps)
                row[f'{label}_lambda'] = solution.lambda_
                row[f'{label}_mean_flow'] = solution.mean_flow
        rows.append(row)
        if size >= GROWTH_STOP:
            return rows
        grown, _ = grow(grown, GROWTH_STEP, GROWTH_PORTS, GROWTH_SERVERS, derive_seed(seed, size))
        size += GROWTH_STEP


def _diversity_trial(kp: int, base_seed: int, perm_base: int, trial: int) -> List[Row]:
    seed = derive_seed(base_seed, trial)
    perm_seed = derive_seed(perm_base, trial)
    topology = build_fat_tree_equipment(kp, seed)
    flows = switch_flows(topology, random_permutation(topology.num_servers, perm_seed))
    rows = []
    for mode, limit in ((RoutingMode.KSP, 8), (RoutingMode.ECMP, 64), (RoutingMode.ECMP, 8)):
        ranking = path_count_ranking(link_path_counts(topology, flows, mode, limit))
        label = f"{mode.value}_{limit}"
        rows.extend({'param': int(rank), 'trial': trial, 'seed': seed, 'perm_seed': perm_seed,
                     'routing': label, 'count': int(count)}
                    for rank, count in zip(ranking['rank'], ranking['count']))
    return rows


def _localization_trial(params: ExperimentParams, job) -> List[Row]:
    r_local, trial = job
    n = params.containers * params.container_size
    degree = params.ports - params.servers
    seed = derive_seed(params.seed, trial, 0 if r_local is None else r_local + 1)
    perm_seed = derive_seed(params.perm_seed, trial)
    if r_local is None:
        topology = build_rrg(n, params.ports, degree, seed)
        label, nominal = 'unrestricted', None
    else:
        topology = build_layered_rrg(params.containers, params.container_size, params.ports, r_local,
                                     degree - r_local, params.servers, seed)
        label, nominal = 'layered', r_local / degree
    assignment = [i // params.container_size for i in range(n)]
    measured = local_fraction(topology, assignment)
    row: Row = {'param': measured if nominal is None else nominal, 'trial': trial, 'seed': seed,
                'perm_seed': perm_seed, 'topology': label, 'r_local': -1 if r_local is None else r_local,
                'local_fraction': measured}
    row.update(solution_row(max_concurrent_flow(topology, random_permutation(topology.num_servers, perm_seed),
                                                params.eps)))
    return [row]


def _benchmark_trial(path: str, ports: int, servers: int, eps: float, base_seed: int, perm_base: int,
                     trial: int) -> List[Row]:
    benchmark = load_edge_list(path, ports, servers)
    seed = derive_seed(base_seed, trial)
    perm_seed = derive_seed(perm_base, trial)
    jellyfish = build_jellyfish(benchmark.ports, benchmark.servers, seed)
    traffic = random_permutation(benchmark.num_servers, perm_seed)
    row: Row = {'param': FilePath(path).name, 'trial': trial, 'seed': seed, 'perm_seed': perm_seed,
                'switches': benchmark.num_switches, 'servers': benchmark.num_servers}
    for label, topology in (('ddg', benchmark), ('jellyfish', jellyfish)):
        solution = max_concurrent_flow(topology, traffic, eps)
        row[f'{label}_lambda'] = solution.lambda_
        row[f'{label}_mean_flow'] = solution.mean_flow
    return [row]


def _small_world_trial(switches: Dict[str, int], eps: float, base_seed: int, perm_base: int,
                       trial: int) -> List[Row]:
    rows = []
    for label, n in switches.items():
        seed = derive_seed(base_seed, trial, len(rows))
        perm_seed = derive_seed(perm_base, trial, n)
        if label == 'jellyfish':
            topology = build_rrg(n, SWDC_DEGREE + SWDC_SERVERS, SWDC_DEGREE, seed)
        else:
            topology = build_swdc(label.split('_', 1)[1], n, SWDC_DEGREE, SWDC_SERVERS, seed)
        row: Row = {'param': label, 'trial': trial, 'seed': seed, 'perm_seed': perm_seed, 'switches': n}
        row.update(solution_row(max_concurrent_flow(topology, random_permutation(topology.num_servers, perm_seed),
                                                    eps)))
        rows.append(row)
    return rows


def _routing_trial(params: ExperimentParams, trial: int) -> List[Row]:
    seed = derive_seed(params.seed, trial)
    perm_seed = derive_seed(params.perm_seed, trial)
    topology = build_rrg(params.switches, params.ports, params.ports - params.servers, seed)
    traffic = random_permutation(topology.num_servers, perm_seed)
    solutions = {'optimal': max_concurrent_flow(topology, traffic, params.eps)}
    for mode in (RoutingMode.KSP, RoutingMode.ECMP):
        solutions[f"{mode.value}_{params.limit}"] = restricted_flow(topology, traffic, mode, params.limit, params.eps)
    rows = []
    for label, solution in solutions.items():
        row: Row = {'param': label, 'trial': trial, 'seed': seed, 'perm_seed': perm_seed}
        row.update(solution_row(solution))
        rows.append(row)
    return rows


def _largest_valid(variant: str, limit: int) -> int:
    """Largest switch count <= limit forming the given lattice."""
    for n in range(limit, 2, -1):
        try:
            Lattice(variant, n)
            return n
        except ParameterError:
            continue
    raise ParameterError(f"no {variant} lattice with at most {limit} switches")


# -- runner ---------------------------------------------------------------------------------------

class ExperimentRunner:
    """Runs named experiments; trials go through an optional process pool."""

    def __init__(self, params: Optional[ExperimentParams] = None, tracker: Optional[ProgressTracker] = None):
        self.params = params or ExperimentParams()
        self.tracker = tracker or progress_tracker
        self.logger = get_logger('experiments.runner')
        self._executor: Optional[Executor] = None
        self._session = ''

        self.experiments: Dict[str, Callable[[ExperimentParams], pd.DataFrame]] = {
            'fig1c': self._fig1c, 'fig2': self._fig2, 'fig3a': self._fig3a, 'fig3c': self._fig3c,
            'fig4': self._fig4, 'fig5': self._fig5, 'fig7': self._fig7, 'fig10': self._fig10,
            'fig11': self._fig11, 'ddg': self._ddg, 'swdc': self._swdc, 'routing': self._routing,
        }

    @property
    def names(self) -> List[str]:
        return sorted(self.experiments)

    def _workers(self, jobs: int) -> int:
        return jobs if jobs > 0 else (os.cpu_count() or 1)

    def map(self, fn: Callable, items: Iterable) -> Iterator:
        """executor.map with progress accounting; plain map when running in-process."""
        items = list(items)
        self.tracker.start_session(self._session, len(items), f"{len(items)} trials")
        results = map(fn, items) if self._executor is None else self._executor.map(fn, items)
        for i, result in enumerate(results):
            self.tracker.advance(self._session, f"trial {i + 1}")
            yield result

    def _collect(self, fn: Callable, items: Iterable) -> List[Row]:
        return [row for rows in self.map(fn, items) for row in rows]

    def run(self, name: str) -> ExperimentReport:
        if name in RESERVED:
            raise ExperimentError(f"experiment '{name}': {RESERVED[name]}")
        if name not in self.experiments:
            raise ExperimentError(f"unknown experiment '{name}' (known: {', '.join(self.names)})")
        params = self.params.resolved(name)
        if params.trials < 1:
            raise ParameterError(f"trials must be positive, got {params.trials}")

        workers = self._workers(params.jobs)
        self._session = name
        start = time.time()
        with LoggedOperation(f"experiment {name} ({workers} worker(s))", 'experiments'):
            try:
                if workers > 1:
                    with ProcessPoolExecutor(max_workers=workers) as executor:
                        self._executor = executor
                        rows = self.experiments[name](params)
                else:
                    rows = self.experiments[name](params)
            except Exception as e:
                self.tracker.complete_session(name, success=False, error=str(e))
                raise
            finally:
                self._executor = None
        self.tracker.complete_session(name)
        self.tracker.cleanup_session(name)
        config = {'name': name, **asdict(params)}
        return ExperimentReport(name=name, config=config, rows=rows, wall_time=time.time() - start)

    @staticmethod
    def _frame(rows: Sequence[Row], *ties: str) -> pd.DataFrame:
        if not rows:
            raise ExperimentError("experiment produced no rows")
        frame = pd.DataFrame(list(rows))
        return frame.sort_values(['param', 'trial', *ties], kind='stable').reset_index(drop=True)

    # -- experiments ----------------------------------------------------------------------------

    def _fig1c(self, p: ExperimentParams) -> pd.DataFrame:
        """Server path-length distribution: RRG vs fat-tree of the same equipment."""
        rows = self._collect(partial(_server_paths_trial, _even_ports(p.max_ports), p.seed), range(p.trials))
        return self._frame(rows, 'topology')

    def _fig2(self, p: ExperimentParams) -> pd.DataFrame:
        """Mean switch path length and diameter vs size, against the diameter bound."""
        jobs = [(size, trial) for size in PATH_SIZES for trial in range(p.trials)]
        return self._frame(self._collect(partial(_path_scaling_trial, p.seed), jobs))

    def _fig3a(self, p: ExperimentParams) -> pd.DataFrame:
        """Normalized bisection bound vs servers on fat-tree equipment (closed forms only)."""
        rows = []
        for k in BISECTION_PORTS:
            switches = 5 * k * k // 4
            rows.append({'param': k ** 3 // 4, 'trial': 0, 'seed': 0, 'ports': k, 'topology': 'fat_tree',
                         'degree': k // 2, 'bisection': 1.0})
            for r in range(1, k):
                bound = normalized_bisection_bound(switches, k, r)
                rows.append({'param': switches * (k - r), 'trial': 0, 'seed': 0, 'ports': k,
                             'topology': 'jellyfish', 'degree': r, 'bisection': max(0.0, bound)})
        return self._frame(rows, 'ports', 'topology')

    def _fig3c(self, p: ExperimentParams) -> pd.DataFrame:
        """Servers at full capacity with fat-tree equipment, kp = 6 .. max_ports."""
        jobs = [(kp, trial) for kp in range(6, _even_ports(p.max_ports) + 1, 2) for trial in range(p.trials)]
        if not jobs:
            raise ParameterError(f"max ports {p.max_ports} is below the smallest size (6)")
        return self._frame(self._collect(partial(_full_capacity_trial, p.eps, p.seed), jobs))

    def _fig4(self, p: ExperimentParams) -> pd.DataFrame:
        """Path length of incrementally grown vs from-scratch topologies."""
        fn = partial(_growth_trial, 'paths', p.eps, p.seed, p.perm_seed)
        return self._frame(self._collect(fn, range(p.trials)))

    def _fig5(self, p: ExperimentParams) -> pd.DataFrame:
        """Per-server throughput of incrementally grown vs from-scratch topologies."""
        fn = partial(_growth_trial, 'throughput', p.eps, p.seed, p.perm_seed)
        return self._frame(self._collect(fn, range(p.trials)))

    def _fig7(self, p: ExperimentParams) -> pd.DataFrame:
        """Ranked per-link path counts under ksp-8, ecmp-64 and ecmp-8."""
        fn = partial(_diversity_trial, _even_ports(p.max_ports), p.seed, p.perm_seed)
        return self._frame(self._collect(fn, range(p.trials)), 'routing')

    def _fig10(self, p: ExperimentParams) -> pd.DataFrame:
        """Throughput under random link failures: Jellyfish vs the same-equipment fat-tree."""
        kp = _even_ports(p.max_ports)
        fat_tree = build_fat_tree(kp)
        jellyfish = build_fat_tree_equipment(kp, p.seed)
        frames = []
        for label, topology in (('jellyfish', jellyfish), ('fat_tree', fat_tree)):
            report = throughput_vs_failures(topology, p.fractions, p.trials, p.eps, p.perm_seed, map_fn=self.map)
            frames.append(report.rows.assign(topology=label, topology_seed=topology.seed))
        return self._frame(pd.concat(frames).to_dict(orient='records'), 'topology')

    def _fig11(self, p: ExperimentParams) -> pd.DataFrame:
        """Localization: throughput of 2-layer random graphs normalized to the unrestricted one."""
        degree = p.ports - p.servers
        if degree < 2 or p.containers < 2:
            raise ParameterError("localization needs network degree >= 2 and at least two containers")
        local = [r for r in range(0, min(degree, p.container_size)) if (r * p.container_size) % 2 == 0]
        skipped = min(degree, p.container_size) - len(local)
        if skipped:
            self.logger.warning(f"Skipping {skipped} odd local degree(s) for containers of {p.container_size}")
        levels: List[Optional[int]] = [None] + local
        jobs = [(r_local, trial) for r_local in levels for trial in range(p.trials)]
        frame = self._frame(self._collect(partial(_localization_trial, p), jobs), 'topology')
        baseline = frame[frame['topology'] == 'unrestricted'].set_index('trial')['mean_flow']
        frame['throughput_normalized'] = frame['mean_flow'] / frame['trial'].map(baseline)
        return frame

    def _ddg(self, p: ExperimentParams) -> pd.DataFrame:
        """Imported benchmark graphs vs Jellyfish with identical switches and servers."""
        if not p.imports:
            raise ExperimentError("experiment 'ddg' needs benchmark graph files (--import)")
        rows: List[Row] = []
        for path in p.imports:
            if not FilePath(path).is_file():
                raise ExperimentError(f"benchmark graph file not found: {path}")
            fn = partial(_benchmark_trial, path, p.ports, p.servers, p.eps, p.seed, p.perm_seed)
            rows.extend(self._collect(fn, range(p.trials)))
        return self._frame(rows)

    def _swdc(self, p: ExperimentParams) -> pd.DataFrame:
        """Degree-6 small-world lattices vs Jellyfish, 2 servers per switch."""
        switches = {
            'jellyfish': p.switches,
            'swdc_ring': _largest_valid('ring', p.switches),
            'swdc_torus2d': _largest_valid('torus2d', p.switches),
            'swdc_hex3d': _largest_valid('hex3d', p.switches),
        }
        fn = partial(_small_world_trial, switches, p.eps, p.seed, p.perm_seed)
        return self._frame(self._collect(fn, range(p.trials)))

    def _routing(self, p: ExperimentParams) -> pd.DataFrame:
        """Optimal vs k-shortest-path vs ECMP restricted throughput on the same instances."""
        return self._frame(self._collect(partial(_routing_trial, p), range(p.trials)))


def _even_ports(ports: int) -> int:
    even = ports - ports % 2
    if even < 4:
        raise ParameterError(f"port count {ports} too small for a fat-tree comparison")
    return even


def run_experiment(name: str, params: Optional[ExperimentParams] = None) -> ExperimentReport:
    return ExperimentRunner(params).run(name)
