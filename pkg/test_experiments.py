"""
Tests for the named experiment runner and progress tracking.
"""

import pytest

from experiments import ExperimentParams, ExperimentRunner, run_experiment
from models import ExperimentError, ParameterError
from progress_tracker import ProgressTracker

PETERSEN = [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (0, 5), (1, 6), (2, 7), (3, 8), (4, 9),
            (5, 7), (7, 9), (6, 9), (6, 8), (5, 8)]


def _runner(**overrides) -> ExperimentRunner:
    params = dict(trials=1, eps=0.1, jobs=1)
    params.update(overrides)
    return ExperimentRunner(ExperimentParams(**params), tracker=ProgressTracker())


@pytest.fixture
def petersen_file(tmp_path):
    path = tmp_path / "petersen.txt"
    path.write_text("".join(f"{a} {b}\n" for a, b in PETERSEN))
    return str(path)


def test_names():
    assert _runner().names == ['ddg', 'fig10', 'fig11', 'fig1c', 'fig2', 'fig3a', 'fig3c', 'fig4', 'fig5',
                               'fig7', 'routing', 'swdc']


def test_unknown_and_reserved_names():
    with pytest.raises(ExperimentError, match="unknown experiment"):
        _runner().run('fig99')
    with pytest.raises(ExperimentError, match="not implemented"):
        _runner().run('legup')


def test_bisection_bound_table():
    report = _runner().run('fig3a')
    rows = report.rows
    assert len(rows) == 24 + 32 + 48
    assert rows['param'].is_monotonic_increasing
    assert report.to_csv().split('\n')[0] == "param,trial,seed,ports,topology,degree,bisection"
    assert report.config['name'] == 'fig3a'
    for k in (24, 32, 48):
        ports = rows[rows['ports'] == k]
        fat_tree = ports[ports['topology'] == 'fat_tree']
        jellyfish = ports[ports['topology'] == 'jellyfish']
        assert fat_tree['param'].tolist() == [k ** 3 // 4]
        assert fat_tree['bisection'].tolist() == [1.0]
        assert (jellyfish['bisection'] >= 0).all()
        # same equipment, more servers at full bisection
        assert ((jellyfish['bisection'] >= 1) & (jellyfish['param'] > k ** 3 // 4)).any()


def test_server_path_distribution():
    rows = _runner(max_ports=6, trials=2).run('fig1c').rows
    assert set(rows['topology']) == {'jellyfish', 'fat_tree'}
    assert set(rows[rows['topology'] == 'fat_tree']['trial']) == {0}
    assert set(rows[rows['topology'] == 'jellyfish']['trial']) == {0, 1}
    for (_, trial), group in rows.groupby(['topology', 'trial']):
        assert group['cumulative'].iloc[-1] == pytest.approx(1.0)
        assert group['fraction'].sum() == pytest.approx(1.0)
    assert rows[rows['topology'] == 'fat_tree']['param'].tolist() == [2, 4, 6]


def test_routing_comparison():
    rows = _runner(switches=12, ports=6, servers=2, limit=4, trials=2).run('routing').rows
    assert rows['param'].tolist() == ['ecmp_4', 'ecmp_4', 'ksp_4', 'ksp_4', 'optimal', 'optimal']
    optimal = rows[rows['param'] == 'optimal'].set_index('trial')['lambda']
    for label in ('ecmp_4', 'ksp_4'):
        restricted = rows[rows['param'] == label].set_index('trial')['lambda']
        assert (restricted <= optimal / (1 - 0.1) + 1e-9).all()
    assert {'seed', 'perm_seed', 'mean_flow', 'min_flow', 'jain'} <= set(rows.columns)


def test_localization_is_normalized_to_unrestricted():
    rows = _runner(containers=3, container_size=4, ports=6, servers=2).run('fig11').rows
    assert sorted(rows['r_local']) == [-1, 0, 1, 2, 3]
    unrestricted = rows[rows['topology'] == 'unrestricted']
    assert unrestricted['throughput_normalized'].tolist() == [pytest.approx(1.0)]
    layered = rows[rows['topology'] == 'layered']
    assert layered['param'].tolist() == [0.0, 0.25, 0.5, 0.75]
    assert layered['local_fraction'].tolist() == pytest.approx([0.0, 0.25, 0.5, 0.75])


def test_localization_skips_odd_local_totals():
    rows = _runner(containers=3, container_size=5, ports=6, servers=2).run('fig11').rows
    assert sorted(rows['r_local']) == [-1, 0, 2]
    layered = rows[rows['topology'] == 'layered']
    assert layered['param'].tolist() == [0.0, 0.5]


def test_localization_needs_containers():
    with pytest.raises(ParameterError):
        _runner(containers=1).run('fig11')


def test_benchmark_graph_comparison(petersen_file):
    rows = _runner(imports=[petersen_file], ports=5, servers=2, trials=2).run('ddg').rows
    assert rows['param'].tolist() == ['petersen.txt', 'petersen.txt']
    assert rows['switches'].tolist() == [10, 10]
    assert rows['servers'].tolist() == [20, 20]
    assert (rows['ddg_lambda'] > 0).all()
    assert (rows['jellyfish_lambda'] > 0).all()


def test_benchmark_graph_errors(tmp_path):
    with pytest.raises(ExperimentError):
        _runner().run('ddg')
    with pytest.raises(ExperimentError, match="not found"):
        _runner(imports=[str(tmp_path / "missing.txt")]).run('ddg')


def test_trials_must_be_positive():
    with pytest.raises(ParameterError):
        _runner(trials=0).run('routing')


def test_rows_are_reproducible():
    params = dict(switches=12, ports=6, servers=2, limit=4, trials=2)
    first = _runner(**params).run('routing').to_csv()
    assert first == _runner(**params).run('routing').to_csv()
    assert first != _runner(seed=9, **params).run('routing').to_csv()


def test_worker_count_does_not_change_output():
    params = dict(switches=12, ports=6, servers=2, limit=4, trials=3)
    serial = _runner(**params).run('routing').to_csv()
    assert _runner(jobs=2, **params).run('routing').to_csv() == serial


def test_run_experiment_helper():
    report = run_experiment('fig3a', ExperimentParams(jobs=1))
    assert report.name == 'fig3a'
    assert report.wall_time >= 0


def test_runner_tracks_and_cleans_sessions():
    tracker = ProgressTracker()
    runner = ExperimentRunner(ExperimentParams(trials=2, jobs=1, eps=0.1, switches=12, ports=6, servers=2, limit=4),
                              tracker=tracker)
    runner.run('routing')
    assert tracker.get_progress('routing') is None


def test_progress_tracker_sessions():
    tracker = ProgressTracker(log_every=2)
    tracker.start_session('s', 4, "demo")
    tracker.advance('s', "one")
    tracker.advance('s', "two")
    progress = tracker.get_progress('s')
    assert progress['current_step'] == 2
    assert progress['percent'] == 50.0
    assert progress['current_task'] == "two"
    progress['current_step'] = 99
    assert tracker.get_progress('s')['current_step'] == 2
    tracker.complete_session('s', success=False, error="boom")
    assert tracker.get_progress('s')['status'] == 'error'
    tracker.cleanup_session('s')
    assert tracker.get_progress('s') is None
    tracker.advance('s', "ignored")


@pytest.mark.slow
def test_full_capacity_search_smallest_size():
    rows = _runner(max_ports=6).run('fig3c').rows
    assert rows['param'].tolist() == [6]
    assert rows['fat_tree_servers'].tolist() == [54]
    assert rows['jellyfish_servers'].iloc[0] >= 54


@pytest.mark.slow
def test_half_local_links_cost_little_throughput():
    """Under 3% loss at half local links; each computed lambda is within (1 - eps) of its optimum."""
    eps = 0.05
    rows = _runner(trials=3, eps=eps).run('fig11').rows
    half = rows[(rows['topology'] == 'layered') & (rows['param'] == 0.5)]
    assert len(half) == 3
    assert half['throughput_normalized'].mean() >= (1 - 0.03) * (1 - eps)


@pytest.mark.slow
def test_jellyfish_degrades_gracefully_under_failures():
    eps = 0.05
    rows = _runner(max_ports=10, trials=3, eps=eps, fractions=[0.0, 0.06, 0.15]).run('fig10').rows
    means = rows.groupby(['topology', 'param'])['lambda'].mean()
    assert means['jellyfish', 0.15] >= (1 - 0.16) * (1 - eps) * means['jellyfish', 0.0]
    for fraction in (0.06, 0.15):
        assert means['jellyfish', fraction] >= (1 - eps) * means['fat_tree', fraction]


@pytest.mark.slow
def test_incremental_growth_matches_scratch_path_length():
    rows = _runner(trials=10).run('fig4').rows
    means = rows.groupby('param')[['incremental_mean', 'scratch_mean']].mean()
    assert means.index.tolist() == list(range(20, 161, 20))
    gap = (means['incremental_mean'] - means['scratch_mean']).abs() / means['scratch_mean']
    assert (gap < 0.02).all()


@pytest.mark.slow
def test_incremental_growth_matches_scratch_throughput():
    eps = 0.05
    rows = _runner(trials=2, eps=eps).run('fig5').rows
    means = rows.groupby('param')[['incremental_mean_flow', 'scratch_mean_flow']].mean()
    tolerance = (1 - 0.02) * (1 - eps)
    assert (means['incremental_mean_flow'] >= tolerance * means['scratch_mean_flow']).all()
    assert (means['scratch_mean_flow'] >= tolerance * means['incremental_mean_flow']).all()
