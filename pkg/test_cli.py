"""
Tests for the jellynet command line.
"""

import json
import logging

import pytest

import settings
from cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main
from logging_config import ROOT_LOGGER_NAME
from topo import build_rrg, deserialize


def run(*argv: str) -> int:
    return main(['--log-file', '', '--log-level', 'WARNING', *argv])


@pytest.fixture(autouse=True)
def _detach_log_handlers():
    yield
    root = logging.getLogger(ROOT_LOGGER_NAME)
    root.handlers.clear()
    root.propagate = True


@pytest.fixture
def rrg_file(tmp_path):
    path = tmp_path / "rrg.topo"
    assert run('gen', '--rrg', '20,6,4', '--seed', '3', '--out', str(path)) == EXIT_OK
    return str(path)


def test_gen_writes_blueprint_to_stdout(capsys):
    assert run('gen', '--rrg', '20,6,4', '--seed', '3') == EXIT_OK
    captured = capsys.readouterr()
    assert captured.out.startswith("jellynet-topology 1\nkind rrg seed 3 rng pcg64")
    assert deserialize(captured.out) == build_rrg(20, 6, 4, 3)
    assert "switches=20 servers=40 links=40" in captured.err


def test_gen_other_families(tmp_path):
    for flags in (['--fat-tree', '4'], ['--swdc', 'ring,12,4,1'], ['--layered', '2,4,6,2,2,2']):
        out = tmp_path / "t.topo"
        assert run('gen', *flags, '--out', str(out)) == EXIT_OK
        assert out.read_text().startswith("jellynet-topology 1\n")


def test_gen_import(tmp_path):
    edges = tmp_path / "ring.txt"
    edges.write_text("0 1\n1 2\n2 3\n0 3\n")
    out = tmp_path / "ring.topo"
    assert run('gen', '--import', str(edges), '--ports', '4', '--servers', '2', '--out', str(out)) == EXIT_OK
    t = deserialize(out.read_text())
    assert t.num_servers == 8
    assert run('gen', '--import', str(edges)) == EXIT_USAGE


@pytest.mark.parametrize("argv", [
    ['gen'],
    ['gen', '--rrg', '20,6,4', '--fat-tree', '4'],
    ['gen', '--rrg', '20,6'],
    ['gen', '--rrg', '4,3,4'],
    ['gen', '--unknown'],
    ['bogus'],
    ['solve'],
])
def test_usage_errors(argv, capsys):
    assert run(*argv) == EXIT_USAGE


def test_runtime_errors(tmp_path):
    assert run('metrics', str(tmp_path / "missing.topo")) == EXIT_RUNTIME
    junk = tmp_path / "junk.topo"
    junk.write_text("not a topology\n")
    assert run('metrics', str(junk)) == EXIT_RUNTIME


def test_metrics_summary(rrg_file, capsys):
    capsys.readouterr()
    assert run('metrics', rrg_file) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "metric,value"
    values = dict(line.split(',') for line in lines[1:])
    assert float(values['switches']) == 20
    assert float(values['links']) == 40
    assert {'mean_path', 'diameter', 'bisection_bound', 'diameter_bound'} <= set(values)


def test_metrics_histograms(rrg_file, capsys):
    capsys.readouterr()
    assert run('metrics', rrg_file, '--paths', 'server') == EXIT_OK
    assert capsys.readouterr().out.startswith("hops,pairs\n2,")
    assert run('metrics', rrg_file, '--connectivity', '5', '--seed', '1') == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "src,dst,connectivity"
    assert len(lines) == 6


def test_solve(rrg_file, capsys):
    capsys.readouterr()
    assert run('solve', rrg_file, '--perm-seed', '1', '--eps', '0.1') == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "param,trial,seed,perm_seed,lambda,mean_flow,min_flow,jain,upper_bound,iterations"
    assert lines[1].startswith("optimal,0,3,1,")
    assert run('solve', rrg_file, '--mode', 'ksp', '--limit', '4', '--eps', '0.1') == EXIT_OK
    assert capsys.readouterr().out.splitlines()[1].startswith("ksp,")


def test_routes(rrg_file, capsys):
    capsys.readouterr()
    assert run('routes', rrg_file, '--mode', 'ksp') == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "src,dst,count"
    assert len(lines) == 1 + 80
    assert run('routes', rrg_file, '--hist') == EXIT_OK
    assert capsys.readouterr().out.startswith("rank,count\n0,")


def test_expand(rrg_file, tmp_path):
    out = tmp_path / "grown.topo"
    log = tmp_path / "grown.log"
    assert run('expand', rrg_file, '--add', '2', '--ports', '6', '--servers', '2', '--seed', '4',
               '--log', str(log), '--out', str(out)) == EXIT_OK
    grown = deserialize(out.read_text())
    assert grown.num_switches == 22
    assert set(grown.degrees) == {4}
    assert log.read_text().startswith("jellynet-expansion 1\n")
    assert run('expand', rrg_file, '--add', '1') == EXIT_USAGE


def test_fail(rrg_file, tmp_path, capsys):
    out = tmp_path / "failed.topo"
    assert run('fail', rrg_file, '--fraction', '0.1', '--seed', '2', '--out', str(out)) == EXIT_OK
    assert deserialize(out.read_text()).num_links == 36
    assert run('fail', rrg_file, '--fraction', '0.1,0.2') == EXIT_USAGE
    assert run('fail', rrg_file, '--fraction', 'x') == EXIT_USAGE
    capsys.readouterr()
    assert run('fail', rrg_file, '--fraction', '0,0.1', '--trials', '1', '--eps', '0.1') == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "param,trial,seed,perm_seed,lambda,mean_flow,min_flow,jain"
    assert len(lines) == 3


def test_experiment(capsys):
    assert run('experiment', 'fig3a', '--jobs', '1') == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("param,trial,seed,ports,topology,degree,bisection\n")
    assert "1.000000" in out
    assert run('experiment', 'legup') == EXIT_USAGE
    assert run('experiment', 'nope') == EXIT_USAGE


def test_config_flag_changes_float_format(tmp_path, monkeypatch, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({'experiments': {'float_format': '%.2f'}}))
    monkeypatch.setenv(settings.CONFIG_ENV_VAR, str(config))
    try:
        assert run('--config', str(config), 'experiment', 'fig3a', '--jobs', '1') == EXIT_OK
        out = capsys.readouterr().out
        assert "1.00\n" in out
        assert "1.000000" not in out
    finally:
        monkeypatch.delenv(settings.CONFIG_ENV_VAR)
        settings.reload()
