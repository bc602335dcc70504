from fractions import Fraction

import pytest

from zkdpps.errors import ConfigError
from zkdpps.metrics import CSV_HEADER, MetricsReport, TaskRecord, emit_csv, percentile
from zkdpps.scenarios import Mode, ScenarioConfig, run_scenario, run_sweep, timing_bench
from zkdpps.system import CostModel


def single(scenario, inputs, **kw):
    rep = run_scenario(ScenarioConfig(scenario=scenario, runs=1, inputs=(inputs,), **kw))
    return {name: v for (_, name), v in rep.insights.items()}, rep


def test_hazmat_example():
    got, rep = single(1, {"hauler-1": 5, "hauler-2": 7, "insurer": 10})
    assert got == {"total": 12, "excess": 2}
    assert rep.summaries[0] == "exceeds coverage"
    got, rep = single(1, {"hauler-1": 5, "hauler-2": 7, "insurer": 40})
    assert got["excess"] == -28 and rep.summaries[0] == "within coverage"


def test_shelf_life_example():
    got, rep = single(2, {"sensor-1": "20.00", "sensor-2": "22.00"})
    assert got == {"product": Fraction(440), "sum": Fraction(42)}
    assert rep.summaries[0] == "mean 21.00, product 440.0000"


def test_shelf_life_negative_fixed_point():
    got, _ = single(2, {"sensor-1": "-12.34", "sensor-2": "39.99"})
    assert got["product"] == Fraction(-1234, 100) * Fraction(3999, 100)
    assert got["sum"] == Fraction(2765, 100)


def test_price_example():
    got, rep = single(3, {"supplier-1": 3, "supplier-2": 4, "supplier-3": 5, "retailer": 15})
    assert got == {"cost_total": 12, "margin": 3}
    assert rep.summaries[0] == "profitable"


def test_weighted_price():
    got, _ = single(3, {"supplier-1": 3, "supplier-2": 4, "supplier-3": 5, "retailer": 15}, weights=(2, 3, 1))
    assert got == {"cost_total": 2 * 3 + 3 * 4 + 5, "margin": 15 - 23}


@pytest.mark.parametrize("scenario", [1, 2, 3])
def test_random_runs_match_oracle(scenario):
    rep = run_scenario(ScenarioConfig(scenario=scenario, runs=5, seed=3))
    assert len(rep.insights) == 10
    assert rep.oracle_mismatches == []


def test_csv_rows(tmp_path):
    recs = [TaskRecord("S", "zk", 1000, i, "t", "ab", 1000, 3000 + i, "Verified") for i in range(3)]
    rep = MetricsReport("S", "zk", 1000, records=recs)
    path = tmp_path / "r.csv"
    emit_csv(rep, str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 4


def test_csv_deterministic(tmp_path):
    cfg = ScenarioConfig(scenario=3, runs=3, seed=5)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_csv(run_scenario(cfg), str(a))
    emit_csv(run_scenario(cfg), str(b))
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text().splitlines()) == 1 + 6


def test_unwritable_path(tmp_path):
    rep = run_scenario(ScenarioConfig(runs=1))
    with pytest.raises(OSError):
        emit_csv(rep, str(tmp_path / "missing" / "r.csv"))


def test_sweep_shape_and_plain_audit():
    base = ScenarioConfig(scenario=1, runs=3)
    sweep = run_sweep(base)
    assert len(sweep.reports) == 8
    for (period, mode), rep in sweep.reports.items():
        if mode is Mode.PLAIN:
            assert "Encrypt" not in rep.counters and "Verify" not in rep.counters
            assert not any("\tDecrypt\t" in line for line in rep.event_log)
        else:
            assert rep.counters["Encrypt"] > 0 and rep.counters["Verify"] > 0
    assert sweep.overhead_ratio(10_000) <= sweep.overhead_ratio(500)


def test_zero_cost_delays():
    zk = run_scenario(ScenarioConfig(runs=2, costs=CostModel.zero()))
    plain = run_scenario(ScenarioConfig(runs=2, costs=CostModel.zero(), mode=Mode.PLAIN))
    assert {r.e2e_ms for r in zk.records} == {5000}
    assert {r.e2e_ms for r in plain.records} == {3000}


def test_credit_limit_shapes_fast_releases():
    rep = run_scenario(ScenarioConfig(runs=12, inter_task_ms=100))
    assert rep.credit_rejections > 0
    assert rep.oracle_mismatches == [] and len(rep.insights) == 24


def test_validator_faults_tolerated():
    rep = run_scenario(ScenarioConfig(runs=2, faulty_validators=1, silent_validators=2))
    assert rep.oracle_mismatches == [] and len(rep.insights) == 4


def test_expired_round_requeues():
    cfg = ScenarioConfig(runs=3, refresh_ms=8000, refresh_lead_blocks=2, inter_task_ms=2000)
    rep = run_scenario(cfg)
    assert rep.counters.get("Requeue", 0) > 0
    assert rep.oracle_mismatches == [] and len(rep.insights) == 6


def test_config_validation():
    with pytest.raises(ConfigError):
        ScenarioConfig(threshold=6).validate()
    with pytest.raises(ConfigError):
        ScenarioConfig(byzantine_computers=6).validate()


def test_timing_bench():
    keygen_ms, recon_ms = timing_bench(20)
    assert 0 < keygen_ms < 100 and 0 < recon_ms < 100


def test_percentile():
    assert percentile([5, 1, 3, 2, 4], 0.5) == 3
    assert percentile([5, 1, 3, 2, 4], 0.95) == 5
