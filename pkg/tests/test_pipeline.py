import numpy as np
import pytest

import driftdetect as dd
from driftdetect.errors import ConfigConflict, ConfigError, DataError
from driftdetect.model import parse_config

STRONG_R = [0.15, 0.10]


def _config():
    return parse_config({"prior": {"x0": 0.1, "lambda": 0.1}, "cost": {"c": 0.1}})


def _series(seed: int, change_year: int | None = 2002):
    return dd.make_synthetic_series(
        range(1990, 2020), sigma1=0.03, sigma2=0.02, rho=0.33,
        r=STRONG_R, change_year=change_year, seed=seed,
    )


def test_detection_fires_after_injected_change():
    report = dd.run_detection(_series(5), _config(), (1990, 2000), (1990, 2019), r_override=STRONG_R)
    assert report.alarm_year is not None
    assert report.alarm_year > 2002
    assert report.alarm_year <= 2008
    assert report.recursion_start == 1990
    assert report.r_used == pytest.approx(STRONG_R)


def test_detection_seed_sweep():
    # injected change at 2002 (year index 12): alarm lands shortly after,
    # never before, on almost every seed
    solved = dd.run_detection(_series(0), _config(), (1990, 2000), (1990, 2019), r_override=STRONG_R)
    a_star = solved.A_star
    good = 0
    n_seeds = 1000
    for seed in range(n_seeds):
        rep = dd.run_detection(
            _series(seed), _config(), (1990, 2000), (1990, 2019),
            threshold=a_star, r_override=STRONG_R,
        )
        if rep.alarm_year is not None and 2002 < rep.alarm_year <= 2008:
            good += 1
    assert good / n_seeds > 0.95


def test_no_change_unreachable_threshold():
    report = dd.run_detection(
        _series(6, change_year=None), _config(), (1990, 2000), (1990, 2019),
        threshold=1.0 - 1e-9,
    )
    assert report.alarm_year is None
    assert not report.alarms.any()


def test_monotone_alarm_in_threshold():
    series = _series(7)
    base = dd.run_detection(series, _config(), (1990, 2000), (1990, 2019), r_override=STRONG_R)
    for bump in (0.001, 0.01, 0.05):
        higher = dd.run_detection(
            series, _config(), (1990, 2000), (1990, 2019),
            threshold=min(base.A_star + bump, 1.0), r_override=STRONG_R,
        )
        if higher.alarm_year is not None and base.alarm_year is not None:
            assert higher.alarm_year >= base.alarm_year


def test_reports_are_deterministic():
    a = dd.run_detection(_series(8), _config(), (1990, 2000), (1990, 2019), r_override=STRONG_R)
    b = dd.run_detection(_series(8), _config(), (1990, 2000), (1990, 2019), r_override=STRONG_R)
    assert np.array_equal(a.pi, b.pi)
    assert np.array_equal(a.psi, b.psi)
    assert a.alarm_year == b.alarm_year and a.A_star == b.A_star


def test_config_echo_matches_input():
    raw = {"prior": {"x0": 0.1, "lambda": 0.1}, "cost": {"c": 0.1}}
    report = dd.run_detection(_series(9), parse_config(raw), (1990, 2000), (1990, 2019), threshold=0.9)
    assert report.config == raw


def test_auto_drift_uses_calibrated_sigmas():
    report = dd.run_detection(_series(10), _config(), (1990, 2000), (1990, 2019), threshold=0.9)
    assert report.r_used == pytest.approx(
        [report.calibration.sigma1, report.calibration.sigma2]
    )


def test_conflicting_drift_sources():
    raw = {"prior": {"x0": 0.1, "lambda": 0.1}, "cost": {"c": 0.1}, "r": [0.1, 0.1]}
    with pytest.raises(ConfigConflict):
        dd.run_detection(_series(11), parse_config(raw), (1990, 2000), (1990, 2019), r_override=STRONG_R)


def test_window_ordering_enforced():
    with pytest.raises(ConfigError):
        dd.run_detection(_series(12), _config(), (1995, 2005), (1990, 2019))


def test_tabulated_prior_needs_explicit_threshold():
    raw = {"prior": {"x0": 0.1, "table": [[0.0, 0.1], [40.0, 1.0]]}, "cost": {"c": 0.1}}
    with pytest.raises(ConfigError):
        dd.run_detection(_series(13), parse_config(raw), (1990, 2000), (1990, 2019))
    report = dd.run_detection(
        _series(13), parse_config(raw), (1990, 2000), (1990, 2019),
        threshold=0.95, r_override=STRONG_R,
    )
    assert report.alarm_year is None or report.alarm_year > 2002


def test_gsr_series_matches_posterior_module(study_prior):
    report = dd.run_detection(_series(14), _config(), (1990, 2000), (1990, 2019), r_override=STRONG_R)
    states = dd.gsr_run(report.increments, report.tilt, study_prior, dt=1.0)
    assert np.allclose([s.pi for s in states], report.pi, atol=1e-15)


def test_series_rows_structure():
    report = dd.run_detection(_series(15), _config(), (1990, 2000), (1995, 2005), threshold=0.9)
    rows = report.series_rows
    assert rows[0]["year"] == 1995 and rows[0]["n"] == 0
    assert rows[0]["x_inc_1"] is None
    assert rows[1]["x_inc_1"] == pytest.approx(report.increments[0, 0])
    assert len(rows) == 11


def test_emit_plot_data_round_trip(tmp_path):
    report = dd.run_detection(_series(16), _config(), (1990, 2000), (1990, 2019), r_override=STRONG_R)
    files = dd.emit_plot_data(report, tmp_path)
    posterior = (tmp_path / "posterior.csv").read_text().splitlines()
    assert posterior[0] == "year,pi,A_star"
    assert len(posterior) == report.years.size + 1
    # 17 significant digits survive the round trip exactly
    for line, year, pi in zip(posterior[1:], report.years, report.pi):
        y, p, a = line.split(",")
        assert int(y) == year
        assert float(p) == pi
        assert float(a) == report.A_star
    for f in files:
        assert f.exists()


def test_emit_plot_data_empty_window(tmp_path):
    report = dd.run_detection(_series(17), _config(), (1990, 2000), (2025, 2030), threshold=0.9)
    assert report.years.size == 0
    dd.emit_plot_data(report, tmp_path)
    assert (tmp_path / "posterior.csv").read_text() == "year,pi,A_star\n"


def test_rho_degenerate_guard():
    years = np.arange(1990, 2004)
    base = np.cumsum(np.r_[0.0, 0.01 * np.sin(np.arange(13))])
    log_mu = np.column_stack([-2.0 - 0.02 * np.arange(14) + base,
                              -2.5 - 0.015 * np.arange(14) + 2.0 * base])
    series = dd.MortalitySeries(years, np.exp(log_mu))
    with pytest.raises(DataError):
        dd.run_detection(series, _config(), (1990, 2003), (1990, 2003), threshold=0.9)
