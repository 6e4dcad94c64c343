import csv
import json
import math

import numpy as np
import pytest

from qtube.config import (
    DomainSpec,
    GratingSpec,
    GridSpec,
    TrajectorySpec,
    config_from_dict,
    grating_preset,
    tunnel_preset,
)
from qtube.errors import ConfigurationError
from qtube.experiments import run, run_grating, run_tunneling, write_outputs
from qtube.potentials import PotentialSpec
from qtube.propagator import PropagationConfig
from qtube.states import GaussianSpec
from qtube.trajectories import integrate_trajectories, sample_initial_conditions


def _header(path):
    with open(path, newline="") as fh:
        return next(csv.reader(fh))


def small_custom(**changes):
    base = dict(
        grid=GridSpec(-40.0, 40.0, 2048),
        potential=PotentialSpec("free"),
        packets=(GaussianSpec(-5.0, 2.0, 1.0),),
        propagation=PropagationConfig(2e-3, 500, 10),
        trajectories=TrajectorySpec(count=30),
    )
    base.update(changes)
    return config_from_dict({"scenario": "custom"}).replace(**base)


class TestTunnelReport:
    def test_regions_partition_probability(self, tunnel_report):
        s = tunnel_report.series
        total = s["P_T"] + s["P_R"] + s["P_I"]
        assert np.max(np.abs(total - 1.0)) <= 1e-8

    def test_series_shapes_and_range(self, tunnel_report):
        n = len(tunnel_report.times)
        for name, values in tunnel_report.series.items():
            assert len(values) == n, name
            assert np.all((values >= -1e-12) & (values <= 1 + 1e-12)), name

    def test_transmission_settles(self, tunnel_report):
        asym = tunnel_report.results["asymptotic"]
        # whatever is left inside the barrier is all P_T can still gain or lose
        assert asym["P_T_spread_after"] <= asym["threshold"]

    def test_separatrix_in_expected_window(self, tunnel_report):
        sep = tunnel_report.results["separatrix"]
        assert -12.0 < sep["x0"] < -9.0
        assert sep["bracket"][1] - sep["bracket"][0] <= tunnel_preset().separatrix.tol

    def test_tube_series_matches_tube_stats(self, tunnel_report):
        assert tunnel_report.series["P_tube"][0] == pytest.approx(tunnel_report.results["tube"]["P0"], abs=1e-12)

    def test_quantile_fraction_matches_transmission(self, tunnel_report):
        n = 2000
        x = sample_initial_conditions(tunnel_report.psi0, n, "quantile")
        frac = np.mean(x > tunnel_report.results["separatrix"]["x0"])
        assert abs(frac - tunnel_report.results["asymptotic"]["P_T"]) <= 1 / math.sqrt(n)

    @pytest.mark.xfail(strict=True, reason="the lower boundary crosses the interference fringes in front of "
                                           "the barrier; trapezoid end-cell error in P(t) is amplified by d/dt")
    def test_tube_moving_domain_flux(self, tunnel_report):
        tube = tunnel_report.results["tube"]
        assert tube["flux_rms_residual"] <= tube["flux_limit"]

    @pytest.mark.xfail(strict=True, reason="trajectories threading the fringes near the barrier need about "
                                           "16 sub-steps per snapshot before halving moves them by < 1e-4")
    def test_substep_halving(self, tunnel_report):
        x0 = tunnel_report.ensemble.x_init
        store = tunnel_report.store
        a = integrate_trajectories(store, x0, n_sub=4).x_final
        b = integrate_trajectories(store, x0, n_sub=2).x_final
        assert np.max(np.abs(a - b)) <= 1e-4

    def test_report_serializes(self, tunnel_report, tmp_path):
        paths = write_outputs(tunnel_report, tmp_path)
        assert [p.name for p in paths] == ["report.json", "series.csv", "trajectories.csv"]
        assert _header(tmp_path / "series.csv") == ["t", "P_T", "P_R", "P_I", "P_tube"]
        data = json.loads((tmp_path / "report.json").read_text())
        assert len(data["series"]["P_T"]) == len(data["times"])


@pytest.mark.slow
def test_opaque_barrier_reflects():
    cfg = tunnel_preset()
    cfg = cfg.replace(
        grid=GridSpec(-40.0, 60.0, 4096),
        potential=PotentialSpec("tanh_barrier", V0=1e4, alpha=10.0, x_minus=-2.0, x_plus=2.0),
        propagation=PropagationConfig(5e-4, 3000, 30),
        trajectories=TrajectorySpec(count=40),
    )
    report = run_tunneling(cfg)
    assert report.results["asymptotic"]["P_T"] <= 1e-3


class TestGratingReport:
    def test_series_headers(self, grating_report, tmp_path):
        write_outputs(grating_report, tmp_path)
        assert _header(tmp_path / "series.csv") == ["t", "P_n0", "P_n1"]

    def test_separatrix_depends_on_time(self, grating_report):
        ten, twenty = grating_report.results["analysis"]
        lo10 = ten["orders"][1]["separatrix_tube"]["x_lo"]
        lo20 = twenty["orders"][1]["separatrix_tube"]["x_lo"]
        assert abs(lo10 - lo20) > 1e-3

    def test_per_slit_rows_sum_to_slit_totals(self, grating_report):
        for entry in grating_report.results["per_slit"]:
            P = np.asarray(entry["P"])
            np.testing.assert_allclose(P.sum(axis=1), entry["slit_totals"], atol=1e-3)

    def test_domain_estimate_below_far_field(self, grating_report):
        for entry in grating_report.results["analysis"]:
            for o in entry["orders"].values():
                assert o["domain_estimate"] < o["far_field_tube"]

    def test_orders_inside_unit_interval(self, grating_report):
        for values in grating_report.series.values():
            assert np.all((values >= 0) & (values <= 1))


@pytest.mark.slow
def test_single_slit_has_one_peak():
    cfg = grating_preset()
    cfg = cfg.replace(
        grid=GridSpec(-128.0, 128.0, 8192),
        packets=(GaussianSpec(0.0, 0.0, 0.2),),
        propagation=PropagationConfig(2e-3, 5000, 50),
        trajectories=TrajectorySpec(count=40),
        grating=GratingSpec(analysis_times=(10.0,), orders=(0,)),
    )
    report = run_grating(cfg)
    (entry,) = report.results["analysis"]
    assert list(entry["peaks"]) == [0]
    assert entry["peaks"][0]["area"] >= 0.99


class TestCustom:
    def test_free_packet_keeps_unit_probability(self):
        report = run(small_custom())
        assert np.max(np.abs(report.series["P_all"] - 1.0)) <= 1e-8

    def test_deterministic(self):
        a = json.dumps(run(small_custom()).to_dict())
        b = json.dumps(run(small_custom()).to_dict())
        assert a == b

    def test_head_on_collision_flux(self):
        cfg = small_custom(
            packets=(GaussianSpec(-6.0, 10.0, 1.0), GaussianSpec(6.0, -10.0, 1.0)),
            propagation=PropagationConfig(5e-4, 2000, 4),
            # off-centre, so probability actually flows through the boundary
            domains=(DomainSpec("right", 2.0, None),),
        )
        report = run(cfg)
        f = report.results["flux_balance"]["right"]
        assert f["max_abs_dPdt"] > 0.1
        assert f["rms_residual"] <= 1e-2 * f["max_abs_dPdt"]

    def test_final_counts_cover_ensemble(self):
        cfg = small_custom(domains=(DomainSpec("left", None, 0.0), DomainSpec("right", 0.0, None)))
        info = run(cfg).results["ensemble"]
        assert sum(info["final_counts"].values()) == info["count"]

    def test_duplicate_labels(self):
        cfg = small_custom(domains=(DomainSpec("a", None, 0.0), DomainSpec("a", 0.0, None)))
        with pytest.raises(ConfigurationError):
            run(cfg)

    def test_wrong_runner(self):
        with pytest.raises(ConfigurationError):
            run_tunneling(small_custom())
