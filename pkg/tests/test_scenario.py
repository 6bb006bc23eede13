import json

import numpy as np
import pytest

import vaxmpc
from vaxmpc.errors import ContractViolation, ValidationError
from vaxmpc.model import Trajectory
from vaxmpc.results import ScenarioResult
from vaxmpc.scenario import (
    BUILTIN_MATRIX,
    compare_run_dirs,
    config_from_dict,
    get_preset,
    load_config,
    load_contact_matrix,
    write_run,
)

# Reference total-deceased readings used to pin down the metric arithmetic:
# day 61 (vaccination start) and day 140 (horizon end) for a decreasing-age
# run and a predictive run on the same outbreak.
DEATHS_DAY_61 = 1271.71162129538
DEATHS_DAY_140_NATIONAL = 2183.25718934918
DEATHS_DAY_140_MPC = 2123.11862987758


class TestPreset:
    def test_wallonia_preset_values(self):
        cfg = get_preset("wallonia-2020")
        assert cfg.population == (1058304, 915796, 983789, 384803, 203035, 99516)
        assert cfg.mpc.v_bar == 55191.0
        assert cfg.mpc.horizon == 40
        assert cfg.mpc.epsilon == 0.1
        assert cfg.mpc.vaccination_start_day == 61
        assert cfg.mpc.strategy_horizon == 140
        assert cfg.mpc.eradication_threshold == 1.0
        assert cfg.contact_matrix_path == BUILTIN_MATRIX

    def test_preset_matrix_satisfies_pressure_premise(self, preset_params):
        pressure = preset_params.lam * (
            preset_params.contact @ preset_params.population
        )
        assert np.all(pressure < 1.0)

    def test_builtin_matrix_reciprocity_and_dominance(self, preset_params):
        pop = preset_params.population
        raw = preset_params.contact * pop[None, :]
        events = raw * pop[:, None]
        assert np.allclose(events, events.T, rtol=1e-12)
        diag = np.diag(raw)
        off = raw.sum(axis=1) - diag
        assert np.all(diag > off)


class TestConfig:
    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValidationError, match="gamma_r"):
            config_from_dict(
                {
                    "model": {
                        "lambda": [0.1, 0.2],
                        "gamma_r": [0.5],
                        "gamma_d": [0.1, 0.1],
                        "population": [100, 100],
                    },
                    "contact_matrix_path": BUILTIN_MATRIX,
                }
            )

    def test_missing_matrix_file_errors(self, tmp_path):
        config = config_from_dict(
            {
                "preset": "wallonia-2020",
                "contact_matrix_path": "nowhere.csv",
            },
            base_dir=str(tmp_path),
        )
        with pytest.raises(FileNotFoundError):
            config.build_params()

    def test_unknown_field_rejected(self):
        with pytest.raises(ValidationError, match="polcy"):
            config_from_dict({"preset": "wallonia-2020", "polcy": "mpc"})

    def test_bad_policy_rejected(self):
        with pytest.raises(ValidationError, match="policy"):
            config_from_dict({"preset": "wallonia-2020", "policy": "oldest-first"})

    def test_round_trip(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(
            json.dumps({"preset": "wallonia-2020", "policy": "national"})
        )
        config = load_config(path)
        again = config_from_dict(json.loads(config.to_json()))
        assert again.to_dict() == config.to_dict()
        assert again.fingerprint() == config.fingerprint()

    def test_invalid_json_reported(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{not json")
        with pytest.raises(ValidationError, match="invalid JSON"):
            load_config(path)

    def test_preset_overrides_merge(self):
        config = config_from_dict(
            {"preset": "wallonia-2020", "mpc": {"rng_seed": 9}}
        )
        assert config.mpc.rng_seed == 9
        assert config.mpc.horizon == 40  # untouched preset value


class TestContactMatrixLoading:
    def test_raw_normalization_divides_columns(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("1.0,1.0\n1.0,1.0\n")
        got = load_contact_matrix(str(path), True, np.array([100.0, 200.0]))
        assert np.allclose(got, np.array([[0.01, 0.005], [0.01, 0.005]]))

    def test_identity_raw_diagonal(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("1.0,0.0\n0.0,1.0\n")
        got = load_contact_matrix(str(path), True, np.array([100.0, 200.0]))
        assert np.allclose(got, np.diag([0.01, 0.005]))

    def test_zero_matrix_means_no_transmission(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("0,0\n0,0\n")
        got = load_contact_matrix(str(path), False, np.array([10.0, 10.0]))
        assert not got.any()

    def test_non_numeric_cell_rejected(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("1.0,x\n0.0,1.0\n")
        with pytest.raises(ValidationError, match="non-numeric"):
            load_contact_matrix(str(path), False, np.array([10.0, 10.0]))

    def test_wrong_shape_rejected(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("1.0,2.0,3.0\n4.0,5.0,6.0\n7.0,8.0,9.0\n")
        with pytest.raises(ValidationError, match="shape"):
            load_contact_matrix(str(path), False, np.array([10.0, 10.0]))

    def test_negative_entry_rejected(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("1.0,-2.0\n1.0,1.0\n")
        with pytest.raises(ValidationError, match="nonnegative"):
            load_contact_matrix(str(path), False, np.array([10.0, 10.0]))


def synthetic_run(d_day61, d_day140, policy="national"):
    """A run whose only meaningful content is the total-deceased series."""
    n_days = 140
    d = np.zeros((n_days + 1, 1))
    d[:, 0] = np.linspace(0.0, d_day61, n_days + 1)
    d[60, 0] = d_day61
    d[139:, 0] = d_day140
    traj = Trajectory(
        s=np.zeros((n_days + 1, 1)),
        i=np.zeros((n_days + 1, 1)),
        r=np.zeros((n_days + 1, 1)),
        d=d,
        applied_u=np.zeros((n_days, 1)),
    )
    params = vaxmpc.ModelParams(
        lam=np.array([0.1]),
        gamma_r=np.array([0.5]),
        gamma_d=np.array([0.1]),
        population=np.array([1000.0]),
        contact=np.array([[1e-4]]),
    )
    return ScenarioResult(
        policy=policy,
        trajectory=traj,
        controls=np.zeros((n_days, 1)),
        params=params,
        v_bar=55191.0,
        vaccination_start_day=61,
        eradication_threshold=np.array([1.0]),
    )


class TestMetrics:
    def test_zero_infection_run(self, desk_params):
        state = vaxmpc.initial_state(desk_params, np.zeros(2))
        cfg = vaxmpc.MpcConfig(
            horizon=3, v_bar=100.0, vaccination_start_day=1, strategy_horizon=10
        )
        run = vaxmpc.run_policy_loop(state, cfg, desk_params, "none")
        metrics = vaxmpc.compute_metrics(run)
        assert metrics.deaths_total == 0.0
        assert metrics.cumulative_incidence == 0.0
        assert metrics.vaccines_used == 0.0
        assert metrics.eradication_day == 1  # already below threshold

    def test_decreasing_age_reference_series(self):
        metrics = vaxmpc.compute_metrics(
            synthetic_run(DEATHS_DAY_61, DEATHS_DAY_140_NATIONAL)
        )
        assert metrics.deaths_since_vax == pytest.approx(911.5456, abs=1e-4)
        assert int(metrics.deaths_since_vax) == 911

    def test_predictive_reference_series(self):
        metrics = vaxmpc.compute_metrics(
            synthetic_run(DEATHS_DAY_61, DEATHS_DAY_140_MPC, policy="mpc")
        )
        assert metrics.deaths_since_vax == pytest.approx(851.4070, abs=1e-4)
        assert int(metrics.deaths_since_vax) == 851

    def test_additivity_of_death_split(self, desk_params, desk_state0):
        cfg = vaxmpc.MpcConfig(
            horizon=3, v_bar=400.0, vaccination_start_day=5, strategy_horizon=20
        )
        run = vaxmpc.run_policy_loop(desk_state0, cfg, desk_params, "national")
        metrics = vaxmpc.compute_metrics(run)
        deaths_at_start = float(run.trajectory.d[4].sum())
        assert metrics.deaths_total == pytest.approx(
            metrics.deaths_since_vax + deaths_at_start, rel=1e-12
        )

    def test_cumulative_incidence_counts_seeding(self, desk_params, desk_state0):
        cfg = vaxmpc.MpcConfig(
            horizon=3, v_bar=400.0, vaccination_start_day=1, strategy_horizon=15
        )
        run = vaxmpc.run_policy_loop(desk_state0, cfg, desk_params, "none")
        metrics = vaxmpc.compute_metrics(run)
        assert metrics.cumulative_incidence >= desk_state0.i.sum()


class TestCompare:
    def test_run_compared_with_itself_is_zero_improvement(
        self, desk_params, desk_state0
    ):
        cfg = vaxmpc.MpcConfig(
            horizon=3, v_bar=400.0, vaccination_start_day=1, strategy_horizon=15
        )
        run = vaxmpc.run_policy_loop(desk_state0, cfg, desk_params, "national")
        report = vaxmpc.compare([run, run])
        entry = report.improvements[0]
        for key in ("deaths_since_vax", "cumulative_incidence", "vaccines_used"):
            assert entry[key] == 0.0

    def test_mismatched_inputs_rejected(self, desk_params, desk_state0):
        cfg = vaxmpc.MpcConfig(
            horizon=3, v_bar=400.0, vaccination_start_day=1, strategy_horizon=15
        )
        run = vaxmpc.run_policy_loop(desk_state0, cfg, desk_params, "national")
        other_state = vaxmpc.initial_state(desk_params, np.array([1.0, 1.0]))
        other = vaxmpc.run_policy_loop(other_state, cfg, desk_params, "none")
        with pytest.raises(ContractViolation):
            vaxmpc.compare([run, other])

    def test_report_renders_text_and_json(self, desk_params, desk_state0):
        cfg = vaxmpc.MpcConfig(
            horizon=3, v_bar=400.0, vaccination_start_day=1, strategy_horizon=15
        )
        none_run = vaxmpc.run_policy_loop(desk_state0, cfg, desk_params, "none")
        nat_run = vaxmpc.run_policy_loop(desk_state0, cfg, desk_params, "national")
        report = vaxmpc.compare([none_run, nat_run])
        text = report.to_text()
        assert "policy" in text and "national" in text
        payload = json.loads(report.to_json())
        assert len(payload["runs"]) == 2
        assert payload["improvements"][0]["baseline"] == "none"


class TestWriters:
    @pytest.fixture()
    def desk_run(self, desk_params, desk_state0):
        cfg = vaxmpc.MpcConfig(
            horizon=3, v_bar=400.0, vaccination_start_day=1, strategy_horizon=12
        )
        return vaxmpc.run_policy_loop(desk_state0, cfg, desk_params, "national")

    def test_csv_rows_conserve_population(self, desk_run, desk_params, tmp_path):
        write_run(desk_run, tmp_path)
        lines = (tmp_path / "trajectory.csv").read_text().strip().splitlines()
        header, rows = lines[0], lines[1:]
        assert header == "day,group,S,I,R,D,applied_u"
        by_day = {}
        for row in rows:
            cells = row.split(",")
            day = int(cells[0])
            by_day.setdefault(day, 0.0)
            by_day[day] += sum(float(c) for c in cells[2:6])
        total = desk_params.population.sum()
        for day, value in by_day.items():
            assert value == pytest.approx(total, rel=1e-9)

    def test_metrics_payload_round_trips(self, desk_run, tmp_path):
        metrics = write_run(desk_run, tmp_path, fingerprint="abc123")
        payload = json.loads((tmp_path / "metrics.json").read_text())
        assert payload["fingerprint"] == "abc123"
        assert payload["metrics"] == metrics.to_dict()

    def test_writes_are_deterministic(self, desk_run, tmp_path):
        write_run(desk_run, tmp_path / "a")
        write_run(desk_run, tmp_path / "b")
        for name in ("trajectory.csv", "metrics.json"):
            assert (tmp_path / "a" / name).read_bytes() == (
                tmp_path / "b" / name
            ).read_bytes()

    def test_compare_run_dirs_checks_fingerprints(self, desk_run, tmp_path):
        write_run(desk_run, tmp_path / "a", fingerprint="one")
        write_run(desk_run, tmp_path / "b", fingerprint="two")
        with pytest.raises(ContractViolation):
            compare_run_dirs([tmp_path / "a", tmp_path / "b"])

    def test_diagnostics_written_for_predictive_runs(
        self, desk_params, desk_state0, desk_cfg, tmp_path
    ):
        run = vaxmpc.run_closed_loop(desk_state0, desk_cfg, desk_params)
        write_run(run, tmp_path)
        lines = (tmp_path / "diagnostics.jsonl").read_text().strip().splitlines()
        assert len(lines) == run.n_days
        first = json.loads(lines[0])
        assert {"day", "V_N0", "feasible", "terminal_slack", "applied_u"} <= set(first)
