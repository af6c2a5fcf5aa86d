import json
import math

import numpy as np
import pytest

from frustrated_fermions import cli, harness
from frustrated_fermions.errors import EnsembleFailure, ParameterError
from frustrated_fermions.harness import (
    CONFIG_KEYS,
    EnsembleResult,
    RunConfig,
    cached_ensemble,
    config_fields,
    run_ensemble,
    run_sweep,
    run_trajectory,
    sweep_configs,
)
from frustrated_fermions.io import CQ_COLUMNS, OBSERVABLE_COLUMNS, emit_outputs, read_csv_columns
from frustrated_fermions.observables import measure

SMALL = dict(L=8, gamma=1.0, t_equil_factor=0.1, t_avg_window=2.0, sample_stride=0.5, master_seed=3)


@pytest.fixture(scope="module")
def small_result():
    return run_ensemble(RunConfig(n_traj=4, **SMALL), workers=1)


class TestConfig:
    def test_keys(self):
        assert config_fields() == CONFIG_KEYS
        assert len(CONFIG_KEYS) == 14

    def test_unknown_key_rejected(self):
        with pytest.raises(ParameterError):
            RunConfig.from_dict({"L": 8, "gama": 1.0})

    @pytest.mark.parametrize("kw", [
        dict(L=7), dict(L=8, n_traj=0), dict(L=8, t_avg_window=-1), dict(L=8, sample_stride=0),
        dict(L=8, observables=["S_half", "entropy"]), dict(L=8, theta_over_pi=1.5),
    ])
    def test_invalid(self, kw):
        with pytest.raises(ParameterError):
            RunConfig(**kw)

    def test_zero_window_single_sample(self):
        cfg = RunConfig(L=8, t_avg_window=0.0, t_equil_factor=0.05)
        assert cfg.n_samples == 1
        assert len(run_trajectory(cfg, 0)) == 1

    def test_sampling_schedule(self):
        cfg = RunConfig(**SMALL)
        recs = run_trajectory(cfg, 0)
        assert len(recs) == 5
        np.testing.assert_allclose([r.t for r in recs], 6.4 + 0.5 * np.arange(5), atol=1e-12)

    def test_free_evolution_samples(self, monkeypatch):
        traces = []

        def spy(G, t=0.0):
            traces.append(np.trace(G).real)
            return measure(G, t)

        monkeypatch.setattr(harness, "measure", spy)
        cfg = RunConfig(L=12, gamma=0.0, theta_over_pi=0.3, t_equil_factor=0.5, t_avg_window=40.0)
        recs = run_trajectory(cfg, 0)
        assert len(traces) == len(recs) == 41
        np.testing.assert_allclose(traces, 6, atol=1e-10)
        S = np.array([r.S_half for r in recs])
        # unitary dynamics: stationary fluctuations around a plateau below the maximum
        assert abs(S[:20].mean() - S[21:].mean()) < S.std()
        assert S.max() < 6 * math.log(2)

    def test_hash_ignores_output_path(self):
        a = RunConfig(L=8)
        assert a.config_hash() == a.with_(output_path="x").config_hash()
        assert a.config_hash() != a.with_(master_seed=1).config_hash()

    def test_json_config(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"L": 16, "gamma": 4.0, "observables": ["G_AB"]}))
        cfg = RunConfig.from_json(p)
        assert cfg.L == 16 and cfg.observables == ("G_AB",)
        p.write_text("{not json")
        with pytest.raises(ParameterError):
            RunConfig.from_json(p)


class TestEnsemble:
    def test_deterministic(self, small_result):
        again = run_ensemble(RunConfig(n_traj=4, **SMALL), workers=1)
        assert again.same_numbers(small_result)

    def test_worker_count_independent(self, small_result):
        assert run_ensemble(RunConfig(n_traj=4, **SMALL), workers=2).same_numbers(small_result)

    def test_single_trajectory_errors_nan(self):
        res = run_ensemble(RunConfig(n_traj=1, **SMALL), workers=1)
        assert math.isnan(res.errors["S_half"])
        assert np.all(np.isnan(res.errors["Cq"]))

    def test_standard_error(self, small_result):
        vals = np.array([s.means["S_half"] for s in small_result.trajectories])
        assert small_result.means["S_half"] == pytest.approx(vals.mean())
        assert small_result.errors["S_half"] == pytest.approx(vals.std(ddof=1) / 2)

    def test_merge_is_pooling(self, small_result):
        cfg = RunConfig(n_traj=4, **SMALL)
        units = [harness._run_unit((cfg.to_dict(), t)) for t in range(4)]
        a = EnsembleResult.aggregate(cfg, units[:2])
        b = EnsembleResult.aggregate(cfg, units[2:])
        assert a.merge(b).same_numbers(small_result)
        assert small_result.means["S_half"] == pytest.approx((a.means["S_half"] + b.means["S_half"]) / 2)

    def test_json_round_trip(self, small_result, tmp_path):
        small_result.to_json(tmp_path / "r.json")
        back = EnsembleResult.from_json(tmp_path / "r.json")
        assert back.same_numbers(small_result)
        assert back.provenance == small_result.provenance
        assert back.provenance["config_hash"] == RunConfig(n_traj=4, **SMALL).config_hash()

    def test_observable_subset(self):
        res = run_ensemble(RunConfig(n_traj=2, observables=["G_AB", "S_half"], **SMALL), workers=1)
        assert set(res.means) == {"S_half", "G_AB"}

    def test_free_evolution_conserves_particle_number(self):
        res = run_ensemble(RunConfig(L=8, gamma=0.0, t_equil_factor=0.2, t_avg_window=1.0, n_traj=2), workers=1)
        assert res.means["Cbar"].sum() == pytest.approx(0, abs=1e-10)

    def test_sweep_matches_individual_runs(self, small_result):
        base = RunConfig(n_traj=4, **SMALL)
        cfgs = sweep_configs(base, L=[8, 12], gamma=[1.0])
        out = run_sweep(cfgs, workers=1)
        assert [r.run_config.L for r in out] == [8, 12]
        assert out[0].same_numbers(small_result)

    def test_cache(self, small_result, tmp_path):
        cfg = RunConfig(n_traj=4, **SMALL)
        first = cached_ensemble(cfg, tmp_path, workers=1)
        assert first.same_numbers(small_result)
        assert len(list(tmp_path.glob("*.json"))) == 1
        assert cached_ensemble(cfg, tmp_path).same_numbers(small_result)


class TestAborts:
    def _outputs(self, n_ok, n_bad, cfg):
        ok = [harness._run_unit((cfg.to_dict(), t)) for t in range(n_ok)]
        bad = [{"trajectory_id": n_ok + i, "step": 5, "diagnostic": "rank loss"} for i in range(n_bad)]
        return ok + bad

    def test_tolerated_abort_recorded(self):
        cfg = RunConfig(L=8, t_equil_factor=0.02, t_avg_window=0.0, n_traj=200)
        res = harness._collect(cfg, self._outputs(3, 2, cfg))
        assert res.n_traj == 3 and len(res.aborted) == 2

    def test_too_many_aborts(self):
        cfg = RunConfig(L=8, t_equil_factor=0.02, t_avg_window=0.0, n_traj=10)
        with pytest.raises(EnsembleFailure):
            harness._collect(cfg, self._outputs(9, 1, cfg))


class TestOutputs:
    def test_files_and_columns(self, small_result, tmp_path):
        files = emit_outputs(small_result, tmp_path, theory_tables=True)
        names = {f.name for f in files}
        assert {"ensemble.json", "observables.csv", "cq.csv", "theory_scalars.csv", "theory_cq.csv"} <= names
        header = (tmp_path / "observables.csv").read_text().splitlines()[0].split(",")
        assert tuple(header) == OBSERVABLE_COLUMNS
        cq = read_csv_columns(tmp_path / "cq.csv", CQ_COLUMNS)
        assert len(cq["q"]) == 8
        np.testing.assert_allclose(cq["q_tilde"], 2 * np.abs(np.sin(cq["q"] / 2)), atol=1e-15)
        np.testing.assert_allclose(cq["Cq"], small_result.means["Cq"])


class TestCli:
    def test_run_writes_outputs(self, tmp_path, capsys):
        code = cli.main(["run", "--L", "8", "--n-traj", "2", "--t-equil-factor", "0.05", "--t-avg-window", "1",
                         "--workers", "1", "--output-path", str(tmp_path / "o")])
        assert code == 0
        assert (tmp_path / "o" / "ensemble.json").exists()

    def test_invalid_config_exit_code(self, capsys):
        assert cli.main(["run", "--L", "7"]) == 2
        assert cli.main(["run", "--L", "8", "--theta-over-pi", "2"]) == 2

    def test_missing_config_file(self, tmp_path):
        assert cli.main(["run", "--config", str(tmp_path / "none.json")]) == 2

    def test_oracle_check(self, capsys):
        assert cli.main(["oracle-check", "--L", "4", "--steps", "10"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["passed"] and out["max_deviation"] < 1e-8

    def test_oracle_check_failure_exit(self, capsys):
        assert cli.main(["oracle-check", "--L", "4", "--steps", "10", "--tol", "0"]) == 4

    def test_theory(self, capsys):
        assert cli.main(["theory", "--gamma", "4"]) == 0
        assert "ell0" in capsys.readouterr().out

    def test_fit(self, tmp_path, capsys):
        p = tmp_path / "g.csv"
        L = np.array([32, 48, 64, 96])
        p.write_text("L,G_AB\n" + "".join(f"{l},{math.exp(-l / 40)}\n" for l in L))
        assert cli.main(["fit", str(p), "--model", "exponential_decay", "--y", "G_AB"]) == 0
        assert json.loads(capsys.readouterr().out)["params"]["ell_loc"] == pytest.approx(10)
        assert cli.main(["fit", str(p), "--model", "power_law", "--y", "missing"]) == 2
