import json

import pytest

from vicsekkit.cli import main
from vicsekkit.config import DEFAULTS, parse_config, resolve_config
from vicsekkit.errors import ConfigError


def write_config(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


class TestParseConfig:
    def test_minimal_config_gets_defaults(self, tmp_path):
        cfg = parse_config(write_config(tmp_path / "c.json",
                                        {"preset": "classic-vicsek"}))
        assert cfg["kinetic"]["n_theta"] == DEFAULTS["kinetic"]["n_theta"]
        assert cfg["particles"]["scheme"] == "stratonovich-heun"
        assert cfg.coeffs().name == "classic-vicsek"

    def test_alpha_out_of_range_names_key(self, tmp_path):
        with pytest.raises(ConfigError) as err:
            parse_config(write_config(tmp_path / "c.json", {"alpha": 1.5}))
        assert "alpha" in str(err.value)

    def test_duplicate_key_rejected(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text('{"seed": 1, "seed": 2}')
        with pytest.raises(ConfigError) as err:
            parse_config(str(p))
        assert "duplicate" in str(err.value)

    def test_unknown_key_has_path(self, tmp_path):
        with pytest.raises(ConfigError) as err:
            parse_config(write_config(tmp_path / "c.json",
                                      {"kinetic": {"ntheta": 12}}))
        assert "kinetic.ntheta" in str(err.value)

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            parse_config("/no/such/file.json")

    def test_syntax_error(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{not json}")
        with pytest.raises(ConfigError):
            parse_config(str(p))

    def test_bad_types(self):
        with pytest.raises(ConfigError):
            resolve_config({"seed": "abc"})
        with pytest.raises(ConfigError):
            resolve_config({"particles": {"N": 2.5}})
        with pytest.raises(ConfigError):
            resolve_config({"sweep": {"Ns": [64, 16]}})

    def test_kinetic_initial_normalized(self, tmp_path):
        cfg = parse_config(write_config(
            tmp_path / "c.json",
            {"initial": {"kappa": 3.0, "perturbation": 0.25}},
        ))
        state = cfg.kinetic_initial()
        assert state.mass() == pytest.approx(1.0, abs=1e-12)


BASE = {
    "preset": "classic-vicsek",
    "seed": 7,
    "initial": {"orientation": "von-mises", "kappa": 2.0},
    "kinetic": {"n_theta": 96, "T": 0.05, "dt": 0.001,
                "mode": "exact", "snapshot_stride": 10},
    "particles": {"N": 16, "dt": 0.001, "T": 0.02, "snapshot_stride": 10},
    "sweep": {"Ns": [8, 32], "replicas": 3, "T": 0.05, "dt": 0.002},
    "fluxprob": {"Ns": [8, 32], "replicas": 4, "seed_sets": 2},
}


def run_cmd(tmp_path, command, overrides=None, name="cfg.json", out="run"):
    payload = dict(BASE)
    payload.update(overrides or {})
    payload["out"] = str(tmp_path / out)
    cfg_path = write_config(tmp_path / name, payload)
    code = main([command, "--config", cfg_path])
    return code, tmp_path / out


class TestCommands:
    def test_constants_emits_positive_fields(self, tmp_path, capsys):
        code, out = run_cmd(tmp_path, "constants")
        assert code == 0
        payload = json.loads((out / "constants.json").read_text())
        for key in ("M0", "J0", "T0", "T1"):
            assert payload[key] > 0.0
        assert payload["c_star_T1"] > 0.0
        assert (out / "manifest.json").exists()

    def test_kinetic_writes_tables_and_checks(self, tmp_path):
        code, out = run_cmd(tmp_path, "kinetic")
        assert code == 0
        header = (out / "kinetic_diagnostics.csv").read_text().splitlines()[0]
        assert header == "t,mass,l2,linf,min_flux,F,D,residual"
        header2 = (out / "kinetic_snapshots.csv").read_text().splitlines()[0]
        assert header2 == "t,x_index,theta_index,f"
        checks = json.loads((out / "checks.json").read_text())
        assert checks["mass_ok"] and checks["positivity_ok"]
        assert checks["flux_floor_ok"]

    def test_rerun_is_byte_identical(self, tmp_path):
        _, out1 = run_cmd(tmp_path, "kinetic", out="run_a")
        _, out2 = run_cmd(tmp_path, "kinetic", out="run_b")
        for name in ("kinetic_diagnostics.csv", "kinetic_snapshots.csv",
                     "checks.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_exact_solve_with_degenerate_flux_exits_nonzero(
        self, tmp_path, capsys
    ):
        code, _ = run_cmd(
            tmp_path, "kinetic",
            overrides={"initial": {"orientation": "uniform", "kappa": 0.0}},
        )
        assert code == 3
        assert "singular" in capsys.readouterr().err.lower()

    def test_invalid_config_exit_code(self, tmp_path, capsys):
        code, _ = run_cmd(tmp_path, "constants", overrides={"alpha": 2.0})
        assert code == 2

    def test_particles_table_schema(self, tmp_path):
        code, out = run_cmd(tmp_path, "particles")
        assert code == 0
        lines = (out / "particles_trajectory.csv").read_text().splitlines()
        assert lines[0] == "replica,t,i,x_1,x_2,v_1,v_2,flux_norm"
        header2 = (out / "particles_summary.csv").read_text().splitlines()[0]
        assert header2 == ("replica,t,mean_v_norm,min_flux_norm,"
                           "free_energy,dissipation")
        # one row per (snapshot, particle)
        n_snapshots = len(
            (out / "particles_summary.csv").read_text().splitlines()
        ) - 1
        assert len(lines) - 1 == n_snapshots * 16

    def test_energy_checks(self, tmp_path):
        code, out = run_cmd(
            tmp_path, "energy",
            overrides={"initial": {"orientation": "von-mises", "kappa": 2.0,
                                   "perturbation": 0.3}},
        )
        assert code == 0
        checks = json.loads((out / "checks.json").read_text())
        assert checks["energy_monotone"] and checks["energy_residual_ok"]

    def test_coupling_run(self, tmp_path):
        code, out = run_cmd(tmp_path, "coupling")
        assert code == 0
        lines = (out / "coupling.csv").read_text().splitlines()
        assert lines[0] == "t,msd"
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["coupling"]["sup_t_msd"] >= 0.0

    def test_sweep_tables_and_monotonicity(self, tmp_path):
        code, out = run_cmd(tmp_path, "sweep")
        assert code == 0
        header = (out / "sweep_results.csv").read_text().splitlines()[0]
        assert header == "N,replica,sup_t_msd,w2_final,min_flux,flux_ok_flag"
        agg = (out / "sweep_aggregate.csv").read_text().splitlines()
        assert agg[0] == "N,eps_hat_median,eps_hat_iqr,prob_empirical,prob_floor"
        assert len(agg) == 3  # two Ns

    def test_fluxprob_runs(self, tmp_path):
        code, out = run_cmd(tmp_path, "fluxprob")
        assert code == 0
        header = (out / "fluxprob.csv").read_text().splitlines()[0]
        assert header == "N,seed_set,prob_empirical,prob_floor,eps0,c_star,T"
        checks = json.loads((out / "checks.json").read_text())
        assert checks["fluxprob_nondecreasing"]

    def test_threads_do_not_change_results(self, tmp_path):
        payload = dict(BASE)
        payload["out"] = str(tmp_path / "serial")
        p1 = write_config(tmp_path / "c1.json", payload)
        assert main(["sweep", "--config", p1]) == 0
        payload2 = dict(BASE)
        payload2["out"] = str(tmp_path / "threaded")
        p2 = write_config(tmp_path / "c2.json", payload2)
        assert main(["sweep", "--config", p2, "--threads", "4"]) == 0
        a = (tmp_path / "serial" / "sweep_results.csv").read_bytes()
        b = (tmp_path / "threaded" / "sweep_results.csv").read_bytes()
        assert a == b

    def test_seed_and_out_overrides(self, tmp_path):
        payload = dict(BASE)
        payload["out"] = str(tmp_path / "ignored")
        p = write_config(tmp_path / "c.json", payload)
        code = main(["constants", "--config", p, "--seed", "99",
                     "--out", str(tmp_path / "chosen")])
        assert code == 0
        manifest = json.loads((tmp_path / "chosen" / "manifest.json").read_text())
        assert manifest["config"]["seed"] == 99
