import numpy as np
import pytest
import yaml

from bb84_mismatch.config import (
    ConfigError,
    DEFAULT_CONFIG,
    config_from_data,
    dump_config,
    load_config,
    normalize_data,
    parse_loss_range,
)


class TestDefaults:
    def test_empty_input_gives_defaults(self):
        cfg = config_from_data({})
        assert cfg.params.fidelity == 0.98
        assert cfg.params.click_model == "paper_approx"
        np.testing.assert_allclose(cfg.params.dark_counts, 1e-6)
        assert cfg.emap.eta[0, 0] == 0.1
        assert cfg.emap.eta[0, 1] == 0.001
        assert cfg.eve.p_correct == 0.5
        np.testing.assert_allclose(cfg.policy.weights, 0.25)
        assert cfg.loss_db == 6.0
        assert cfg.losses is None
        assert cfg.alice_mu == 0.5
        assert cfg.nominal_eta == 0.1
        assert cfg.optimizer.restarts == 64
        assert cfg.optimizer.seed == 2024
        assert cfg.warm_start is True
        assert cfg.strategy_space == "generalized_32"
        assert cfg.constraint_mode == "total_rate"

    def test_none_input_equals_empty(self):
        assert normalize_data(None) == normalize_data({})

    def test_shipped_default_file_matches_builtin(self):
        with open("configs/default.yaml", "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
        assert normalize_data(data) == normalize_data({})

    def test_scenario_and_channel_helpers(self):
        cfg = config_from_data({})
        scenario = cfg.scenario()
        assert scenario.nominal_eta == 0.1
        assert cfg.channel().loss_db == 6.0
        assert cfg.channel(12.5).loss_db == 12.5
        assert cfg.channel().alice_mu == 0.5


class TestValidation:
    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError) as err:
            normalize_data({"stratgy_space": "restricted_4"})
        assert err.value.path == "stratgy_space"

    def test_unknown_nested_key(self):
        with pytest.raises(ConfigError) as err:
            normalize_data({"receiver": {"fidelty": 0.9}})
        assert err.value.path == "receiver.fidelty"

    def test_bad_fidelity_path(self):
        with pytest.raises(ConfigError) as err:
            normalize_data({"receiver": {"fidelity": 0.4}})
        assert err.value.path == "receiver"
        assert "fidelity" in str(err.value)

    def test_bad_click_model(self):
        with pytest.raises(ConfigError) as err:
            normalize_data({"receiver": {"click_model": "exact"}})
        assert err.value.path == "receiver.click_model"

    def test_bad_efficiency_map_shape(self):
        with pytest.raises(ConfigError) as err:
            normalize_data({"receiver": {"efficiency_map": [[0.1] * 4] * 3}})
        assert err.value.path == "receiver.efficiency_map"

    def test_bad_efficiency_value(self):
        table = [[0.1] * 4 for _ in range(4)]
        table[2][1] = 1.5
        with pytest.raises(ConfigError) as err:
            normalize_data({"receiver": {"efficiency_map": table}})
        assert err.value.path == "receiver.efficiency_map"

    def test_efficiency_map_mixed_keys(self):
        with pytest.raises(ConfigError):
            normalize_data({"receiver": {"efficiency_map": {"diagonal": 0.1, "uniform": 0.2}}})

    def test_eve_over_unity(self):
        with pytest.raises(ConfigError) as err:
            normalize_data({"eve": {"p_correct": 0.9, "p_noncompat": 0.2}})
        assert err.value.path == "eve"

    def test_scrambling_weights_must_sum_to_one(self):
        with pytest.raises(ConfigError) as err:
            normalize_data({"scrambling": {"weights": [0.5, 0.5, 0.5, 0.5]}})
        assert err.value.path == "scrambling.weights"

    def test_negative_loss(self):
        with pytest.raises(ConfigError) as err:
            normalize_data({"channel": {"loss_db": -1.0}})
        assert err.value.path == "channel.loss_db"

    def test_bad_optimizer_int(self):
        with pytest.raises(ConfigError) as err:
            normalize_data({"optimizer": {"restarts": 2.5}})
        assert err.value.path == "optimizer.restarts"

    def test_bool_is_not_a_number(self):
        with pytest.raises(ConfigError):
            normalize_data({"channel": {"alice_mu": True}})

    def test_bad_strategy_space(self):
        with pytest.raises(ConfigError) as err:
            normalize_data({"strategy_space": "huge"})
        assert err.value.path == "strategy_space"

    def test_non_mapping_rejected(self):
        with pytest.raises(ConfigError):
            normalize_data({"receiver": [1, 2, 3]})


class TestNormalization:
    def test_round_trip_idempotent(self):
        data = {
            "receiver": {"efficiency_map": {"uniform": 0.2}, "dark_counts": [0, 1e-5, 0, 0]},
            "channel": {"losses": "0:4:2"},
            "strategy_space": "restricted_4",
        }
        once = normalize_data(data)
        text = dump_config(once)
        twice = normalize_data(yaml.safe_load(text))
        assert once == twice
        assert dump_config(twice) == text

    def test_normalized_expands_forms(self):
        normalized = normalize_data(
            {"receiver": {"efficiency_map": {"diagonal": 0.3, "off_diagonal": 0.02},
                          "dark_counts": 1e-5}}
        )
        table = normalized["receiver"]["efficiency_map"]
        assert table[0][0] == 0.3 and table[0][1] == 0.02
        assert normalized["receiver"]["dark_counts"] == [1e-5] * 4
        assert normalized["channel"]["losses"] is None

    def test_losses_forms(self):
        assert normalize_data({"channel": {"losses": "0:10:5"}})["channel"]["losses"] == [0.0, 5.0, 10.0]
        assert normalize_data({"channel": {"losses": [1, 2.5]}})["channel"]["losses"] == [1.0, 2.5]
        with pytest.raises(ConfigError) as err:
            normalize_data({"channel": {"losses": [3.0, -1.0]}})
        assert err.value.path == "channel.losses[1]"

    def test_sha_is_stable_and_distinguishes(self):
        a = config_from_data({})
        b = config_from_data({})
        c = config_from_data({"channel": {"loss_db": 7.0}})
        assert a.sha256 == b.sha256
        assert a.sha256 != c.sha256
        assert len(a.sha256) == 64

    def test_default_config_is_itself_valid(self):
        assert normalize_data(DEFAULT_CONFIG)["optimizer"]["restarts"] == 64


class TestLossRange:
    def test_inclusive_grid(self):
        assert parse_loss_range("0:20:5") == [0.0, 5.0, 10.0, 15.0, 20.0]
        assert parse_loss_range("2:2:1") == [2.0]
        assert parse_loss_range("0:1:0.25") == [0.0, 0.25, 0.5, 0.75, 1.0]

    def test_accumulated_step_not_repeated_addition_drift(self):
        losses = parse_loss_range("0:2:0.1")
        assert len(losses) == 21
        assert losses[-1] == pytest.approx(2.0, abs=1e-12)
        for i, v in enumerate(losses):
            assert v == 0.0 + i * 0.1

    def test_bad_ranges(self):
        for text in ("1:2", "a:b:c", "5:1:1", "0:5:0", "0:5:-1"):
            with pytest.raises(ValueError):
                parse_loss_range(text)


class TestLoadConfig:
    def test_env_var_fallback(self, tmp_path, monkeypatch):
        path = tmp_path / "scenario.yaml"
        path.write_text("channel: {loss_db: 9.5}\n")
        monkeypatch.setenv("BB84_MISMATCH_CONFIG", str(path))
        cfg = load_config(None)
        assert cfg.loss_db == 9.5

    def test_explicit_path_beats_env(self, tmp_path, monkeypatch):
        a = tmp_path / "a.yaml"
        a.write_text("channel: {loss_db: 1.0}\n")
        b = tmp_path / "b.yaml"
        b.write_text("channel: {loss_db: 2.0}\n")
        monkeypatch.setenv("BB84_MISMATCH_CONFIG", str(a))
        assert load_config(str(b)).loss_db == 2.0

    def test_no_env_no_path_gives_defaults(self, monkeypatch):
        monkeypatch.delenv("BB84_MISMATCH_CONFIG", raising=False)
        assert load_config(None).loss_db == 6.0

    def test_missing_file_raises_config_error(self):
        with pytest.raises(ConfigError):
            load_config("/definitely/not/here.yaml")

    def test_invalid_yaml_raises_config_error(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("receiver: [unclosed\n")
        with pytest.raises(ConfigError):
            load_config(str(path))

    def test_empty_file_gives_defaults(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        assert load_config(str(path)).loss_db == 6.0
