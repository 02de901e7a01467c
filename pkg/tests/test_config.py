#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
config 模块测试：场景配置的解析、默认值与错误报告
"""

from fractions import Fraction
from pathlib import Path

import pytest

from reactkin.config import (DEFAULT_OUTPUT_DIR, OPTION_DEFAULTS, load_config, parse_config, parse_mass)
from reactkin.equilibrium import mass_action_rhs
from reactkin.exceptions import ConfigError


class TestParseMass:
    """测试质量字段"""

    def test_integer(self):
        assert parse_mass(2) == Fraction(2)

    def test_rational_string(self):
        assert parse_mass("3/2") == Fraction(3, 2)
        assert parse_mass(" 7 ") == Fraction(7)

    def test_float_kept(self):
        value = parse_mass(1.5)
        assert isinstance(value, float) and value == 1.5

    @pytest.mark.parametrize("value", ["abc", "1/0", True, None, [1]])
    def test_invalid(self, value):
        with pytest.raises(ConfigError):
            parse_mass(value)


class TestParseConfig:
    """测试完整配置的解析"""

    def test_reference(self, reference_config):
        config = parse_config(reference_config)
        assert config.scenario == "validate"
        assert len(config.table) == 3
        assert config.table[3].mass == Fraction(2)
        assert config.table[3].is_poly
        assert len(config.channels) == 1
        ch = config.channels[0]
        assert (ch.product, ch.reactant_a, ch.reactant_b) == (3, 1, 2)
        assert ch.k_transition == 0.6
        assert config.model.c(2, 3) == 1.0
        assert config.quad.seed == 7
        assert config.seed == 7
        assert config.kB == 1.0
        assert config.output_dir == Path(DEFAULT_OUTPUT_DIR)

    def test_channel_by_index(self, reference_config):
        reference_config["channels"][0]["product"] = 3
        reference_config["channels"][0]["reactants"] = [2, "A"]
        ch = parse_config(reference_config).channels[0]
        assert (ch.product, ch.reactant_a, ch.reactant_b) == (3, 2, 1)

    def test_option_defaults(self, reference_config):
        """未给出的场景参数取默认值"""
        reference_config["scenario"] = "relax"
        reference_config["options"] = {"relax": {"steps": 5}}
        config = parse_config(reference_config)
        assert config.option("steps") == 5
        assert config.option("dt") == OPTION_DEFAULTS["relax"]["dt"]

    def test_other_scenario_options_checked(self, reference_config):
        """其它场景的参数块也检查字段名"""
        reference_config["options"] = {"spectrum": {"degre": 2}}
        with pytest.raises(ConfigError):
            parse_config(reference_config)

    def test_c_mech_matrix(self, reference_config):
        reference_config["cross_sections"] = {"eta": 0.5, "c_mech": [[1, 2, 3], [2, 1, 1], [3, 1, 1]]}
        model = parse_config(reference_config).model
        assert model.eta == 0.5
        assert model.c(1, 3) == 3.0

    def test_no_channels(self, reference_config):
        del reference_config["channels"]
        assert parse_config(reference_config).channels == ()

    def test_to_dict(self, reference_config):
        echo = parse_config(reference_config).to_dict()
        assert echo["species"][2]["mass"] == "2"
        assert echo["channels"][0]["reactants"] == [1, 2]
        assert echo["quadrature"]["seed"] == 7
        assert "output" not in echo


class TestConfigErrors:
    """测试无效配置"""

    @pytest.mark.parametrize("mutate", [
        lambda c: c.update(extra=1),
        lambda c: c.update(scenario="fly"),
        lambda c: c.pop("species"),
        lambda c: c["species"][0].update(colour="red"),
        lambda c: c["species"][0].update(kind="triatomic"),
        lambda c: c["species"][2].pop("dof"),
        lambda c: c["species"][1].update(name="A"),
        lambda c: c["species"][0].update(mass=-1),
        lambda c: c["species"][0].pop("eps0"),
        lambda c: c["channels"][0].update(product="X"),
        lambda c: c["channels"][0].update(reactants=["A"]),
        lambda c: c["channels"][0].pop("k_transition"),
        lambda c: c["cross_sections"].update(c_mech=[[1, 1], [1, 1]]),
        lambda c: c["cross_sections"].update(eta="hard"),
        lambda c: c["background"].update(n=[1.0, 1.0, 1.0]),
        lambda c: c["background"].update(T=0),
        lambda c: c["background"].update(n0=[1.0, -1.0, 1.0]),
        lambda c: c["background"].update(u=[0.0, 0.0]),
        lambda c: c["quadrature"].update(mode="sparse"),
        lambda c: c["quadrature"].update(orders={"unit": 0}),
        lambda c: c["quadrature"].update(orders={"radial": 4}),
        lambda c: c["quadrature"].update(seed=1.5),
        lambda c: c.update(options={"nosuch": {}}),
        lambda c: c.update(output={"path": "x"}),
    ], ids=[
        "unknown_top", "unknown_scenario", "no_species", "unknown_species_key", "bad_kind", "poly_without_dof",
        "duplicate_name", "negative_mass", "missing_eps0", "unknown_product", "one_reactant", "missing_k",
        "c_mech_shape", "eta_type", "n_and_n0", "zero_T", "negative_n0", "u_shape", "bad_mode", "zero_order",
        "unknown_order", "float_seed", "unknown_options_block", "unknown_output_key",
    ])
    def test_rejected(self, reference_config, mutate):
        mutate(reference_config)
        with pytest.raises(ConfigError):
            parse_config(reference_config)

    def test_not_an_object(self):
        with pytest.raises(ConfigError):
            parse_config([1, 2, 3])


class TestBackgroundParams:
    """测试背景参数"""

    def test_equilibrated(self, reference_config, reference_table, reference_channel):
        """从 n0 出发求质量作用律平衡"""
        params = parse_config(reference_config).background_params()
        ratio = params.n[0] * params.n[1] / params.n[2]
        assert ratio == pytest.approx(mass_action_rhs(reference_table, reference_channel, 1.0), rel=1e-10)
        assert params.n[0] + params.n[2] == pytest.approx(2.0, rel=1e-12)

    def test_explicit_densities(self, reference_config):
        reference_config["background"] = {"T": 2.0, "n": [0.5, 0.5, 0.25]}
        params = parse_config(reference_config).background_params()
        assert params.n == (0.5, 0.5, 0.25)
        assert params.T == 2.0

    def test_density_count(self, reference_config):
        reference_config["background"] = {"n": [1.0, 1.0]}
        with pytest.raises(ConfigError):
            parse_config(reference_config).background_params()


class TestOverrides:
    """测试命令行覆盖"""

    def test_overrides(self, reference_config, temp_output_dir):
        config = parse_config(reference_config).with_overrides(seed=3, mode="monte_carlo", samples=100,
                                                               output_dir=temp_output_dir,
                                                               debug_fault="kernel_factor")
        assert config.seed == 3
        assert config.quad.is_mc
        assert config.quad.mc_samples == 100
        assert config.quad.debug_fault == "kernel_factor"
        assert config.output_dir == temp_output_dir

    def test_samples_reach_scenario_option(self, reference_config):
        """--samples 同时覆盖场景自带的样本数"""
        reference_config["scenario"] = "conservation"
        config = parse_config(reference_config)
        assert config.option("samples") == OPTION_DEFAULTS["conservation"]["samples"]
        overridden = config.with_overrides(samples=500)
        assert overridden.option("samples") == 500
        assert overridden.quad.mc_samples == 500

    def test_samples_without_scenario_option(self, reference_config):
        reference_config["scenario"] = "relax"
        config = parse_config(reference_config).with_overrides(samples=500)
        assert "samples" not in config.options
        assert config.option("start") == "maxwellian"
        assert config.option("orders") is None

    def test_no_overrides(self, reference_config):
        config = parse_config(reference_config)
        assert config.with_overrides() == config

    def test_invalid_override(self, reference_config):
        with pytest.raises(ConfigError):
            parse_config(reference_config).with_overrides(samples=0)


class TestLoadConfig:
    """测试配置文件读取"""

    def test_load(self, reference_config, write_config):
        path = write_config(reference_config)
        assert load_config(path).scenario == "validate"
        assert load_config(str(path)).table[1].name == "A"

    def test_missing_file(self, temp_output_dir):
        with pytest.raises(ConfigError):
            load_config(temp_output_dir / "nope.json")

    def test_invalid_json(self, temp_output_dir):
        path = temp_output_dir / "broken.json"
        path.write_text("{scenario: validate", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_shipped_reference(self):
        """仓库自带的参考配置可以解析"""
        path = Path(__file__).resolve().parent.parent / "configs" / "reference.json"
        config = load_config(path)
        assert [sp.name for sp in config.table] == ["A", "B", "P"]
