import json
import os

import pytest

from copula_errors import ConfigurationError
from run_config import RunConfig, load_run_config, parse_run_config

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), "configs")
COVARIATES = [f"x{j}" for j in range(1, 11)]


class TestParsing:

    def test_defaults(self):
        config = load_run_config(None)
        assert config.boost.s_step == 0.1
        assert config.boost.stabilization == "L2"
        assert config.replicates == 1

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigurationError):
            parse_run_config({"seed": 1, "m_stopp": 5})

    def test_unknown_nested_key(self):
        with pytest.raises(ConfigurationError):
            parse_run_config({"boost": {"step": 0.2}})

    def test_not_an_object(self):
        with pytest.raises(ConfigurationError):
            parse_run_config([1, 2])

    def test_bad_learner_kind(self):
        with pytest.raises(ConfigurationError):
            parse_run_config({"learners": {"kind": "tree"}})

    def test_partial_model(self):
        with pytest.raises(ConfigurationError):
            parse_run_config({"pair_kind": "binary-binary",
                              "margin1": {"family": "bernoulli", "links": ["logit"]}})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_run_config(str(tmp_path / "none.json"))

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{\"seed\": ")
        with pytest.raises(ConfigurationError):
            load_run_config(str(path))

    @pytest.mark.parametrize("name", sorted(os.listdir(CONFIG_DIR)))
    def test_shipped_configs_load(self, name):
        config = load_run_config(os.path.join(CONFIG_DIR, name))
        spec = config.model_spec()
        assert len(config.learner_defs(spec, config.dgp().covariate_names)) == spec.n_params


class TestModelSpec:

    def test_preset_supplies_the_model(self):
        config = parse_run_config({"simulate": {"preset": "s2-count-linear"}})
        spec = config.model_spec()
        assert spec.param_names == ["mu1", "sigma1", "mu2", "sigma2", "nu2", "theta"]
        assert spec.copula.family_id == "joe"

    def test_explicit_model(self):
        config = parse_run_config({
            "pair_kind": "binary-continuous",
            "margin1": {"family": "bernoulli", "links": ["logit"]},
            "margin2": {"family": "gaussian"},
            "copula": {"family": "gumbel", "rotation": 180},
        })
        spec = config.model_spec()
        assert spec.copula.label == "gumbel180"
        assert spec.margin1.links == ("logit",)

    def test_univariate_flag(self):
        config = parse_run_config({"univariate": True, "simulate": {"preset": "s1-binary-linear"}})
        spec = config.model_spec()
        assert spec.univariate
        assert spec.copula.family_id == "gauss"

    def test_no_model(self):
        with pytest.raises(ConfigurationError):
            RunConfig().model_spec()

    def test_dgp_seed_override(self):
        config = parse_run_config({"seed": 3, "simulate": {"preset": "s1-binary-linear", "p": 6}})
        assert config.dgp().seed == 3
        assert config.dgp(seed=11).seed == 11
        assert config.dgp().p == 6

    def test_boost_config(self):
        config = parse_run_config({"seed": 5, "boost": {"m_stop": 7, "threads": 2}})
        boost = config.boost_config()
        assert (boost.m_stop, boost.threads, boost.seed) == (7, 2, 5)


class TestLearners:

    def test_one_candidate_per_covariate(self):
        config = parse_run_config({"simulate": {"preset": "s3-mixed-linear"},
                                   "learners": {"kind": "pspline", "df": 3.0}})
        spec = config.model_spec()
        defs = config.learner_defs(spec, COVARIATES)
        assert all(len(d) == 10 for d in defs)
        assert defs[0][0].kind == "pspline" and defs[0][0].df == 3.0

    def test_covariate_subset(self):
        config = parse_run_config({"simulate": {"preset": "s1-binary-linear"},
                                   "learners": {"covariates": ["x1", "x4"]}})
        defs = config.learner_defs(config.model_spec(), COVARIATES)
        assert [l.covariate for l in defs[1]] == ["x1", "x4"]

    def test_unknown_covariate(self):
        config = parse_run_config({"simulate": {"preset": "s1-binary-linear"},
                                   "learners": {"covariates": ["x99"]}})
        with pytest.raises(ConfigurationError):
            config.learner_defs(config.model_spec(), COVARIATES)

    def test_per_parameter_override(self):
        config = parse_run_config({
            "simulate": {"preset": "s1-binary-linear"},
            "learners": {"per_parameter": {"theta": [{"kind": "intercept"}]}},
        })
        defs = config.learner_defs(config.model_spec(), COVARIATES)
        assert [l.kind for l in defs[2]] == ["intercept"]

    @pytest.mark.parametrize("entry", [
        {"kind": "linear", "covariate": "x1", "dff": 3},
        {"kind": "pspline", "covariate": "x2", "bogus": 1},
    ])
    def test_override_with_unknown_learner_key(self, entry):
        config = parse_run_config({
            "simulate": {"preset": "s1-binary-linear"},
            "learners": {"per_parameter": {"mu1": [entry]}},
        })
        with pytest.raises(ConfigurationError, match="Unknown base-learner key"):
            config.learner_defs(config.model_spec(), COVARIATES)

    def test_override_keeps_explicit_df(self):
        config = parse_run_config({
            "simulate": {"preset": "s1-binary-linear"},
            "learners": {"per_parameter": {"mu1": [{"kind": "pspline", "covariate": "x1", "df": 3}]}},
        })
        defs = config.learner_defs(config.model_spec(), COVARIATES)
        assert defs[0][0].df == 3

    def test_override_for_unknown_parameter(self):
        config = parse_run_config({
            "simulate": {"preset": "s1-binary-linear"},
            "learners": {"per_parameter": {"nu2": [{"kind": "intercept"}]}},
        })
        with pytest.raises(ConfigurationError):
            config.learner_defs(config.model_spec(), COVARIATES)


class TestHash:

    def test_stable_across_key_order(self):
        a = parse_run_config({"seed": 2, "boost": {"m_stop": 10, "s_step": 0.05}})
        b = parse_run_config(json.loads('{"boost": {"s_step": 0.05, "m_stop": 10}, "seed": 2}'))
        assert a.config_hash() == b.config_hash()
        assert len(a.config_hash()) == 64

    def test_changes_with_values(self):
        a = parse_run_config({"seed": 2})
        b = parse_run_config({"seed": 3})
        assert a.config_hash() != b.config_hash()
