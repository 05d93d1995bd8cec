"""Property-based tests for configuration system."""

import json
import math
import tempfile
from pathlib import Path
from hypothesis import given, strategies as st, settings
import pytest

from config import RunConfig
from errors import ConfigError


@st.composite
def valid_config_dict(draw):
    """Generate a valid configuration dictionary."""
    sigma_min = draw(st.floats(min_value=-5.0, max_value=0.0))
    use_mu = draw(st.booleans())
    energy = draw(st.floats(min_value=0.1, max_value=3.0))
    model = {
        'N': draw(st.integers(min_value=1, max_value=200)),
        'alpha': draw(st.floats(min_value=0.01, max_value=100.0)),
        'delta': draw(st.floats(min_value=0.0, max_value=10.0)),
        'sigma': draw(st.floats(min_value=-10.0, max_value=10.0)),
        'energy_E': energy,
        'b': None if use_mu else draw(st.floats(min_value=0.0, max_value=energy)),
        'mu': draw(st.floats(min_value=0.0, max_value=1.0)) if use_mu else None,
    }
    taus = sorted(draw(st.lists(st.floats(min_value=1.0, max_value=500.0), min_size=1, max_size=4)))
    return {
        'model': model,
        'grids': {
            'sigma_min': sigma_min,
            'sigma_max': sigma_min + draw(st.floats(min_value=0.0, max_value=8.0)),
            'sigma_step': draw(st.floats(min_value=0.01, max_value=1.0)),
            'deltas': draw(st.lists(st.floats(min_value=0.0, max_value=5.0), min_size=1, max_size=4)),
            'thetas': [0.5],
            'taus': taus,
            'N_list': [10, 20, 40],
        },
        'variant': {
            'kind': draw(st.sampled_from(['detachment', 'attachment', 'dephosphorylation'])),
            'K': draw(st.integers(min_value=50, max_value=2000)),
        },
        'mc': {
            'trials': draw(st.integers(min_value=1, max_value=10 ** 7)),
            'seed': draw(st.integers(min_value=0, max_value=2 ** 32)),
            'workers': draw(st.integers(min_value=1, max_value=16)),
        },
    }


# Feature: kpr-toolkit, Property 1: Configuration loading
# Validates: config RunConfig.load_from_file
@settings(max_examples=100)
@given(config_data=valid_config_dict())
def test_property_configuration_loading(config_data):
    """
    Property 1: Configuration loading
    Every valid configuration file loads, with each given value in place and
    every omitted section at its default.
    """
    with tempfile.NamedTemporaryFile(mode='w', suffix='.json', delete=False) as f:
        json.dump(config_data, f)
        config_path = f.name

    try:
        config = RunConfig.load_from_file(config_path)

        assert config.model.N == config_data['model']['N']
        assert config.model.alpha == config_data['model']['alpha']
        assert config.grids.taus == config_data['grids']['taus']
        assert config.variant.kind == config_data['variant']['kind']
        assert config.mc.seed == config_data['mc']['seed']
        assert config.pde == RunConfig.get_default_config().pde
        assert config.output == RunConfig.get_default_config().output

    finally:
        Path(config_path).unlink()


# Feature: kpr-toolkit, Property 2: Configuration round trip
# Validates: config RunConfig.save_to_file / load_from_file
@settings(max_examples=100)
@given(config_data=valid_config_dict())
def test_property_configuration_round_trip(config_data):
    """
    Property 2: Configuration round trip
    Parse, serialize and parse again gives an equal configuration.
    """
    config = RunConfig.from_dict(config_data)

    with tempfile.TemporaryDirectory() as temp_dir:
        path = Path(temp_dir) / "config.json"
        config.save_to_file(str(path))
        reloaded = RunConfig.load_from_file(str(path))

    assert reloaded == config


# Feature: kpr-toolkit, Property 3: Configuration validation
# Validates: config RunConfig.validate
@settings(max_examples=100)
@given(
    broken=st.sampled_from([
        ('model', 'N', 0),
        ('model', 'alpha', -1.0),
        ('model', 'energy_E', 0.0),
        ('model', 'b', None),
        ('pde', 'cells', 5),
        ('pde', 'L', 0.5),
        ('grids', 'taus', []),
        ('variant', 'kind', 'unknown'),
        ('mc', 'trials', 0),
        ('mc', 'workers', 0),
    ])
)
def test_property_configuration_validation(broken):
    """
    Property 3: Configuration validation
    Each invalid field produces a specific validation error and loading fails.
    """
    section, key, value = broken
    config_data = RunConfig.get_default_config().to_dict()
    config_data[section][key] = value

    config = RunConfig.from_dict(config_data)
    errors = config.validate()
    assert len(errors) > 0

    with tempfile.NamedTemporaryFile(mode='w', suffix='.json', delete=False) as f:
        json.dump(config_data, f)
        config_path = f.name

    try:
        with pytest.raises(ConfigError, match="Configuration validation failed"):
            RunConfig.load_from_file(config_path)
    finally:
        Path(config_path).unlink()


class TestRunConfig:
    """Unit tests for loading, overrides and typed views."""

    def test_default_config_is_reference_parameters(self):
        config = RunConfig.get_default_config()

        assert config.validate() == []
        params = config.model_params()
        assert params.N == 20
        assert params.alpha == 1.0
        assert params.delta == 2.0
        assert params.energy_E == pytest.approx(math.log(3))
        assert params.mu_resolved == pytest.approx(2.0 ** -20, rel=1e-14)

    def test_shipped_config_matches_defaults(self):
        config = RunConfig.load_from_file(str(Path(__file__).parent / "config.json"))
        assert config == RunConfig.get_default_config()

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            RunConfig.load_from_file(str(tmp_path / "missing.json"))

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="not valid JSON"):
            RunConfig.load_from_file(str(path))

    def test_unknown_section_and_key(self):
        with pytest.raises(ConfigError, match="Unknown configuration section"):
            RunConfig.from_dict({'plots': {}})
        with pytest.raises(ConfigError, match="Unknown keys"):
            RunConfig.from_dict({'model': {'kappa': 1.0}})

    def test_both_b_and_mu_rejected(self):
        config = RunConfig.from_dict({'model': {'b': 0.5, 'mu': 0.1}})
        assert any("b or mu" in error for error in config.validate())

    def test_overrides_coerce_types(self):
        config = RunConfig.get_default_config().apply_overrides([
            'model.N=40',
            'model.sigma=-1.5',
            'output.plot=false',
            'grids.taus=10,20',
            'model.b=none',
            'model.mu=0.01',
        ])

        assert config.model.N == 40 and isinstance(config.model.N, int)
        assert config.model.sigma == -1.5
        assert config.output.plot is False
        assert config.grids.taus == [10.0, 20.0]
        assert config.model.b is None
        assert config.model.mu == 0.01
        assert config.validate() == []

    def test_overrides_leave_original_untouched(self):
        config = RunConfig.get_default_config()
        config.apply_overrides(['model.N=5'])
        assert config.model.N == 20

    @pytest.mark.parametrize("override", ['model.N', 'N=3', 'physics.N=3', 'model.size=3', 'model.N=three'])
    def test_bad_overrides(self, override):
        with pytest.raises(ConfigError):
            RunConfig.get_default_config().apply_overrides([override])

    def test_sigma_grid_is_inclusive(self):
        grid = RunConfig.get_default_config().sigma_grid()

        assert len(grid) == 121
        assert grid[0] == -2.0
        assert grid[-1] == pytest.approx(4.0)

    def test_typed_views(self):
        config = RunConfig.get_default_config()

        enlarged_params = config.enlarged_params()
        assert enlarged_params.base == config.model_params()
        assert enlarged_params.E_T == 2.0

        pde = config.pde_params()
        assert pde.cells == 400
        assert pde.h == pytest.approx(10.0 / 400)
