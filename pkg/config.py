"""Configuration loader and validator for KPR Toolkit."""

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from crn_core import ModelParams
from enlarged import EnlargedParams
from errors import ConfigError
from pde_limits import PdeParams
from variants import VariantKind

SECTIONS = ('model', 'enlarged', 'pde', 'grids', 'variant', 'mc', 'output')


@dataclass
class ModelSection:
    N: int = 20
    alpha: float = 1.0
    delta: float = 2.0
    sigma: float = 0.0
    energy_E: float = math.log(3.0)
    b: Optional[float] = math.log(2.0)
    mu: Optional[float] = None


@dataclass
class EnlargedSection:
    E_T: float = 2.0
    E_D: float = 0.5
    E_P: float = 0.5
    t_final: float = 100.0


@dataclass
class PdeSection:
    beta: float = 1.0
    delta_loss: float = 0.0
    alpha: float = 1.0
    E: float = 0.5
    Delta: float = 1.0
    L: float = 10.0
    cells: int = 400
    t_final: float = 20.0


@dataclass
class GridSection:
    sigma_min: float = -2.0
    sigma_max: float = 4.0
    sigma_step: float = 0.05
    deltas: List[float] = field(default_factory=lambda: [0.1, 2.0])
    thetas: List[float] = field(default_factory=lambda: [0.3, 1.0])
    taus: List[float] = field(default_factory=lambda: [40.0, 80.0, 160.0])
    N_list: List[int] = field(default_factory=lambda: [25, 50, 100])


@dataclass
class VariantSection:
    kind: str = 'attachment'
    K: int = 400
    gamma: Optional[float] = None


@dataclass
class McSection:
    trials: int = 100000
    seed: int = 20240601
    workers: int = 1


@dataclass
class OutputSection:
    output_folder: str = 'results'
    logs_folder: str = 'logs'
    plot: bool = True


_SECTION_TYPES = {
    'model': ModelSection,
    'enlarged': EnlargedSection,
    'pde': PdeSection,
    'grids': GridSection,
    'variant': VariantSection,
    'mc': McSection,
    'output': OutputSection,
}


def _coerce(raw: str, current: Any, name: str) -> Any:
    """Convert an override string to the type of the field it replaces."""
    text = raw.strip()
    if text.lower() in ('none', 'null'):
        return None
    if isinstance(current, bool):
        if text.lower() in ('true', '1', 'yes', 'on'):
            return True
        if text.lower() in ('false', '0', 'no', 'off'):
            return False
        raise ConfigError(f"Override {name}: expected a boolean, got {raw!r}")
    if isinstance(current, list):
        element = type(current[0]) if current else float
        try:
            return [element(item) for item in text.split(',') if item.strip()]
        except ValueError as error:
            raise ConfigError(f"Override {name}: {error}") from error
    try:
        if isinstance(current, int):
            return int(text)
        if isinstance(current, float) or current is None:
            return float(text)
    except ValueError as error:
        raise ConfigError(f"Override {name}: {error}") from error
    return text


@dataclass
class RunConfig:
    """Configuration for a KPR Toolkit run."""

    model: ModelSection = field(default_factory=ModelSection)
    enlarged: EnlargedSection = field(default_factory=EnlargedSection)
    pde: PdeSection = field(default_factory=PdeSection)
    grids: GridSection = field(default_factory=GridSection)
    variant: VariantSection = field(default_factory=VariantSection)
    mc: McSection = field(default_factory=McSection)
    output: OutputSection = field(default_factory=OutputSection)

    @staticmethod
    def from_dict(config_data: Dict[str, Any]) -> 'RunConfig':
        """Build a configuration from nested section mappings.

        Missing keys take their defaults; unknown sections or keys raise.
        """
        sections = {}
        for name, data in config_data.items():
            if name not in _SECTION_TYPES:
                raise ConfigError(f"Unknown configuration section '{name}'")
            if not isinstance(data, dict):
                raise ConfigError(f"Section '{name}' must be an object")
        for name, section_type in _SECTION_TYPES.items():
            data = config_data.get(name, {})
            known = {f.name for f in fields(section_type)}
            unknown = sorted(set(data) - known)
            if unknown:
                raise ConfigError(f"Unknown keys in section '{name}': {', '.join(unknown)}")
            sections[name] = section_type(**data)
        return RunConfig(**sections)

    @staticmethod
    def load_from_file(config_path: str) -> 'RunConfig':
        """Load configuration from a JSON file.

        Args:
            config_path: Path to the configuration JSON file

        Returns:
            RunConfig with loaded settings

        Raises:
            ConfigError: If the file is missing, is not valid JSON or fails validation
        """
        try:
            with open(config_path, 'r', encoding='utf-8') as f:
                config_data = json.load(f)
        except FileNotFoundError as error:
            raise ConfigError(f"Configuration file not found: {config_path}") from error
        except json.JSONDecodeError as error:
            raise ConfigError(f"Configuration file is not valid JSON: {error}") from error
        if not isinstance(config_data, dict):
            raise ConfigError("Configuration file must contain a JSON object")

        config = RunConfig.from_dict(config_data)

        errors = config.validate()
        if errors:
            raise ConfigError(f"Configuration validation failed: {', '.join(errors)}")

        return config

    @staticmethod
    def get_default_config() -> 'RunConfig':
        """Default configuration: alpha = 1, E = log 3, b = log 2, N = 20, Delta = 2."""
        return RunConfig()

    def validate(self) -> List[str]:
        """Validate the configuration and return a list of error messages.

        Returns:
            List of error messages (empty if valid)
        """
        errors = []

        try:
            model_params = self.model_params()
            errors.extend(model_params.validate())
        except TypeError as error:
            errors.append(f"model: {error}")
            model_params = None
        if model_params is not None and self.model.b is None and self.model.mu is None:
            errors.append("model: exactly one of b and mu must be given")

        for name in ('E_T', 'E_D', 'E_P', 't_final'):
            value = getattr(self.enlarged, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                errors.append(f"enlarged.{name} must be a finite number")
        if isinstance(self.enlarged.t_final, (int, float)) and self.enlarged.t_final <= 0:
            errors.append("enlarged.t_final must be positive")

        errors.extend(f"pde: {message}" for message in self.pde_params().validate())
        if not self.pde.t_final > 0:
            errors.append("pde.t_final must be positive")

        grids = self.grids
        if not grids.sigma_step > 0:
            errors.append("grids.sigma_step must be positive")
        elif grids.sigma_max < grids.sigma_min:
            errors.append("grids.sigma_max must not be below grids.sigma_min")
        for name in ('deltas', 'thetas', 'taus', 'N_list'):
            if not getattr(grids, name):
                errors.append(f"grids.{name} must be nonempty")
        if any(later <= earlier for earlier, later in zip(grids.N_list, grids.N_list[1:])):
            errors.append("grids.N_list must be strictly increasing")
        if any(tau <= 0 for tau in grids.taus):
            errors.append("grids.taus must be positive")

        valid_kinds = [kind.value for kind in VariantKind]
        if self.variant.kind not in valid_kinds:
            errors.append(f"variant.kind must be one of: {', '.join(valid_kinds)}")
        if not isinstance(self.variant.K, int) or self.variant.K < 50:
            errors.append("variant.K must be an integer >= 50")
        if self.variant.kind == 'delta_infty' and not (self.variant.gamma or 0) > 0:
            errors.append("variant.gamma must be positive for delta_infty")

        if not isinstance(self.mc.trials, int) or self.mc.trials < 1:
            errors.append("mc.trials must be a positive integer")
        if not isinstance(self.mc.workers, int) or self.mc.workers < 1:
            errors.append("mc.workers must be a positive integer")
        if not isinstance(self.mc.seed, int) or self.mc.seed < 0:
            errors.append("mc.seed must be a nonnegative integer")

        if not self.output.output_folder:
            errors.append("Output folder name cannot be empty")
        if not self.output.logs_folder:
            errors.append("Logs folder name cannot be empty")

        return errors

    def to_dict(self) -> Dict[str, Any]:
        return {name: asdict(getattr(self, name)) for name in SECTIONS}

    def save_to_file(self, config_path: str):
        path = Path(config_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write('\n')

    def apply_overrides(self, overrides: Sequence[str]) -> 'RunConfig':
        """Return a copy with ``section.key=value`` overrides applied.

        Raises:
            ConfigError: If an override is malformed or names an unknown key
        """
        config = RunConfig.from_dict(self.to_dict())
        for override in overrides:
            name, sep, raw = override.partition('=')
            section_name, dot, key = name.strip().partition('.')
            if not sep or not dot:
                raise ConfigError(f"Override must look like section.key=value (got {override!r})")
            if section_name not in _SECTION_TYPES:
                raise ConfigError(f"Unknown configuration section '{section_name}'")
            section = getattr(config, section_name)
            if key not in {f.name for f in fields(section)}:
                raise ConfigError(f"Unknown key '{key}' in section '{section_name}'")
            value = _coerce(raw, getattr(section, key), name.strip())
            setattr(config, section_name, replace(section, **{key: value}))
        return config

    def model_params(self) -> ModelParams:
        m = self.model
        return ModelParams(N=m.N, alpha=m.alpha, delta=m.delta, sigma=m.sigma,
                           energy_E=m.energy_E, b=m.b, mu=m.mu)

    def enlarged_params(self) -> EnlargedParams:
        e = self.enlarged
        return EnlargedParams(base=self.model_params(), E_T=e.E_T, E_D=e.E_D, E_P=e.E_P)

    def pde_params(self) -> PdeParams:
        p = self.pde
        return PdeParams(beta=p.beta, delta_loss=p.delta_loss, alpha=p.alpha, E=p.E,
                         Delta=p.Delta, L=p.L, cells=p.cells)

    def sigma_grid(self) -> np.ndarray:
        """Inclusive grid sigma_min, sigma_min + step, ..., sigma_max."""
        g = self.grids
        count = int(math.floor((g.sigma_max - g.sigma_min) / g.sigma_step + 1e-9)) + 1
        return g.sigma_min + g.sigma_step * np.arange(count)

    def get_output_folder(self) -> Path:
        return Path(self.output.output_folder)
