"""
Configuration settings for the visiting-pattern miner
"""

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

logger = logging.getLogger(__name__)

DEFAULT_COLUMNS = {
    "subject": "subject",
    "timestamp": "timestamp",
    "rssi": "rssi",
    "device": "device",
    "latitude": "latitude",
    "longitude": "longitude",
}

PREFERENCE_MODES = ("minimizing", "median")
GROUPINGS = ("pooled", "per_subject")


@dataclass
class Config:
    """Configuration for one pipeline run"""

    # Ingest settings
    columns: dict = field(default_factory=lambda: dict(DEFAULT_COLUMNS))
    utc_offset_s: int = 0
    delta_quantile: float = 0.95
    per_subject_delta: bool = False

    # Preprocessing settings (seconds)
    delta_s: float = 900
    lambda_s: Optional[float] = None
    day_length_s: int = 86400

    # Distance settings (seconds)
    omega_s: float = 1800
    omega_sweep: list = field(default_factory=lambda: [900, 1800, 2700, 3600])

    # Clustering settings
    preference_mode: str = "minimizing"
    damping: float = 0.9
    max_iter: int = 1000
    stable_iters: int = 50
    seed: int = 0
    polish_exchange_limit: int = 64

    # Pattern settings
    alpha: int = 3
    grouping: str = "pooled"
    windows: list = field(default_factory=list)

    # Planted data settings
    synth_n: int = 1000
    false_neg_p: float = 0.2
    sigma_units: Optional[float] = None
    modes: Optional[list] = None
    random_modes: Optional[int] = None

    # Evaluation settings
    beta: float = 2.0

    # Runtime settings
    jobs: int = 1
    strict_convergence: bool = False

    def __post_init__(self):
        """Validate configuration"""
        if self.delta_s <= 0:
            raise ValueError(f"delta must be positive, got {self.delta_s}")
        if self.lambda_s is None:
            self.lambda_s = self.delta_s / 2
        if self.lambda_s <= 0:
            raise ValueError(f"lambda must be positive, got {self.lambda_s}")
        for omega in [self.omega_s, *self.omega_sweep]:
            self._check_omega(omega)
        if not 0 < self.delta_quantile <= 1:
            raise ValueError(f"delta quantile must be in (0, 1], got {self.delta_quantile}")
        if self.alpha < 1:
            raise ValueError("alpha must be at least 1")
        if not 0.5 <= self.damping < 1:
            raise ValueError(f"damping must be in [0.5, 1), got {self.damping}")
        if self.max_iter < 1 or self.stable_iters < 1:
            raise ValueError("max_iter and stable_iters must be at least 1")
        if self.preference_mode not in PREFERENCE_MODES:
            raise ValueError(f"Invalid preference mode: {self.preference_mode}")
        if self.grouping not in GROUPINGS:
            raise ValueError(f"Invalid grouping: {self.grouping}")
        if not 0 <= self.false_neg_p < 1:
            raise ValueError(f"false negative probability must be in [0, 1), got {self.false_neg_p}")
        if self.beta <= 1:
            raise ValueError("beta must be greater than 1")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")
        if self.random_modes is not None and self.random_modes < 1:
            raise ValueError(f"random_modes must be at least 1, got {self.random_modes}")
        self.windows = [tuple(int(b) for b in w) for w in self.windows]
        for le, ri in self.windows:
            if not 0 <= le < ri <= self.n_units:
                raise ValueError(f"Window ({le}, {ri}) outside [0, {self.n_units})")

    def _check_omega(self, omega):
        units = omega / self.lambda_s
        if omega <= 0 or not math.isclose(units, round(units)) or round(units) < 1:
            raise ValueError(
                f"omega ({omega}s) must be a positive multiple of lambda ({self.lambda_s}s)"
            )

    @property
    def n_units(self) -> int:
        """Length L of a day's binary sequence"""
        return math.ceil(self.day_length_s / self.lambda_s)

    def units(self, omega_s: Optional[float] = None) -> int:
        """Convert an omega in seconds to a count of unit intervals"""
        omega = self.omega_s if omega_s is None else omega_s
        return round(omega / self.lambda_s)

    @property
    def w_units(self) -> int:
        return self.units()

    @property
    def effective_sigma(self) -> float:
        # three standard deviations span four unit intervals
        return self.sigma_units if self.sigma_units is not None else 4 / 3

    def with_overrides(self, **overrides) -> "Config":
        """
        Return a copy with the given fields replaced; None values are ignored

        Args:
            overrides: field name -> value (typically parsed CLI flags)

        Returns:
            New validated Config instance
        """
        values = {k: v for k, v in overrides.items() if v is not None}
        if "delta_s" in values and "lambda_s" not in values:
            values["lambda_s"] = None
        return dataclasses.replace(self, **values)

    def to_dict(self) -> dict:
        return {
            "ingest": {
                "columns": dict(self.columns),
                "utc_offset_s": self.utc_offset_s,
                "delta_quantile": self.delta_quantile,
                "per_subject_delta": self.per_subject_delta,
            },
            "preprocess": {
                "delta_s": self.delta_s,
                "lambda_s": self.lambda_s,
                "day_length_s": self.day_length_s,
            },
            "distance": {
                "omega_s": self.omega_s,
                "omega_sweep": list(self.omega_sweep),
            },
            "clustering": {
                "preference_mode": self.preference_mode,
                "damping": self.damping,
                "max_iter": self.max_iter,
                "stable_iters": self.stable_iters,
                "seed": self.seed,
                "polish_exchange_limit": self.polish_exchange_limit,
            },
            "patterns": {
                "alpha": self.alpha,
                "grouping": self.grouping,
                "windows": [list(w) for w in self.windows],
            },
            "synth": {
                "n": self.synth_n,
                "false_neg_p": self.false_neg_p,
                "sigma_units": self.sigma_units,
                "modes": self.modes,
                "random_modes": self.random_modes,
            },
            "evaluation": {
                "beta": self.beta,
            },
            "runtime": {
                "jobs": self.jobs,
                "strict_convergence": self.strict_convergence,
            },
        }

    @classmethod
    def from_dict(cls, config_data: dict) -> "Config":
        """Build a Config from the nested section layout used in YAML files"""
        config_data = config_data or {}
        ingest = config_data.get("ingest", {}) or {}
        preprocess = config_data.get("preprocess", {}) or {}
        distance = config_data.get("distance", {}) or {}
        clustering = config_data.get("clustering", {}) or {}
        patterns = config_data.get("patterns", {}) or {}
        synth = config_data.get("synth", {}) or {}
        evaluation = config_data.get("evaluation", {}) or {}
        runtime = config_data.get("runtime", {}) or {}

        defaults = cls()
        columns = dict(DEFAULT_COLUMNS)
        columns.update(ingest.get("columns", {}) or {})

        return cls(
            # Ingest
            columns=columns,
            utc_offset_s=ingest.get("utc_offset_s", 0),
            delta_quantile=ingest.get("delta_quantile", 0.95),
            per_subject_delta=ingest.get("per_subject_delta", False),
            # Preprocessing
            delta_s=preprocess.get("delta_s", 900),
            lambda_s=preprocess.get("lambda_s"),
            day_length_s=preprocess.get("day_length_s", 86400),
            # Distance
            omega_s=distance.get("omega_s", 1800),
            omega_sweep=distance.get("omega_sweep", defaults.omega_sweep),
            # Clustering
            preference_mode=clustering.get("preference_mode", "minimizing"),
            damping=clustering.get("damping", 0.9),
            max_iter=clustering.get("max_iter", 1000),
            stable_iters=clustering.get("stable_iters", 50),
            seed=clustering.get("seed", 0),
            polish_exchange_limit=clustering.get("polish_exchange_limit", 64),
            # Patterns
            alpha=patterns.get("alpha", 3),
            grouping=patterns.get("grouping", "pooled"),
            windows=patterns.get("windows", []) or [],
            # Planted data
            synth_n=synth.get("n", 1000),
            false_neg_p=synth.get("false_neg_p", 0.2),
            sigma_units=synth.get("sigma_units"),
            modes=synth.get("modes"),
            random_modes=synth.get("random_modes"),
            # Evaluation
            beta=evaluation.get("beta", 2.0),
            # Runtime
            jobs=runtime.get("jobs", 1),
            strict_convergence=runtime.get("strict_convergence", False),
        )

    @classmethod
    def from_yaml(cls, config_path: str) -> "Config":
        """
        Load configuration from YAML file

        Args:
            config_path: Path to the YAML configuration file

        Returns:
            Config instance with loaded settings
        """
        config_file = Path(config_path)

        if not config_file.exists():
            raise FileNotFoundError(f"Configuration file not found: {config_path}")

        with open(config_file, "r") as f:
            config_data = yaml.safe_load(f)

        return cls.from_dict(config_data)

    @classmethod
    def from_yaml_or_default(cls, config_path: Optional[str] = None) -> "Config":
        """
        Load configuration from YAML file or use defaults

        Args:
            config_path: Optional path to YAML configuration file

        Returns:
            Config instance
        """
        if config_path and Path(config_path).exists():
            return cls.from_yaml(config_path)
        elif config_path:
            logger.warning("Config file '%s' not found. Using defaults.", config_path)

        return cls()

    def save_yaml(self, config_path: str):
        """
        Save current configuration to YAML file

        Args:
            config_path: Path where to save the configuration
        """
        with open(config_path, "w") as f:
            yaml.dump(self.to_dict(), f, default_flow_style=False, sort_keys=False)

        print(f"Configuration saved to: {config_path}")
