"""Run configuration shared by all commands.

A config file is UTF-8 text with one ``key = value`` per line. Blank lines
and lines starting with ``#`` are ignored; unknown keys are rejected.
Every command writes its fully resolved configuration next to its outputs
as ``run.cfg``, so a run can be repeated from that file and the input data.

Example file:

    seed = 3
    folds = 10
    train_ratio = 0.6
    c = 10.0
    gamma = scale
    calibrate = false
    grid_search = true
    max_features = none
"""

from __future__ import annotations

from collections.abc import Callable, Mapping
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Literal

from joblib import cpu_count

from .errors import ConfigError
from .evaluation import EvalConfig
from .features import DistanceMode
from .output import write_atomic
from .selection import SelectionConfig
from .svm import GAMMA_SCALE, SvmConfig

CONFIG_FILENAME = "run.cfg"


@dataclass(frozen=True)
class RunConfig:
    """Every knob a command can take.

    Attributes:
        command: Subcommand that produced the config (informational).
        seed: Seed for the selection split, the CV folds and synthetic data.
        threads: Worker count; 0 means all available cores.
        folds: Cross-validation folds.
        train_ratio: Training share of the selection split.
        c: SVM box constraint.
        gamma: RBF width or "scale".
        tolerance: SMO stopping tolerance.
        max_passes: SMO iteration safeguard, in multiples of the training size.
        calibrate: Fit Platt sigmoids and report posteriors.
        grid_search: Pick C and gamma on the coarse grid before evaluating.
        ablation: Also cross-validate the subset without each feature.
        max_features: Optional selection cap.
        min_improvement: Required accuracy gain per selection step.
        distance_mode: Signed or absolute pairwise distances.
        manifest: Dataset manifest path.
        subset: Subset file path.
        pool: Optional subset file whose features are the only selection candidates.
        out: Output path (directory, or file for extract).
        synth_landmarks: Landmarks per synthetic frame.
        synth_classes: Synthetic class count.
        synth_per_class: Synthetic examples per class.
        synth_planted: Planted one-hot features.
        synth_displacement: Planted displacement in pixels.
        synth_noise: Apex noise standard deviation in pixels.
    """

    command: str = ""
    seed: int = 0
    threads: int = 0
    folds: int = 10
    train_ratio: float = 0.6
    c: float = 1.0
    gamma: float | Literal["scale"] = GAMMA_SCALE
    tolerance: float = 1e-3
    max_passes: int = 1000
    calibrate: bool = False
    grid_search: bool = False
    ablation: bool = False
    max_features: int | None = None
    min_improvement: float = 0.0
    distance_mode: DistanceMode = DistanceMode.SIGNED
    manifest: str = ""
    subset: str = ""
    pool: str = ""
    out: str = ""
    synth_landmarks: int = 20
    synth_classes: int = 7
    synth_per_class: int = 40
    synth_planted: int = 7
    synth_displacement: float = 10.0
    synth_noise: float = 0.5

    @property
    def resolved_threads(self) -> int:
        """Worker count with 0 replaced by the machine's core count."""
        return self.threads if self.threads > 0 else max(1, cpu_count())

    def svm_config(self) -> SvmConfig:
        return SvmConfig(
            C=self.c,
            gamma=self.gamma,
            tolerance=self.tolerance,
            max_passes=self.max_passes,
            calibrate=self.calibrate,
        )

    def selection_config(self, candidate_pool: tuple[int, ...] | None = None) -> SelectionConfig:
        return SelectionConfig(
            train_ratio=self.train_ratio,
            seed=self.seed,
            svm=self.svm_config(),
            max_features=self.max_features,
            min_improvement=self.min_improvement,
            candidate_pool=candidate_pool,
            threads=self.resolved_threads,
        )

    def eval_config(self) -> EvalConfig:
        return EvalConfig(
            folds=self.folds,
            seed=self.seed,
            svm=self.svm_config(),
            threads=self.resolved_threads,
        )

    def with_overrides(self, overrides: Mapping[str, Any]) -> RunConfig:
        """Copy with the given fields replaced; None values are skipped."""
        known = {f.name for f in fields(self)}
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        changes = {key: value for key, value in overrides.items() if value is not None}
        return replace(self, **changes)


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in {"true", "yes", "1"}:
        return True
    if lowered in {"false", "no", "0"}:
        return False
    raise ValueError(f"expected true or false, got {text!r}")


def _parse_optional_int(text: str) -> int | None:
    return None if text.lower() == "none" else int(text)


def _parse_gamma(text: str) -> float | Literal["scale"]:
    return GAMMA_SCALE if text == GAMMA_SCALE else float(text)


def _format_value(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, DistanceMode):
        return value.value
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    return str(value)


_PARSERS: dict[str, Callable[[str], Any]] = {
    "command": str,
    "seed": int,
    "threads": int,
    "folds": int,
    "train_ratio": float,
    "c": float,
    "gamma": _parse_gamma,
    "tolerance": float,
    "max_passes": int,
    "calibrate": _parse_bool,
    "grid_search": _parse_bool,
    "ablation": _parse_bool,
    "max_features": _parse_optional_int,
    "min_improvement": float,
    "distance_mode": DistanceMode,
    "manifest": str,
    "subset": str,
    "pool": str,
    "out": str,
    "synth_landmarks": int,
    "synth_classes": int,
    "synth_per_class": int,
    "synth_planted": int,
    "synth_displacement": float,
    "synth_noise": float,
}


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse config text on top of the defaults.

    Raises:
        ConfigError: On a line without ``=``, an unknown or repeated key, or
            a value of the wrong type.
    """
    values: dict[str, Any] = {}
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ConfigError(f"{source}:{line_no}: expected 'key = value', got {raw!r}")
        if key not in _PARSERS:
            raise ConfigError(f"{source}:{line_no}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{line_no}: key {key!r} given twice")
        try:
            values[key] = _PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{line_no}: bad value for {key}: {exc}") from None
    return RunConfig(**values)


def format_config(config: RunConfig) -> str:
    """Render every field, in declaration order."""
    lines = [f"{f.name} = {_format_value(getattr(config, f.name))}" for f in fields(config)]
    return "\n".join(lines) + "\n"


def load_config(path: Path | str) -> RunConfig:
    """Read a config file.

    Raises:
        ConfigError: If the file is missing or malformed.
    """
    file_path = Path(path)
    if not file_path.is_file():
        raise ConfigError(f"config file not found: {file_path}")
    return parse_config(file_path.read_text(encoding="utf-8"), str(file_path))


def dump_config(config: RunConfig, path: Path | str) -> Path:
    """Write a config file atomically."""
    return write_atomic(path, format_config(config))
