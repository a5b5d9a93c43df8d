"""Flat key-value run configuration.

Every tunable of the pipeline lives in one of five parameter dataclasses;
this module maps a flat `key = value` file (plus CLI overrides) onto all
of them.  Precedence: CLI flag > config file > built-in default.  The
shared `rng_seed` key feeds both training and rollout.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Mapping, Union

from robosfm.behavior import ClassifierParams
from robosfm.forces import SfmParams
from robosfm.neural import TrainConfig
from robosfm.preprocess import FilterConfig
from robosfm.simulate import RolloutConfig

_SECTIONS = (
    ("filters", FilterConfig),
    ("sfm", SfmParams),
    ("classifier", ClassifierParams),
    ("training", TrainConfig),
    ("rollout", RolloutConfig),
)


def _field_map() -> dict[str, list[tuple[str, type, object]]]:
    """key -> [(section, type, default)]; rng_seed maps to two sections."""
    mapping: dict[str, list[tuple[str, type, object]]] = {}
    for section, cls in _SECTIONS:
        for f in dataclasses.fields(cls):
            mapping.setdefault(f.name, []).append((section, f.type, f.default))
    return mapping


_FIELDS = _field_map()


@dataclass(frozen=True)
class RunConfig:
    filters: FilterConfig = FilterConfig()
    sfm: SfmParams = SfmParams()
    classifier: ClassifierParams = ClassifierParams()
    training: TrainConfig = TrainConfig()
    rollout: RolloutConfig = RolloutConfig()


def _coerce(key: str, raw: Union[str, int, float]) -> Union[int, float]:
    target = _FIELDS[key][0][2]
    if isinstance(target, int) and not isinstance(target, bool):
        try:
            return int(raw)
        except (TypeError, ValueError):
            raise ValueError(f"config key {key!r} expects an integer, got {raw!r}")
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ValueError(f"config key {key!r} expects a number, got {raw!r}")


def parse_config_file(path) -> dict[str, str]:
    """Read `key = value` lines; '#' starts a comment, blanks are skipped."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected `key = value`")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def build_run_config(
    file_values: Mapping[str, Union[str, int, float]] = (),
    overrides: Mapping[str, Union[str, int, float]] = (),
) -> RunConfig:
    """Merge defaults, config-file values, and CLI overrides.

    Unknown keys are rejected by name.
    """
    merged: dict[str, Union[int, float]] = {}
    for source in (dict(file_values), dict(overrides)):
        for key, raw in source.items():
            if key not in _FIELDS:
                raise ValueError(f"unknown config key {key!r}")
            merged[key] = _coerce(key, raw)

    kwargs_by_section: dict[str, dict[str, Union[int, float]]] = {
        section: {} for section, _ in _SECTIONS
    }
    for key, value in merged.items():
        for section, _type, _default in _FIELDS[key]:
            kwargs_by_section[section][key] = value

    return RunConfig(
        filters=FilterConfig(**kwargs_by_section["filters"]),
        sfm=SfmParams(**kwargs_by_section["sfm"]),
        classifier=ClassifierParams(**kwargs_by_section["classifier"]),
        training=TrainConfig(**kwargs_by_section["training"]),
        rollout=RolloutConfig(**kwargs_by_section["rollout"]),
    )


def config_help_text() -> str:
    """Every config key with its default, for subcommand help epilogs."""
    lines = ["configuration keys (config file `key = value`, angles in radians):"]
    for key in sorted(_FIELDS):
        sections = ", ".join(s for s, _, _ in _FIELDS[key])
        default = _FIELDS[key][0][2]
        lines.append(f"  {key} = {default}  [{sections}]")
    return "\n".join(lines)
