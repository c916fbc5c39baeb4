"""Experiment configuration files: TOML in, resolved TOML snapshot out.

A config is a small key-value tree with sections [experiment], [soft],
[optimizer], optional [generator_optimizer], and [network]. Shipped
defaults carry each benchmark's published settings (episode counts,
horizons, eta/sigma, and the discriminator RMSProp parameters); anything
can be overridden on the command line with dotted keys like
``soft.eta=0.25``.
"""

from __future__ import annotations

import sys
from dataclasses import asdict
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib as toml_reader
else:
    import tomli as toml_reader

from .errors import ConfigurationError
from .softpolicy import SoftPolicyParams
from .trainer import ExperimentConfig, OptimizerSettings

_EXPERIMENT_KEYS = (
    "env", "method", "variant", "iterations", "episodes_per_iteration",
    "steps_per_episode", "disc_sweeps", "gen_sweeps", "seed", "eval_episodes",
    "baseline_episodes", "demo_file", "goal_file", "replay_capacity",
    "clamp_epsilon", "epsilon_start", "epsilon_final",
    "pretrain_negatives", "pretrain_steps",
)

# Per-benchmark defaults: episodes/steps per iteration, update sweeps, and
# the soft-policy coefficients. The iteration count is sized so a full run
# sees a few tens of thousands of environment samples.
_ENV_DEFAULTS = {
    "twice_reach": dict(
        episodes_per_iteration=10, steps_per_episode=300,
        disc_sweeps=1, gen_sweeps=1, iterations=14,
        soft=SoftPolicyParams(eta=0.25, sigma=0.04, gamma=0.95),
    ),
    "pick_place": dict(
        episodes_per_iteration=30, steps_per_episode=150,
        disc_sweeps=1, gen_sweeps=1, iterations=10,
        soft=SoftPolicyParams(eta=0.2, sigma=0.05, gamma=0.95),
    ),
}


def default_config(env: str, method: str = "gagail_edpn", **overrides) -> ExperimentConfig:
    """The shipped defaults for a benchmark, with keyword overrides."""
    if env not in _ENV_DEFAULTS:
        raise ConfigurationError(f"no defaults for environment {env!r}")
    base = dict(_ENV_DEFAULTS[env])
    if method.startswith("gail_"):
        base["variant"] = "no_goal"
    base.update(overrides)
    return ExperimentConfig(env=env, method=method, **base)


def config_to_dict(config: ExperimentConfig) -> dict:
    doc = {
        "experiment": {k: getattr(config, k) for k in _EXPERIMENT_KEYS},
        "soft": asdict(config.soft),
        "optimizer": asdict(config.optimizer),
        "network": {"hidden": list(config.hidden)},
    }
    if config.generator_optimizer is not None:
        doc["generator_optimizer"] = asdict(config.generator_optimizer)
    return doc


def config_from_dict(doc: dict) -> ExperimentConfig:
    try:
        experiment = dict(doc["experiment"])
    except KeyError:
        raise ConfigurationError("config is missing the [experiment] section")
    unknown = set(experiment) - set(_EXPERIMENT_KEYS)
    if unknown:
        raise ConfigurationError(f"unknown experiment keys: {sorted(unknown)}")
    kwargs = dict(experiment)
    if "soft" in doc:
        kwargs["soft"] = SoftPolicyParams(**doc["soft"])
    if "optimizer" in doc:
        kwargs["optimizer"] = OptimizerSettings(**doc["optimizer"])
    if "generator_optimizer" in doc:
        kwargs["generator_optimizer"] = OptimizerSettings(**doc["generator_optimizer"])
    if "network" in doc:
        kwargs["hidden"] = tuple(doc["network"]["hidden"])
    return ExperimentConfig(**kwargs)


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        text = repr(value)
        # TOML floats need a dot or exponent
        return text if ("." in text or "e" in text or "n" in text) else text + ".0"
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise ConfigurationError(f"cannot serialize {type(value).__name__} to TOML")


def dump_toml(doc: dict) -> str:
    """Serialize a two-level dict of scalars/lists to TOML text."""
    lines = []
    for section, values in doc.items():
        lines.append(f"[{section}]")
        for key, value in values.items():
            lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")
    return "\n".join(lines)


def save_config(path, config: ExperimentConfig) -> None:
    Path(path).write_text(dump_toml(config_to_dict(config)))


def parse_override(raw: str):
    """Parse one ``section.key=value`` override; values use TOML syntax."""
    if "=" not in raw:
        raise ConfigurationError(f"override {raw!r} is not of the form section.key=value")
    dotted, text = raw.split("=", 1)
    parts = dotted.strip().split(".")
    if len(parts) != 2 or not all(parts):
        raise ConfigurationError(f"override key {dotted!r} must be section.key")
    try:
        value = toml_reader.loads(f"v = {text.strip()}")["v"]
    except toml_reader.TOMLDecodeError:
        value = text.strip()  # bare strings, e.g. method=gagail_edpn
    return parts[0], parts[1], value


def load_config(path, overrides=()) -> ExperimentConfig:
    """Read a TOML config, apply dotted overrides, resolve relative paths.

    ``demo_file`` and ``goal_file`` are interpreted relative to the config
    file's directory, and come back absolute so the resolved snapshot can
    be re-fed from anywhere.
    """
    path = Path(path)
    try:
        doc = toml_reader.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}")
    except toml_reader.TOMLDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid TOML: {exc}")
    for raw in overrides:
        section, key, value = parse_override(raw)
        doc.setdefault(section, {})[key] = value
    config = config_from_dict(doc)
    resolved = {}
    for attr in ("demo_file", "goal_file"):
        value = getattr(config, attr)
        if value and not Path(value).is_absolute():
            resolved[attr] = str((path.parent / value).resolve())
    if resolved:
        from dataclasses import replace

        config = replace(config, **resolved)
    return config
