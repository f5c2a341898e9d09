"""TOML experiment configuration with dot-path overrides.

A config file has one table per module::

    [distributions]   centers, sigma, mode_probs, pool_size, pool_seed,
                      query_scheme, query_count, query_scale, query_seed,
                      replacement
    [kernel]          tau
    [estimators]      bootstrap_replicates, brsnis_iterations, brsnis_burn_in
    [harness]         n_grid, trials, methods, master_seed, block_elements,
                      timing, timed_trials, warmup_skip, max_retries,
                      fit_min_n
    [validate]        options of the property suite (see ``validate``)
    [demo]            options of the three-cluster demo (see ``demo``)

Every key is optional; missing keys take the ``ExperimentConfig`` defaults.
"""
from __future__ import annotations

import sys
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .distributions import GaussianMixtureSpec, four_mode_spec
from .harness import ExperimentConfig


class ConfigError(Exception):
    """Configuration file or override could not be used."""


SCHEMA = {
    "distributions": {
        "centers", "sigma", "mode_probs", "pool_size", "pool_seed", "query_scheme",
        "query_count", "query_scale", "query_seed", "replacement",
    },
    "kernel": {"tau"},
    "estimators": {"bootstrap_replicates", "brsnis_iterations", "brsnis_burn_in"},
    "harness": {
        "n_grid", "trials", "methods", "master_seed", "block_elements", "timing",
        "timed_trials", "warmup_skip", "max_retries", "fit_min_n", "slope_norm",
    },
    "validate": {
        "cases", "seed", "zero_bias_trials", "zero_bias_n", "n1_trials", "leading_queries",
        "leading_n", "leading_trials", "leading_tolerance", "pool_size", "tau",
    },
    "demo": {"seed", "points_per_cluster", "sigma", "tau", "n", "query", "centers"},
}

BUNDLED = ("appendix_e_full.toml", "toy_scaling_desk.toml", "appendix_f_desk.toml")


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("snis_abc") / "configs" / name))


def resolve_config_path(path) -> Path:
    """An existing file, or the name of a bundled config."""
    p = Path(path)
    if p.is_file():
        return p
    if p.name in BUNDLED and not p.parent.parts:
        return bundled_path(p.name)
    raise ConfigError(f"config file not found: {path}")


def load_tree(path) -> dict:
    p = resolve_config_path(path)
    try:
        with open(p, "rb") as fh:
            tree = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    check_keys(tree)
    return tree


def check_keys(tree: dict) -> None:
    for section, body in tree.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table")
        unknown = set(body) - SCHEMA[section]
        if unknown:
            raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        # bare words such as from-p or standard
        return text


def apply_overrides(tree: dict, overrides) -> dict:
    """Apply ``section.key=value`` overrides; values use TOML syntax."""
    out = {k: dict(v) for k, v in tree.items()}
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        path, text = item.split("=", 1)
        parts = path.strip().split(".")
        if len(parts) != 2 or parts[0] not in SCHEMA or parts[1] not in SCHEMA[parts[0]]:
            raise ConfigError(f"override {path!r} does not name a config key")
        out.setdefault(parts[0], {})[parts[1]] = _parse_value(text.strip())
    return out


def experiment_config(tree: dict, seed: int | None = None) -> ExperimentConfig:
    """Build an ``ExperimentConfig`` from a parsed tree."""
    dist = tree.get("distributions", {})
    kw = {}
    if "centers" in dist or "sigma" in dist or "mode_probs" in dist:
        base = four_mode_spec()
        kw["pool_spec"] = GaussianMixtureSpec(
            centers=dist.get("centers", base.centers),
            sigma=dist.get("sigma", base.sigma),
            mode_probs=dist.get("mode_probs"),
        )
    for key in ("pool_size", "pool_seed", "query_scheme", "query_count", "query_scale", "query_seed", "replacement"):
        if key in dist:
            kw[key] = dist[key]
    if "tau" in tree.get("kernel", {}):
        kw["tau"] = tree["kernel"]["tau"]
    kw.update(tree.get("estimators", {}))
    kw.update(tree.get("harness", {}))
    if seed is not None:
        kw["master_seed"] = seed
    try:
        return ExperimentConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
