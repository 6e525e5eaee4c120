"""Quantum and classical policy-gradient estimators on small tabular MDPs."""
from importlib import resources
from pathlib import Path

__version__ = "0.1.0"


def asset_path(name: str) -> Path:
    """Path of a bundled fixture, e.g. ``asset_path("chain2.json")``."""
    return Path(str(resources.files(__package__).joinpath("assets", name)))


def load_asset_mdp(name: str):
    from .mdp import load_mdp
    return load_mdp(asset_path(name))


def load_asset_policy(name: str):
    from .policies import load_policy
    return load_policy(asset_path(name))
