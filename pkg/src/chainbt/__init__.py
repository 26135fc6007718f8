"""Backward-chained behavior trees with constraint-aware tabular RL."""

from importlib import resources

__version__ = "0.1.0"


def default_spec_text() -> str:
    """The bundled survival-agent action spec (goals + eight actions)."""
    return resources.files("chainbt.data").joinpath("table1.bt").read_text()
