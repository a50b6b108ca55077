"""chroma-assoc: LLM-estimated color-concept association distributions, evaluated against human ratings."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("chroma-assoc")
except PackageNotFoundError:
    __version__ = "0.0.0+dev"
