"""Startup dependency check for the CLI, with opt-out auto-install of the scientific stack."""

from __future__ import annotations

import importlib.util
import os
import subprocess
import sys
from typing import NamedTuple

AUTO_INSTALL_ENV = "CHROMA_ASSOC_AUTO_INSTALL_DEPS"


class Dependency(NamedTuple):
    module: str
    package: str
    purpose: str


REQUIRED = (
    Dependency("numpy", "numpy", "vector math"),
    Dependency("scipy", "scipy", "t and beta distributions"),
    Dependency("pandas", "pandas", "CSV input and output"),
    Dependency("httpx", "httpx", "chat completion requests"),
)

OPTIONAL = (
    Dependency("tqdm", "tqdm", "progress bars"),
    Dependency("dotenv", "python-dotenv", ".env loading"),
)


def auto_install_enabled() -> bool:
    return os.environ.get(AUTO_INSTALL_ENV, "1").strip().lower() not in ("0", "false", "no", "off")


def missing(deps: tuple[Dependency, ...]) -> list[Dependency]:
    return [d for d in deps if importlib.util.find_spec(d.module) is None]


def _pip_install(packages: list[str]) -> None:
    """Install and exit: 0 so the user re-runs with the new packages importable, 1 if pip failed."""
    print(f"Installing {', '.join(packages)}...", file=sys.stderr)
    try:
        subprocess.run([sys.executable, "-m", "pip", "install", "-q", *packages], check=True)
    except (subprocess.CalledProcessError, FileNotFoundError) as e:
        print(f"pip failed ({e}); install them yourself.", file=sys.stderr)
        sys.exit(1)
    print("Installed. Run the command again.", file=sys.stderr)
    sys.exit(0)


def install_instructions(absent: list[Dependency]) -> str:
    needed = "\n".join(f"    {d.package:<14} {d.purpose}" for d in absent)
    return (
        "chroma-assoc cannot start; missing packages:\n"
        f"{needed}\n\n"
        "  Install the project (from its directory):\n"
        "    pip install -e .\n\n"
        f"  Auto-install is skipped while {AUTO_INSTALL_ENV}=0."
    )


def check_required() -> bool:
    """True when every required package imports; otherwise install them and exit, or explain and exit 1."""
    absent = missing(REQUIRED)
    if not absent:
        return True
    if auto_install_enabled():
        _pip_install([d.package for d in absent])
    print(install_instructions(absent), file=sys.stderr)
    sys.exit(1)


def optional_hint() -> str | None:
    absent = missing(OPTIONAL)
    if not absent:
        return None
    wanted = ", ".join(d.purpose for d in absent)
    return f"Optional: pip install {' '.join(d.package for d in absent)} ({wanted})."
