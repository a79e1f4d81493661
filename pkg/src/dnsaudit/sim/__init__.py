"""Deterministic simulated DNS universe used for fixtures and tests."""

from importlib import resources
from pathlib import Path

from dnsaudit.sim.transport import SimTransport, loopback_transport, serve_loopback
from dnsaudit.sim.universe import FixtureError, FixtureServer, FixtureUniverse, load_universe, parse_universe

__all__ = [
    "FixtureError",
    "FixtureServer",
    "FixtureUniverse",
    "SimTransport",
    "bundled_fixture",
    "bundled_fixtures",
    "load_universe",
    "loopback_transport",
    "parse_universe",
    "serve_loopback",
]


def bundled_fixture(name: str) -> Path:
    """Path of a fixture file shipped with the package (``healthy.zl`` ...)."""
    path = Path(str(resources.files("dnsaudit.sim").joinpath("fixtures").joinpath(name)))
    if not path.exists():
        raise FileNotFoundError(f"no bundled fixture named {name!r}")
    return path


def bundled_fixtures() -> list[str]:
    folder = resources.files("dnsaudit.sim").joinpath("fixtures")
    return sorted(p.name for p in folder.iterdir() if p.name.endswith((".zl", ".txt")))
