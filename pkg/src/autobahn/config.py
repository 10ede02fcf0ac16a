"""Shared tolerances and seed resolution."""

from __future__ import annotations

import os

TOLERANCES = {
    "equivariance": 1e-9,
    "oracle": 1e-10,
    "gradient": 1e-4,
}

SEED_ENV = "AUTOBAHN_SEED"
DEFAULT_SEED = 0


def resolve_seed(explicit: int | None = None) -> int:
    """``--seed`` if given, else $AUTOBAHN_SEED, else 0."""
    if explicit is not None:
        return int(explicit)
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{SEED_ENV}={raw!r} is not an integer") from None


def tolerance_header() -> str:
    return "tolerances: " + ", ".join(f"{k}={v:g}" for k, v in TOLERANCES.items())
