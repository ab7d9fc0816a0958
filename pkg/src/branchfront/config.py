"""Plain-text ``key=value`` run configuration."""

from __future__ import annotations

from pathlib import Path

DEFAULTS = {
    "drift": 0.0,
    "sigma": 1.0,
    "jump_intensity": 0.0,
    "jumps": "",
    "theta_max": 50.0,
    "offspring": "2:1",
    "x_min": -15.0,
    "x_max": 15.0,
    "m": 2001,
    "t": 1.0,
    "tol": 0.02,
    "n_max": 1024,
    "seed": 1,
    "cap": 1_000_000,
}


def parse_config(text: str) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        cfg[key.strip().replace("-", "_")] = value.strip()
    return cfg


def load_config(path: str | Path | None) -> dict:
    return parse_config(Path(path).read_text()) if path else {}


def merge(*layers: dict) -> dict:
    """Later layers win; ``None`` values never override."""
    out = dict(DEFAULTS)
    for layer in layers:
        out.update({k: v for k, v in layer.items() if v is not None})
    return out
