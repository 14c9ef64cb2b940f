"""JSON schemas for serialized trees, forests, boosted models and combiners."""

import json
from functools import lru_cache
from importlib import resources

NAMES = ("tree", "forest", "boosting", "combiner")


@lru_cache(maxsize=None)
def load(name: str) -> dict:
    if name not in NAMES:
        raise KeyError(f"no schema named {name!r}")
    text = resources.files(__name__).joinpath(f"{name}.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def all_schemas() -> dict[str, dict]:
    """Schemas keyed by their ``$id`` so cross references resolve."""
    return {load(n)["$id"]: load(n) for n in NAMES}
