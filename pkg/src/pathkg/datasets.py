"""Locate benchmark splits on disk; nothing is downloaded."""

from __future__ import annotations

import os
from pathlib import Path

FB237_V1_ENV = "PATHKG_FB237_V1"
# inductive layout: <root>/fb237_v1/{train,valid,test}.txt and <root>/fb237_v1_ind/{train,valid,test}.txt
FB237_V1_STATS = {"entities": 1594, "facts": 4245, "valid": 489, "test_entities": 1093,
                  "test_facts": 1993, "test": 205, "relations": 180}


def _candidates(name: str, env: str) -> list[Path]:
    out = []
    if os.environ.get(env):
        out.append(Path(os.environ[env]))
    here = Path(__file__).resolve()
    for root in (Path.cwd(), here.parents[2] if len(here.parents) > 2 else here.parent):
        out.append(root / "data" / name)
    out.append(Path.home() / ".cache" / "pathkg" / name)
    return list(dict.fromkeys(out))


def find_split(name: str, env: str) -> Path | None:
    """First candidate directory holding ``train.txt`` and an ``_ind`` sibling (or ``inference.txt``)."""
    for d in _candidates(name, env):
        if (d / "train.txt").is_file() and (
                (d.with_name(d.name + "_ind") / "train.txt").is_file() or (d / "inference.txt").is_file()):
            return d
    return None


def find_fb237_v1() -> Path | None:
    return find_split("fb237_v1", FB237_V1_ENV)


def searched_locations() -> list[str]:
    return [str(p) for p in _candidates("fb237_v1", FB237_V1_ENV)]
