"""Instance bundles on disk and solution dumps.

A bundle is a directory holding ``graph.txt`` (the plain graph format) and
``meta.txt``, one ``key=value`` pair per line with JSON-encoded values:

    kind="forest-fire"
    k=20
    seed=1
    sender_groups=[[0, 21, 35], ...]
    receiver_groups=[[], [0, 57], ...]     # G_0 first
    params={"p1": 0.3, ...}
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from relaxim.generators import PlantedInstance
from relaxim.graph import read_graph, write_graph

GRAPH_FILE = "graph.txt"
META_FILE = "meta.txt"


class BundleError(ValueError):
    """Missing or malformed bundle contents."""


def write_bundle(inst: PlantedInstance, directory: str | Path) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / GRAPH_FILE).write_text(write_graph(inst.graph), encoding="utf-8")
    meta = {
        "kind": inst.kind,
        "k": inst.k,
        "seed": inst.seed,
        "influencers": inst.influencers.tolist(),
        "sender_groups": [np.asarray(g).tolist() for g in inst.sender_groups],
        "receiver_groups": [np.asarray(g).tolist() for g in inst.receiver_groups],
        "params": inst.params,
    }
    lines = [f"{key}={json.dumps(value, sort_keys=True)}" for key, value in meta.items()]
    (d / META_FILE).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return d


def read_meta(path: str | Path) -> dict[str, Any]:
    meta: dict[str, Any] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise BundleError(f"{path}:{lineno}: expected key=value")
        try:
            meta[key.strip()] = json.loads(value)
        except json.JSONDecodeError as exc:
            raise BundleError(f"{path}:{lineno}: bad value for {key.strip()!r}: {exc}") from None
    return meta


def read_bundle(directory: str | Path) -> PlantedInstance:
    d = Path(directory)
    if not (d / GRAPH_FILE).is_file() or not (d / META_FILE).is_file():
        raise BundleError(f"{d} is not an instance bundle (need {GRAPH_FILE} and {META_FILE})")
    g = read_graph((d / GRAPH_FILE).read_text(encoding="utf-8"))
    meta = read_meta(d / META_FILE)
    try:
        return PlantedInstance(
            g, int(meta["k"]),
            tuple(np.asarray(s, dtype=np.int64) for s in meta["sender_groups"]),
            tuple(np.asarray(r, dtype=np.int64) for r in meta["receiver_groups"]),
            kind=meta.get("kind", "planted"), seed=meta.get("seed"), params=meta.get("params", {}),
        )
    except KeyError as exc:
        raise BundleError(f"{d / META_FILE}: missing key {exc}") from None
    except ValueError as exc:
        raise BundleError(f"{d / META_FILE}: {exc}") from None


def dump_solution(data: dict[str, Any], path: str | Path) -> None:
    Path(path).write_text(json.dumps(data, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_solution(path: str | Path) -> dict[str, Any]:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise BundleError(f"cannot read solution {path}: {exc}") from None
