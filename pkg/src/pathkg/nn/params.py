from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .tape import Tape, Tensor

MAGIC = b"PKGCKPT1"


class ParameterStore:
    """Named float64 arrays with gradient slots and Adam moments."""

    def __init__(self):
        self.arrays: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.moments: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        self.step = 0
        self.meta: dict = {}
        self._leaves: dict[tuple[int, str], Tensor] = {}

    def __contains__(self, name):
        return name in self.arrays

    def __getitem__(self, name) -> np.ndarray:
        return self.arrays[name]

    def __iter__(self):
        return iter(self.arrays)

    def names(self) -> list[str]:
        return list(self.arrays)

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        value = np.array(value, dtype=np.float64)
        self.arrays[name] = value
        self.grads[name] = np.zeros_like(value)
        self.moments[name] = (np.zeros_like(value), np.zeros_like(value))
        return value

    def init_uniform(self, name: str, shape, fan_in: int, rng: np.random.Generator) -> np.ndarray:
        bound = 1.0 / np.sqrt(max(fan_in, 1))
        return self.add(name, rng.uniform(-bound, bound, size=shape))

    def num_parameters(self) -> int:
        return int(sum(a.size for a in self.arrays.values()))

    def leaf(self, name: str) -> Tensor:
        """Tensor view of a parameter for the active tape (cached per tape)."""
        tape = Tape.current()
        if tape is None:
            return Tensor(self.arrays[name], name=name)
        key = (id(tape), name)
        t = self._leaves.get(key)
        if t is None:
            t = self._leaves[key] = Tensor(self.arrays[name], requires_grad=True, name=name)
        return t

    def collect_grads(self, tape: Tape | None = None):
        """Add leaf gradients from ``tape`` (or all tapes) into the grad slots."""
        for (tid, name), t in list(self._leaves.items()):
            if tape is not None and tid != id(tape):
                continue
            if t.grad is not None:
                self.grads[name] += t.grad
            del self._leaves[(tid, name)]

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)

    def grad_norm(self) -> float:
        return float(np.sqrt(sum(float((g * g).sum()) for g in self.grads.values())))

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays.values()]) if self.arrays else np.zeros(0)

    def copy(self) -> "ParameterStore":
        other = ParameterStore()
        for name, a in self.arrays.items():
            other.add(name, a.copy())
        other.meta = json.loads(json.dumps(self.meta))
        return other

    # -- checkpoints -----------------------------------------------------
    def save(self, path: str | Path, extra: dict | None = None, optimizer: bool = True):
        """Write a flat container: magic, manifest length, JSON manifest, raw bytes.

        With ``optimizer`` the Adam moments and step count ride along so a
        resumed run continues exactly.
        """
        entries, blobs, offset = [], [], 0
        slots = [("param", self.arrays)]
        if optimizer:
            slots += [("m", {n: m for n, (m, _) in self.moments.items()}),
                      ("v", {n: v for n, (_, v) in self.moments.items()})]
        for slot, arrays in slots:
            for name, a in arrays.items():
                data = np.ascontiguousarray(a, dtype="<f8").tobytes()
                entries.append({"name": name, "slot": slot, "shape": list(a.shape), "dtype": "<f8",
                                "offset": offset, "nbytes": len(data)})
                blobs.append(data)
                offset += len(data)
        manifest = {"arrays": entries, "meta": self.meta, "extra": extra or {},
                    "step": self.step if optimizer else 0}
        header = json.dumps(manifest, sort_keys=True).encode("utf-8")
        with open(path, "wb") as fout:
            fout.write(MAGIC)
            fout.write(struct.pack("<Q", len(header)))
            fout.write(header)
            for b in blobs:
                fout.write(b)

    @classmethod
    def load(cls, path: str | Path) -> tuple["ParameterStore", dict]:
        with open(path, "rb") as fin:
            if fin.read(len(MAGIC)) != MAGIC:
                raise ValueError(f"{path} is not a checkpoint file")
            (n,) = struct.unpack("<Q", fin.read(8))
            manifest = json.loads(fin.read(n).decode("utf-8"))
            payload = fin.read()
        store = cls()
        moments: dict[str, dict[str, np.ndarray]] = {"m": {}, "v": {}}
        for e in manifest["arrays"]:
            raw = payload[e["offset"]: e["offset"] + e["nbytes"]]
            value = np.frombuffer(raw, dtype=e["dtype"]).reshape(e["shape"]).copy()
            slot = e.get("slot", "param")
            if slot == "param":
                store.add(e["name"], value)
            else:
                moments[slot][e["name"]] = value
        for name in store.arrays:
            if name in moments["m"]:
                store.moments[name] = (moments["m"][name], moments["v"][name])
        store.step = int(manifest.get("step", 0))
        store.meta = manifest.get("meta", {})
        return store, manifest.get("extra", {})
