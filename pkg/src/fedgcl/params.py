"""Named, ordered parameter tensors: the unit that training updates average.

Insertion order is the canonical order for flatten/unflatten and for all
whole-model arithmetic, so runs stay bit-reproducible.
"""

from __future__ import annotations

import json

import numpy as np

from .autodiff import Tensor

Schema = list[tuple[str, tuple[int, int]]]


class ParamStore:
    """Ordered map name -> Tensor with unique names."""

    def __init__(self, items=None):
        self._items: dict[str, Tensor] = {}
        if items:
            for name, tensor in items:
                self.add(name, tensor)

    def add(self, name: str, tensor: Tensor) -> None:
        if name in self._items:
            raise ValueError(f"duplicate parameter name {name!r}")
        if not isinstance(tensor, Tensor):
            tensor = Tensor(tensor)
        self._items[name] = tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._items[name]

    def __contains__(self, name: str) -> bool:
        return name in self._items

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def names(self) -> list[str]:
        return list(self._items)

    def items(self):
        return self._items.items()

    def schema(self) -> Schema:
        return [(name, t.shape) for name, t in self._items.items()]

    def copy(self) -> "ParamStore":
        return ParamStore((name, Tensor(t.data.copy())) for name, t in self._items.items())

    def total_size(self) -> int:
        return sum(t.data.size for t in self._items.values())

    def allclose(self, other: "ParamStore", rtol=0.0, atol=0.0) -> bool:
        if self.schema() != other.schema():
            return False
        return all(
            np.allclose(t.data, other[name].data, rtol=rtol, atol=atol)
            for name, t in self.items()
        )


def flatten(store: ParamStore) -> np.ndarray:
    """Concatenate all tensors row-major, in insertion order."""
    if len(store) == 0:
        return np.zeros(0)
    return np.concatenate([t.data.ravel() for _, t in store.items()])


def unflatten(vector: np.ndarray, schema: Schema) -> ParamStore:
    """Rebuild a store from a flat vector; inverse of flatten for its schema."""
    vector = np.asarray(vector, dtype=np.float64).ravel()
    expected = sum(r * c for _, (r, c) in schema)
    if vector.size != expected:
        raise ValueError(f"vector length {vector.size} does not match schema size {expected}")
    store = ParamStore()
    offset = 0
    for name, (r, c) in schema:
        store.add(name, Tensor(vector[offset : offset + r * c].reshape(r, c)))
        offset += r * c
    return store


def sgd_step(params: ParamStore, grads: dict[str, np.ndarray], lr: float) -> ParamStore:
    """One plain gradient-descent update; returns a new store."""
    if set(grads) != set(params.names()):
        missing = set(params.names()).symmetric_difference(grads)
        raise ValueError(f"gradient keys do not match parameters: {sorted(missing)}")
    out = ParamStore()
    for name, t in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != t.shape:
            raise ValueError(f"gradient for {name!r} has shape {g.shape}, expected {t.shape}")
        out.add(name, Tensor(t.data - lr * g))
    return out


def save_params(store: ParamStore, path) -> None:
    """JSON checkpoint: name -> {shape, row-major data}, exact for float64."""
    payload = {
        name: {"shape": list(t.shape), "data": t.data.ravel().tolist()}
        for name, t in store.items()
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_params(path) -> ParamStore:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    store = ParamStore()
    for name, entry in payload.items():
        r, c = entry["shape"]
        store.add(name, Tensor(np.asarray(entry["data"], dtype=np.float64).reshape(r, c)))
    return store
