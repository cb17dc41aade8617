"""Named parameter storage and the text checkpoint encoding."""

from __future__ import annotations

from collections.abc import Iterable, Iterator, Mapping
from typing import IO

import numpy as np

FORMAT_VERSION = 1
GATE_ORDER = ("i", "f", "g", "o")


class CheckpointError(ValueError):
    """Raised when a parameter manifest cannot be parsed or does not match."""


class ParameterStore(Mapping):
    """Ordered mapping of parameter name to a float64 array.

    Stores own copies of their arrays; use :meth:`replace` or the
    optimizer to derive updated stores instead of mutating in place.
    """

    def __init__(self, entries: Mapping[str, np.ndarray] | Iterable[tuple[str, np.ndarray]] = ()):
        items = entries.items() if isinstance(entries, Mapping) else entries
        self._entries: dict[str, np.ndarray] = {}
        for name, value in items:
            if name in self._entries:
                raise ValueError(f"duplicate parameter name {name!r}")
            arr = np.array(value, dtype=np.float64, copy=True)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"parameter {name!r} contains non-finite values")
            arr.setflags(write=False)
            self._entries[name] = arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self._entries[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __repr__(self) -> str:
        shapes = ", ".join(f"{k}{tuple(v.shape)}" for k, v in self._entries.items())
        return f"ParameterStore({shapes})"

    @property
    def size(self) -> int:
        return sum(v.size for v in self._entries.values())

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: tuple(v.shape) for k, v in self._entries.items()}

    def zeros_like(self) -> ParameterStore:
        return ParameterStore((k, np.zeros_like(v)) for k, v in self._entries.items())

    def replace(self, **updates: np.ndarray) -> ParameterStore:
        merged = dict(self._entries)
        for k, v in updates.items():
            if k not in merged:
                raise KeyError(k)
            if np.shape(v) != merged[k].shape:
                raise ValueError(f"shape mismatch for {k!r}: {np.shape(v)} vs {merged[k].shape}")
            merged[k] = v
        return ParameterStore(merged)

    def flat(self) -> np.ndarray:
        if not self._entries:
            return np.zeros(0)
        return np.concatenate([v.ravel() for v in self._entries.values()])

    def from_flat(self, vector: np.ndarray) -> ParameterStore:
        vector = np.asarray(vector, dtype=np.float64)
        if vector.size != self.size:
            raise ValueError(f"expected {self.size} values, got {vector.size}")
        out, pos = [], 0
        for k, v in self._entries.items():
            out.append((k, vector[pos:pos + v.size].reshape(v.shape)))
            pos += v.size
        return ParameterStore(out)

    def equals(self, other: ParameterStore) -> bool:
        """Bit-exact comparison of names, shapes and values."""
        if list(self) != list(other):
            return False
        return all(
            self[k].shape == other[k].shape and self[k].tobytes() == other[k].tobytes()
            for k in self
        )


def write_store(fh: IO[str], label: str, store: ParameterStore) -> None:
    """Append one store section to an open manifest.

    Values are written with ``float.hex`` so reading them back is exact.
    """
    fh.write(f"store {label} {len(store)}\n")
    for name, arr in store.items():
        shape = ",".join(str(d) for d in arr.shape) or "-"
        fh.write(f"param {name} {shape}\n")
        fh.write(" ".join(float(x).hex() for x in arr.ravel()) + "\n")
    fh.write("endstore\n")


def read_store(lines: Iterator[str], label: str) -> ParameterStore:
    header = _next(lines).split()
    if len(header) != 3 or header[0] != "store" or header[1] != label:
        raise CheckpointError(f"expected store section {label!r}, got {' '.join(header)!r}")
    count = int(header[2])
    entries = []
    for _ in range(count):
        parts = _next(lines).split()
        if len(parts) != 3 or parts[0] != "param":
            raise CheckpointError(f"malformed parameter header in store {label!r}")
        name = parts[1]
        shape = () if parts[2] == "-" else tuple(int(d) for d in parts[2].split(","))
        tokens = _next(lines).split()
        expected = int(np.prod(shape)) if shape else 1
        if len(tokens) != expected:
            raise CheckpointError(
                f"parameter {name!r}: expected {expected} values, found {len(tokens)}"
            )
        try:
            values = np.array([float.fromhex(t) for t in tokens], dtype=np.float64)
        except ValueError as exc:
            raise CheckpointError(f"parameter {name!r}: bad value encoding") from exc
        entries.append((name, values.reshape(shape)))
    if _next(lines).strip() != "endstore":
        raise CheckpointError(f"store {label!r} not terminated")
    return ParameterStore(entries)


def _next(lines: Iterator[str]) -> str:
    try:
        return next(lines).rstrip("\n")
    except StopIteration:
        raise CheckpointError("unexpected end of checkpoint (truncated file?)") from None


def save_params(path, store: ParameterStore, *, hidden: int, layers: int) -> None:
    """Write a standalone parameter manifest."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"ergan-params {FORMAT_VERSION}\n")
        fh.write(f"gate_order {','.join(GATE_ORDER)}\n")
        fh.write(f"hidden {hidden}\nlayers {layers}\n")
        write_store(fh, "params", store)
        fh.write("eof\n")


def load_params(path) -> tuple[ParameterStore, dict]:
    with open(path, encoding="ascii") as fh:
        lines = iter(fh.readlines())
    magic = _next(lines).split()
    if magic[:1] != ["ergan-params"]:
        raise CheckpointError("not a parameter manifest")
    if int(magic[1]) != FORMAT_VERSION:
        raise CheckpointError(f"unsupported manifest version {magic[1]}")
    meta = {}
    for key in ("gate_order", "hidden", "layers"):
        k, _, v = _next(lines).partition(" ")
        if k != key:
            raise CheckpointError(f"expected header {key!r}, got {k!r}")
        meta[key] = v
    if meta["gate_order"] != ",".join(GATE_ORDER):
        raise CheckpointError(f"unsupported gate order {meta['gate_order']}")
    store = read_store(lines, "params")
    if _next(lines).strip() != "eof":
        raise CheckpointError("missing end marker")
    return store, {"hidden": int(meta["hidden"]), "layers": int(meta["layers"])}
