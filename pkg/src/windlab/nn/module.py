"""Lightweight module/parameter registry with deterministic naming."""

from __future__ import annotations

import numpy as np

from .tensor import Parameter

__all__ = ["Module", "ModuleList", "uniform_init", "fan_in_uniform"]


class Module:
    """Base class: attributes that are Parameters or Modules are registered
    in assignment order, giving stable dotted names for checkpoints."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        out = []
        for name, p in self._params.items():
            out.append((prefix + name, p))
        for name, child in self._children.items():
            out.extend(child.named_parameters(prefix + name + "."))
        return out

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> list[str]:
        """Copy matching arrays into parameters; returns the names skipped
        (absent or shape-mismatched).  strict=True raises on any skip."""
        skipped = []
        named = dict(self.named_parameters())
        for name, p in named.items():
            if name in state and tuple(state[name].shape) == tuple(p.data.shape):
                p.data = np.ascontiguousarray(state[name], dtype=p.data.dtype)
            else:
                skipped.append(name)
        extra = [k for k in state if k not in named]
        if strict and (skipped or extra):
            raise KeyError(f"state mismatch: missing-or-misshaped {skipped}, unexpected {extra}")
        return skipped

    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))


class ModuleList(Module):
    """Sequence container; children named by index."""

    def __init__(self, modules=()):
        super().__init__()
        self._items: list[Module] = []
        for m in modules:
            self.append(m)

    def append(self, module: Module):
        self._children[str(len(self._items))] = module
        self._items.append(module)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


def uniform_init(rng: np.random.Generator, shape, bound: float, dtype) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def fan_in_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    """Torch-style default: U(-1/sqrt(fan_in), +1/sqrt(fan_in))."""
    bound = 1.0 / np.sqrt(fan_in) if fan_in > 0 else 0.0
    return uniform_init(rng, shape, bound, dtype)
