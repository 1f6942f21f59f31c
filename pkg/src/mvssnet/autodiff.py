"""Define-by-run reverse-mode autodiff over float64 numpy arrays.

Every primitive in :mod:`mvssnet.ops` produces a :class:`Tensor` carrying a
:class:`Node` (when gradients are enabled and an input requires them).  Nodes
get a global sequence number at creation, so the tape of a scalar output is
simply its reachable nodes sorted by that number; backward replays it in
reverse.
"""

from __future__ import annotations

import contextlib
import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

DTYPE = np.float64

_seq = itertools.count()
_grad_enabled = True


class DimensionError(ValueError):
    """Shape contract violated by an operation's inputs."""


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation."""


class UsageError(ValueError):
    """Operation invoked with invalid arguments."""


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


@dataclass(eq=False)
class Node:
    op: str
    inputs: tuple["Tensor", ...]
    # maps d(out) to a tuple of d(input) (None for inputs not requiring grad)
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]
    seq: int = field(default_factory=lambda: next(_seq))


class Tensor:
    """Dense float64 array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "node", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.node: Node | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: np.ndarray | None = None) -> "Tape":
        tape = Tape.from_output(self)
        tape.backward(grad)
        return tape

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # arithmetic sugar; implementations live in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)


class Parameter(Tensor):
    """Trainable tensor with an SGD momentum buffer."""

    __slots__ = ("momentum_buffer",)

    def __init__(self, data, name: str | None = None):
        super().__init__(data, requires_grad=True, name=name)
        self.momentum_buffer: np.ndarray | None = None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(data: np.ndarray, inputs: Sequence[Tensor], backward, op: str) -> Tensor:
    """Wrap a primitive's forward output, recording a node when needed."""
    out = Tensor(data)
    if _grad_enabled and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.node = Node(op, tuple(inputs), backward)
    return out


class Tape:
    """Operations reachable from one output, in execution order."""

    def __init__(self, output: Tensor, nodes: list[Node]):
        self.output = output
        self.nodes = nodes

    @classmethod
    def from_output(cls, output: Tensor) -> "Tape":
        seen: set[int] = set()
        nodes: list[Node] = []
        stack = [output.node] if output.node is not None else []
        while stack:
            node = stack.pop()
            if id(node) in seen:
                continue
            seen.add(id(node))
            nodes.append(node)
            for t in node.inputs:
                if t.node is not None and id(t.node) not in seen:
                    stack.append(t.node)
        nodes.sort(key=lambda n: n.seq)
        return cls(output, nodes)

    @property
    def ops(self) -> list[str]:
        return [n.op for n in self.nodes]

    def backward(self, grad: np.ndarray | None = None) -> list[Node]:
        """Propagate gradients; returns nodes in the order they were visited."""
        out = self.output
        if grad is None:
            if out.size != 1:
                raise UsageError(f"backward without a seed gradient needs a scalar, got {out.shape}")
            grad = np.ones_like(out.data)
        grad = np.asarray(grad, dtype=DTYPE)
        if out.node is None:
            if out.requires_grad:
                _accumulate_leaf(out, grad)
            return []
        grads: dict[int, np.ndarray] = {id(out.node): grad}
        visited = []
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            visited.append(node)
            in_grads = node.backward(g)
            for t, gi in zip(node.inputs, in_grads):
                if gi is None or not t.requires_grad:
                    continue
                if t.node is not None:
                    key = id(t.node)
                    if key in grads:
                        grads[key] = grads[key] + gi
                    else:
                        grads[key] = gi
                else:
                    _accumulate_leaf(t, gi)
        return visited


def _accumulate_leaf(t: Tensor, g: np.ndarray) -> None:
    if g.shape != t.shape:
        raise DimensionError(f"gradient shape {g.shape} does not match tensor {t.shape}")
    if t.grad is None:
        t.grad = np.array(g, dtype=DTYPE, copy=True)
    else:
        t.grad += g


def grad_check(
    f: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-6,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Worst relative error between tape gradients and central differences.

    Each coordinate's error is ``|a - n| / max(|a|, |n|, 1e-3 * scale, 1e-10)``
    where ``scale`` is the largest gradient magnitude over all checked
    coordinates; the floor keeps coordinates with vanishing gradient (a conv
    bias feeding batch norm, say) from dominating through round-off.  ``max_coords`` limits the check to a random subset of
    coordinates across all inputs.
    """
    if not 1e-6 <= eps <= 1e-3:
        raise UsageError(f"eps must lie in [1e-6, 1e-3], got {eps}")
    for t in inputs:
        if not np.all(np.isfinite(t.data)):
            raise UsageError("grad_check inputs must be finite")
        t.grad = None
    out = f(*inputs)
    if out.size != 1:
        raise UsageError(f"grad_check needs a scalar-valued function, got shape {out.shape}")
    out.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]

    coords = [(i, j) for i, t in enumerate(inputs) for j in range(t.size)]
    if max_coords is not None and max_coords < len(coords):
        rng = rng or np.random.default_rng(0)
        pick = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[k] for k in sorted(pick)]

    numeric: dict[tuple[int, int], float] = {}
    with no_grad():
        for i, j in coords:
            flat = inputs[i].data.reshape(-1)
            orig = flat[j]
            flat[j] = orig + eps
            fp = f(*inputs).item()
            flat[j] = orig - eps
            fm = f(*inputs).item()
            flat[j] = orig
            numeric[(i, j)] = (fp - fm) / (2 * eps)

    scale = max((max(abs(analytic[i].reshape(-1)[j]), abs(n)) for (i, j), n in numeric.items()), default=0.0)
    worst = 0.0
    for (i, j), n in numeric.items():
        a = analytic[i].reshape(-1)[j]
        denom = max(abs(a), abs(n), 1e-3 * scale, 1e-10)
        worst = max(worst, abs(a - n) / denom)
    return worst
