"""Parameter containers and the affine building blocks shared by every model."""

from typing import Dict, Iterator, List, Tuple

import numpy as np

from src.errors import DataError
from src.tensor import Tensor, matmul, relu, reshape


class StateError(DataError):
    """Raised when a parameter state does not match a module's parameters."""
    pass


class Module:
    """
    Named tree of parameter tensors.

    Parameters and sub-modules are registered explicitly, and their
    registration order fixes the order of ``named_parameters``.
    """

    def __init__(self):
        self._parameters: Dict[str, Tensor] = {}
        self._modules: Dict[str, "Module"] = {}

    def add_parameter(self, name: str, values: np.ndarray) -> Tensor:
        tensor = Tensor(values, requires_grad=True)
        self._parameters[name] = tensor
        return tensor

    def add_module(self, name: str, module: "Module") -> "Module":
        self._modules[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, tensor in self._parameters.items():
            yield prefix + name, tensor
        for name, module in self._modules.items():
            yield from module.named_parameters(prefix + name + ".")

    def parameters(self) -> List[Tensor]:
        return [tensor for _, tensor in self.named_parameters()]

    def parameter_count(self) -> int:
        return sum(tensor.size for tensor in self.parameters())

    def zero_grad(self) -> None:
        for tensor in self.parameters():
            tensor.zero_grad()

    def state(self) -> Dict[str, np.ndarray]:
        """Copy of every parameter's values, keyed by dotted name."""
        return {name: tensor.values.copy() for name, tensor in self.named_parameters()}

    def load_state(self, state: Dict[str, np.ndarray]) -> None:
        """
        Overwrite parameter values from a state mapping.

        Raises:
            StateError: If names or shapes differ from this module's parameters
        """
        own = dict(self.named_parameters())
        if set(own) != set(state):
            missing = sorted(set(own) - set(state))
            unexpected = sorted(set(state) - set(own))
            raise StateError(f"parameter names differ: missing {missing}, unexpected {unexpected}")
        for name, tensor in own.items():
            values = np.asarray(state[name], dtype=np.float64)
            if values.shape != tensor.shape:
                raise StateError(f"parameter {name}: shape {values.shape} != {tensor.shape}")
            tensor.values = values.copy()


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Linear(Module):
    """Affine map x -> x W + b applied to the last axis."""

    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator):
        super().__init__()
        self.fan_in = fan_in
        self.fan_out = fan_out
        self.weight = self.add_parameter("weight", glorot_uniform(rng, fan_in, fan_out))
        self.bias = self.add_parameter("bias", np.zeros(fan_out))

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim == 1:
            row = matmul(reshape(x, (1, self.fan_in)), self.weight) + self.bias
            return reshape(row, (self.fan_out,))
        return matmul(x, self.weight) + self.bias


class MLP(Module):
    """
    Stack of affine layers with ReLU between them.

    ``widths`` lists the input width followed by every layer's output width, so
    a single width describes the identity. The last layer is activated only
    when ``activate_last`` is set.
    """

    def __init__(self, widths: List[int], rng: np.random.Generator, activate_last: bool = False):
        super().__init__()
        self.widths = list(widths)
        self.activate_last = activate_last
        self.layers = [
            self.add_module(str(i), Linear(fan_in, fan_out, rng))
            for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:]))
        ]

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1 or self.activate_last:
                x = relu(x)
        return x
