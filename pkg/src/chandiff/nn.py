"""Dense tanh network with an explicit backward pass and plain SGD."""

import numpy as np

OUTPUT_ACTIVATIONS = ("linear", "sigmoid", "tanh")


class MLP:
    """Fully connected network ``x -> tanh(...) -> ... -> out_act(W x + b)``.

    Weights are stored as ``(fan_in, fan_out)`` matrices so a batch ``x`` of
    shape ``(B, fan_in)`` maps through ``x @ W + b``.
    """

    def __init__(self, sizes, rng=None, output="linear"):
        if output not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {output!r}")
        self.sizes = tuple(int(s) for s in sizes)
        self.output = output
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            if rng is None:
                self.weights.append(np.zeros((fan_in, fan_out)))
                self.biases.append(np.zeros(fan_out))
            else:
                bound = 1.0 / np.sqrt(fan_in)
                self.weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
                self.biases.append(rng.uniform(-bound, bound, fan_out))

    # -- parameters --------------------------------------------------------

    def parameters(self):
        """Parameter arrays in serialization order: W1, b1, W2, b2, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def set_flat(self, flat) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.n_params():
            raise ValueError(f"expected {self.n_params()} parameters, got {flat.size}")
        pos = 0
        for p in self.parameters():
            p[...] = flat[pos:pos + p.size].reshape(p.shape)
            pos += p.size

    def copy(self) -> "MLP":
        other = MLP(self.sizes, None, self.output)
        other.set_flat(self.get_flat())
        return other

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters())

    # -- forward / backward ------------------------------------------------

    def forward(self, x, keep=False):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if i < last:
                h = np.tanh(z)
            elif self.output == "sigmoid":
                h = 0.5 * (1.0 + np.tanh(0.5 * z))
            elif self.output == "tanh":
                h = np.tanh(z)
            else:
                h = z
            acts.append(h)
        return (h, acts) if keep else h

    def backward(self, acts, grad_out):
        """Parameter gradients given ``dL/d(output)``; same order as :meth:`parameters`."""
        delta = np.asarray(grad_out, dtype=np.float64)
        out = acts[-1]
        if self.output == "sigmoid":
            delta = delta * out * (1.0 - out)
        elif self.output == "tanh":
            delta = delta * (1.0 - out * out)
        grads = []
        for i in range(len(self.weights) - 1, -1, -1):
            h_in = acts[i]
            grads.append(delta.sum(axis=0))
            grads.append(h_in.T @ delta)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (1.0 - h_in * h_in)
        grads.reverse()
        return grads

    def sgd_step(self, grads, learning_rate: float) -> None:
        for p, g in zip(self.parameters(), grads):
            p -= learning_rate * g
