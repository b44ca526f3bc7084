"""AdamW with decoupled weight decay, plus the cosine learning-rate schedule."""

import math

import numpy as np


def cosine_lr(step, total_steps, base_lr):
    """Anneal from base_lr at step 0 to exactly 0 at step >= total_steps."""
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    t = min(max(step, 0), total_steps) / total_steps
    return 0.5 * (1.0 + math.cos(math.pi * t)) * base_lr


def clip_grad_norm(tensors, max_norm):
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = 0.0
    grads = [t.grad for t in tensors if t.grad is not None]
    for g in grads:
        total += float((g * g).sum())
    norm = math.sqrt(total)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for t in tensors:
            if t.grad is not None:
                t.grad = t.grad * scale
    return norm


class AdamW:
    """Decoupled weight decay: the decay term multiplies the parameter itself
    and never enters the moment estimates."""

    def __init__(self, named_params, lr=1e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        self.named_params = list(named_params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self._m = {name: np.zeros_like(t.data) for name, t in self.named_params}
        self._v = {name: np.zeros_like(t.data) for name, t in self.named_params}

    def zero_grad(self):
        for _, t in self.named_params:
            t.grad = None

    def step(self, lr=None):
        if lr is None:
            lr = self.lr
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.step_count
        bc2 = 1.0 - b2**self.step_count
        for name, t in self.named_params:
            g = t.grad
            if g is None:
                continue
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * t.data
            t.data -= lr * update

    def state_arrays(self):
        """Optimizer state as named arrays for the checkpoint container."""
        out = {"opt.step": np.array([self.step_count], dtype=np.int64)}
        for name in self._m:
            out[f"opt.m.{name}"] = self._m[name]
            out[f"opt.v.{name}"] = self._v[name]
        return out

    def load_state_arrays(self, arrays):
        self.step_count = int(arrays["opt.step"][0])
        for name in self._m:
            self._m[name] = np.array(arrays[f"opt.m.{name}"], dtype=np.float64)
            self._v[name] = np.array(arrays[f"opt.v.{name}"], dtype=np.float64)
