"""Central-difference gradient verification for any scalar Tensor function."""

from dataclasses import dataclass

import numpy as np


@dataclass
class GradCheckResult:
    max_rel_err: float
    worst_param: str
    worst_index: tuple
    analytic: float
    numeric: float
    passed: bool

    def __str__(self):
        return (
            f"max rel err {self.max_rel_err:.3e} at {self.worst_param}{list(self.worst_index)} "
            f"(analytic {self.analytic:.6e}, numeric {self.numeric:.6e})"
        )


def grad_check(f, named_tensors, h=1e-5, threshold=1e-4):
    """Compare analytic gradients of f() against central finite differences.

    f is a zero-argument callable returning a scalar Tensor; it must re-run
    the forward pass on each call (define-by-run makes this automatic) and
    read the checked Tensors' current .data. Relative error uses
    max(|analytic|, |numeric|, 1e-8) as the denominator.
    """
    named_tensors = list(named_tensors)
    for _, t in named_tensors:
        t.grad = None
    out = f()
    out.backward()
    analytic = {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for name, t in named_tensors
    }

    worst = GradCheckResult(0.0, "", (), 0.0, 0.0, True)
    for name, t in named_tensors:
        flat = t.data.ravel()
        ana = analytic[name].ravel()
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + h
            up = float(f().data)
            flat[i] = saved - h
            down = float(f().data)
            flat[i] = saved
            num = (up - down) / (2.0 * h)
            denom = max(abs(ana[i]), abs(num), 1e-8)
            rel = abs(ana[i] - num) / denom
            if rel > worst.max_rel_err:
                idx = np.unravel_index(i, t.data.shape)
                worst = GradCheckResult(rel, name, tuple(int(j) for j in idx), float(ana[i]), num, True)
    worst.passed = worst.max_rel_err < threshold
    return worst
