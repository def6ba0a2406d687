"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import GradTape, Tensor


class GradCheckError(AssertionError):
    pass


@dataclass
class GradCheckReport:
    passed: bool
    worst_error: float
    worst_input: int
    worst_index: tuple[int, ...]
    analytic: float
    numeric: float
    n_checked: int

    def __str__(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return (
            f"gradcheck {status}: {self.n_checked} coords, worst error {self.worst_error:.3e} "
            f"at input {self.worst_input} index {self.worst_index} "
            f"(analytic {self.analytic:.10g}, numeric {self.numeric:.10g})"
        )


def grad_check(
    op: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    tolerance: float = 1e-5,
    h: float = 1e-5,
    seed: int = 0,
    raise_on_fail: bool = False,
) -> GradCheckReport:
    """Compare tape gradients of ``op(*inputs)`` with central differences.

    Non-scalar outputs are contracted with a fixed random cotangent so the
    whole Jacobian is exercised. Only inputs with ``requires_grad`` are
    perturbed. Error per coordinate is ``|a - n| / max(1, |n|)``.
    """
    for t in inputs:
        if t.requires_grad and t.dtype != np.float64:
            raise TypeError("grad_check needs float64 inputs")

    probe = Tensor(op(*inputs).data)
    weights = np.random.default_rng(seed).standard_normal(probe.shape)

    def scalar() -> float:
        return float(np.sum(op(*inputs).data * weights))

    for t in inputs:
        t.grad = None
    with GradTape() as tape:
        out = op(*inputs)
        if out.requires_grad:
            tape.backward(out, grad=weights)

    worst = (-1.0, -1, (), 0.0, 0.0)
    count = 0
    for i, t in enumerate(inputs):
        if not t.requires_grad:
            continue
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        for idx in np.ndindex(*t.shape):
            orig = t.data[idx]
            t.data[idx] = orig + h
            fp = scalar()
            t.data[idx] = orig - h
            fm = scalar()
            t.data[idx] = orig
            numeric = (fp - fm) / (2.0 * h)
            a = float(analytic[idx])
            err = abs(a - numeric) / max(1.0, abs(numeric))
            count += 1
            if err > worst[0]:
                worst = (err, i, idx, a, numeric)

    report = GradCheckReport(
        passed=worst[0] <= tolerance,
        worst_error=max(worst[0], 0.0),
        worst_input=worst[1],
        worst_index=tuple(int(j) for j in worst[2]),
        analytic=worst[3],
        numeric=worst[4],
        n_checked=count,
    )
    if raise_on_fail and not report.passed:
        raise GradCheckError(str(report))
    return report
