"""Finite-difference checks over every differentiable building block."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from ..attention import DiffAttention, LambdaParams, diff_attn_head, multi_head_diff_attn
from ..losses import cls_loss, cov_loss, domain_correlation, exp_loss, rec_loss, seq_align_loss
from ..mdta import MdtaLayer
from ..numerics import RngTree, Tensor, grad_check, ops
from ..numerics.gradcheck import GradCheckReport

F64 = np.float64
TOLERANCE = 1e-5


@dataclass
class SuiteResult:
    name: str
    seed: int
    report: GradCheckReport


def _t(rng: np.random.Generator, *shape, scale: float = 1.0) -> Tensor:
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True, dtype=F64)


def case_linear(seed: int):
    g = np.random.default_rng(seed)
    return ops.linear, [_t(g, 2, 3, 4), _t(g, 4, 5), _t(g, 5)]


def case_conv1d(seed: int):
    g = np.random.default_rng(seed)
    stride, padding = (1, 1) if seed % 2 == 0 else (2, 2)
    return (lambda x, w, b: ops.conv1d(x, w, b, stride=stride, padding=padding)), \
        [_t(g, 2, 3, 11), _t(g, 4, 3, 3), _t(g, 4)]


def case_conv_transpose1d(seed: int):
    g = np.random.default_rng(seed)
    k, stride = (3, 3) if seed % 2 == 0 else (4, 2)
    return (lambda x, w, b: ops.conv_transpose1d(x, w, b, stride=stride)), \
        [_t(g, 2, 3, 5), _t(g, 3, 2, k), _t(g, 2)]


def case_max_pool_gelu(seed: int):
    g = np.random.default_rng(seed)
    return (lambda x: ops.max_pool1d(ops.gelu(x), 3)), [_t(g, 2, 3, 12)]


def case_softmax_rows(seed: int):
    g = np.random.default_rng(seed)
    return ops.softmax_rows, [_t(g, 4, 6, scale=2.0)]


def case_layer_norm(seed: int):
    g = np.random.default_rng(seed)
    return ops.layer_norm, [_t(g, 3, 4, 6), _t(g, 6), _t(g, 6)]


def case_diff_attn_head(seed: int):
    g = np.random.default_rng(seed)
    lp = LambdaParams(1, 3, layer=1 + seed % 4, rng=RngTree(seed), dtype=F64, std=0.3)
    q1, q2, k1, k2 = (_t(g, 5, 3) for _ in range(4))
    v = _t(g, 5, 4)

    def op(q1, q2, k1, k2, v, *_lam):
        out, _ = diff_attn_head(q1, q2, k1, k2, v, lp.value().reshape(1, 1))
        return out

    return op, [q1, q2, k1, k2, v, lp.q1, lp.k1, lp.q2, lp.k2]


def case_multi_head_diff_attn(seed: int):
    g = np.random.default_rng(seed)
    tree = RngTree(seed)
    lp = LambdaParams(2, 2, layer=2, rng=tree.child("lam"), dtype=F64, std=0.3)
    attn = DiffAttention(8, 2, lp, tree.child("attn"), F64)
    xq, xkv = _t(g, 2, 4, 8), _t(g, 2, 5, 8)

    def op(xq, xkv, *_params):
        return multi_head_diff_attn(xq, xkv, attn)[0]

    return op, [xq, xkv, *attn.parameters()]


def case_mdta_layer(seed: int):
    g = np.random.default_rng(seed)
    layer = MdtaLayer(8, 2, 1 + seed % 3, RngTree(seed), F64, lambda_std=0.3)
    inputs = [_t(g, 2, 3, 8), _t(g, 2, 1, 8), _t(g, 2, 3, 8), _t(g, 2, 1, 8)]

    def op(se, ge, so, go, *_params):
        return ops.concat(list(layer(se, ge, so, go)), axis=-2)

    return op, inputs + layer.parameters()


def case_cls_loss(seed: int):
    g = np.random.default_rng(seed)
    labels = g.integers(0, 5, size=(2, 4))
    return (lambda z: cls_loss(z, labels)[0]), [_t(g, 2, 4, 5)]


def case_rec_loss(seed: int):
    g = np.random.default_rng(seed)
    x = g.standard_normal((2, 3, 2, 7))
    return (lambda xh: rec_loss(x, xh)), [_t(g, 2, 3, 2, 7)]


def case_exp_loss(seed: int):
    g = np.random.default_rng(seed)
    return (lambda *f: exp_loss(f)), [_t(g, 5, 4), _t(g, 6, 4), _t(g, 4, 4)]


def case_cov_loss(seed: int):
    g = np.random.default_rng(seed)
    return (lambda *f: cov_loss(f)), [_t(g, 5, 3), _t(g, 6, 3), _t(g, 4, 3)]


def case_seq_loss(seed: int):
    g = np.random.default_rng(seed)
    return (lambda *s: seq_align_loss([domain_correlation(x) for x in s])), \
        [_t(g, 2, 4, 5), _t(g, 3, 4, 5), _t(g, 2, 4, 5)]


CASES: dict[str, Callable[[int], tuple]] = {
    "linear": case_linear,
    "conv1d": case_conv1d,
    "conv_transpose1d": case_conv_transpose1d,
    "max_pool1d+gelu": case_max_pool_gelu,
    "softmax_rows": case_softmax_rows,
    "layer_norm": case_layer_norm,
    "diff_attn_head": case_diff_attn_head,
    "multi_head_diff_attn": case_multi_head_diff_attn,
    "mdta_layer": case_mdta_layer,
    "cls_loss": case_cls_loss,
    "rec_loss": case_rec_loss,
    "exp_loss": case_exp_loss,
    "cov_loss": case_cov_loss,
    "seq_align_loss": case_seq_loss,
}


def run_case(name: str, seed: int, tolerance: float = TOLERANCE) -> SuiteResult:
    op, inputs = CASES[name](seed)
    return SuiteResult(name, seed, grad_check(op, inputs, tolerance=tolerance, seed=seed))


def run_suite(seeds: Iterable[int] = range(10), names: Iterable[str] | None = None,
              tolerance: float = TOLERANCE, echo=None) -> list[SuiteResult]:
    out = []
    seeds = list(seeds)
    for name in (CASES if names is None else names):
        t0 = time.perf_counter()
        rows = [run_case(name, s, tolerance) for s in seeds]
        out.extend(rows)
        if echo:
            worst = max(r.report.worst_error for r in rows)
            ok = all(r.report.passed for r in rows)
            echo(f"{name:<22} {'ok' if ok else 'FAIL'}  worst {worst:.2e}  "
                 f"({len(rows)} seeds, {time.perf_counter() - t0:.1f}s)")
    return out
