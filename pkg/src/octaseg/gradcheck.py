"""Finite-difference verification of recorded gradients.

Checks run in float64 with central differences (default step 1e-5) so
discretization error, not float noise, sets the comparison floor. The
numerical side never touches the recorded graph: it just re-evaluates
the forward function at perturbed inputs.
"""

from __future__ import annotations

import time

import numpy as np

from .autodiff import Tensor, backward

DEFAULT_STEP = 1e-5
DEFAULT_TOL = 1e-3


def numerical_gradient(f, tensors, index, eps=DEFAULT_STEP):
    """Central-difference gradient of scalar ``f(*tensors)`` w.r.t. one input."""
    t = tensors[index]
    base = t.data
    grad = np.zeros_like(base, dtype=np.float64)
    flat = base.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        hi = float(f(*tensors).data)
        flat[i] = old - eps
        lo = float(f(*tensors).data)
        flat[i] = old
        gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def relative_error(a, b):
    """Scale-free distance between two gradient arrays."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-8)
    return float(np.abs(a - b).max(initial=0.0) / denom)


def check_gradients(f, tensors, eps=DEFAULT_STEP, tol=DEFAULT_TOL):
    """Compare recorded gradients of scalar ``f(*tensors)`` against central
    finite differences for every input with ``requires_grad``.

    Returns the worst relative error observed. Inputs must be float64;
    float32 rounding would swamp the tolerance.
    """
    for t in tensors:
        if t.requires_grad and t.data.dtype != np.float64:
            raise ValueError("gradient checking requires float64 inputs")
        t.grad = None
    loss = f(*tensors)
    backward(loss)
    worst = 0.0
    for i, t in enumerate(tensors):
        if not t.requires_grad:
            continue
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numerical_gradient(f, tensors, i, eps=eps)
        worst = max(worst, relative_error(analytic, numeric))
    if worst > tol:
        raise AssertionError(f"gradient mismatch: relative error {worst:.3e} > {tol:g}")
    return worst


def rand64(rng, *shape, lo=-1.0, hi=1.0, requires_grad=True):
    """Random float64 tensor helper for gradient checks."""
    data = rng.uniform(lo, hi, size=shape).astype(np.float64)
    return Tensor(data, requires_grad=requires_grad)


def run_suite(checks, tol=DEFAULT_TOL, report=print):
    """Run named gradient checks; each entry is (name, callable) where the
    callable performs one check and returns the observed relative error.

    Prints one line per check and returns (all_passed, results).
    """
    results = []
    ok = True
    for name, fn in checks:
        t0 = time.perf_counter()
        try:
            err = fn()
            status = "PASS"
        except AssertionError as exc:
            err = float("nan")
            status = f"FAIL ({exc})"
            ok = False
        dt = time.perf_counter() - t0
        results.append((name, err, status))
        report(f"{status:<6} {name:<40} rel_err={err:.2e}  [{dt:.2f}s]")
    return ok, results
