"""Central finite-difference oracle shared by the gradient tests.

Checks run in float64 (modules are cast first) so the h=1e-3 central
difference itself is accurate to ~1e-8 and the stated 1e-3 relative
tolerance tests the analytic gradient, not the oracle.
"""

import numpy as np


def numerical_grad(f, x, h=1e-3):
    """Central differences of scalar-valued f() w.r.t. array x (in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        fp = f()
        x[idx] = orig - h
        fm = f()
        x[idx] = orig
        g[idx] = (fp - fm) / (2.0 * h)
    return g


def rel_error(analytic, numeric):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.abs(numeric).max()
    if denom == 0.0:
        return np.abs(analytic).max()
    return float(np.abs(analytic - numeric).max() / denom)


def check_input_grad(build_scalar, x_tensor, h=1e-3):
    """build_scalar() evaluates the graph from x_tensor and returns a Tensor
    scalar; returns the relative error between backprop and differences."""
    out = build_scalar()
    x_tensor.grad = None
    out.backward()
    analytic = x_tensor.grad.copy()
    numeric = numerical_grad(lambda: float(build_scalar().data), x_tensor.data, h=h)
    return rel_error(analytic, numeric)


def projection_loss(t, seed=0):
    """Fixed random projection of a tensor to a scalar; stricter than mean."""
    from wdci import autodiff as ad

    rng = np.random.default_rng(seed)
    r = rng.standard_normal(t.data.shape)
    return ad.sum_(t * r)
