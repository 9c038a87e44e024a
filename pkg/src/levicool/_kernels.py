"""Hot numerical loops, compiled with numba when available.

Backend selection: the environment variable ``LEVICOOL_BACKEND`` may be
``auto`` (default: numba if importable, else numpy), ``numba`` (require it),
or ``numpy`` (force the pure-numpy path).  Both paths run the same
algorithms on the same pregenerated noise arrays, so results agree to
floating-point round-off; the numpy fallback trades speed for zero
compilation dependencies.  ``benchmarks/kernel_bench.py`` times the two.
"""

from __future__ import annotations

import os
import warnings

import numpy as np

ENV_VAR = "LEVICOOL_BACKEND"


def _choose_backend() -> str:
    raw = os.environ.get(ENV_VAR, "auto").strip().lower()
    if raw not in {"auto", "numba", "numpy"}:
        warnings.warn(f"{ENV_VAR}={raw!r} not recognised; falling back to 'auto'",
                      RuntimeWarning, stacklevel=2)
        raw = "auto"
    if raw == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if raw == "numba":
            raise RuntimeError(f"{ENV_VAR}=numba was requested but numba "
                               "cannot be imported") from None
        return "numpy"
    return "numba"


BACKEND = _choose_backend()

if BACKEND == "numba":
    from numba import prange
else:  # plain range keeps the numba-flavoured sources importable untouched
    prange = range


def active_backend() -> str:
    """Which kernel implementation this process is using ('numba' or 'numpy')."""
    return BACKEND


# ---------------------------------------------------------------------------
# covariance propagation: dV/dt = A V + V A^T + D, dm/dt = A m, RK4
#
# The same loop body serves both backends (numba simply compiles it); the
# matrices are 4x4 so the work is pure sequential dependency, not data
# parallelism.

def _rk4_lyapunov_impl(A, D, V0, m0, dt, n_steps, stride, v_rec, m_rec):
    At = A.T.copy()
    V = V0.copy()
    m = m0.copy()
    v_rec[0] = V
    m_rec[0] = m
    row = 1
    for k in range(n_steps):
        k1 = A @ V + V @ At + D
        k2 = A @ (V + 0.5 * dt * k1) + (V + 0.5 * dt * k1) @ At + D
        k3 = A @ (V + 0.5 * dt * k2) + (V + 0.5 * dt * k2) @ At + D
        k4 = A @ (V + dt * k3) + (V + dt * k3) @ At + D
        V = V + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        j1 = A @ m
        j2 = A @ (m + 0.5 * dt * j1)
        j3 = A @ (m + 0.5 * dt * j2)
        j4 = A @ (m + dt * j3)
        m = m + (dt / 6.0) * (j1 + 2.0 * j2 + 2.0 * j3 + j4)
        if (k + 1) % stride == 0:
            v_rec[row] = V
            m_rec[row] = m
            row += 1
    return row


# ---------------------------------------------------------------------------
# parametric-heating ensemble: x'' = -w^2 (1 + eps_k) x with eps frozen over
# each step.  numba path: parallel over runs, time loop inside; numpy path:
# vectorised over runs, time loop outside.

def _param_heating_numba_impl(omega, eps, x0, v0, dt, stride, e_rec):
    n_runs, n_steps = eps.shape
    for r in prange(n_runs):
        x = x0[r]
        v = v0[r]
        w2_0 = omega * omega
        e_rec[0, r] = v * v + w2_0 * x * x
        row = 1
        for k in range(n_steps):
            w2 = w2_0 * (1.0 + eps[r, k])
            k1x = v
            k1v = -w2 * x
            k2x = v + 0.5 * dt * k1v
            k2v = -w2 * (x + 0.5 * dt * k1x)
            k3x = v + 0.5 * dt * k2v
            k3v = -w2 * (x + 0.5 * dt * k2x)
            k4x = v + dt * k3v
            k4v = -w2 * (x + dt * k3x)
            x += dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
            if (k + 1) % stride == 0:
                e_rec[row, r] = v * v + w2_0 * x * x
                row += 1


def _param_heating_numpy(omega, eps, x0, v0, dt, stride, e_rec):
    n_runs, n_steps = eps.shape
    x = x0.copy()
    v = v0.copy()
    w2_0 = omega * omega
    e_rec[0] = v * v + w2_0 * x * x
    row = 1
    for k in range(n_steps):
        w2 = w2_0 * (1.0 + eps[:, k])
        k1x = v
        k1v = -w2 * x
        k2x = v + 0.5 * dt * k1v
        k2v = -w2 * (x + 0.5 * dt * k1x)
        k3x = v + 0.5 * dt * k2v
        k3v = -w2 * (x + 0.5 * dt * k2x)
        k4x = v + dt * k3v
        k4v = -w2 * (x + dt * k3x)
        x = x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        v = v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        if (k + 1) % stride == 0:
            e_rec[row] = v * v + w2_0 * x * x
            row += 1


# ---------------------------------------------------------------------------
# linear SDE trajectories, exact one-step discretisation: X <- M X + L xi with
# M = exp(A dt) and L L^T the integrated process noise over one step
# (pregenerated standard normals xi of shape (n_runs, n_steps, dim)).

def _linear_sde_numba_impl(M, L, X0, xi, stride, x_rec):
    n_runs, n_steps, dim = xi.shape
    for r in prange(n_runs):
        x = X0[r].copy()
        nxt = np.empty(dim)
        for i in range(dim):
            x_rec[0, r, i] = x[i]
        row = 1
        for k in range(n_steps):
            for i in range(dim):
                s = 0.0
                for j in range(dim):
                    s += M[i, j] * x[j] + L[i, j] * xi[r, k, j]
                nxt[i] = s
            x, nxt = nxt, x
            if (k + 1) % stride == 0:
                for i in range(dim):
                    x_rec[row, r, i] = x[i]
                row += 1


def _linear_sde_numpy(M, L, X0, xi, stride, x_rec):
    n_runs, n_steps, dim = xi.shape
    X = X0.copy()
    x_rec[0] = X
    row = 1
    for k in range(n_steps):
        X = X @ M.T + xi[:, k, :] @ L.T
        if (k + 1) % stride == 0:
            x_rec[row] = X
            row += 1


if BACKEND == "numba":
    import numba

    _rk4_lyapunov = numba.njit(cache=True)(_rk4_lyapunov_impl)
    _param_heating = numba.njit(cache=True, parallel=True)(_param_heating_numba_impl)
    _linear_sde = numba.njit(cache=True, parallel=True)(_linear_sde_numba_impl)
else:
    _rk4_lyapunov = _rk4_lyapunov_impl
    _param_heating = _param_heating_numpy
    _linear_sde = _linear_sde_numpy


def _n_records(n_steps: int, stride: int) -> int:
    return 1 + n_steps // stride


def rk4_lyapunov(A, D, V0, m0, dt, n_steps, stride=1):
    """Propagate covariance and means; returns (times, V[(n_rec,4,4)], m[(n_rec,4)])."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    D = np.ascontiguousarray(D, dtype=np.float64)
    V0 = np.ascontiguousarray(V0, dtype=np.float64)
    m0 = np.ascontiguousarray(m0, dtype=np.float64)
    n_rec = _n_records(n_steps, stride)
    v_rec = np.empty((n_rec, A.shape[0], A.shape[0]))
    m_rec = np.empty((n_rec, A.shape[0]))
    rows = _rk4_lyapunov(A, D, V0, m0, float(dt), int(n_steps), int(stride),
                         v_rec, m_rec)
    times = float(dt) * int(stride) * np.arange(rows)
    return times, v_rec[:rows], m_rec[:rows]


def param_heating_ensemble(omega, eps, x0, v0, dt, stride=1):
    """Energies (v^2 + w^2 x^2) of an ensemble under frozen-per-step spring noise.

    ``eps`` has shape (n_runs, n_steps); returns (times, energies
    (n_rec, n_runs)).
    """
    eps = np.ascontiguousarray(eps, dtype=np.float64)
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    v0 = np.ascontiguousarray(v0, dtype=np.float64)
    n_rec = _n_records(eps.shape[1], stride)
    e_rec = np.empty((n_rec, eps.shape[0]))
    _param_heating(float(omega), eps, x0, v0, float(dt), int(stride), e_rec)
    times = float(dt) * int(stride) * np.arange(n_rec)
    return times, e_rec


def linear_sde_trajectories(M, L, X0, xi, dt, stride=1):
    """Sample paths of the exactly discretised linear SDE X <- M X + L xi.

    ``M`` is the one-step propagator exp(A dt), ``L`` a square root of the
    one-step noise covariance, ``xi`` standard normals of shape
    (n_runs, n_steps, dim); returns (times, paths (n_rec, n_runs, dim)).
    """
    M = np.ascontiguousarray(M, dtype=np.float64)
    L = np.ascontiguousarray(L, dtype=np.float64)
    X0 = np.ascontiguousarray(X0, dtype=np.float64)
    xi = np.ascontiguousarray(xi, dtype=np.float64)
    n_rec = _n_records(xi.shape[1], stride)
    x_rec = np.empty((n_rec, xi.shape[0], xi.shape[2]))
    _linear_sde(M, L, X0, xi, int(stride), x_rec)
    times = float(dt) * int(stride) * np.arange(n_rec)
    return times, x_rec


def warm_up():
    """Trigger JIT compilation of every kernel on tiny inputs (no-op on numpy)."""
    A = -0.5 * np.eye(2)
    D = 0.1 * np.eye(2)
    rk4_lyapunov(A, D, np.eye(2) / 2, np.zeros(2), 1e-3, 4, 2)
    param_heating_ensemble(1.0, np.zeros((2, 4)), np.ones(2), np.zeros(2), 1e-3, 2)
    linear_sde_trajectories(np.eye(2), 0.1 * np.eye(2), np.zeros((2, 2)),
                            np.zeros((2, 4, 2)), 1e-3, 2)
