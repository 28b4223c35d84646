"""Hybrid factorisation of a digital precoder by alternating minimisation.

Both solvers minimise ``||F_opt - F_RF F_BB||_F`` for one BS.

* ``mo_altmin`` (fully connected) alternates least-squares ``F_BB`` with
  Riemannian conjugate gradient on the unit-modulus manifold for ``F_RF``.
* ``pc_altmin`` (partially connected) alternates closed-form sub-array
  phases with the least-squares ``F_BB``. It stands in for the SDR-based
  method, whose semidefinite program is out of scope; outputs label it
  "PC-AltMin (LS)".

Both finish by scaling ``F_BB`` so the hybrid precoder uses the full budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..precoding import PrecoderSolution, block_owner

RESTARTS = 3
ARMIJO_C = 1e-4


@dataclass
class AltMinReport:
    trace: list = field(default_factory=list)  # objective after every outer iteration
    iterations: int = 0
    converged: bool = False


def _objective(F_opt, F_RF, F_BB):
    return float(np.linalg.norm(F_opt - F_RF @ F_BB))


def scale_power(F_RF, F_BB, P):
    """``F_BB`` rescaled so ``||F_RF F_BB||_F^2 = P`` (untouched if the product is zero)."""
    norm = np.linalg.norm(F_RF @ F_BB)
    if norm == 0:
        return F_BB
    return F_BB * (np.sqrt(P) / norm)


def _inner(a, b):
    return float(np.real(np.vdot(a, b)))


def _tangent(g, x):
    return g - np.real(g * np.conj(x)) * x


def _retract(y):
    mod = np.abs(y)
    mod[mod == 0] = 1.0
    return y / mod


def _cg_analog(F_opt, x, F_BB, steps):
    """Riemannian CG on unit-modulus ``x`` (``F_RF = x / sqrt(N_m)``) for fixed ``F_BB``."""
    s = 1.0 / np.sqrt(x.shape[0])

    def f(z):
        return np.linalg.norm(F_opt - s * z @ F_BB) ** 2

    def rgrad(z):
        eg = -2.0 * s * (F_opt - s * z @ F_BB) @ F_BB.conj().T
        return _tangent(eg, z)

    fx = f(x)
    g = rgrad(x)
    d = -g
    for _ in range(steps):
        slope = _inner(g, d)
        if slope >= 0:
            d, slope = -g, -_inner(g, g)
        if slope > -1e-300:
            break
        alpha = 1.0
        for _ in range(40):
            xn = _retract(x + alpha * d)
            fn = f(xn)
            if fn <= fx + ARMIJO_C * alpha * slope:
                break
            alpha *= 0.5
        else:
            break
        gn = rgrad(xn)
        # Polak-Ribiere+, previous vectors moved to the new tangent space
        g_old = _tangent(g, xn)
        beta = max(0.0, _inner(gn, gn - g_old) / max(_inner(g, g), 1e-300))
        d = -gn + beta * _tangent(d, xn)
        x, fx, g = xn, fn, gn
    return x


def mo_altmin(F_opt, N_rf, P, max_iter=100, tol=1e-6, rng=None, init=None, cg_steps=10,
              restarts=RESTARTS):
    """Fully-connected hybrid factorisation; returns ``(F_RF, F_BB, report)``.

    ``init`` (an ``N_m x N_rf`` unit-modulus-times-``1/sqrt(N_m)`` matrix)
    replaces the random restarts with a single run from that point.
    """
    F_opt = np.asarray(F_opt, dtype=np.complex128)
    N_m, n_ue = F_opt.shape
    if not n_ue <= N_rf <= N_m:
        raise ValueError(f"need I_k <= N_rf <= N_m (got {n_ue}, {N_rf}, {N_m})")
    rng = np.random.default_rng() if rng is None else rng
    s = 1.0 / np.sqrt(N_m)
    starts = ([np.asarray(init) / s] if init is not None else
              [np.exp(1j * rng.uniform(0, 2 * np.pi, (N_m, N_rf))) for _ in range(restarts)])
    best = None
    for x in starts:
        x = _retract(x.astype(np.complex128))
        F_BB = np.linalg.pinv(s * x) @ F_opt
        report = AltMinReport([_objective(F_opt, s * x, F_BB)])
        for it in range(1, max_iter + 1):
            x = _cg_analog(F_opt, x, F_BB, cg_steps)
            F_BB = np.linalg.pinv(s * x) @ F_opt
            report.trace.append(_objective(F_opt, s * x, F_BB))
            report.iterations = it
            if report.trace[-2] - report.trace[-1] < tol:
                report.converged = True
                break
        if best is None or report.trace[-1] < best[2].trace[-1]:
            best = (s * x, F_BB, report)
    F_RF, F_BB, report = best
    return F_RF, scale_power(F_RF, F_BB, P), report


def pc_altmin(F_opt, N_rf, P, max_iter=100, tol=1e-6, rng=None, init=None, restarts=RESTARTS):
    """Partially-connected hybrid factorisation; returns ``(F_RF, F_BB, report)``."""
    F_opt = np.asarray(F_opt, dtype=np.complex128)
    N_m, n_ue = F_opt.shape
    if N_m % N_rf:
        raise ValueError(f"N_m={N_m} is not a multiple of N_rf={N_rf}")
    rng = np.random.default_rng() if rng is None else rng
    s = 1.0 / np.sqrt(N_m)
    owner = block_owner(N_m, N_rf)
    rows = np.arange(N_m)

    def analog(phase):
        F = np.zeros((N_m, N_rf), dtype=np.complex128)
        F[rows, owner] = s * np.exp(1j * phase)
        return F

    if init is not None:
        starts = [np.angle(np.asarray(init)[rows, owner])]
    else:
        starts = [rng.uniform(0, 2 * np.pi, N_m) for _ in range(restarts)]
    best = None
    for phase in starts:
        F_RF = analog(phase)
        F_BB = N_rf * F_RF.conj().T @ F_opt
        report = AltMinReport([_objective(F_opt, F_RF, F_BB)])
        for it in range(1, max_iter + 1):
            corr = (F_opt @ F_BB.conj().T)[rows, owner]
            phase = np.where(np.abs(corr) > 0, np.angle(corr), phase)
            F_RF = analog(phase)
            F_BB = N_rf * F_RF.conj().T @ F_opt
            report.trace.append(_objective(F_opt, F_RF, F_BB))
            report.iterations = it
            if report.trace[-2] - report.trace[-1] < tol:
                report.converged = True
                break
        if best is None or report.trace[-1] < best[2].trace[-1]:
            best = (F_RF, F_BB, report)
    F_RF, F_BB, report = best
    return F_RF, scale_power(F_RF, F_BB, P), report


def hybrid_from_digital(V, P, structure, rng=None, **kw):
    """Factor every BS's digital precoder; returns ``(PrecoderSolution, reports)``."""
    solver = mo_altmin if structure == "fully" else pc_altmin
    rfs, bbs, reports = [], [], []
    for k, Vk in enumerate(V):
        F_RF, F_BB, rep = solver(Vk, Vk.shape[1], P[k], rng=rng, **kw)
        rfs.append(F_RF)
        bbs.append(F_BB)
        reports.append(rep)
    return PrecoderSolution(rfs, bbs, structure), reports
