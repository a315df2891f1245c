"""Riemannian trust-region method with a truncated conjugate-gradient inner solver."""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from posesync.errors import RetractionError


@dataclass
class RtrConfig:
    """Trust-region settings.  ``None`` entries are sized from the problem."""

    grad_tol: float | None = None        # default 1e-6 * sqrt(dn)
    rel_func_tol: float = 1e-9
    max_outer: int = 300
    delta0: float | None = None          # default |Y0| / 8
    delta_max: float | None = None       # default 8 * delta0
    eta1: float = 0.05
    eta2: float = 0.7
    tcg_theta: float = 1.0
    tcg_kappa: float = 0.1
    max_inner: int | None = None         # default dn
    check_cauchy: bool = True

    def __post_init__(self):
        if not 0 < self.eta1 < self.eta2 < 1:
            raise ValueError("need 0 < eta1 < eta2 < 1")
        for name in ("grad_tol", "delta0", "delta_max"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be positive")
        if not self.rel_func_tol > 0:
            raise ValueError("rel_func_tol must be positive")

    def resolved(self, dn, Y0_norm):
        grad_tol = self.grad_tol if self.grad_tol is not None else 1e-6 * math.sqrt(dn)
        delta0 = self.delta0 if self.delta0 is not None else Y0_norm / 8.0
        delta_max = self.delta_max if self.delta_max is not None else 8.0 * delta0
        max_inner = self.max_inner if self.max_inner is not None else dn
        return grad_tol, delta0, delta_max, max_inner


@dataclass
class TraceRow:
    iteration: int
    cost: float
    grad_norm: float
    delta: float
    rho: float
    inner_iters: int
    stop_reason: str
    accepted: bool
    time_s: float


@dataclass
class SolveTrace:
    rows: list = field(default_factory=list)
    status: str = "running"

    @property
    def iterations(self):
        return len(self.rows)

    @property
    def inner_iterations(self):
        return sum(r.inner_iters for r in self.rows)

    def accepted_costs(self):
        return [r.cost for r in self.rows if r.accepted]

    COLUMNS = ("iteration", "cost", "gradnorm", "delta", "rho", "inner_iters", "time_s")

    def csv_rows(self):
        for r in self.rows:
            yield (r.iteration, r.cost, r.grad_norm, r.delta, r.rho, r.inner_iters, r.time_s)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.COLUMNS)
            writer.writerows(self.csv_rows())


@dataclass
class TcgResult:
    step: np.ndarray
    Hstep: np.ndarray
    stop_reason: str
    inner_iters: int
    model_decrease: float
    cauchy_decrease: float | None


def truncated_cg(h, Y, grad, delta, cfg: RtrConfig, max_inner=None) -> TcgResult:
    """Steihaug-Toint truncated CG on the trust-region model at ``Y``.

    Minimizes ``<grad, s> + 1/2 <s, Hess[s]>`` over tangent ``s`` with
    ``|s| <= delta`` (in the preconditioner norm when one is active).
    """
    M = h.manifold
    max_inner = max_inner if max_inner is not None else Y.shape[1]
    eta = M.zero_vector()
    Heta = M.zero_vector()
    r = grad.copy()
    r_norm0 = M.norm(r)
    if r_norm0 == 0.0:
        return TcgResult(eta, Heta, "inner_tol", 0, 0.0, 0.0)

    z = h.precondition(Y, r)
    rz = M.inner(r, z)
    p = -z
    e_Pe, e_Pd, d_Pd = 0.0, 0.0, rz
    target = r_norm0 * min(r_norm0**cfg.tcg_theta, cfg.tcg_kappa)
    stop = "max_inner"
    cauchy = None
    j = 0
    while j < max_inner:
        j += 1
        Hp = h.hessian(Y, p)
        pHp = M.inner(p, Hp)
        if j == 1 and not h.use_preconditioner:
            # First direction is -grad: the Cauchy step is available for free.
            g2 = r_norm0**2
            t_max = delta / r_norm0
            t_c = t_max if pHp <= 0 else min(g2 / pHp, t_max)
            cauchy = t_c * g2 - 0.5 * t_c**2 * pHp
        alpha = rz / pHp if pHp != 0 else math.inf
        e_Pe_new = e_Pe + 2.0 * alpha * e_Pd + alpha**2 * d_Pd
        if pHp <= 0 or e_Pe_new >= delta**2:
            tau = (-e_Pd + math.sqrt(max(e_Pd**2 + d_Pd * (delta**2 - e_Pe), 0.0))) / d_Pd
            eta = eta + tau * p
            Heta = Heta + tau * Hp
            stop = "negative_curvature" if pHp <= 0 else "boundary"
            break
        eta = eta + alpha * p
        Heta = Heta + alpha * Hp
        r = r + alpha * Hp
        e_Pe = e_Pe_new
        if M.norm(r) <= target:
            stop = "inner_tol"
            break
        z = h.precondition(Y, r)
        rz_old, rz = rz, M.inner(r, z)
        beta = rz / rz_old
        p = -z + beta * p
        e_Pd = beta * (e_Pd + alpha * d_Pd)
        d_Pd = rz + beta**2 * d_Pd

    model_decrease = -(M.inner(grad, eta) + 0.5 * M.inner(eta, Heta))
    return TcgResult(eta, Heta, stop, j, model_decrease, cauchy)


def solve_rtr(h, Y0, cfg: RtrConfig | None = None):
    """Minimize ``h.cost`` over St(d, r)^n from ``Y0``.

    Returns ``(Y, trace)``; ``trace.status`` is ``"grad_tol"``,
    ``"rel_func_tol"`` or ``"max_outer"``.
    """
    cfg = cfg or RtrConfig()
    M = h.manifold
    Y = np.array(Y0, dtype=float)
    dn = Y.shape[1]
    grad_tol, delta, delta_max, max_inner = cfg.resolved(dn, M.norm(Y))
    trace = SolveTrace()
    start = time.perf_counter()
    f = h.cost(Y)
    eps = np.finfo(float).eps

    for k in range(cfg.max_outer):
        g = h.gradient(Y)
        g_norm = M.norm(g)
        if g_norm <= grad_tol:
            trace.status = "grad_tol"
            return Y, trace
        res = truncated_cg(h, Y, g, delta, cfg, max_inner)
        if cfg.check_cauchy and res.cauchy_decrease is not None:
            slack = 1e-10 * max(abs(f), 1.0)
            assert res.model_decrease >= res.cauchy_decrease - slack, "tCG fell short of the Cauchy decrease"
        try:
            Y_new = M.retract(Y, res.step)
            f_new = h.cost(Y_new)
        except RetractionError:
            Y_new, f_new = None, math.inf
        denom = max(res.model_decrease, eps * abs(f))
        rho = (f - f_new) / denom if denom > 0 else -math.inf
        accepted = Y_new is not None and rho >= cfg.eta1 and f_new < f

        if rho < cfg.eta1:
            delta *= 0.25
        elif rho > cfg.eta2 and res.stop_reason in ("boundary", "negative_curvature"):
            delta = min(2.0 * delta, delta_max)

        rel_decrease = (f - f_new) / max(abs(f), 1e-300) if accepted else None
        if accepted:
            Y, f = Y_new, f_new
        trace.rows.append(
            TraceRow(k, f, g_norm, delta, rho, res.inner_iters, res.stop_reason, accepted, time.perf_counter() - start)
        )
        if accepted and rel_decrease < cfg.rel_func_tol:
            trace.status = "rel_func_tol"
            return Y, trace
        if delta < 1e-15 * max(1.0, M.norm(Y)):
            trace.status = "delta_collapsed"
            return Y, trace

    g_norm = M.norm(h.gradient(Y))
    trace.status = "grad_tol" if g_norm <= grad_tol else "max_outer"
    return Y, trace
