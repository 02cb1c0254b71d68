"""Iteratively regularized Gauss-Newton method with a CG inner solver.

Each Newton step minimises the quadratic model

    ||A d - (I_err - F(N_k))||_Y^2 + alpha_k ||d - (N_0 - N_k)||_X^2

where ``A`` is the derivative of the (constrained) forward map at ``N_k``.
The normal equations are solved by CG in the X inner product, which we
realise as a preconditioned CG on

    (A* G_Y A + alpha_k G_X) d = A* G_Y b + alpha_k G_X (N_0 - N_k)

with preconditioner ``G_X^{-1}``.  Without a support mask this produces the
same iterates as plain CG on ``G_X^{-1} A* G_Y A + alpha_k`` in the X metric.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .grids import inner_product, norm
from .regularization import Constraint, DataGramian, ObjectGramian

__all__ = [
    "CGPolicy",
    "CGResult",
    "CGBreakdown",
    "StopRule",
    "SolverConfig",
    "History",
    "NewtonState",
    "ReconResult",
    "alpha0_heuristic",
    "cg_solve",
    "newton_step",
    "should_stop",
    "stop_index",
    "run",
    "write_log",
]


class CGBreakdown(ArithmeticError):
    """Non-positive curvature or non-finite values inside CG."""


@dataclass
class CGPolicy:
    max_iter: int = 200
    base_tol: float = 1e-2
    rel_tol: Optional[float] = None  # fixed tolerance overrides the alpha rule

    def tolerance(self, alpha_k: float, alpha0: float) -> float:
        if self.rel_tol is not None:
            return self.rel_tol
        return self.base_tol * math.sqrt(alpha_k / alpha0)


@dataclass
class CGResult:
    x: np.ndarray
    iters: int
    converged: bool
    residuals: list  # relative X-norm residuals, first entry 1.0


def cg_solve(
    operator: Callable,
    rhs,
    alpha: float = 0.0,
    policy: CGPolicy | None = None,
    gram: ObjectGramian | None = None,
    project: Callable | None = None,
    rel_tol: float | None = None,
) -> CGResult:
    """Solve ``(operator + alpha*G) x = rhs`` by CG preconditioned with ``G^{-1}``.

    ``operator`` must be symmetric positive semi-definite in the Euclidean
    real inner product.  ``project`` restricts iterates to a subspace
    (support masks).  The reported residual is the X-norm of the residual
    of the preconditioned system, relative to its initial value.
    """
    policy = policy or CGPolicy()
    tol = policy.rel_tol if rel_tol is None else rel_tol
    if tol is None:
        tol = policy.base_tol
    P = project or (lambda v: v)

    def full_op(v):
        out = operator(v)
        if alpha:
            out = out + alpha * (P(gram.apply(P(v))) if gram is not None else P(v))
        return out

    def precond(v):
        return P(gram.apply_inv(P(v))) if gram is not None else P(v)

    rhs = P(np.asarray(rhs))
    x = np.zeros_like(rhs)
    r = rhs.copy()
    z = precond(r)
    rz = inner_product(r, z)
    if rz <= 0 or not np.isfinite(rz):
        if rz == 0:
            return CGResult(x, 0, True, [0.0])
        raise CGBreakdown(f"preconditioned residual norm is {rz}")
    rz0 = rz
    p = z.copy()
    residuals = [1.0]
    converged = False
    it = 0
    for it in range(1, policy.max_iter + 1):
        q = full_op(p)
        pq = inner_product(p, q)
        if not pq > 0 or not np.isfinite(pq):
            raise CGBreakdown(f"non-positive curvature {pq} at CG iteration {it}")
        a = rz / pq
        x = x + a * p
        r = r - a * q
        z = precond(r)
        rz_new = inner_product(r, z)
        residuals.append(math.sqrt(max(rz_new, 0.0) / rz0))
        if residuals[-1] <= tol:
            converged = True
            break
        p = z + (rz_new / rz) * p
        rz = rz_new
    return CGResult(x, it, converged, residuals)


@dataclass
class StopRule:
    """``kind`` is ``"fixed"``, ``"discrepancy"`` or ``"best"``.

    ``best`` needs the ground truth and is meant for diagnostics only.
    """

    kind: str = "fixed"
    k: int = 10
    tau: float = 1.0
    err_norm: Optional[float] = None
    truth: Optional[np.ndarray] = None
    patience: Optional[int] = None  # best: quit after this many non-improving steps

    def __post_init__(self):
        if self.kind not in ("fixed", "discrepancy", "best"):
            raise ValueError(f"unknown stop rule {self.kind!r}")
        if self.kind == "discrepancy":
            if self.err_norm is None:
                raise ValueError("discrepancy rule needs an error-level estimate")
            if self.tau < 1:
                raise ValueError("tau must be >= 1")
        if self.kind == "best" and self.truth is None:
            raise ValueError("best-stop rule needs the true object")
        if self.kind == "fixed" and self.k < 0:
            raise ValueError("k must be nonnegative")

    @classmethod
    def fixed(cls, k):
        return cls("fixed", k=int(k))

    @classmethod
    def discrepancy(cls, tau, err_norm):
        return cls("discrepancy", tau=float(tau), err_norm=float(err_norm))

    @classmethod
    def best(cls, truth, patience=None):
        return cls("best", truth=np.asarray(truth), patience=patience)


@dataclass
class SolverConfig:
    alpha0: float | str = "auto"
    r_alpha: float = 2.0 / 3.0
    max_newton: int = 30
    min_newton: int = 0
    stop: StopRule = field(default_factory=StopRule)
    cg: CGPolicy = field(default_factory=CGPolicy)
    gram_x: ObjectGramian = field(default_factory=ObjectGramian)
    gram_y: Optional[DataGramian] = None
    constraint: Constraint = field(default_factory=Constraint)
    initial_guess: Optional[np.ndarray] = None  # a volume, reduced internally
    alpha_ref: Optional[float | np.ndarray] = None  # ||N_ref||_X or a volume
    keep_iterates: bool = False
    monitor: Optional[np.ndarray] = None  # truth for logging rho_k under any stop rule

    def __post_init__(self):
        if not 0 < self.r_alpha < 1:
            raise ValueError("r_alpha must lie in (0, 1)")
        if self.max_newton < 0 or self.min_newton < 0:
            raise ValueError("iteration counts must be nonnegative")
        if not (self.alpha0 == "auto" or float(self.alpha0) > 0):
            raise ValueError("alpha0 must be positive or 'auto'")


@dataclass
class History:
    alpha: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    cg_iters: list = field(default_factory=list)
    rho: list = field(default_factory=list)

    def __len__(self):
        return len(self.residual)


@dataclass
class NewtonState:
    k: int
    x: np.ndarray  # reduced variable
    alpha: float
    lin: object = None
    residual: Optional[np.ndarray] = None  # I_err - F(N_k)


@dataclass
class ReconResult:
    volume: np.ndarray
    index: int
    history: History
    alpha0: float
    iterates: list = field(default_factory=list)


def alpha0_heuristic(data, ref_norm: float, mode: str, gram_y: DataGramian | None = None) -> float:
    """Initial regularization parameter.

    nearfield: ||I - 1||_Y^2 / ||N_ref||_X^2
    farfield:  ||I||_Y^2 / (10 ||N_ref||_X^2)
    """
    if not ref_norm > 0:
        raise ValueError("reference norm must be positive")
    data = np.asarray(data, dtype=float)
    gy = gram_y or DataGramian()
    if mode == "nearfield":
        num = gy.inner(data - 1.0, data - 1.0)
    elif mode == "farfield":
        num = gy.inner(data, data) / 10.0
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return num / ref_norm**2


def _residual_norm(gram_y: DataGramian, r) -> float:
    return gram_y.norm(r)


def _rho(vol, truth) -> float:
    return norm(vol - truth) / norm(truth)


def stop_index(history: History, rule: StopRule, min_newton: int = 0) -> int:
    """Index of the iterate selected by ``rule`` among those recorded."""
    n = len(history)
    if n == 0:
        raise ValueError("empty history")
    if rule.kind == "fixed":
        return min(rule.k, n - 1)
    if rule.kind == "discrepancy":
        thr = rule.tau * rule.err_norm
        for k, res in enumerate(history.residual):
            if k >= min_newton and res <= thr:
                return k
        return n - 1
    rho = np.asarray(history.rho[min_newton:] if n > min_newton else history.rho)
    off = min_newton if n > min_newton else 0
    return off + int(np.argmin(rho))


def should_stop(history: History, rule: StopRule, max_newton: int = 30, min_newton: int = 0) -> bool:
    """Whether the outer loop ends after the last recorded iterate."""
    k = len(history) - 1
    if k >= max_newton:
        return True
    if k < min_newton:
        return False
    if rule.kind == "fixed":
        return k >= rule.k
    if rule.kind == "discrepancy":
        return history.residual[-1] <= rule.tau * rule.err_norm
    if rule.patience is not None and len(history.rho) > rule.patience:
        kbest = stop_index(history, rule, min_newton)
        return k - kbest >= rule.patience
    return False


def newton_step(state: NewtonState, model, data, config: SolverConfig, alpha0: float, x0=None) -> tuple[NewtonState, CGResult]:
    """One regularized Gauss-Newton update ``x_{k+1} = x_k + d``."""
    cons = config.constraint
    gram_y = config.gram_y or DataGramian()
    data = np.asarray(data, dtype=float)
    lin = state.lin if state.lin is not None else model.linearize(cons.embed(state.x))
    b = state.residual if state.residual is not None else data - lin.intensity
    x0 = np.zeros_like(state.x) if x0 is None else x0
    project = (lambda v: np.where(cons.mask, v, 0)) if cons.mask is not None else None

    def normal_op(d):
        return cons.adjoint(lin.adjoint(gram_y.apply(lin.apply(cons.embed(d)))))

    rhs = cons.adjoint(lin.adjoint(gram_y.apply(b)))
    rhs = rhs + state.alpha * config.gram_x.apply(x0 - state.x)
    if project is not None:
        rhs = project(rhs)
    tol = config.cg.tolerance(state.alpha, alpha0)
    res = cg_solve(normal_op, rhs, state.alpha, config.cg, config.gram_x, project, rel_tol=tol)
    if not np.all(np.isfinite(res.x)):
        raise CGBreakdown("Newton update is not finite")
    x_new = state.x + res.x
    if np.isrealobj(state.x):
        x_new = np.real(x_new)
    new = NewtonState(state.k + 1, x_new, alpha0 * config.r_alpha ** (state.k + 1))
    return new, res


def run(model, data, config: SolverConfig) -> ReconResult:
    """Run the IRGNM until the stop rule fires; return the selected iterate."""
    cons = config.constraint
    gram_y = config.gram_y or DataGramian()
    I_err = np.asarray(getattr(data, "data", data), dtype=float)
    rule = config.stop

    shape = model.vol_shape
    if config.initial_guess is not None:
        init = np.asarray(config.initial_guess, dtype=np.complex128)
        if init.shape != shape:
            raise ValueError("initial guess has the wrong shape")
        x0 = cons.reduce(init)
    else:
        x0 = cons.zeros(shape)

    if config.alpha0 == "auto":
        ref = config.alpha_ref
        if ref is None:
            if rule.kind == "best":
                ref = rule.truth
            elif config.initial_guess is not None:
                ref = config.initial_guess
            else:
                raise ValueError("automatic alpha0 needs a reference norm")
        ref_norm = float(ref) if np.ndim(ref) == 0 else config.gram_x.norm(np.asarray(ref, dtype=np.complex128))
        alpha0 = alpha0_heuristic(I_err, ref_norm, model.mode, gram_y)
    else:
        alpha0 = float(config.alpha0)

    truth = rule.truth if rule.kind == "best" else config.monitor
    hist = History()
    iterates = []
    state = NewtonState(0, x0.copy(), alpha0)
    best = None
    best_rho = np.inf

    while True:
        vol = cons.embed(state.x)
        state.lin = model.linearize(vol)
        state.residual = I_err - state.lin.intensity
        hist.alpha.append(state.alpha)
        hist.residual.append(_residual_norm(gram_y, state.residual))
        if state.k == 0:
            hist.cg_iters.append(0)
        if truth is not None:
            hist.rho.append(_rho(vol, truth))
        if rule.kind == "best":
            r = hist.rho[-1]
            if r < best_rho and state.k >= min(config.min_newton, config.max_newton):
                best_rho, best = r, vol
        if config.keep_iterates:
            iterates.append(vol)
        if not np.isfinite(hist.residual[-1]):
            raise CGBreakdown(f"non-finite residual at Newton step {state.k}")
        if should_stop(hist, rule, config.max_newton, config.min_newton):
            break
        state, res = newton_step(state, model, I_err, config, alpha0, x0)
        hist.cg_iters.append(res.iters)

    idx = stop_index(hist, rule, config.min_newton)
    if rule.kind == "best":
        out = best if best is not None else vol
    else:
        out = vol  # fixed and discrepancy stop at the selected iterate
    return ReconResult(out, idx, hist, alpha0, iterates)


def write_log(path, history: History) -> None:
    """Per-iteration CSV: k, alpha_k, data_residual, cg_iters, rho_k."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "alpha_k", "data_residual", "cg_iters", "rho_k"])
        for k in range(len(history)):
            rho = history.rho[k] if k < len(history.rho) else ""
            w.writerow([k, repr(history.alpha[k]), repr(history.residual[k]), history.cg_iters[k], repr(rho) if rho != "" else ""])
