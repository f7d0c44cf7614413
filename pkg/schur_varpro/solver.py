"""
Riemannian trust-region solver with preconditioned truncated CG.

Three methods share the loop:

    ours             reduced cost tr(X_cᵀ Q̄ X_c) through the Schur operator
    original         full cost tr(XᵀQX) with the points as Euclidean blocks
    original-varpro  original, plus a closed-form refresh of the points after
                     every accepted step
"""
from __future__ import annotations

import time
from collections.abc import Callable
from logging import getLogger
from typing import Protocol

import attrs
import numpy as np
import scipy.sparse as sp
from attrs import validators as v

from .cholesky import SparseCholesky, factorize
from .enums import Method, PreconditionerMode, RecoverMode, TcgStop, Termination
from .errors import NonFiniteCostError
from .manifolds import ProductManifold
from .model import QuadraticModel, VariableLayout
from .schur import SchurOperator, build_operator

logger = getLogger(__name__)

MU_FLOOR = 1e-12
MIN_INNER = 1
RHO_REGULARIZATION = 1e3


def _positive(instance, attribute, value) -> None:
    if not value > 0:
        raise ValueError(f"{attribute.name} must be positive, got {value}")


def _accept_threshold(instance, attribute, value) -> None:
    if not 0 < value <= 0.25:
        raise ValueError(f"{attribute.name} must lie in (0, 1/4], got {value}")


@attrs.frozen
class SolverConfig:
    grad_tol: float = attrs.field(default=1e-6, validator=_positive)
    max_outer_iters: int = attrs.field(default=500, validator=_positive)
    max_time: float = attrs.field(default=600.0, validator=_positive)
    tr_radius_init: float = attrs.field(default=1.0, validator=_positive)
    tr_radius_max: float = attrs.field(default=1e4, validator=_positive)
    rho_accept: float = attrs.field(default=0.1, validator=_accept_threshold)
    tcg_max_inner: int = attrs.field(default=500, validator=_positive)
    tcg_theta: float = attrs.field(default=1.0, validator=_positive)
    tcg_kappa: float = attrs.field(default=0.1, validator=_positive)
    precond_cond_cap: float = attrs.field(default=1e6, validator=v.gt(1.0))
    power_iters: int = attrs.field(default=30, validator=_positive)
    seed: int = 0
    recover_mode: RecoverMode = attrs.field(default=RecoverMode.ANCHORED, converter=RecoverMode)
    ordering: str = attrs.field(default="amd", validator=v.in_(("amd", "colamd", "natural")))
    factorization: str = attrs.field(default="superlu", validator=v.in_(("superlu", "cholmod")))

    @tr_radius_max.validator
    def _check_radius(self, attribute, value) -> None:
        if value < self.tr_radius_init:
            raise ValueError(f"tr_radius_max ({value}) is below tr_radius_init ({self.tr_radius_init})")


# =============================================================================
# Preconditioner
# =============================================================================


@attrs.frozen(eq=False)
class Preconditioner:
    """(Q + μI)⁻¹ over all n rows; reduced mode pads with zeros and truncates to n_c."""

    factor: SparseCholesky
    mu: float
    n_c: int
    mode: PreconditionerMode = PreconditionerMode.FULL
    lambda_max: float = 0.0

    @property
    def condition_bound(self) -> float:
        return (self.lambda_max + self.mu) / self.mu

    def with_mode(self, mode: PreconditionerMode) -> Preconditioner:
        return attrs.evolve(self, mode=PreconditionerMode(mode))

    def apply(self, manifold: ProductManifold, X_base: np.ndarray, V: np.ndarray) -> np.ndarray:
        V = manifold.project_tangent(X_base, V)
        if self.mode is PreconditionerMode.REDUCED:
            padded = np.zeros((self.factor.n, V.shape[1]))
            padded[: V.shape[0]] = V
            W = self.factor.solve(padded)[: V.shape[0]]
        else:
            W = self.factor.solve(V)
        return manifold.project_tangent(X_base, W)


def estimate_lambda_max(matvec: Callable[[np.ndarray], np.ndarray], n: int, iters: int, seed: int = 0) -> float:
    """Rayleigh quotient after `iters` power iterations."""
    if n == 0:
        return 0.0
    x = np.random.default_rng(seed).standard_normal(n)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(iters):
        y = matvec(x)
        lam = float(x @ y)
        norm = np.linalg.norm(y)
        if norm == 0:
            return 0.0
        x = y / norm
    return max(lam, 0.0)


def gershgorin_bound(Q: sp.spmatrix) -> float:
    if Q.shape[0] == 0:
        return 0.0
    return float(np.max(np.asarray(abs(Q).sum(axis=1)).ravel()))


def preconditioner_from_matrix(
    Q: sp.spmatrix,
    n_c: int,
    config: SolverConfig,
    matvec: Callable[[np.ndarray], np.ndarray] | None = None,
    mu: float | None = None,
) -> Preconditioner:
    Q = sp.csc_matrix(Q)
    n = Q.shape[0]
    lam_p = estimate_lambda_max(matvec or (lambda x: Q @ x), n, config.power_iters, config.seed)
    # the power estimate can undershoot; Gershgorin never does
    lam = min(gershgorin_bound(Q), 1.5 * lam_p)
    if mu is None:
        mu = max(lam / (config.precond_cond_cap - 1.0), MU_FLOOR)
    factor = factorize(Q + mu * sp.identity(n, format="csc"), ordering=config.ordering, backend=config.factorization)
    logger.debug(f"preconditioner: lambda_max~{lam:.6e} (power {lam_p:.6e}) mu={mu:.6e}")
    return Preconditioner(factor, float(mu), n_c, PreconditionerMode.FULL, lam)


def build_preconditioner(model: QuadraticModel, config: SolverConfig, mu: float | None = None) -> Preconditioner:
    w = model.weights
    return preconditioner_from_matrix(
        model.full_Q(),
        model.layout.n_c,
        config,
        matvec=lambda x: model.A.T @ (w * (model.A @ x)),
        mu=mu,
    )


def apply_preconditioner(P: Preconditioner, manifold: ProductManifold, X_base: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Tangent projection of (Q + μI)⁻¹V; for large μ this tends to V/μ."""
    return P.apply(manifold, X_base, V)


# =============================================================================
# Truncated CG
# =============================================================================


@attrs.frozen(eq=False)
class TcgResult:
    eta: np.ndarray
    Heta: np.ndarray
    inner_iters: int
    stop: TcgStop

    @property
    def hit_boundary(self) -> bool:
        return self.stop in (TcgStop.NEGATIVE_CURVATURE, TcgStop.EXCEEDED_TR)


def truncated_cg(
    manifold: ProductManifold,
    X: np.ndarray,
    grad: np.ndarray,
    hess: Callable[[np.ndarray], np.ndarray],
    radius: float,
    precon: Callable[[np.ndarray], np.ndarray] | None = None,
    *,
    theta: float = 1.0,
    kappa: float = 0.1,
    max_inner: int = 500,
) -> TcgResult:
    """Steihaug-Toint CG on the model g·η + ½η·Hη, trust region measured in the preconditioner norm."""
    inner = lambda a, b: manifold.inner(X, a, b)  # noqa: E731
    precon = precon or (lambda r: r)
    eta = manifold.zero_vector(X)
    Heta = manifold.zero_vector(X)
    r = grad
    norm_r0 = np.sqrt(inner(r, r))
    if norm_r0 == 0:
        return TcgResult(eta, Heta, 0, TcgStop.LINEAR)

    z = precon(r)
    z_r = inner(z, r)
    d_Pd = z_r
    delta = -z
    e_Pe = 0.0
    e_Pd = 0.0
    model_value = 0.0
    stop = TcgStop.MAX_INNER

    j = 0
    for j in range(max_inner):
        Hdelta = hess(delta)
        d_Hd = inner(delta, Hdelta)
        alpha = z_r / d_Hd if d_Hd != 0 else np.inf
        e_Pe_new = e_Pe + 2.0 * alpha * e_Pd + alpha**2 * d_Pd

        if d_Hd <= 0 or e_Pe_new >= radius**2:
            tau = (-e_Pd + np.sqrt(e_Pd * e_Pd + d_Pd * (radius**2 - e_Pe))) / d_Pd
            eta = eta + tau * delta
            Heta = Heta + tau * Hdelta
            stop = TcgStop.NEGATIVE_CURVATURE if d_Hd <= 0 else TcgStop.EXCEEDED_TR
            break

        e_Pe = e_Pe_new
        new_eta = eta + alpha * delta
        new_Heta = Heta + alpha * Hdelta
        new_model_value = inner(new_eta, grad) + 0.5 * inner(new_eta, new_Heta)
        if new_model_value >= model_value:
            stop = TcgStop.MODEL_INCREASED
            break
        eta, Heta, model_value = new_eta, new_Heta, new_model_value

        r = r + alpha * Hdelta
        norm_r = np.sqrt(inner(r, r))
        if j >= MIN_INNER and norm_r <= norm_r0 * min(norm_r0**theta, kappa):
            stop = TcgStop.LINEAR if kappa < norm_r0**theta else TcgStop.SUPERLINEAR
            break

        z = precon(r)
        zold_rold = z_r
        z_r = inner(z, r)
        beta = z_r / zold_rold
        delta = -z + beta * delta
        e_Pd = beta * (e_Pd + alpha * d_Pd)
        d_Pd = z_r + beta * beta * d_Pd

    return TcgResult(eta, Heta, j + 1, stop)


# =============================================================================
# Objectives and problem context
# =============================================================================


class Objective(Protocol):
    def cost_and_grad(self, X: np.ndarray) -> tuple[float, np.ndarray]: ...

    def hess(self, X: np.ndarray, V: np.ndarray) -> np.ndarray: ...


@attrs.frozen(eq=False)
class QuadraticObjective:
    """f(X) = tr(XᵀMX) for a symmetric linear map M given by `matvec`."""

    matvec: Callable[[np.ndarray], np.ndarray]

    def cost_and_grad(self, X: np.ndarray) -> tuple[float, np.ndarray]:
        MX = self.matvec(X)
        return float(np.sum(X * MX)), 2.0 * MX

    def hess(self, X: np.ndarray, V: np.ndarray) -> np.ndarray:
        return 2.0 * self.matvec(V)


@attrs.frozen(eq=False)
class ProblemContext:
    """Immutable state shared by every method and seed on one dataset."""

    model: QuadraticModel
    preconditioner: Preconditioner
    operator: SchurOperator | None
    config: SolverConfig

    @classmethod
    def build(cls, model: QuadraticModel, config: SolverConfig | None = None, need_operator: bool = True) -> ProblemContext:
        config = config or SolverConfig()
        operator = None
        if need_operator:
            operator = build_operator(model, ordering=config.ordering, backend=config.factorization)
        return cls(model, build_preconditioner(model, config), operator, config)

    @property
    def layout(self) -> VariableLayout:
        return self.model.layout


@attrs.frozen
class IterationRecord:
    outer_iter: int
    cost: float
    grad_norm: float
    tr_radius: float
    inner_iters: int
    accepted: bool
    elapsed_seconds: float


@attrs.define(eq=False)
class SolverReport:
    method: Method
    termination: Termination
    records: list[IterationRecord]
    X: np.ndarray  # final [X_c; X_f]
    X_f: np.ndarray
    final_cost: float
    config: SolverConfig

    @property
    def iterations(self) -> int:
        return self.records[-1].outer_iter if self.records else 0

    @property
    def elapsed_seconds(self) -> float:
        return self.records[-1].elapsed_seconds if self.records else 0.0

    @property
    def converged(self) -> bool:
        return self.termination is Termination.GRADIENT

    def accepted_costs(self) -> list[float]:
        return [r.cost for r in self.records if r.accepted]


# =============================================================================
# Trust-region loop
# =============================================================================


@attrs.define
class _TrustRegionRun:
    manifold: ProductManifold
    objective: Objective
    config: SolverConfig
    precon: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    on_accept: Callable[[np.ndarray], np.ndarray] | None = None
    records: list[IterationRecord] = attrs.field(factory=list)

    def _evaluate(self, X: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        f, egrad = self.objective.cost_and_grad(X)
        if not np.isfinite(f):
            raise NonFiniteCostError(f"cost evaluated to {f}")
        return f, egrad, self.manifold.egrad2rgrad(X, egrad)

    def _record(self, start: float, k: int, f: float, gnorm: float, radius: float, inner: int, accepted: bool) -> None:
        elapsed = time.perf_counter() - start
        if self.records:
            # perf_counter ticks can coincide
            elapsed = max(elapsed, np.nextafter(self.records[-1].elapsed_seconds, np.inf))
        self.records.append(IterationRecord(k, f, gnorm, radius, inner, accepted, elapsed))

    def run(self, X0: np.ndarray) -> tuple[np.ndarray, Termination]:
        cfg = self.config
        man = self.manifold
        start = time.perf_counter()
        X = X0
        f, egrad, rgrad = self._evaluate(X)
        gnorm = man.norm(X, rgrad)
        target = cfg.grad_tol * max(1.0, gnorm)
        radius = cfg.tr_radius_init
        self._record(start, 0, f, gnorm, radius, 0, True)

        k = 0
        while True:
            if gnorm <= target:
                termination = Termination.GRADIENT
                break
            if k >= cfg.max_outer_iters:
                termination = Termination.MAX_ITERS
                break
            if time.perf_counter() - start >= cfg.max_time:
                termination = Termination.TIMEOUT
                break

            Xk, egk = X, egrad
            hess = lambda V: man.ehess2rhess(Xk, egk, self.objective.hess(Xk, V), V)  # noqa: E731
            precon = (lambda R: self.precon(Xk, R)) if self.precon else None
            tcg = truncated_cg(
                man, X, rgrad, hess, radius, precon,
                theta=cfg.tcg_theta, kappa=cfg.tcg_kappa, max_inner=cfg.tcg_max_inner,
            )

            X_prop = man.retract(X, tcg.eta)
            f_prop, _ = self.objective.cost_and_grad(X_prop)
            rho_reg = max(1.0, abs(f)) * np.spacing(1.0) * RHO_REGULARIZATION
            rhonum = f - f_prop + rho_reg
            rhoden = -man.inner(X, rgrad, tcg.eta) - 0.5 * man.inner(X, tcg.eta, tcg.Heta) + rho_reg
            model_decreased = rhoden >= 0
            rho = rhonum / rhoden if rhoden != 0 else np.nan

            # a zero step leaves X unchanged and counts as a rejection
            moved = bool(np.any(tcg.eta))
            accepted = bool(moved and model_decreased and rho > cfg.rho_accept and np.isfinite(f_prop) and f_prop <= f)
            if not accepted or rho < 0.25 or np.isnan(rho):
                radius /= 4.0
            elif rho > 0.75 and tcg.hit_boundary:
                radius = min(2.0 * radius, cfg.tr_radius_max)

            k += 1
            if accepted:
                X = X_prop
                if self.on_accept is not None:
                    X = self.on_accept(X)
                f, egrad, rgrad = self._evaluate(X)
                gnorm = man.norm(X, rgrad)
            logger.debug(
                f"iter {k}: {'acc' if accepted else 'REJ'} f={f:.9e} |grad|={gnorm:.3e} radius={radius:.3e} "
                f"inner={tcg.inner_iters} ({tcg.stop.value}) rho={rho:.3e}"
            )
            self._record(start, k, f, gnorm, radius, tcg.inner_iters, accepted)
        return X, termination


def _manifold_for(layout: VariableLayout, method: Method) -> ProductManifold:
    return ProductManifold.from_layout(layout, include_unconstrained=Method(method) is not Method.OURS)


def initial_point(layout: VariableLayout, method: Method, seed: int) -> np.ndarray:
    """Random start; the constrained rows are identical for every method at a given seed."""
    X = ProductManifold.from_layout(layout, include_unconstrained=True).random_point(seed)
    if Method(method) is Method.OURS:
        return X[: layout.n_c].copy()
    return X


def solve(method: Method, context: ProblemContext, X0: np.ndarray, config: SolverConfig | None = None) -> SolverReport:
    method = Method(method)
    config = config or context.config
    model = context.model
    layout = model.layout
    n_c = layout.n_c
    manifold = _manifold_for(layout, method)
    on_accept = None

    match method:
        case Method.OURS:
            op = _require_operator(context, method)
            objective = QuadraticObjective(op.apply)
            P = context.preconditioner.with_mode(PreconditionerMode.REDUCED)
        case Method.ORIGINAL:
            objective = QuadraticObjective(model.full_matvec)
            P = context.preconditioner.with_mode(PreconditionerMode.FULL)
        case Method.ORIGINAL_VARPRO:
            op = _require_operator(context, method)
            objective = QuadraticObjective(model.full_matvec)
            P = context.preconditioner.with_mode(PreconditionerMode.FULL)

            def on_accept(X: np.ndarray) -> np.ndarray:
                X = X.copy()
                X[n_c:] = op.recover_unconstrained(X[:n_c], RecoverMode.ANCHORED)
                return X

    run = _TrustRegionRun(
        manifold,
        objective,
        config,
        precon=lambda Xb, R: apply_preconditioner(P, manifold, Xb, R),
        on_accept=on_accept,
    )
    X, termination = run.run(np.array(X0, dtype=float))

    if method is Method.OURS:
        X_f = op.recover_unconstrained(X, config.recover_mode)
        X = np.vstack([X, X_f])
    else:
        X_f = X[n_c:].copy()
    final_cost = model.cost(X)
    report = SolverReport(method, termination, run.records, X, X_f, final_cost, config)
    logger.info(
        f"{method.value}: {termination.value} after {report.iterations} iterations, "
        f"cost={final_cost:.9e}, {report.elapsed_seconds:.3f}s"
    )
    return report


def _require_operator(context: ProblemContext, method: Method) -> SchurOperator:
    if context.operator is None:
        raise ValueError(f"method {method.value!r} needs a problem context built with the Schur operator")
    return context.operator
