"""
Randomized checks of the Schur operator against dense references.

Each trial draws a small mixed instance (relative rotations, relative
translations, ranges; one or two components in the unconstrained graph) and
measures the worst relative error of every check. A check fails when its
error exceeds the tolerance or when it raises.
"""
from __future__ import annotations

from collections.abc import Callable
from logging import getLogger

import attrs
import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .compare import compare_datasets
from .dataset import Dataset, DatasetBuilder
from .errors import SchurVarproError
from .generators import random_rotation
from .manifolds import ProductManifold
from .model import QuadraticModel
from .reader import loads
from .schur import SchurOperator, build_operator, dense_oracle, detect_incidence, spectral_pinv
from .solver import SolverConfig, apply_preconditioner, build_preconditioner
from .writer import dumps

logger = getLogger(__name__)

MAX_CONSTRAINED_ROWS = 20
MAX_POINTS = 40
DEFAULT_TRIALS = 200

TOLERANCES = {
    "oracle": 1e-8,
    "elimination": 1e-9,
    "min_norm": 1e-8,
    "optimality": 1e-9,
    "gauge": 1e-10,
    "translation": 1e-10,
    "graph": 1e-8,
    "gradient": 1e-5,
    "hessian": 1e-5,
    "retraction": 0.0,  # pass/fail only, ratio in [30, 300]
    "preconditioner": 1e-10,
    "round_trip": 0.0,
}


@attrs.frozen
class InstanceParams:
    seed: int
    d: int
    n_poses: int
    n_landmarks: int
    n_ranges: int
    components: int

    def __str__(self) -> str:
        return (
            f"seed={self.seed} d={self.d} poses={self.n_poses} landmarks={self.n_landmarks} "
            f"ranges={self.n_ranges} components={self.components}"
        )


@attrs.frozen
class CheckFailure:
    check: str
    params: InstanceParams
    message: str

    def __str__(self) -> str:
        return f"{self.check} failed on instance ({self.params}): {self.message}"


@attrs.define
class VerificationReport:
    trials: int
    max_errors: dict[str, float] = attrs.field(factory=dict)
    failures: list[CheckFailure] = attrs.field(factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def record(self, check: str, error: float) -> None:
        self.max_errors[check] = max(self.max_errors.get(check, 0.0), float(error))


def draw_params(seed: int, d: int, components: int) -> InstanceParams:
    """Sizes with n_c = d·poses + ranges ≤ MAX_CONSTRAINED_ROWS and n_f = poses + landmarks ≤ MAX_POINTS."""
    rng = np.random.default_rng(seed)
    n_poses = int(rng.integers(2, MAX_CONSTRAINED_ROWS // d))
    ranges_cap = min(6, MAX_CONSTRAINED_ROWS - d * n_poses)
    return InstanceParams(
        seed=seed,
        d=d,
        n_poses=n_poses,
        n_landmarks=int(rng.integers(0, MAX_POINTS - n_poses + 1)),
        n_ranges=int(rng.integers(0, ranges_cap + 1)),
        components=components,
    )


def random_instance(params: InstanceParams) -> Dataset:
    """Mixed-residual instance with noisy measurements; ground truth is a random feasible point."""
    rng = np.random.default_rng(params.seed + 1_000_003)
    d = params.d
    builder = DatasetBuilder(d, f"random-{params.seed}")
    poses = list(range(params.n_poses))
    groups = [poses] if params.components == 1 else [poses[: len(poses) // 2], poses[len(poses) // 2 :]]
    for k in poses:
        builder.add_pose(k, random_rotation(rng, d), rng.standard_normal(d))
    for group in groups:
        for a, b in zip(group, group[1:]):
            builder.add_rel_pose(a, b, random_rotation(rng, d), rng.standard_normal(d), rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0))
    landmark_ids = []
    for p in range(params.n_landmarks):
        lid = params.n_poses + p
        group = groups[p % len(groups)]
        builder.add_point(lid, rng.standard_normal(d))
        landmark_ids.append((lid, group))
        for f in rng.choice(group, size=min(len(group), int(rng.integers(1, 3))), replace=False):
            builder.add_rel_translation(int(f), lid, rng.standard_normal(d), rng.uniform(0.5, 2.0))
    for _ in range(params.n_ranges):
        group = groups[int(rng.integers(len(groups)))]
        members = list(group) + [lid for lid, g in landmark_ids if g is group]
        if len(members) < 2:
            members = list(poses)
        i, j = rng.choice(members, size=2, replace=False)
        builder.add_range(int(i), int(j), rng.uniform(0.5, 3.0), rng.uniform(0.5, 2.0))
    return builder.build()


def inject_non_incidence(model: QuadraticModel) -> QuadraticModel:
    """Append a residual row with +1 on two unconstrained columns."""
    n_c, n = model.layout.n_c, model.layout.n
    row = sp.csr_matrix((np.ones(2), ([0, 0], [n_c, n_c + 1])), shape=(1, n))
    A = sp.vstack([model.A, row]).tocsr()
    Omega = sp.diags(np.append(model.weights, 1.0), format="dia")
    A_csc = A.tocsc()
    return attrs.evolve(model, A=A, Omega=Omega, A_c=A_csc[:, :n_c].tocsc(), A_f=A_csc[:, n_c:].tocsc())


def _rel(err: float, scale: float) -> float:
    return float(err) / max(float(scale), 1e-300)


class _Trial:
    def __init__(self, dataset: Dataset, model: QuadraticModel, op: SchurOperator, rng: np.random.Generator) -> None:
        self.dataset = dataset
        self.model = model
        self.op = op
        self.rng = rng
        self.layout = model.layout
        self.manifold = ProductManifold.from_layout(self.layout)
        self.Q = model.full_Q().toarray()
        n_c = self.layout.n_c
        self.Q_ff = self.Q[n_c:, n_c:]
        self.Q_fc = self.Q[n_c:, :n_c]

    def random_xc(self) -> np.ndarray:
        return self.rng.standard_normal((self.layout.n_c, self.layout.d))

    def check_oracle(self) -> float:
        Qbar = dense_oracle(self.model)
        worst = 0.0
        for _ in range(3):
            Xc = self.random_xc()
            ref = Qbar @ Xc
            worst = max(worst, _rel(np.linalg.norm(self.op.apply(Xc) - ref), np.linalg.norm(ref)))
        return worst

    def check_elimination(self) -> float:
        Xc = self.random_xc()
        Xf = -spectral_pinv(self.Q_ff) @ self.Q_fc @ Xc
        conditional_min = self.model.cost(np.vstack([Xc, Xf]))
        reduced = self.op.reduced_cost(Xc)
        return _rel(abs(reduced - conditional_min), max(abs(conditional_min), abs(reduced), 1e-12))

    def check_min_norm(self) -> float:
        Xc = self.random_xc()
        ref = -spectral_pinv(self.Q_ff) @ self.Q_fc @ Xc
        got = self.op.recover_unconstrained(Xc, "min_norm")
        return _rel(np.linalg.norm(got - ref), max(np.linalg.norm(ref), 1e-12))

    def check_optimality(self) -> float:
        """Largest relative amount by which a perturbed X_f beats the recovered one."""
        Xc = self.random_xc()
        Xf = self.op.recover_unconstrained(Xc)
        best = self.model.cost(np.vstack([Xc, Xf]))
        worst = 0.0
        for _ in range(50):
            other = self.model.cost(np.vstack([Xc, Xf + self.rng.standard_normal(Xf.shape)]))
            worst = max(worst, (best - other) / max(best, 1e-12))
        return worst

    def check_gauge(self) -> float:
        Xc = self.random_xc()
        base = self.op.reduced_cost(Xc)
        worst = 0.0
        for _ in range(20):
            G = random_rotation(self.rng, self.layout.d)
            worst = max(worst, _rel(abs(self.op.reduced_cost(Xc @ G) - base), max(base, 1e-12)))
        return worst

    def check_translation(self) -> float:
        Xc = self.random_xc()
        X = np.vstack([Xc, self.op.recover_unconstrained(Xc)])
        base = self.model.cost(X)
        shifted = X.copy()
        shifted[self.layout.point_rows] += self.rng.standard_normal(self.layout.d)
        return _rel(abs(self.model.cost(shifted) - base), max(base, 1e-12))

    def check_graph(self) -> float:
        """Laplacian null space, reduced Laplacian definiteness, rank of C and consistency of the singular system."""
        graph = self.op.graph
        A_f = self.model.A_f.toarray()
        lap = A_f.T @ (self.model.weights[:, None] * A_f)
        w = scipy.linalg.eigvalsh(lap) if lap.size else np.zeros(0)
        lam_max = max(np.max(np.abs(w)) if w.size else 0.0, 1e-300)
        if int(np.sum(w < 1e-10 * lam_max)) != graph.n_components:
            raise AssertionError(f"Laplacian has {int(np.sum(w < 1e-10 * lam_max))} null eigenvalues, graph has {graph.n_components} components")
        if self.op.r:
            if scipy.linalg.eigvalsh(self.op.laplacian.toarray()).min() <= 0:
                raise AssertionError("reduced Laplacian is not positive definite")
            C = A_f[:, self.op.retained_columns]
            if np.linalg.matrix_rank(C) != self.op.r:
                raise AssertionError("retained columns are not linearly independent")
        Xc = self.random_xc()
        QfcX = self.Q_fc @ Xc
        worst = 0.0
        for nodes in graph.components:
            worst = max(worst, _rel(np.linalg.norm(QfcX[nodes].sum(axis=0)), max(np.linalg.norm(QfcX), 1e-12)))
        return worst

    def _reduced_rgrad(self, X: np.ndarray) -> np.ndarray:
        return self.manifold.egrad2rgrad(X, self.op.reduced_grad(X))

    def check_gradient(self, h: float = 1e-5) -> float:
        man = self.manifold
        worst = 0.0
        for _ in range(5):
            X = man.random_point(self.rng)
            V = man.random_tangent(X, self.rng)
            g = self._reduced_rgrad(X)
            fd = (self.op.reduced_cost(man.retract(X, h * V)) - self.op.reduced_cost(man.retract(X, -h * V))) / (2 * h)
            worst = max(worst, _rel(abs(fd - man.inner(X, g, V)), max(np.linalg.norm(g), 1e-12)))
        return worst

    def check_hessian(self, h: float = 1e-5) -> float:
        man = self.manifold
        worst = 0.0
        for _ in range(5):
            X = man.random_point(self.rng)
            V = man.random_tangent(X, self.rng)
            egrad = self.op.reduced_grad(X)
            hv = man.ehess2rhess(X, egrad, 2.0 * self.op.apply(V), V)
            diff = self._reduced_rgrad(man.retract(X, h * V)) - self._reduced_rgrad(man.retract(X, -h * V))
            fd = man.project_tangent(X, diff / (2 * h))
            worst = max(worst, _rel(np.linalg.norm(fd - hv), max(np.linalg.norm(hv), np.linalg.norm(egrad), 1e-12)))
        return worst

    def check_retraction(self) -> float:
        man = self.manifold
        X = man.random_point(self.rng)
        V = man.random_tangent(X, self.rng)
        errs = [np.linalg.norm(man.retract(X, t * V) - (X + t * V)) for t in (1e-3, 1e-4)]
        if errs[1] == 0:
            return 0.0
        ratio = errs[0] / errs[1]
        if not 30 <= ratio <= 300:
            raise AssertionError(f"retraction error ratio {ratio:.1f} outside [30, 300]")
        return 0.0

    def check_preconditioner(self) -> float:
        config = SolverConfig()
        P = build_preconditioner(self.model, config).with_mode("reduced")
        lam = scipy.linalg.eigvalsh(self.Q).max()
        if (lam + P.mu) / P.mu > config.precond_cond_cap * (1 + 1e-12):
            raise AssertionError(f"preconditioner condition bound {(lam + P.mu) / P.mu:.3e} exceeds {config.precond_cond_cap:.1e}")
        man = self.manifold
        X = man.random_point(self.rng)
        V, W = man.random_tangent(X, self.rng), man.random_tangent(X, self.rng)
        PV, PW = apply_preconditioner(P, man, X, V), apply_preconditioner(P, man, X, W)
        if man.inner(X, PV, V) <= 0:
            raise AssertionError("preconditioner is not positive on the tangent space")
        a, b = man.inner(X, PV, W), man.inner(X, V, PW)
        return _rel(abs(a - b), max(np.linalg.norm(PV) * np.linalg.norm(W), np.linalg.norm(V) * np.linalg.norm(PW)))

    def check_round_trip(self) -> float:
        again = loads(dumps(self.dataset), name=self.dataset.name)
        result = compare_datasets(self.dataset, again)
        if result:
            raise AssertionError(result.report(max_diffs=5))
        return 0.0


CHECKS: dict[str, Callable[[_Trial], float]] = {
    "oracle": _Trial.check_oracle,
    "elimination": _Trial.check_elimination,
    "min_norm": _Trial.check_min_norm,
    "optimality": _Trial.check_optimality,
    "gauge": _Trial.check_gauge,
    "translation": _Trial.check_translation,
    "graph": _Trial.check_graph,
    "gradient": _Trial.check_gradient,
    "hessian": _Trial.check_hessian,
    "retraction": _Trial.check_retraction,
    "preconditioner": _Trial.check_preconditioner,
    "round_trip": _Trial.check_round_trip,
}


def run_verification(trials: int = DEFAULT_TRIALS, seed: int = 0, inject_fault: str | None = None) -> VerificationReport:
    if trials < 1:
        raise ValueError(f"trials must be at least 1, got {trials}")
    if inject_fault not in (None, "non-incidence"):
        raise ValueError(f"unknown fault {inject_fault!r}")
    report = VerificationReport(trials)
    for t in range(trials):
        params = draw_params(seed + t, d=2 + t % 2, components=1 + (t // 2) % 2)
        dataset = random_instance(params)
        model = dataset.model()
        if inject_fault == "non-incidence":
            model = inject_non_incidence(model)
        try:
            op = build_operator(model, detect_incidence(model.A_f))
        except SchurVarproError as e:
            report.failures.append(CheckFailure("build", params, str(e)))
            continue
        trial = _Trial(dataset, model, op, np.random.default_rng(params.seed))
        for name, check in CHECKS.items():
            try:
                error = check(trial)
            except (AssertionError, SchurVarproError, ValueError, np.linalg.LinAlgError) as e:
                report.failures.append(CheckFailure(name, params, str(e)))
                continue
            report.record(name, error)
            if error > TOLERANCES[name] and TOLERANCES[name] > 0:
                report.failures.append(CheckFailure(name, params, f"error {error:.3e} exceeds {TOLERANCES[name]:.1e}"))
        logger.debug(f"trial {t} ({params}) done")
    logger.info(f"verification: {trials} trials, {len(report.failures)} failure(s)")
    return report
