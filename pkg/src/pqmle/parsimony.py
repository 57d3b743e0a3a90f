"""Parsimonious-target machinery for the multicollinear linear intensity model.

The true values of the linear model form the affine set
``{alpha* + Ker(A)} ∩ [0, M)^a`` where ``Ker(A) = {v : v @ A = 0}``.  The
penalty's minimizers on that set live among finitely many oblique
projections of alpha* onto coordinate subspaces complementary to Ker(A);
this module enumerates those candidates, selects the unique minimizer when
it exists, and provides a brute-force search over the whole set as an
independent oracle.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space

from .penalty import PenaltySpec, time_invariant_penalty

__all__ = [
    "RankError",
    "NonUniqueMinimizerError",
    "TrueValueSet",
    "ParsimonyCertificate",
    "GridSearchConfig",
    "kernel_basis",
    "enumerate_e_sets",
    "project_pr_e",
    "select_parsimonious",
    "brute_force_pe_min",
    "check_j1_independence",
]

# Relative tolerance for numerical rank / determinant decisions.
_DET_TOL = 1e-9
# Roundoff absorption when filtering projections to the nonnegative orthant.
_NONNEG_TOL = -1e-12


class RankError(ValueError):
    """A matrix does not have the rank the operation requires."""


class NonUniqueMinimizerError(ValueError):
    """The penalty has tied minimizers on the candidate set."""

    def __init__(self, message, tied):
        super().__init__(message)
        self.tied = tied


@dataclass(frozen=True)
class TrueValueSet:
    """The set {alpha_star + span(kernel)} ∩ [0, box_bound]^a of true values."""

    alpha_star: np.ndarray
    kernel: np.ndarray  # orthonormal rows spanning Ker(A)
    box_bound: float

    def __post_init__(self):
        object.__setattr__(self, "alpha_star", np.asarray(self.alpha_star, dtype=float))
        object.__setattr__(self, "kernel", np.atleast_2d(np.asarray(self.kernel, dtype=float)))

    @classmethod
    def from_matrix(cls, alpha_star, A, box_bound: float) -> "TrueValueSet":
        A = np.asarray(A, dtype=float)
        ker = kernel_basis(A)
        alpha_star = np.asarray(alpha_star, dtype=float)
        if ker.size:
            resid = np.max(np.abs(ker @ A))
            scale = max(np.linalg.norm(ker), 1.0) * max(np.linalg.norm(A), 1.0)
            if resid > 1e-10 * scale:
                raise RankError("kernel basis fails to annihilate A")
        return cls(alpha_star=alpha_star, kernel=ker, box_bound=float(box_bound))

    def member(self, coeffs) -> np.ndarray:
        """alpha_star + coeffs @ kernel."""
        if self.kernel.shape[0] == 0:
            return self.alpha_star.copy()
        return self.alpha_star + np.asarray(coeffs, dtype=float) @ self.kernel


def kernel_basis(A: np.ndarray, tol: float = _DET_TOL) -> np.ndarray:
    """Orthonormal rows spanning {v : v @ A = 0} for an (a, r) matrix of rank r."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    a, r = A.shape
    svals = np.linalg.svd(A, compute_uv=False)
    numerical_rank = int(np.sum(svals > tol * max(svals[0], 1.0))) if svals.size else 0
    if numerical_rank != r:
        raise RankError(f"expected rank {r}, numerical rank is {numerical_rank}")
    if a == r:
        return np.empty((0, a))
    basis = null_space(A.T).T
    # null_space returns an orthonormal set already; keep a deterministic sign.
    for row in basis:
        lead = row[np.argmax(np.abs(row) > 1e-12)]
        if lead < 0:
            row *= -1.0
    return basis


def enumerate_e_sets(A: np.ndarray, cap: int = 4096) -> list[tuple[int, ...]]:
    """All support sets E with span{e_j : j in E} ⊕ Ker(A) = R^a.

    Each E has size rank(A); membership is decided by the determinant of the
    a x a matrix stacking the coordinate vectors of E over the kernel basis.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    a, r = A.shape
    ker = kernel_basis(A)
    if math.comb(a, r) > cap:
        raise ValueError(
            f"enumeration of {math.comb(a, r)} support sets exceeds cap {cap}"
        )
    eye = np.eye(a)
    out = []
    for E in itertools.combinations(range(a), r):
        stacked = np.vstack([eye[list(E)], ker])
        # rows have unit norm, so |det| is already scale-free
        if abs(np.linalg.det(stacked)) > _DET_TOL:
            out.append(E)
    return out


def project_pr_e(alpha_star, E, A) -> np.ndarray:
    """Oblique projection of alpha_star onto span{e_j : j in E} along Ker(A).

    Solves for z with (alpha_star - sum_j z_j e_j) @ A = 0; requires E to be
    a valid support set (the r x r block A[E, :] nonsingular).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    alpha_star = np.asarray(alpha_star, dtype=float)
    E = tuple(int(j) for j in E)
    block = A[list(E), :]
    if block.shape[0] != block.shape[1]:
        raise ValueError(f"support set must have size rank(A)={A.shape[1]}, got {len(E)}")
    svals = np.linalg.svd(block, compute_uv=False)
    if svals.size and svals[-1] <= _DET_TOL * max(svals[0], 1.0):
        raise RankError(f"support set {E} is not complementary to Ker(A)")
    z = np.linalg.solve(block.T, A.T @ alpha_star)
    out = np.zeros(alpha_star.shape[0])
    out[list(E)] = z
    return out


@dataclass(frozen=True)
class ParsimonyCertificate:
    """Unique penalty minimizer on the candidate set, with its witness and margin."""

    alpha: np.ndarray
    support: tuple[int, ...]
    margin: float
    candidates: tuple  # rows (E, vector, pe_value, feasible)


def select_parsimonious(
    alpha_star,
    A,
    penalty: PenaltySpec,
    box_bound: float,
    margin_tol: float = 1e-9,
) -> ParsimonyCertificate:
    """Pick the unique time-invariant-penalty minimizer among the projections.

    Candidates are the projections onto valid support sets, filtered to the
    nonnegative orthant (coordinates above -1e-12 are clamped to exact 0).
    Raises NonUniqueMinimizerError on a tie within `margin_tol`; warns if the
    minimizer touches the box edge instead of lying in [0, box_bound)^a.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    alpha_star = np.asarray(alpha_star, dtype=float)
    rows = []
    for E in enumerate_e_sets(A):
        vec = project_pr_e(alpha_star, E, A)
        feasible = bool(np.all(vec >= _NONNEG_TOL))
        if feasible:
            vec = np.where(np.abs(vec) <= -_NONNEG_TOL, 0.0, vec)
        pe = time_invariant_penalty(vec, penalty)
        rows.append((E, vec, pe, feasible))
    feasible_rows = [r for r in rows if r[3]]
    if not feasible_rows:
        raise ValueError("no projection lands in the nonnegative orthant")
    feasible_rows.sort(key=lambda r: r[2])
    best = feasible_rows[0]
    tied = [r for r in feasible_rows if r[2] - best[2] <= margin_tol]
    if len(tied) > 1:
        raise NonUniqueMinimizerError(
            "parsimonious value is not unique: penalty ties among "
            + ", ".join(str(r[0]) for r in tied),
            tied=[r[0] for r in tied],
        )
    margin = feasible_rows[1][2] - best[2] if len(feasible_rows) > 1 else math.inf
    vec = best[1]
    if np.any(vec >= box_bound):
        warnings.warn(
            "parsimonious minimizer is not interior to [0, box_bound)^a",
            stacklevel=2,
        )
    support = tuple(int(j) for j in np.nonzero(vec)[0])
    return ParsimonyCertificate(
        alpha=vec, support=support, margin=float(margin), candidates=tuple(rows)
    )


@dataclass(frozen=True)
class GridSearchConfig:
    """Resolution and mode of the brute-force penalty search."""

    step: float = 1e-3
    mode: str = "grid"  # "grid" | "random"
    n_samples: int = 200_000
    seed: int = 0
    max_grid_dim: int = 3
    stage_budget: int = 1_500_000  # grid points evaluated per refinement stage
    refine_top: int = 4  # coarse candidates carried into the next stage


def _coefficient_hull(alpha_star, kernel, box_bound):
    """Per-axis bounds of {c : alpha* + c @ kernel in [0, box]^a} via small LPs."""
    from scipy.optimize import linprog

    dim, a = kernel.shape
    A_ub = np.vstack([-kernel.T, kernel.T])
    b_ub = np.concatenate([alpha_star, box_bound - alpha_star])
    lo = np.empty(dim)
    hi = np.empty(dim)
    for k in range(dim):
        c = np.zeros(dim)
        for sign, target in ((1.0, lo), (-1.0, hi)):
            c[k] = sign
            res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * dim)
            if not res.success:
                raise ValueError("true-value set is empty inside the box")
            target[k] = sign * res.fun
        c[k] = 0.0
    return lo, hi


def _evaluate_pe(points, penalty):
    qs = np.array([e.q for e in penalty.entries])
    ks = np.array([e.kappa for e in penalty.entries])
    idx = [e.index for e in penalty.entries]
    return (ks * np.abs(points[:, idx]) ** qs).sum(axis=1)


def brute_force_pe_min(
    alpha_star,
    kernel: np.ndarray,
    box_bound: float,
    penalty: PenaltySpec,
    config: GridSearchConfig = GridSearchConfig(),
) -> tuple[np.ndarray, float]:
    """Search the whole set {alpha* + Ker} ∩ [0, box)^a for the penalty minimum.

    Independent oracle for the projection-based selector.  Grid mode bounds
    the kernel-coefficient region exactly (one LP per axis direction), then
    walks a budgeted grid, refining around the best coarse candidates until
    the requested step is reached.  Random mode scatters points uniformly
    over the same region.
    """
    alpha_star = np.asarray(alpha_star, dtype=float)
    kernel = np.atleast_2d(np.asarray(kernel, dtype=float))
    dim = kernel.shape[0]
    if dim == 0 or kernel.size == 0:
        if np.any(alpha_star < 0.0) or np.any(alpha_star >= box_bound):
            raise ValueError("alpha_star itself is outside [0, box)^a")
        return alpha_star.copy(), time_invariant_penalty(alpha_star, penalty)
    if config.mode not in ("grid", "random"):
        raise ValueError(f"unknown search mode {config.mode!r}")
    if config.mode == "grid" and dim > config.max_grid_dim:
        raise ValueError(f"grid mode supports kernel dimension <= {config.max_grid_dim}")

    lo, hi = _coefficient_hull(alpha_star, kernel, box_bound)
    pad = 10.0 * config.step
    lo, hi = lo - pad, hi + pad

    def feasible_points(mesh):
        pts = alpha_star + mesh @ kernel
        keep = np.all(pts >= _NONNEG_TOL, axis=1) & np.all(pts < box_bound, axis=1)
        return np.clip(pts[keep], 0.0, None), mesh[keep]

    if config.mode == "random":
        rng = np.random.default_rng(config.seed)
        mesh = rng.uniform(lo, hi, size=(config.n_samples, dim))
        pts, _ = feasible_points(mesh)
        if pts.shape[0] == 0:
            raise ValueError("no feasible point found; the true-value set cannot be empty")
        pe = _evaluate_pe(pts, penalty)
        best = int(np.argmin(pe))
        return pts[best], float(pe[best])

    per_axis_cap = max(3, int(config.stage_budget ** (1.0 / dim)))
    centers = [0.5 * (lo + hi)]
    half = 0.5 * (hi - lo)
    best_pt, best_pe = None, math.inf
    while True:
        n_axis = np.minimum(np.ceil(2.0 * half / config.step).astype(int) + 1, per_axis_cap)
        candidates = []
        for center in centers:
            axes = [
                np.linspace(center[k] - half[k], center[k] + half[k], int(n_axis[k]))
                for k in range(dim)
            ]
            mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
            pts, mesh = feasible_points(mesh)
            if pts.shape[0] == 0:
                continue
            pe = _evaluate_pe(pts, penalty)
            order = np.argsort(pe)[: config.refine_top]
            for i in order:
                candidates.append((float(pe[i]), pts[i], mesh[i]))
        if not candidates and best_pt is None:
            raise ValueError("no feasible point found; the true-value set cannot be empty")
        candidates.sort(key=lambda t: t[0])
        if candidates and candidates[0][0] < best_pe:
            best_pe, best_pt = candidates[0][0], candidates[0][1]
        achieved = np.max(2.0 * half / np.maximum(n_axis - 1, 1))
        if achieved <= config.step * (1.0 + 1e-9):
            break
        centers = [c for _, _, c in candidates[: config.refine_top]]
        half = np.full(dim, 2.0 * achieved)
    return best_pt, float(best_pe)


def check_j1_independence(A, J1) -> bool:
    """True iff span{e_j : j in J1} intersects Ker(A) trivially."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    a = A.shape[0]
    J1 = tuple(int(j) for j in J1)
    ker = kernel_basis(A)
    n_rows = len(J1) + ker.shape[0]
    if len(J1) == 0:
        return True
    if n_rows > a:
        return False
    stacked = np.vstack([np.eye(a)[list(J1)], ker]) if ker.size else np.eye(a)[list(J1)]
    return np.linalg.matrix_rank(stacked, tol=_DET_TOL * a) == n_rows
