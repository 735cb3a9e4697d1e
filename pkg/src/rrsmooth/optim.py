"""Energy minimizers: fixed-point iteration, (P)LBFGS and (P)NLCG.

All methods share the same skeleton: compute a search direction, cap the
step so no cell can invert, accept a step through an Armijo (fixed-point in
2D) or strong-Wolfe line search, and stop on a gradient norm, an energy
stall, or the iteration budget. Fixed vertices never move and sliding
vertices only move in their planes because every direction is projected
onto the constraint set before stepping.
"""

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .assembly import (
    assemble,
    assemble_preconditioner,
    energy_gradient,
    vec_to_field,
)
from .errors import DegenerateElement, IndefiniteMatrix, LineSearchFailed, MeshError
from .mesh import constraint_projector, max_step_before_inversion, quality_stats, validate

FIXED_POINT = "fixedpoint"
LBFGS = "lbfgs"
PLBFGS = "plbfgs"
NLCG = "nlcg"
PNLCG = "pnlcg"
METHODS = (FIXED_POINT, LBFGS, PLBFGS, NLCG, PNLCG)

_CURVATURE_PAIR_TOL = 1e-14


@dataclass
class CgInfo:
    iterations: int
    residual: float
    converged: bool


def cg_solve(A, b, tol=1e-8, max_iters=None, x0=None):
    """Conjugate gradients for SPD A; returns (x, CgInfo).

    Raises IndefiniteMatrix if a search direction has non-positive
    curvature, which means A is not SPD.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if max_iters is None:
        max_iters = n
    norm_b = np.linalg.norm(b)
    if norm_b == 0.0:
        return np.zeros(n), CgInfo(0, 0.0, True)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    res = np.linalg.norm(r)
    if res <= tol * norm_b:
        return x, CgInfo(0, res / norm_b, True)
    p = r.copy()
    rr = r @ r
    for k in range(1, max_iters + 1):
        Ap = A @ p
        curvature = p @ Ap
        if curvature <= 0.0:
            raise IndefiniteMatrix(
                f"non-positive curvature {curvature:.3e} in CG iteration {k}"
            )
        alpha = rr / curvature
        x += alpha * p
        r -= alpha * Ap
        rr_new = r @ r
        res = math.sqrt(rr_new)
        if res <= tol * norm_b:
            return x, CgInfo(k, res / norm_b, True)
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x, CgInfo(max_iters, res / norm_b, False)


@dataclass
class LineSearchResult:
    lam: float
    f: float
    df: float
    evals: int
    armijo_ok: bool
    curvature_ok: bool


def strong_wolfe_search(
    phi, lam_init=1.0, c1=1e-4, c2=0.9, lam_cap=math.inf, max_evals=60, f0=None, df0=None
):
    """Bracket-and-zoom line search for the strong Wolfe conditions.

    ``phi(lam)`` must return ``(f, f')`` along the ray; the accepted step
    satisfies both the sufficient-decrease and the curvature-magnitude
    condition and never exceeds ``lam_cap``. Non-finite trial values are
    treated as overshoots and bracketed away.
    """
    if f0 is None or df0 is None:
        f0, df0 = phi(0.0)
    if not df0 < 0.0:
        raise LineSearchFailed(f"not a descent direction (slope {df0:.3e})")
    evals = 0

    def ev(lam):
        nonlocal evals
        evals += 1
        return phi(lam)

    def done(lam, f, df):
        return LineSearchResult(lam, f, df, evals, True, True)

    lam_prev, f_prev, df_prev = 0.0, f0, df0
    lam = min(lam_init, lam_cap)
    for i in range(max_evals):
        f, df = ev(lam)
        if not math.isfinite(f) or f > f0 + c1 * lam * df0 or (i > 0 and f >= f_prev):
            return _zoom(
                ev, lam_prev, f_prev, df_prev, lam, f, df, f0, df0, c1, c2,
                max_evals - evals, done,
            )
        if abs(df) <= -c2 * df0:
            return done(lam, f, df)
        if df >= 0.0:
            return _zoom(
                ev, lam, f, df, lam_prev, f_prev, df_prev, f0, df0, c1, c2,
                max_evals - evals, done,
            )
        if lam >= lam_cap:
            raise LineSearchFailed(
                "reached the inversion cap with the curvature condition unmet"
            )
        lam_prev, f_prev, df_prev = lam, f, df
        lam = min(2.0 * lam, lam_cap)
    raise LineSearchFailed("bracketing exhausted its evaluation budget")


def _quadratic_min(lo, f_lo, df_lo, hi, f_hi):
    """Minimizer of the quadratic through (lo, f_lo, df_lo) and (hi, f_hi)."""
    h = hi - lo
    denom = f_hi - f_lo - df_lo * h
    if denom == 0.0 or not math.isfinite(denom):
        return None
    lam = lo - 0.5 * df_lo * h * h / denom
    return lam if math.isfinite(lam) else None


def _zoom(ev, lo, f_lo, df_lo, hi, f_hi, df_hi, f0, df0, c1, c2, budget, done):
    """Shrink a bracket [lo, hi] (in Wolfe ordering) to an acceptable step."""
    for _ in range(max(budget, 1)):
        a, b = (lo, hi) if lo < hi else (hi, lo)
        width = b - a
        lam = None
        if math.isfinite(f_hi):
            lam = _quadratic_min(lo, f_lo, df_lo, hi, f_hi)
        if lam is None or not (a + 1e-12 * width < lam < b - 1e-12 * width):
            lam = 0.5 * (a + b)
        f, df = ev(lam)
        if not math.isfinite(f) or f > f0 + c1 * lam * df0 or f >= f_lo:
            hi, f_hi, df_hi = lam, f, df
        else:
            if abs(df) <= -c2 * df0:
                return done(lam, f, df)
            if df * (hi - lo) >= 0.0:
                hi, f_hi, df_hi = lo, f_lo, df_lo
            lo, f_lo, df_lo = lam, f, df
        if width <= 1e-16 * max(1.0, abs(b)):
            break
    raise LineSearchFailed("zoom could not satisfy the strong Wolfe conditions")


def backtracking_search(
    phi, lam_init=1.0, shrink=0.5, c1=1e-4, lam_cap=math.inf, lam_min=1e-16,
    f0=None, df0=None,
):
    """Armijo backtracking; fails when the step underflows lam_min."""
    if f0 is None or df0 is None:
        f0, df0 = phi(0.0)
    if not df0 < 0.0:
        raise LineSearchFailed(f"not a descent direction (slope {df0:.3e})")
    evals = 0
    lam = min(lam_init, lam_cap)
    while lam >= lam_min:
        f, df = phi(lam)
        evals += 1
        if math.isfinite(f) and f <= f0 + c1 * lam * df0:
            return LineSearchResult(lam, f, df, evals, True, abs(df) <= -df0)
        lam *= shrink
    raise LineSearchFailed(f"step length underflowed {lam_min:.1e}")


@dataclass
class OptimizeConfig:
    """Knobs shared by every optimizer; defaults follow quasi-Newton practice."""

    method: str = PLBFGS
    max_iters: int = 200
    grad_tol: float = 1e-8
    grad_tol_abs: float = 1e-10
    energy_tol: float = 1e-12
    energy_patience: int = 3
    lbfgs_memory: int = 10
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    backtrack_shrink: float = 0.5
    lam_min: float = 1e-16
    max_ls_evals: int = 60
    cg_tol: float = 1e-8
    cg_max_iters: int | None = None
    precondition_refresh: int = 1
    step_cap_factor: float = 0.9

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 0.0 < self.wolfe_c1 < self.wolfe_c2 < 1.0:
            raise ValueError("need 0 < c1 < c2 < 1")
        if self.lbfgs_memory < 1:
            raise ValueError("lbfgs_memory must be >= 1")
        if min(self.grad_tol, self.grad_tol_abs, self.energy_tol, self.cg_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if not 0.0 < self.backtrack_shrink < 1.0:
            raise ValueError("backtracking shrink factor must be in (0, 1)")
        if self.precondition_refresh < 1 or self.max_iters < 0:
            raise ValueError("iteration counts must be non-negative")


@dataclass
class IterationRecord:
    """One accepted step (index 0 is the initial state)."""

    index: int
    F: float
    grad_norm: float
    lam: float
    ls_evals: int
    ls_kind: str = ""
    armijo_ok: bool = True
    curvature_ok: bool = True
    min_measure: float = math.nan
    slide_residual: float = 0.0


@dataclass
class OptimizeReport:
    method: str
    records: list
    termination: str
    fun_evals: int
    grad_evals: int
    quality_before: object = None
    quality_after: object = None
    extras: dict = field(default_factory=dict)

    @property
    def iterations(self):
        return len(self.records) - 1

    @property
    def final_energy(self):
        return self.records[-1].F

    def lines(self):
        out = [
            f"method       {self.method}",
            f"iterations   {self.iterations}",
            f"evaluations  {self.fun_evals} function / {self.grad_evals} gradient",
            f"termination  {self.termination}",
            f"energy       {self.records[0].F:.12g} -> {self.final_energy:.12g}",
        ]
        if self.quality_before is not None and self.quality_after is not None:
            out.append(
                f"min quality  {self.quality_before.min_q:.6f} -> "
                f"{self.quality_after.min_q:.6f}"
            )
            out.append(
                f"q < 0.3      {self.quality_before.below_threshold_count} -> "
                f"{self.quality_after.below_threshold_count}"
            )
        return out

    def write_csv(self, path_or_file):
        close = False
        if hasattr(path_or_file, "write"):
            fh = path_or_file
        else:
            fh = open(path_or_file, "w")
            close = True
        try:
            fh.write("iter,F,grad_norm,lambda,ls_evals\n")
            for r in self.records:
                fh.write(
                    f"{r.index},{r.F:.17g},{r.grad_norm:.17g},{r.lam:.17g},{r.ls_evals}\n"
                )
        finally:
            if close:
                fh.close()


def _inf_norm(v):
    return float(np.abs(v).max()) if v.size else 0.0


class FunctionProblem:
    """Adapter exposing a plain objective to the descent loops."""

    def __init__(self, fun_grad, x0, precond_solve=None):
        self._fun_grad = fun_grad
        self.x0 = np.asarray(x0, dtype=float).copy()
        self._solve = precond_solve
        self.fun_evals = 0
        self.grad_evals = 0

    def eval(self, x):
        self.fun_evals += 1
        self.grad_evals += 1
        f, g = self._fun_grad(x)
        return float(f), np.asarray(g, dtype=float)

    def project(self, v):
        return v

    def step(self, x, d, lam):
        return x + lam * d

    def lam_cap(self, x, d):
        return math.inf

    def precond_factory(self, x, k):
        return self._solve

    def step_metrics(self, x_old, x_new):
        return {}


class MeshProblem:
    """Mesh objective over the flattened (n_vertices * dim) coordinate array."""

    def __init__(self, mesh, config):
        self.mesh = mesh
        self.config = config
        self.nv = mesh.n_vertices
        self.dim = mesh.dim
        self.x0 = mesh.vertices.ravel().copy()
        self.fixed = mesh.fixed_mask()
        self.slide = mesh.slide_mask()
        self.normals = mesh.slide_normals
        self.project_field = constraint_projector(mesh)
        self.fun_evals = 0
        self.grad_evals = 0
        self.last_system = None

    def mesh_at(self, x):
        return self.mesh.with_vertices(x.reshape(self.nv, self.dim))

    def eval(self, x):
        self.fun_evals += 1
        self.grad_evals += 1
        try:
            f, grad_field = energy_gradient(self.mesh_at(x))
        except DegenerateElement:
            return math.inf, None
        return f, self.project_field(grad_field).ravel()

    def eval_with_system(self, x):
        """Like eval but also assembles the sparse blocks (fixed point needs them)."""
        self.fun_evals += 1
        self.grad_evals += 1
        system = self.system_at(x)
        g = self.project_field(vec_to_field(system.gradient, self.nv, self.dim))
        return system.F, g.ravel(), system

    def system_at(self, x):
        """Sparse block assembly at x, not counted as an objective evaluation."""
        system = assemble(self.mesh_at(x))
        self.last_system = system
        return system

    def project(self, v):
        return self.project_field(v.reshape(self.nv, self.dim)).ravel()

    def step(self, x, d, lam):
        out = x + lam * d
        fld = out.reshape(self.nv, self.dim)
        fld[self.fixed] = x.reshape(self.nv, self.dim)[self.fixed]
        return out

    def lam_cap(self, x, d):
        bound = max_step_before_inversion(
            self.mesh_at(x), d.reshape(self.nv, self.dim)
        )
        return self.config.step_cap_factor * bound

    def preconditioner(self, x):
        return assemble_preconditioner(self.mesh_at(x))

    def precond_factory(self, x, k):
        pre = self.preconditioner(x)
        cfg = self.config

        def solve(vec):
            fld = vec.reshape(self.nv, self.dim)
            out = np.zeros_like(fld)
            for c in range(self.dim):
                sol, _ = cg_solve(
                    pre.P, fld[pre.active, c], tol=cfg.cg_tol, max_iters=cfg.cg_max_iters
                )
                out[pre.active, c] = sol
            return self.project_field(out).ravel()

        return solve

    def step_metrics(self, x_old, x_new):
        m = self.mesh_at(x_new)
        disp = (x_new - x_old).reshape(self.nv, self.dim)[self.slide]
        residual = 0.0
        if disp.size:
            norms = np.linalg.norm(disp, axis=1)
            dots = np.abs(np.einsum("ij,ij->i", disp, self.normals[self.slide]))
            moved = norms > 0
            if moved.any():
                residual = float((dots[moved] / norms[moved]).max())
        return {
            "min_measure": float(m.signed_measures().min()),
            "slide_residual": residual,
        }


def _grad_converged(gnorm, g0norm, config):
    return gnorm <= max(config.grad_tol * g0norm, config.grad_tol_abs)


def _energy_stalled(history, config):
    if len(history) <= config.energy_patience:
        return False
    drop = history[0] - history[-1]
    return drop <= config.energy_tol * max(abs(history[-1]), 1.0)


def _take_step(problem, config, x, f, g, d, k, kind):
    """Run one line search along d; returns (x_new, f_new, g_new, record)."""
    cache = {}

    def phi(lam):
        x_t = problem.step(x, d, lam)
        f_t, g_t = problem.eval(x_t)
        cache[lam] = (x_t, f_t, g_t)
        df_t = 0.0 if g_t is None else float(g_t @ d)
        return f_t, df_t

    df0 = float(g @ d)
    cap = problem.lam_cap(x, d)
    if kind == "armijo":
        ls = backtracking_search(
            phi, lam_init=1.0, shrink=config.backtrack_shrink, c1=config.wolfe_c1,
            lam_cap=cap, lam_min=config.lam_min, f0=f, df0=df0,
        )
    else:
        ls = strong_wolfe_search(
            phi, lam_init=1.0, c1=config.wolfe_c1, c2=config.wolfe_c2,
            lam_cap=cap, max_evals=config.max_ls_evals, f0=f, df0=df0,
        )
    x_new, f_new, g_new = cache[ls.lam]
    record = IterationRecord(
        index=k + 1,
        F=f_new,
        grad_norm=_inf_norm(g_new),
        lam=ls.lam,
        ls_evals=ls.evals,
        ls_kind=kind,
        armijo_ok=ls.armijo_ok,
        curvature_ok=ls.curvature_ok,
        **problem.step_metrics(x, x_new),
    )
    return x_new, f_new, g_new, record


def _two_loop(g, pairs, precond_solve):
    """LBFGS two-loop recursion; returns H @ g for the implicit inverse Hessian."""
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * float(s @ q)
        q -= a * y
        alphas.append(a)
    r = precond_solve(q) if precond_solve is not None else q.copy()
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * float(y @ r)
        r += (a - b) * s
    return r


def _steepest(problem, g, solver):
    d = -(solver(g) if solver is not None else g)
    return problem.project(d)


def _lbfgs_loop(problem, config, precondition, extras):
    x = problem.x0.copy()
    f, g = problem.eval(x)
    g0n = _inf_norm(g)
    records = [IterationRecord(0, f, g0n, 0.0, 0)]
    history = deque([f], maxlen=config.energy_patience + 1)
    pairs = deque(maxlen=config.lbfgs_memory)
    solver = None
    termination = "max_iters"
    for k in range(config.max_iters):
        if _grad_converged(_inf_norm(g), g0n, config):
            termination = "grad_tol"
            break
        if _energy_stalled(history, config):
            termination = "energy_tol"
            break
        try:
            if precondition and (solver is None or k % config.precondition_refresh == 0):
                solver = problem.precond_factory(x, k)
            d = problem.project(-_two_loop(g, pairs, solver))
        except MeshError as e:
            termination = f"preconditioner_error: {e}"
            break
        used_steepest = False
        if not float(g @ d) < 0.0:
            d = _steepest(problem, g, solver)
            pairs.clear()
            used_steepest = True
            if not float(g @ d) < 0.0:
                termination = "grad_tol"
                break
        try:
            x_new, f_new, g_new, rec = _take_step(problem, config, x, f, g, d, k, "wolfe")
        except LineSearchFailed:
            if used_steepest:
                termination = "line_search_failed"
                break
            d = _steepest(problem, g, solver)
            pairs.clear()
            try:
                x_new, f_new, g_new, rec = _take_step(
                    problem, config, x, f, g, d, k, "wolfe"
                )
            except LineSearchFailed:
                termination = "line_search_failed"
                break
        s = x_new - x
        y = g_new - g
        ys = float(y @ s)
        if ys > _CURVATURE_PAIR_TOL * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y, 1.0 / ys))
        x, f, g = x_new, f_new, g_new
        records.append(rec)
        history.append(f)
    else:
        if _grad_converged(_inf_norm(g), g0n, config):
            termination = "grad_tol"
    return x, records, termination


def _nlcg_loop(problem, config, precondition, extras):
    x = problem.x0.copy()
    f, g = problem.eval(x)
    g0n = _inf_norm(g)
    records = [IterationRecord(0, f, g0n, 0.0, 0)]
    history = deque([f], maxlen=config.energy_patience + 1)
    betas = extras.setdefault("betas", [])
    solver = None
    termination = "max_iters"
    p = None
    for k in range(config.max_iters):
        if _grad_converged(_inf_norm(g), g0n, config):
            termination = "grad_tol"
            break
        if _energy_stalled(history, config):
            termination = "energy_tol"
            break
        try:
            if precondition and solver is None:
                solver = problem.precond_factory(x, k)
            was_steepest = False
            if p is None or not float(g @ p) < 0.0:
                p = _steepest(problem, g, solver)
                was_steepest = True
        except MeshError as e:
            termination = f"preconditioner_error: {e}"
            break
        if was_steepest and not float(g @ p) < 0.0:
            termination = "grad_tol"
            break
        try:
            x_new, f_new, g_new, rec = _take_step(problem, config, x, f, g, p, k, "wolfe")
        except LineSearchFailed:
            if was_steepest:
                termination = "line_search_failed"
                break
            p = problem.project(-g)
            try:
                x_new, f_new, g_new, rec = _take_step(
                    problem, config, x, f, g, p, k, "wolfe"
                )
            except LineSearchFailed:
                termination = "line_search_failed"
                break
        x, f, g_prev = x_new, f_new, g
        g = g_new
        records.append(rec)
        history.append(f)
        # Polak-Ribiere with the non-negativity clamp (restart when beta < 0).
        beta = max(0.0, float(g @ (g - g_prev)) / float(g_prev @ g_prev))
        betas.append(beta)
        try:
            # The preconditioner is rebuilt at the accepted iterate before
            # the preconditioned gradient enters the new direction.
            if precondition and (k + 1) % config.precondition_refresh == 0:
                solver = problem.precond_factory(x, k + 1)
        except MeshError as e:
            termination = f"preconditioner_error: {e}"
            break
        ghat = _steepest(problem, g, solver)
        p = problem.project(ghat + beta * p)
    else:
        if _grad_converged(_inf_norm(g), g0n, config):
            termination = "grad_tol"
    return x, records, termination


def minimize_lbfgs(fun_grad, x0, config=None, precond_solve=None):
    """Limited-memory BFGS on a plain objective ``fun_grad(x) -> (f, g)``.

    With ``precond_solve`` the inner two-loop seed solves P r = q; without
    it the seed is the identity (no implicit scaling).
    """
    config = config or OptimizeConfig(method=LBFGS)
    problem = FunctionProblem(fun_grad, x0, precond_solve)
    extras = {}
    x, records, termination = _lbfgs_loop(
        problem, config, precondition=precond_solve is not None, extras=extras
    )
    report = OptimizeReport(
        method=PLBFGS if precond_solve is not None else LBFGS,
        records=records,
        termination=termination,
        fun_evals=problem.fun_evals,
        grad_evals=problem.grad_evals,
        extras=extras,
    )
    return x, report


def minimize_nlcg(fun_grad, x0, config=None, precond_solve=None):
    """Polak-Ribiere nonlinear CG on a plain objective."""
    config = config or OptimizeConfig(method=NLCG)
    problem = FunctionProblem(fun_grad, x0, precond_solve)
    extras = {}
    x, records, termination = _nlcg_loop(
        problem, config, precondition=precond_solve is not None, extras=extras
    )
    report = OptimizeReport(
        method=PNLCG if precond_solve is not None else NLCG,
        records=records,
        termination=termination,
        fun_evals=problem.fun_evals,
        grad_evals=problem.grad_evals,
        extras=extras,
    )
    return x, report


def _fixed_point_direction(problem, system, pre, config, x):
    """Solve the decoupled coordinate systems with the abs-clamped operator.

    The solve matrix is the reduced preconditioner; the right-hand side
    keeps the true A acting on the fixed coordinates.
    """
    nv = problem.nv
    A = system.A
    V = system.V
    coords = [V[c * nv : (c + 1) * nv] for c in range(problem.dim)]
    fixed = problem.fixed
    if problem.dim == 2:
        (B,) = system.B_blocks
        X, Y = coords
        rhs = [-(B @ Y) - A @ (X * fixed), (B @ X) - A @ (Y * fixed)]
    else:
        B0, B1, B2 = system.B_blocks
        X, Y, Z = coords
        rhs = [
            -(B2 @ Y) - (B1 @ Z) - A @ (X * fixed),
            (B2 @ X) - (B0 @ Z) - A @ (Y * fixed),
            (B1 @ X) + (B0 @ Y) - A @ (Z * fixed),
        ]
    d = np.zeros((nv, problem.dim))
    for c in range(problem.dim):
        sol, _ = cg_solve(
            pre.P,
            rhs[c][pre.active],
            tol=config.cg_tol,
            max_iters=config.cg_max_iters,
            x0=coords[c][pre.active],
        )
        d[pre.active, c] = sol - coords[c][pre.active]
    return problem.project_field(d).ravel()


def fixed_point_step(mesh, system=None, precond=None, config=None):
    """One fixed-point update: direction, guarded line search, new mesh.

    Returns ``(direction_field, new_mesh, record)``. The direction solves
    the frozen-off-diagonal stationarity systems; the step along it is
    accepted by backtracking in 2D and a strong Wolfe search in 3D.
    """
    config = config or OptimizeConfig(method=FIXED_POINT)
    problem = MeshProblem(mesh, config)
    x = problem.x0.copy()
    if system is None:
        f, g, system = problem.eval_with_system(x)
    else:
        g = problem.project_field(
            vec_to_field(system.gradient, problem.nv, problem.dim)
        ).ravel()
        f = system.F
    if precond is None:
        precond = problem.preconditioner(x)
    d = _fixed_point_direction(problem, system, precond, config, x)
    kind = "armijo" if mesh.dim == 2 else "wolfe"
    if not np.any(d):
        record = IterationRecord(1, f, _inf_norm(g), 0.0, 0, ls_kind=kind)
        return d.reshape(problem.nv, problem.dim), mesh.copy(), record
    x_new, _, _, record = _take_step(problem, config, x, f, g, d, 0, kind)
    return (
        d.reshape(problem.nv, problem.dim),
        problem.mesh_at(x_new),
        record,
    )


def _fixed_point_loop(problem, config, extras):
    x = problem.x0.copy()
    f, g, system = problem.eval_with_system(x)
    g0n = _inf_norm(g)
    records = [IterationRecord(0, f, g0n, 0.0, 0)]
    history = deque([f], maxlen=config.energy_patience + 1)
    kind = "armijo" if problem.dim == 2 else "wolfe"
    pre = None
    termination = "max_iters"
    for k in range(config.max_iters):
        if _grad_converged(_inf_norm(g), g0n, config):
            termination = "grad_tol"
            break
        if _energy_stalled(history, config):
            termination = "energy_tol"
            break
        try:
            if pre is None or k % config.precondition_refresh == 0:
                pre = problem.preconditioner(x)
            d = _fixed_point_direction(problem, system, pre, config, x)
        except MeshError as e:
            termination = f"preconditioner_error: {e}"
            break
        used_steepest = False
        if not float(g @ d) < 0.0:
            d = problem.project(-g)
            used_steepest = True
            if not float(g @ d) < 0.0:
                termination = "grad_tol"
                break
        try:
            x_new, f_new, g_new, rec = _take_step(problem, config, x, f, g, d, k, kind)
        except LineSearchFailed:
            if used_steepest:
                termination = "line_search_failed"
                break
            d = problem.project(-g)
            try:
                x_new, f_new, g_new, rec = _take_step(
                    problem, config, x, f, g, d, k, kind
                )
            except LineSearchFailed:
                termination = "line_search_failed"
                break
        x, f, g = x_new, f_new, g_new
        records.append(rec)
        history.append(f)
        # The accepted point was already evaluated inside the line search;
        # rebuild only the sparse blocks the next direction solve needs.
        system = problem.system_at(x)
    else:
        if _grad_converged(_inf_norm(g), g0n, config):
            termination = "grad_tol"
    return x, records, termination


def optimize(mesh, config=None):
    """Minimize the mesh energy with the configured method.

    Returns ``(new_mesh, OptimizeReport)``. The input mesh is not modified;
    fixed vertices are bit-identical in the output and sliding vertices
    stay in their planes.
    """
    config = config or OptimizeConfig()
    violations = validate(mesh)
    if violations:
        raise MeshError(
            "refusing to optimize an invalid mesh: "
            + "; ".join(str(v) for v in violations[:5])
        )
    quality_before = quality_stats(mesh)
    problem = MeshProblem(mesh, config)
    extras = {}
    if config.method == FIXED_POINT:
        x, records, termination = _fixed_point_loop(problem, config, extras)
    elif config.method in (LBFGS, PLBFGS):
        x, records, termination = _lbfgs_loop(
            problem, config, precondition=config.method == PLBFGS, extras=extras
        )
    elif config.method in (NLCG, PNLCG):
        x, records, termination = _nlcg_loop(
            problem, config, precondition=config.method == PNLCG, extras=extras
        )
    else:
        raise ValueError(f"unknown method {config.method!r}")
    out = problem.mesh_at(x)
    report = OptimizeReport(
        method=config.method,
        records=records,
        termination=termination,
        fun_evals=problem.fun_evals,
        grad_evals=problem.grad_evals,
        quality_before=quality_before,
        quality_after=quality_stats(out),
        extras=extras,
    )
    return out, report


def plbfgs_minimize(mesh, config=None):
    """(P)LBFGS on a mesh; defaults to the preconditioned variant."""
    config = config or OptimizeConfig(method=PLBFGS)
    if config.method not in (LBFGS, PLBFGS):
        raise ValueError("plbfgs_minimize expects an lbfgs-family method")
    return optimize(mesh, config)


def pnlcg_minimize(mesh, config=None):
    """(P)NLCG on a mesh; defaults to the preconditioned variant."""
    config = config or OptimizeConfig(method=PNLCG)
    if config.method not in (NLCG, PNLCG):
        raise ValueError("pnlcg_minimize expects an nlcg-family method")
    return optimize(mesh, config)
