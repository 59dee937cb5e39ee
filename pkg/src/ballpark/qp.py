"""Dense numerical kernels: ridge regression and a convex QP solver.

The QP solver is an operator-splitting (ADMM) method for

    minimize    1/2 x'Qx + c'x
    subject to  lower <= A x <= upper

with the usual refinements: Ruiz equilibration, per-row step sizes,
adaptive step size, a primal infeasibility certificate, and active-set
polishing. A polished point is only accepted when it passes a full KKT
check, so ``status == "optimal"`` always means a verified KKT point.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .core import BallparkError, INFEASIBLE, MAX_ITERATIONS, OPTIMAL

log = logging.getLogger(__name__)


class SingularMatrixError(BallparkError, np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    abs_tolerance: float = 1e-6
    rel_tolerance: float = 1e-6
    max_iterations: int = 20000
    positivity_floor_default: float = 1e-3
    escalate_to_slack: bool = True
    # ADMM internals
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    adaptive_rho: bool = True
    polish: bool = True
    check_interval: int = 25
    scaling_iterations: int = 10
    infeasibility_tolerance: float = 1e-6

    def __post_init__(self):
        for name in ("abs_tolerance", "rel_tolerance", "max_iterations",
                     "positivity_floor_default", "rho", "sigma", "check_interval"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.alpha < 2:
            raise ValueError("alpha must lie in (0, 2)")


# ---------------------------------------------------------------------------
# ridge


def ridge_closed_form(design, targets, regularizer: float, sample_weight=None,
                      abs_tolerance: float = 1e-6) -> np.ndarray:
    """Minimiser of ``lam*|w|^2 + sum_i s_i (y_i - phi_i'w)^2``.

    Solved through a Cholesky factorisation of ``lam*I + Phi'S Phi``. With
    ``regularizer == 0`` the Gram matrix must be well conditioned
    (condition number below 1e12), otherwise :class:`SingularMatrixError`.
    """
    Phi = np.asarray(design, dtype=float)
    y = np.asarray(targets, dtype=float).reshape(-1)
    if Phi.ndim != 2 or Phi.shape[0] != y.shape[0]:
        raise ValueError(f"design {Phi.shape} incompatible with {y.shape[0]} targets")
    if regularizer < 0:
        raise ValueError("regularizer must be non-negative")
    W = Phi if sample_weight is None else Phi * np.asarray(sample_weight, dtype=float)[:, None]
    gram = W.T @ Phi
    rhs = W.T @ y
    if regularizer == 0:
        cond = np.linalg.cond(gram)
        if not np.isfinite(cond) or cond >= 1e12:
            raise SingularMatrixError(f"Phi'Phi is singular or ill-conditioned (cond={cond:.3g})")
    system = gram + regularizer * np.eye(gram.shape[0])
    try:
        factor = linalg.cho_factor(system, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SingularMatrixError(str(exc)) from exc
    w = linalg.cho_solve(factor, rhs, check_finite=False)
    residual = np.linalg.norm(system @ w - rhs)
    if residual > abs_tolerance * (1 + np.linalg.norm(rhs)):
        # one step of iterative refinement is enough at these sizes
        w = w + linalg.cho_solve(factor, rhs - system @ w, check_finite=False)
    return w


def hat_matrix(design, regularizer: float) -> np.ndarray:
    """``Phi (lam I + Phi'Phi)^-1 Phi'``, symmetrised."""
    if not regularizer > 0:
        raise ValueError("hat_matrix needs a positive regularizer")
    Phi = np.asarray(design, dtype=float)
    system = Phi.T @ Phi + regularizer * np.eye(Phi.shape[1])
    factor = linalg.cho_factor(system, lower=True, check_finite=False)
    H = Phi @ linalg.cho_solve(factor, Phi.T, check_finite=False)
    return 0.5 * (H + H.T)


# ---------------------------------------------------------------------------
# QP


@dataclass(frozen=True, eq=False)
class QuadraticProgram:
    """``minimize 1/2 x'Qx + c'x  s.t.  ineq_lower <= A x <= ineq_upper``."""

    quadratic: np.ndarray
    linear: np.ndarray
    ineq_matrix: np.ndarray
    ineq_lower: np.ndarray
    ineq_upper: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.quadratic, dtype=float))
        n = Q.shape[0]
        if Q.shape != (n, n):
            raise ValueError(f"quadratic must be square, got {Q.shape}")
        if np.max(np.abs(Q - Q.T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(Q), initial=0.0)):
            raise ValueError("quadratic is not symmetric")
        c = np.asarray(self.linear, dtype=float).reshape(-1)
        lo = np.asarray(self.ineq_lower, dtype=float).reshape(-1)
        hi = np.asarray(self.ineq_upper, dtype=float).reshape(-1)
        A = np.asarray(self.ineq_matrix, dtype=float)
        A = A.reshape(-1, n) if A.size else np.zeros((lo.shape[0], n))
        if c.shape != (n,) or lo.shape != (A.shape[0],) or hi.shape != (A.shape[0],):
            raise ValueError("inconsistent QP dimensions")
        for name, val in (("quadratic", Q), ("linear", c), ("ineq_matrix", A),
                          ("ineq_lower", lo), ("ineq_upper", hi)):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.quadratic.shape[0]

    @property
    def m(self) -> int:
        return self.ineq_matrix.shape[0]

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.quadratic @ x + self.linear @ x)

    def max_violation(self, x) -> float:
        if self.m == 0:
            return 0.0
        Ax = self.ineq_matrix @ np.asarray(x, dtype=float)
        return float(max(np.max(self.ineq_lower - Ax), np.max(Ax - self.ineq_upper), 0.0))


@dataclass
class QPResult:
    x: np.ndarray
    status: str
    duals: np.ndarray
    objective: float
    iterations: int
    polished: bool = False
    certificate: str = ""
    info: dict = field(default_factory=dict)

    def __iter__(self):
        # allows ``x, status = solve_qp(...)``
        yield self.x
        yield self.status


def _ruiz(P, A, iterations):
    n, m = P.shape[0], A.shape[0]
    D = np.ones(n)
    E = np.ones(m)
    Ps, As = P.copy(), A.copy()
    for _ in range(iterations):
        col_x = np.maximum(np.max(np.abs(Ps), axis=0, initial=0.0),
                           np.max(np.abs(As), axis=0, initial=0.0))
        col_z = np.max(np.abs(As), axis=1, initial=0.0)
        dx = 1.0 / np.sqrt(np.clip(col_x, 1e-4, 1e4))
        dz = 1.0 / np.sqrt(np.clip(col_z, 1e-4, 1e4))
        dx[col_x == 0] = 1.0
        dz[col_z == 0] = 1.0
        Ps = dx[:, None] * Ps * dx[None, :]
        As = dz[:, None] * As * dx[None, :]
        D *= dx
        E *= dz
    return D, E


class _Polisher:
    """Solve the equality-constrained QP defined by a guessed active set.

    Accepts the result only if it is a KKT point of the full problem.
    """

    def __init__(self, P, q, A, lo, hi, delta=1e-9):
        self.P, self.q, self.A, self.lo, self.hi = P, q, A, lo, hi
        self.delta = delta
        diag = np.diag(P)
        self.pdiag = diag if (np.all(diag > 0) and np.count_nonzero(P - np.diag(diag)) == 0) else None

    def _solve_diag(self, Aa, b):
        # x = -P^-1 (q + Aa' nu),  Aa x = b
        pinv = 1.0 / self.pdiag
        S = (Aa * pinv) @ Aa.T
        rhs = -b - Aa @ (pinv * self.q)
        nu = np.linalg.lstsq(S, rhs, rcond=1e-13)[0]
        for _ in range(3):
            nu = nu + np.linalg.lstsq(S, rhs - S @ nu, rcond=1e-13)[0]
        x = -pinv * (self.q + Aa.T @ nu)
        return x, nu

    def _solve_dense(self, Aa, b):
        P, q = self.P, self.q
        n, k = P.shape[0], Aa.shape[0]
        K = np.zeros((n + k, n + k))
        K[:n, :n] = P
        K[:n, n:] = Aa.T
        K[n:, :n] = Aa
        Kreg = K.copy()
        Kreg[:n, :n] += self.delta * np.eye(n)
        Kreg[n:, n:] -= self.delta * np.eye(k)
        rhs = np.concatenate([-q, b])
        lu = linalg.lu_factor(Kreg, check_finite=False)
        sol = linalg.lu_solve(lu, rhs, check_finite=False)
        for _ in range(10):
            res = rhs - K @ sol
            if np.max(np.abs(res), initial=0.0) < 1e-13 * (1 + np.max(np.abs(rhs), initial=0.0)):
                break
            sol = sol + linalg.lu_solve(lu, res, check_finite=False)
        return sol[:n], sol[n:]

    def __call__(self, z, y, eps_abs, eps_dual, max_rounds=10):
        P, q, A, lo, hi = self.P, self.q, self.A, self.lo, self.hi
        eq = lo == hi
        low = ((z - lo) < -y) | eq
        upp = ((hi - z) < y) & ~low
        sign_tol = 10 * eps_dual
        # The ADMM iterate only suggests the active set; fix it up with a few
        # primal-dual active-set rounds (release wrong-sign rows, add violated ones).
        for _ in range(max_rounds):
            act = np.flatnonzero(low | upp)
            b = np.where(low[act], lo[act], hi[act])
            Aa = A[act]
            try:
                if self.pdiag is not None:
                    x, nu = self._solve_diag(Aa, b)
                else:
                    x, nu = self._solve_dense(Aa, b)
            except (linalg.LinAlgError, ValueError, np.linalg.LinAlgError):
                return None
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(nu))):
                return None
            yfull = np.zeros(A.shape[0])
            yfull[act] = nu
            Ax = A @ x
            viol = max(np.max(lo - Ax, initial=0.0), np.max(Ax - hi, initial=0.0))
            dual_res = np.max(np.abs(P @ x + q + A.T @ yfull), initial=0.0)
            bad_low = low & ~eq & (yfull > sign_tol)
            bad_upp = upp & (yfull < -sign_tol)
            if viol <= eps_abs and dual_res <= eps_dual and not (bad_low.any() or bad_upp.any()):
                yfull[low & ~eq] = np.minimum(yfull[low & ~eq], 0.0)
                yfull[upp] = np.maximum(yfull[upp], 0.0)
                return x, yfull
            new_low = (low & ~bad_low) | ((Ax < lo - eps_abs) & ~upp)
            new_upp = (upp & ~bad_upp) | ((Ax > hi + eps_abs) & ~low)
            new_low |= eq
            new_upp &= ~new_low
            if np.array_equal(new_low, low) and np.array_equal(new_upp, upp):
                return None
            low, upp = new_low, new_upp
        return None


class _KKT:
    """Factorisation of ``P + sigma I + A' diag(rho) A``.

    Dense Cholesky in general; Woodbury on the m x m capacitance matrix when
    ``P`` is diagonal and ``m`` is much smaller than ``n``.
    """

    def __init__(self, P, A, sigma):
        self.P, self.A, self.sigma = P, A, sigma
        n, m = P.shape[0], A.shape[0]
        diag = np.diag(P)
        self.woodbury = (np.count_nonzero(P - np.diag(diag)) == 0 and 4 * m < n)
        self.dg = diag + sigma

    def factor(self, rho):
        A = self.A
        if self.woodbury:
            Ad = A / self.dg[None, :]
            C = np.diag(1.0 / rho) + Ad @ A.T
            self.Ad = Ad
            self.cap = linalg.cho_factor(C, lower=True, check_finite=False)
        else:
            K = self.P + self.sigma * np.eye(self.P.shape[0]) + A.T @ (rho[:, None] * A)
            self.chol = linalg.cho_factor(K, lower=True, check_finite=False)

    def solve(self, r):
        if self.woodbury:
            u = r / self.dg
            return u - self.Ad.T @ linalg.cho_solve(self.cap, self.A @ u, check_finite=False)
        return linalg.cho_solve(self.chol, r, check_finite=False)


def _unconstrained(P, q):
    try:
        factor = linalg.cho_factor(P, lower=True, check_finite=False)
        return linalg.cho_solve(factor, -q, check_finite=False)
    except linalg.LinAlgError:
        return np.linalg.lstsq(P, -q, rcond=None)[0]


def solve_qp(qp: QuadraticProgram, config: SolverConfig | None = None,
             warm_start: tuple[np.ndarray, np.ndarray] | None = None) -> QPResult:
    """Solve ``qp`` by ADMM. See the module docstring for the problem form.

    ``status`` is ``"optimal"`` (residuals within tolerance),
    ``"infeasible"`` (with ``certificate`` describing why) or
    ``"max-iterations"`` (best iterate returned).
    """
    cfg = config or SolverConfig()
    P, q = qp.quadratic, qp.linear
    A, lo, hi = qp.ineq_matrix, qp.ineq_lower, qp.ineq_upper
    n = qp.n

    bad = np.flatnonzero(lo > hi)
    if bad.size:
        i = int(bad[0])
        return QPResult(np.zeros(n), INFEASIBLE, np.zeros(qp.m), np.nan, 0,
                        certificate=f"row {i} has lower {lo[i]} > upper {hi[i]}")

    keep = np.isfinite(lo) | np.isfinite(hi)
    rows = np.flatnonzero(keep)
    A, lo, hi = A[rows], lo[rows], hi[rows]
    m = A.shape[0]

    def wrap(x, y, status, it, polished=False, certificate=""):
        duals = np.zeros(qp.m)
        duals[rows] = y
        return QPResult(x, status, duals, qp.objective(x), it, polished, certificate)

    if m == 0:
        x = _unconstrained(P, q)
        return wrap(x, np.zeros(0), OPTIMAL, 0)

    # scaling
    D, E = _ruiz(P, A, cfg.scaling_iterations)
    Ps = D[:, None] * P * D[None, :]
    qs = D * q
    cost_norm = max(np.mean(np.max(np.abs(Ps), axis=0, initial=0.0)), np.max(np.abs(qs), initial=0.0))
    cscale = 1.0 / np.clip(cost_norm, 1e-4, 1e4) if cost_norm > 0 else 1.0
    Ps *= cscale
    qs = qs * cscale
    As = E[:, None] * A * D[None, :]
    los, his = E * lo, E * hi

    equality = lo == hi
    rho_base = cfg.rho

    def rho_vector(r):
        v = np.full(m, r)
        v[equality] = 1e3 * r
        return v

    kkt = _KKT(Ps, As, cfg.sigma)
    rho = rho_vector(rho_base)
    kkt.factor(rho)

    if warm_start is not None:
        x = warm_start[0] / D
        y = warm_start[1][rows] * cscale / E
    else:
        x = np.zeros(n)
        y = np.zeros(m)
    z = np.clip(As @ x, los, his)

    polisher = _Polisher(P, q, A, lo, hi) if cfg.polish else None
    eps_abs, eps_rel = cfg.abs_tolerance, cfg.rel_tolerance
    alpha = cfg.alpha
    y_prev_check = y.copy()

    def residuals(x, z, y):
        xu = D * x
        zu = z / E
        yu = E * y / cscale
        Ax = A @ xu
        Px = P @ xu
        Aty = A.T @ yu
        prim = np.max(np.abs(Ax - zu), initial=0.0)
        dual = np.max(np.abs(Px + q + Aty), initial=0.0)
        eps_p = eps_abs + eps_rel * max(np.max(np.abs(Ax), initial=0.0), np.max(np.abs(zu), initial=0.0))
        eps_d = eps_abs + eps_rel * max(np.max(np.abs(Px), initial=0.0), np.max(np.abs(Aty), initial=0.0),
                                        np.max(np.abs(q), initial=0.0))
        return xu, zu, yu, prim, dual, eps_p, eps_d

    def try_polish(xu, zu, yu, eps_d):
        if polisher is None:
            return None
        return polisher(zu, yu, eps_abs, eps_d)

    it = 0
    for it in range(1, cfg.max_iterations + 1):
        rhs = cfg.sigma * x - qs + As.T @ (rho * z - y)
        xt = kkt.solve(rhs)
        zt = As @ xt
        x = alpha * xt + (1 - alpha) * x
        zrel = alpha * zt + (1 - alpha) * z
        z_new = np.clip(zrel + y / rho, los, his)
        y = y + rho * (zrel - z_new)
        z = z_new

        if it % cfg.check_interval and it != cfg.max_iterations:
            continue

        xu, zu, yu, prim, dual, eps_p, eps_d = residuals(x, z, y)
        if prim <= eps_p and dual <= eps_d:
            polished = try_polish(xu, zu, yu, eps_d)
            if polished is not None:
                return wrap(polished[0], polished[1], OPTIMAL, it, polished=True)
            # accept the ADMM iterate, projected onto the box where it is
            # already within tolerance
            return wrap(xu, yu, OPTIMAL, it)

        # primal infeasibility certificate
        dy = E * (y - y_prev_check)
        y_prev_check = y.copy()
        ndy = np.max(np.abs(dy), initial=0.0)
        if ndy > 1e-12:
            eps_inf = cfg.infeasibility_tolerance * ndy
            Atdy = np.max(np.abs(A.T @ dy), initial=0.0)
            pos, neg = dy > 0, dy < 0
            unbounded_dir = np.any(pos & ~np.isfinite(hi)) or np.any(neg & ~np.isfinite(lo))
            if not unbounded_dir and Atdy <= eps_inf:
                support = float(np.sum(hi[pos] * dy[pos]) + np.sum(lo[neg] * dy[neg]))
                if support < -eps_inf:
                    cert = (f"dual ray with |A'dy|={Atdy:.3g} and support {support:.3g} < 0 "
                            f"after {it} iterations")
                    return wrap(xu, yu, INFEASIBLE, it, certificate=cert)

        if prim <= 1e3 * eps_p and dual <= 1e3 * eps_d:
            polished = try_polish(xu, zu, yu, eps_d)
            if polished is not None:
                return wrap(polished[0], polished[1], OPTIMAL, it, polished=True)

        if cfg.adaptive_rho:
            Axs = As @ x
            prim_s = np.max(np.abs(Axs - z), initial=0.0)
            dual_s = np.max(np.abs(Ps @ x + qs + As.T @ y), initial=0.0)
            pn = max(np.max(np.abs(Axs), initial=0.0), np.max(np.abs(z), initial=0.0), 1e-12)
            dn = max(np.max(np.abs(Ps @ x), initial=0.0), np.max(np.abs(As.T @ y), initial=0.0),
                     np.max(np.abs(qs), initial=0.0), 1e-12)
            if prim_s > 0 and dual_s > 0:
                new = rho_base * np.sqrt((prim_s / pn) / (dual_s / dn))
                new = float(np.clip(new, 1e-6, 1e6))
                if new > 5 * rho_base or new < rho_base / 5:
                    rho_base = new
                    rho = rho_vector(rho_base)
                    kkt.factor(rho)

    xu, zu, yu, prim, dual, eps_p, eps_d = residuals(x, z, y)
    log.warning("QP hit the iteration cap (%d): primal %.3g, dual %.3g", it, prim, dual)
    return wrap(xu, yu, MAX_ITERATIONS, it)
