"""Damped-Newton solver for the cyclic Toda system on a planar grid.

Unknowns are the log-densities w_1..w_{r-1} of the diagonal metrics against
the flat frame.  In that gauge the field equations at interior nodes read

    N_j(w) = (1/4) * Lap(w_j) - (2 e^{w_j} - e^{w_{j-1}} - e^{w_{j+1}}) = 0

with the wrap-around slot e^{w_0} = e^{w_r} = V_0 = Q * exp(-sum_k w_k).
The sign convention is pinned by the degenerate case Q = 0, r = 2, where the
system collapses to Lap(w_1) = 8 e^{w_1} and admits the blow-up solution
w_1 = -2 log(1 - |z|^2); for general rank w_j = log(lambda_j) - 2 log(1-|z|^2)
with lambda_j = j*(r-j) solves the degenerate system exactly.

Boundary strategies:
    model_poincare  Dirichlet data from the degenerate closed form (|z| < 1)
    weight_flat     Dirichlet data w_j = (1/r) log Q (requires Q > 0 on the ring)
    exhaustion      nested subdisc solves with model data, warm-started, with
                    the interior drift between stages reported as a
                    completeness diagnostic

Newton steps solve the exact Jacobian system with a sparse direct
factorization (grids up to n = 257; diagonally preconditioned BiCGStab
above), damped by Armijo backtracking on the residual sup-norm.  If the
iteration stalls, the weight amplitude is ramped in t^2 (continuation) and
each stage warm-starts the next.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.linalg import bicgstab, spsolve

from .errors import (
    ConfigurationError,
    ConvergenceError,
    InternalError,
    ShapeError,
    StrategyError,
    ValidationError,
)
from .grid import Field, Grid, check_same_grid
from .weight import WeightDensity, evaluate_density, lambda_coefficients, scale_weight

log = logging.getLogger(__name__)

BOUNDARY_STRATEGIES = ("model_poincare", "weight_flat", "exhaustion")
INITIAL_STRATEGIES = ("auto", "model", "flat", "provided")

# largest grid still sent to the sparse direct factorization
DIRECT_SOLVE_MAX_N = 257

_ARMIJO_SLOPE = 1e-4


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-10
    max_iterations: int = 50
    armijo_factor: float = 0.5
    max_halvings: int = 20
    continuation_steps: int = 3
    boundary: str = "model_poincare"
    initial: str = "auto"
    provided_w: tuple | None = None

    def validated(self) -> "SolverConfig":
        if self.boundary not in BOUNDARY_STRATEGIES:
            raise ConfigurationError(
                f"boundary must be one of {BOUNDARY_STRATEGIES}, got {self.boundary!r}")
        if self.initial not in INITIAL_STRATEGIES:
            raise ConfigurationError(
                f"initial must be one of {INITIAL_STRATEGIES}, got {self.initial!r}")
        if not (0.0 < self.tolerance < 1.0):
            raise ConfigurationError(f"tolerance must be in (0, 1), got {self.tolerance}")
        if self.max_iterations < 1:
            raise ConfigurationError(
                f"max_iterations must be >= 1, got {self.max_iterations}")
        if not (0.0 < self.armijo_factor < 1.0):
            raise ConfigurationError(
                f"armijo_factor must be in (0, 1), got {self.armijo_factor}")
        if self.max_halvings < 0 or self.continuation_steps < 0:
            raise ConfigurationError("max_halvings and continuation_steps must be >= 0")
        return self


@dataclass(frozen=True)
class TodaSolution:
    grid: Grid
    weight: WeightDensity
    r: int
    w: tuple          # r-1 Fields, log-densities
    v0: Field         # Q * exp(-sum w), zero exactly where Q vanishes
    residual_sup: float
    iterations: int
    boundary_strategy: str
    residual_history: tuple
    exhaustion_drifts: tuple = ()

    def w_array(self) -> np.ndarray:
        return np.stack([f.values for f in self.w])


class _Stall(Exception):
    pass


# ---------------------------------------------------------------------------
# closed-form profiles


def model_log_densities(grid: Grid, r: int) -> np.ndarray:
    """Degenerate-case solution w_j = log(lambda_j) - 2 log(1 - |z|^2).

    Rows j = 1..r-1.  Nodes at |z| >= 1 (square corners outside the unit
    disc, never read by any interior stencil) are filled with zero to keep
    the arrays finite.
    """
    if grid.rho_max >= 1.0:
        raise ConfigurationError(
            f"model profile needs rho_max < 1, grid has rho_max={grid.rho_max}")
    lam = lambda_coefficients(r)
    inside = grid.r2 < 1.0
    base = np.zeros(grid.nodes)
    base[inside] = -2.0 * np.log1p(-grid.r2[inside])
    w = np.log(lam)[:, None] + base[None, :]
    w[:, ~inside] = 0.0
    return w


def compute_v0(w: np.ndarray, q: np.ndarray) -> np.ndarray:
    """V_0 = Q * exp(-sum_j w_j); exactly zero wherever Q is zero."""
    return q * np.exp(-w.sum(axis=0))


# ---------------------------------------------------------------------------
# residual and Jacobian on an active node set


class _System:
    """Stencil and assembly scaffolding for one (grid, r, active-mask) triple."""

    def __init__(self, grid: Grid, r: int, active: np.ndarray):
        self.grid = grid
        self.r = r
        self.m = r - 1
        self.active = active
        self.idx = np.flatnonzero(active)
        self.k = len(self.idx)
        if self.k == 0:
            raise ConfigurationError("active node set is empty")
        loc = np.full(grid.nodes, -1, dtype=np.int64)
        loc[self.idx] = np.arange(self.k)

        # Laplacian entries (including the 1/4 prefactor) restricted to
        # active-active couplings; Dirichlet neighbours enter the residual only.
        rows, cols, data = [], [], []
        if grid.mode == "cartesian":
            n, h = grid.n, grid.h
            c = 0.25 / (h * h)
            rows.append(np.arange(self.k))
            cols.append(np.arange(self.k))
            data.append(np.full(self.k, -4.0 * c))
            for off in (1, -1, n, -n):
                nb = self.idx + off
                ok = active[nb]
                rows.append(loc[self.idx[ok]])
                cols.append(loc[nb[ok]])
                data.append(np.full(int(ok.sum()), c))
        else:
            h = grid.h
            rho = grid.x
            for i in self.idx:
                li = loc[i]
                if i == 0:
                    rows.append([li]); cols.append([li])
                    data.append([-1.0 / (h * h)])  # (1/4) * (-4/h^2)
                    if active[1]:
                        rows.append([li]); cols.append([loc[1]])
                        data.append([1.0 / (h * h)])
                    continue
                cdiag = -0.5 / (h * h)
                cup = 0.25 / (h * h) + 0.125 / (h * rho[i])
                cdn = 0.25 / (h * h) - 0.125 / (h * rho[i])
                rows.append([li]); cols.append([li]); data.append([cdiag])
                for nb, cval in ((i + 1, cup), (i - 1, cdn)):
                    if 0 <= nb < grid.nodes and active[nb]:
                        rows.append([li]); cols.append([loc[nb]])
                        data.append([cval])
        self._lap_rows = np.concatenate([np.asarray(a, dtype=np.int64) for a in rows])
        self._lap_cols = np.concatenate([np.asarray(a, dtype=np.int64) for a in cols])
        self._lap_data = np.concatenate([np.asarray(a, dtype=float) for a in data])

        # full (m x m) pointwise pattern: rows a*k+i, cols b*k+i
        k = self.k
        ar = np.arange(k)
        blocks_r, blocks_c = [], []
        for a in range(self.m):
            for b in range(self.m):
                blocks_r.append(a * k + ar)
                blocks_c.append(b * k + ar)
        self._pt_rows = np.concatenate(blocks_r)
        self._pt_cols = np.concatenate(blocks_c)

        lr = []
        lc = []
        ld = []
        for a in range(self.m):
            lr.append(self._lap_rows + a * k)
            lc.append(self._lap_cols + a * k)
            ld.append(self._lap_data)
        self._rows = np.concatenate(lr + [self._pt_rows])
        self._cols = np.concatenate(lc + [self._pt_cols])
        self._lap_block = np.concatenate(ld)

    def lap_at_active(self, w: np.ndarray) -> np.ndarray:
        """(1/4) * five-point/radial Laplacian of each row, at active nodes."""
        g = self.grid
        if g.mode == "cartesian":
            n, h = g.n, g.h
            sq = w.reshape(self.m, n, n)
            lap = np.zeros_like(sq)
            lap[:, 1:-1, 1:-1] = (
                sq[:, 2:, 1:-1] + sq[:, :-2, 1:-1]
                + sq[:, 1:-1, 2:] + sq[:, 1:-1, :-2]
                - 4.0 * sq[:, 1:-1, 1:-1]
            ) / (h * h)
            return 0.25 * lap.reshape(self.m, -1)[:, self.idx]
        h = g.h
        rho = g.x
        lap = np.zeros_like(w)
        lap[:, 1:-1] = (w[:, 2:] - 2.0 * w[:, 1:-1] + w[:, :-2]) / (h * h) \
            + (w[:, 2:] - w[:, :-2]) / (2.0 * h * rho[1:-1])
        lap[:, 0] = 4.0 * (w[:, 1] - w[:, 0]) / (h * h)
        return 0.25 * lap[:, self.idx]

    def residual(self, w: np.ndarray, q: np.ndarray) -> np.ndarray:
        """N_j at active nodes, shape (m, k)."""
        lap = self.lap_at_active(w)
        e = np.exp(w[:, self.idx])
        v0 = q[self.idx] * np.exp(-w[:, self.idx].sum(axis=0))
        low = np.vstack([v0[None, :], e[:-1]])   # e^{w_{j-1}}
        high = np.vstack([e[1:], v0[None, :]])   # e^{w_{j+1}}
        return lap - (2.0 * e - low - high)

    def jacobian(self, w: np.ndarray, q: np.ndarray) -> csr_matrix:
        m, k = self.m, self.k
        e = np.exp(w[:, self.idx])
        v0 = q[self.idx] * np.exp(-w[:, self.idx].sum(axis=0))
        blocks = np.zeros((m, m, k))
        for a in range(m):
            blocks[a, a] = -2.0 * e[a]
        for a in range(1, m):
            blocks[a, a - 1] += e[a - 1]
        for a in range(m - 1):
            blocks[a, a + 1] += e[a + 1]
        # dV0/dw_b = -V0 for every b; V0 appears in the first and last equation
        blocks[0] += -v0
        blocks[m - 1] += -v0
        data = np.concatenate([self._lap_block, blocks.reshape(m * m, k).ravel()])
        j = coo_matrix((data, (self._rows, self._cols)), shape=(m * k, m * k))
        return j.tocsr()


def _as_weight_field(grid: Grid, weight) -> Field:
    if isinstance(weight, WeightDensity):
        return evaluate_density(weight, grid)
    if isinstance(weight, Field):
        check_same_grid(grid, weight)
        return weight
    raise ConfigurationError(
        f"weight must be a WeightDensity or a Field, got {type(weight).__name__}")


def toda_residual(w_fields, weight) -> list:
    """Residual fields N_1..N_{r-1}; zero at boundary nodes by convention."""
    if len(w_fields) < 1:
        raise ConfigurationError("need at least one field (r >= 2)")
    grid = w_fields[0].grid
    for f in w_fields:
        check_same_grid(grid, f)
    w = np.stack([f.values for f in w_fields])
    if not np.all(np.isfinite(w)):
        raise ValidationError("log-density fields contain non-finite values")
    qf = _as_weight_field(grid, weight)
    sys = _System(grid, len(w_fields) + 1, grid.interior)
    n_active = sys.residual(w, qf.values)
    out = []
    for a in range(sys.m):
        vals = np.zeros(grid.nodes)
        vals[sys.idx] = n_active[a]
        out.append(Field(grid, vals))
    return out


def toda_jacobian(w_fields, weight):
    """Exact Jacobian of the interior residual as a sparse CSR matrix.

    Returns (matrix, interior_index): unknowns are stacked field-major, the
    value of field j at interior node interior_index[i] sits at j*len(...)+i.
    """
    grid = w_fields[0].grid
    for f in w_fields:
        check_same_grid(grid, f)
    w = np.stack([f.values for f in w_fields])
    qf = _as_weight_field(grid, weight)
    sys = _System(grid, len(w_fields) + 1, grid.interior)
    return sys.jacobian(w, qf.values), sys.idx.copy()


# ---------------------------------------------------------------------------
# boundary data and initial guesses


def _active_ring(grid: Grid) -> np.ndarray:
    """Boundary nodes read by some interior stencil."""
    ring = np.zeros(grid.nodes, dtype=bool)
    if grid.mode == "cartesian":
        n = grid.n
        idx = np.flatnonzero(grid.interior)
        for off in (1, -1, n, -n):
            ring[idx + off] = True
    else:
        ring[-1] = True
    ring &= grid.boundary
    return ring


def _fill_boundary(grid: Grid, r: int, q: np.ndarray, strategy: str,
                   w: np.ndarray) -> None:
    if strategy in ("model_poincare", "exhaustion"):
        if grid.rho_max >= 1.0:
            raise ConfigurationError(
                f"{strategy} boundary needs rho_max < 1, got {grid.rho_max}")
        model = model_log_densities(grid, r)
        w[:, grid.boundary] = model[:, grid.boundary]
        return
    if strategy == "weight_flat":
        ring = _active_ring(grid)
        bad = int((q[ring] <= 0.0).sum())
        if bad:
            raise StrategyError(
                f"weight_flat needs Q > 0 on the boundary ring; {bad} ring "
                "nodes have Q = 0")
        vals = np.zeros(grid.nodes)
        pos = q > 0.0
        vals[pos] = np.log(q[pos]) / r
        w[:, grid.boundary] = vals[grid.boundary]
        return
    raise InternalError(f"unknown boundary strategy {strategy!r}")


def _initial_guess(grid: Grid, r: int, q: np.ndarray, cfg: SolverConfig) -> np.ndarray:
    kind = cfg.initial
    if kind == "auto":
        kind = "flat" if cfg.boundary == "weight_flat" else "model"
    if kind == "model":
        return model_log_densities(grid, r)
    if kind == "flat":
        qmax = float(q.max())
        if qmax <= 0.0:
            raise ConfigurationError(
                "flat initial guess is undefined for an identically zero weight")
        floor = qmax * 1e-12
        return np.tile(np.log(np.maximum(q, floor)) / r, (r - 1, 1))
    if kind == "provided":
        if not cfg.provided_w or len(cfg.provided_w) != r - 1:
            raise ConfigurationError(
                f"provided initial guess needs r-1={r - 1} fields")
        for f in cfg.provided_w:
            check_same_grid(grid, f)
        w = np.stack([f.values for f in cfg.provided_w])
        if not np.all(np.isfinite(w)):
            raise ValidationError("provided initial guess contains non-finite values")
        return w.copy()
    raise InternalError(f"unknown initial strategy {kind!r}")


# ---------------------------------------------------------------------------
# Newton iteration


def _linear_solve(grid: Grid, jac: csr_matrix, rhs: np.ndarray) -> np.ndarray:
    if grid.n <= DIRECT_SOLVE_MAX_N:
        return spsolve(jac, rhs)
    # large grids: diagonally preconditioned BiCGStab
    from scipy.sparse import diags
    d = jac.diagonal()
    d[d == 0.0] = 1.0
    precond = diags(1.0 / d)
    sol, info = bicgstab(jac, rhs, M=precond, rtol=1e-12, atol=0.0, maxiter=2000)
    if info != 0:
        raise _Stall()
    return sol


def _newton(sys: _System, q: np.ndarray, w: np.ndarray, cfg: SolverConfig,
            history: list) -> int:
    """Damped Newton on the active set; mutates w, returns iteration count."""
    n_act = sys.residual(w, q)
    res = float(np.abs(n_act).max())
    if not np.isfinite(res):
        raise ValidationError("initial residual is not finite")
    history.append(res)
    iters = 0
    while res > cfg.tolerance:
        if iters >= cfg.max_iterations:
            raise _Stall()
        jac = sys.jacobian(w, q)
        delta = _linear_solve(sys.grid, jac, -n_act.reshape(-1))
        if not np.all(np.isfinite(delta)):
            raise _Stall()
        delta = delta.reshape(sys.m, sys.k)
        step = 1.0
        for _ in range(cfg.max_halvings + 1):
            trial = w.copy()
            trial[:, sys.idx] += step * delta
            n_try = sys.residual(trial, q)
            res_try = float(np.abs(n_try).max())
            if np.isfinite(res_try) and res_try <= (1.0 - _ARMIJO_SLOPE * step) * res:
                w[:, sys.idx] = trial[:, sys.idx]
                n_act, res = n_try, res_try
                break
            step *= cfg.armijo_factor
        else:
            raise _Stall()
        iters += 1
        history.append(res)
        log.debug("newton iter %d residual %.3e", iters, res)
    return iters


def _solve_stage(grid: Grid, weight: WeightDensity, sys: _System, w: np.ndarray,
                 cfg: SolverConfig, strategy: str, history: list) -> int:
    """Newton with amplitude continuation as the stall fallback."""
    q_full = evaluate_density(weight, grid).values
    try:
        return _newton(sys, q_full, w, cfg, history)
    except _Stall:
        if cfg.continuation_steps <= 0:
            raise
    # ramp t^2 through s = 2^-steps .. 1, warm-starting each stage
    log.info("newton stalled; engaging amplitude continuation "
             "(%d stages)", cfg.continuation_steps + 1)
    total = 0
    for p in range(cfg.continuation_steps, -1, -1):
        s = 0.5 ** p
        staged = scale_weight(weight, np.sqrt(s))
        q_s = evaluate_density(staged, grid).values
        if strategy == "weight_flat":
            _fill_boundary(grid, weight.r, q_s, strategy, w)
        try:
            total += _newton(sys, q_s, w, cfg, history)
        except _Stall:
            raise ConvergenceError(
                f"newton stalled at continuation amplitude {s:g} "
                f"(residual {history[-1]:.3e})", history)
    return total


def solve_toda(weight: WeightDensity, grid: Grid,
               config: SolverConfig | None = None) -> TodaSolution:
    cfg = (config or SolverConfig()).validated()
    r = weight.r
    q = evaluate_density(weight, grid).values
    w = _initial_guess(grid, r, q, cfg)
    _fill_boundary(grid, r, q, cfg.boundary, w)
    history: list = []
    drifts: tuple = ()

    if cfg.boundary == "exhaustion":
        iters, drifts = _solve_exhaustion(weight, grid, w, cfg, history)
    else:
        sys = _System(grid, r, grid.interior)
        try:
            iters = _solve_stage(grid, weight, sys, w, cfg, cfg.boundary, history)
        except _Stall:
            raise ConvergenceError(
                f"newton stalled (residual {history[-1]:.3e})", history)

    sys = _System(grid, r, grid.interior)
    n_act = sys.residual(w, q)
    res = float(np.abs(n_act).max())
    v0 = compute_v0(w, q)
    sol = TodaSolution(
        grid=grid, weight=weight, r=r,
        w=tuple(Field(grid, w[a]) for a in range(r - 1)),
        v0=Field(grid, v0),
        residual_sup=res, iterations=iters,
        boundary_strategy=cfg.boundary,
        residual_history=tuple(history),
        exhaustion_drifts=drifts,
    )
    log.info("solved r=%d %s grid n=%d: residual %.3e in %d iterations",
             r, grid.mode, grid.n, res, iters)
    return sol


def _exhaustion_radii(grid: Grid) -> list:
    base = [0.8, 0.85, 0.9]
    radii = [rho for rho in base if rho < grid.rho_max - 1e-12]
    radii.append(grid.rho_max)
    if len(radii) < 3:
        radii = [grid.rho_max * f for f in (8.0 / 9.0, 17.0 / 18.0, 1.0)]
    return radii


def _solve_exhaustion(weight: WeightDensity, grid: Grid, w: np.ndarray,
                      cfg: SolverConfig, history: list):
    """Nested subdisc solves with model Dirichlet data on each stage.

    All stages share one grid: stage rho treats every node with
    |z| >= rho - h/2 as Dirichlet (carrying the model profile evaluated at
    the node itself), so each solve is the discrete problem on the subdisc
    of radius rho.  Stage solutions rise monotonically toward the last
    stage; drift k is the sup-distance between stage k and the final stage
    over the first stage's interior, so the list shrinks to the drift
    between the last two stages and decreases when the approximation is
    converging.  (The raw sup-difference between consecutive stages is not
    monotone for equally spaced radii: the boundary-data increment
    2 log((1-rho^2)/(1-rho'^2)) grows as the ring recedes.)
    """
    r = weight.r
    radii = _exhaustion_radii(grid)
    cut0 = radii[0] - 0.5 * grid.h
    probe = grid.interior & (grid.r2 < cut0 * cut0)
    if not probe.any():
        raise ConfigurationError(
            f"exhaustion ladder {radii} leaves no interior nodes at stage 0")
    iters = 0
    snaps = []
    for rho in radii:
        cut = rho - 0.5 * grid.h
        active = grid.interior & (grid.r2 < cut * cut)
        sys = _System(grid, r, active)
        try:
            iters += _solve_stage(grid, weight, sys, w, cfg, "exhaustion", history)
        except _Stall:
            raise ConvergenceError(
                f"newton stalled in exhaustion stage rho={rho:g} "
                f"(residual {history[-1]:.3e})", history)
        snaps.append(w[:, probe].copy())
        log.debug("exhaustion stage rho=%g done", rho)
    final = snaps[-1]
    drifts = tuple(float(np.abs(s - final).max()) for s in snaps[:-1])
    return iters, drifts


# ---------------------------------------------------------------------------
# derived quantities


def recover_diagonal_metric(sol: TodaSolution) -> list:
    """Zero-trace logarithmic weights eta_1..eta_r with eta_{j+1}-eta_j = w_j."""
    w = sol.w_array()
    r = sol.r
    partial = np.concatenate([np.zeros((1, sol.grid.nodes)), np.cumsum(w, axis=0)])
    c = -(np.arange(r - 1, 0, -1)[:, None] * w).sum(axis=0) / r
    return [Field(sol.grid, c + partial[a]) for a in range(r)]


def energy_density(sol: TodaSolution) -> Field:
    """sum_{j=0}^{r-1} e^{w_j} with the V_0 slot included."""
    w = sol.w_array()
    total = sol.v0.values + np.exp(w).sum(axis=0)
    return Field(sol.grid, total)
