"""Canonical-ensemble functionals over the metric densities of a solution.

At every node the r slot densities are D_0 = V_0 (the wrap-around slot) and
D_j = e^{w_j} for j = 1..r-1.  The ensemble at inverse temperature beta is

    p_j = D_j^beta / sum_k D_k^beta
    S   = -sum_j p_j log p_j                      (entropy, in [0, log r])
    F   = -(1/beta) log sum_j (D_j / D_ref)^beta  (free energy)
    R   = 1 - S / log r                           (redundancy)

All beta-powers are accumulated in log space with a max shift.  The
degenerate slot convention: for beta > 0 a vanishing V_0 contributes weight
0^beta = 0; for beta < 0 the degenerate slot is excluded from the ensemble
altogether, so the distribution ranges over the r-1 live metrics.  (The
exclusion is forced by the closed-form model entropy, which sums over the
live slots for either sign of beta, and by the entropy lower bound: near an
interior zero of the weight V_0 is positive but orders of magnitude below
the other densities, and a V_0^beta weight with beta < 0 would concentrate
the ensemble on the degenerate slot and collapse the entropy below the
model value.  See the README for the full convention.)

The reference density is 1 (flat) or (1 - |z|^2)^{-2} (poincare, on discs
only).  Differences of free energies at the same beta are reference
independent, which the tests exercise directly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InternalError
from .grid import Field, Grid, inf_over, sup_norm
from .toda import TodaSolution
from .weight import _check_beta, evaluate_density, lambda_coefficients

log = logging.getLogger(__name__)

REFERENCES = ("flat", "poincare")


@dataclass(frozen=True)
class ThermoField:
    grid: Grid
    r: int
    beta: float
    reference: str
    p: tuple            # r Fields, slot 0 first
    entropy: Field
    free_energy: Field
    redundancy: Field
    lower_redundancy: float
    upper_redundancy: float


def _log_densities(sol: TodaSolution) -> np.ndarray:
    """Stacked log D_j, j = 0..r-1; -inf marks a vanishing V_0.

    log V_0 = log Q - sum w is formed from the weight directly so no
    exp/log round trip degrades tiny densities.
    """
    w = sol.w_array()
    q = evaluate_density(sol.weight, sol.grid).values
    log_v0 = np.full(sol.grid.nodes, -np.inf)
    pos = q > 0.0
    log_v0[pos] = np.log(q[pos]) - w[:, pos].sum(axis=0)
    return np.vstack([log_v0[None, :], w])


def _logits(sol: TodaSolution, beta: float) -> np.ndarray:
    """beta * log D_j with excluded slots at -inf."""
    beta = _check_beta(beta)
    logd = _log_densities(sol)
    logits = np.where(np.isfinite(logd), beta * logd, -np.inf)
    if beta < 0.0:
        logits[0, :] = -np.inf  # degenerate slot never competes for beta < 0
    return logits


def distribution(sol: TodaSolution, beta: float) -> list:
    """Ensemble weights p_0..p_{r-1} as Fields; rows sum to one."""
    p = _softmax(_logits(sol, beta))
    return [Field(sol.grid, p[a]) for a in range(p.shape[0])]


def entropy_field(sol: TodaSolution, beta: float) -> Field:
    p = _softmax(_logits(sol, beta))
    return Field(sol.grid, _entropy_of(p))


def free_energy_field(sol: TodaSolution, beta: float,
                      reference: str = "flat") -> Field:
    beta = _check_beta(beta)
    logits = _logits(sol, beta) - beta * _log_reference(sol.grid, reference)
    return Field(sol.grid, -_logsumexp(logits) / beta)


def redundancy(sol: TodaSolution, beta: float):
    """(R field, inf over interior, sup over interior)."""
    s = entropy_field(sol, beta)
    logr = math.log(sol.r)
    rfield = Field(sol.grid, 1.0 - s.values / logr)
    return rfield, inf_over(rfield, sol.grid.interior), \
        sup_norm(rfield, sol.grid.interior)


def thermo_field(sol: TodaSolution, beta: float,
                 reference: str = "flat") -> ThermoField:
    beta = _check_beta(beta)
    logits = _logits(sol, beta)
    p = _softmax(logits)
    s = _entropy_of(p)
    f = -(_logsumexp(logits - beta * _log_reference(sol.grid, reference))) / beta
    logr = math.log(sol.r)
    rvals = 1.0 - s / logr
    rfield = Field(sol.grid, rvals)
    return ThermoField(
        grid=sol.grid, r=sol.r, beta=beta, reference=reference,
        p=tuple(Field(sol.grid, p[a]) for a in range(sol.r)),
        entropy=Field(sol.grid, s),
        free_energy=Field(sol.grid, f),
        redundancy=rfield,
        lower_redundancy=inf_over(rfield, sol.grid.interior),
        upper_redundancy=sup_norm(rfield, sol.grid.interior),
    )


def model_free_energy_field(grid: Grid, r: int, beta: float,
                            reference: str = "flat") -> Field:
    """Closed-form free energy of the degenerate solution on a unit subdisc."""
    beta = _check_beta(beta)
    if grid.rho_max >= 1.0:
        raise ConfigurationError(
            f"model free energy needs rho_max < 1, got {grid.rho_max}")
    lam = lambda_coefficients(r)
    # corner nodes beyond the unit circle are never read by interior
    # stencils; fill them with zero instead of a log singularity
    base = np.zeros(grid.nodes)
    inside = grid.r2 < 1.0
    base[inside] = -2.0 * np.log1p(-grid.r2[inside])
    logits = beta * (np.log(lam)[:, None] + base[None, :]
                     - _log_reference(grid, reference)[None, :])
    return Field(grid, -_logsumexp(logits) / beta)


# ---------------------------------------------------------------------------
# CSV emission


def write_thermo_csv(path: str, sol: TodaSolution, tf: ThermoField) -> None:
    """One row per node: coordinates, p_0..p_{r-1}, S, F, R."""
    from .io import format_float as ff

    grid = sol.grid
    coords = ["x", "y"] if grid.mode == "cartesian" else ["rho"]
    header = coords + [f"p_{j}" for j in range(sol.r)] + ["S", "F", "R"]
    cols = [grid.x] + ([grid.y] if grid.mode == "cartesian" else [])
    cols += [f.values for f in tf.p] + [tf.entropy.values,
                                        tf.free_energy.values,
                                        tf.redundancy.values]
    lines = [
        f"# r={sol.r}",
        f"# beta={ff(tf.beta)}",
        f"# reference={tf.reference}",
        f"# weight={sol.weight.describe()}",
        f"# residual_sup={ff(sol.residual_sup)}",
        ",".join(header),
    ]
    body = np.column_stack(cols)
    for row in body:
        lines.append(",".join(ff(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    log.info("wrote thermo csv %s (%d rows)", path, body.shape[0])


# ---------------------------------------------------------------------------
# log-space helpers


def _log_reference(grid: Grid, reference: str) -> np.ndarray:
    if reference == "flat":
        return np.zeros(grid.nodes)
    if reference == "poincare":
        if grid.rho_max >= 1.0:
            raise ConfigurationError(
                f"poincare reference needs rho_max < 1, got {grid.rho_max}")
        # nodes beyond the unit circle (square corners) are never read by
        # interior quantities; keep them finite
        out = np.zeros(grid.nodes)
        inside = grid.r2 < 1.0
        out[inside] = -2.0 * np.log1p(-grid.r2[inside])
        return out
    raise ConfigurationError(
        f"reference must be one of {REFERENCES}, got {reference!r}")


def _logsumexp(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=0)
    if not np.all(np.isfinite(m)):
        raise InternalError("every ensemble slot is excluded at some node")
    with np.errstate(invalid="ignore"):
        spread = np.exp(logits - m)
    spread[~np.isfinite(logits)] = 0.0
    return m + np.log(spread.sum(axis=0))


def _softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=0)
    if not np.all(np.isfinite(m)):
        raise InternalError("every ensemble slot is excluded at some node")
    with np.errstate(invalid="ignore"):
        z = np.exp(logits - m)
    z[~np.isfinite(logits)] = 0.0
    return z / z.sum(axis=0)


def _entropy_of(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(p > 0.0, p * np.log(p), 0.0)
    return -plogp.sum(axis=0)
