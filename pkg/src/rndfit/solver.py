"""Double-constrained least squares for step-density heights.

The heights minimize the (optionally weighted) mean squared pricing error
subject to nonnegativity and unit total mass. Eliminating the top-interval
height through the mass constraint leaves a least-squares objective over the
``q`` free heights with bound constraints plus one linear cap. A primal
active-set iteration solves it: steps come from minimum-norm least squares on
the working set (residual form, so ill-conditioned normal equations are never
formed), and entering/leaving constraints follow the lowest-index rule, which
makes the whole path deterministic.

When the optimal heights are not unique (more heights than informative
quotes), a second pass picks the minimum-Euclidean-norm point on the optimal
face; fitted prices are unaffected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .density import PiecewiseDensity
from .design import DesignSystem, discounted_prices
from .errors import GridError, SolverStalledError, ZeroPriceWeightError
from .market_data import CALL, OptionChain
from .pricing import classify_moneyness

LS = "ls"
WLS = "wls"
SCOPE_ALL = "all"
SCOPE_OTM = "otm"


@dataclass(frozen=True)
class FitConfig:
    """Method switches for one fit.

    ``mode`` selects unit weights (``ls``) or inverse-squared-price weights
    (``wls``); ``scope`` fits on all quotes or out-of-the-money quotes only.
    """

    mode: str = LS
    scope: str = SCOPE_ALL
    tail_factor: float = 1.5
    kkt_tolerance: float = 1e-8
    max_iterations: int = 5000
    ridge: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mode", self.mode.lower())
        object.__setattr__(self, "scope", self.scope.lower())
        if self.mode not in (LS, WLS):
            raise ValueError(f"mode must be {LS!r} or {WLS!r}")
        if self.scope not in (SCOPE_ALL, SCOPE_OTM):
            raise ValueError(f"scope must be {SCOPE_ALL!r} or {SCOPE_OTM!r}")
        if not self.tail_factor > 1.0:
            raise ValueError("tail factor must exceed 1")
        if not self.kkt_tolerance > 0.0:
            raise ValueError("kkt tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("need at least one iteration")
        if self.ridge < 0.0:
            raise ValueError("ridge must be nonnegative")


@dataclass(frozen=True)
class FitResult:
    """Fitted density plus the optimality certificate."""

    density: PiecewiseDensity
    objective: float
    fitted_puts: np.ndarray
    fitted_calls: np.ndarray
    kkt_residual: float
    active_set: tuple[int, ...]
    iterations: int

    def to_json_dict(self) -> dict:
        return {
            "tail_factor": self.density.tail_factor,
            "log_knots": [float(x) for x in self.density.log_knots],
            "heights": [float(x) for x in self.density.heights],
            "objective": self.objective,
            "kkt_residual": self.kkt_residual,
            "active_set": list(self.active_set),
            "iterations": self.iterations,
        }


@dataclass(frozen=True)
class _Problem:
    rows: tuple
    design_rows: np.ndarray
    offsets: np.ndarray
    raw_rows: np.ndarray
    market: np.ndarray
    weights: np.ndarray
    discount: float
    n_effective: float


def _assemble(chain: OptionChain, design: DesignSystem, config: FitConfig, quote_weights=None) -> _Problem:
    if design.q != chain.q or not np.allclose(design.strikes, chain.strikes, rtol=1e-12, atol=0.0):
        raise GridError("design strikes do not match chain strikes")
    if abs(design.tail_factor - config.tail_factor) > 1e-12:
        raise GridError("design tail factor does not match the fit config")
    rows, design_rows, offsets, raw_rows, market, weights = [], [], [], [], [], []
    n_effective = 0.0
    for i, side, price in chain.quotes():
        if config.scope == SCOPE_OTM and classify_moneyness(
            float(chain.strikes[i]), chain.spot, side
        ) != "OTM":
            continue
        mult = 1.0
        if quote_weights is not None:
            mult = float(quote_weights.get((i, side), 0.0))
            if mult <= 0.0:
                continue
        if config.mode == WLS:
            if price == 0.0:
                raise ZeroPriceWeightError(f"zero-price weight for {side} at index {i}")
            base = price ** -2
        else:
            base = 1.0
        reduced = design.reduced_call if side == CALL else design.reduced_put
        raw = design.raw_call if side == CALL else design.raw_put
        rows.append((i, side))
        design_rows.append(reduced[i, :-1])
        offsets.append(reduced[i, -1])
        raw_rows.append(raw[i])
        market.append(price)
        weights.append(mult * base)
        n_effective += mult
    if not rows:
        raise ValueError("no options in scope")
    return _Problem(
        rows=tuple(rows),
        design_rows=np.array(design_rows),
        offsets=np.array(offsets),
        raw_rows=np.array(raw_rows),
        market=np.array(market),
        weights=np.array(weights),
        discount=math.exp(-chain.cum_rate),
        n_effective=n_effective,
    )


def _null_basis(constraints: np.ndarray, active: list[int], n: int) -> np.ndarray:
    if not active:
        return np.eye(n)
    return scipy.linalg.null_space(constraints[np.array(active)])


def _max_step(constraints, bounds, x, p, active):
    """Largest step along ``p`` keeping all constraints; lowest-index blocker."""
    slack = constraints @ x - bounds
    speed = constraints @ p
    alpha, blocker = 1.0, None
    for j in range(constraints.shape[0]):
        if j in active or speed[j] >= 0.0:
            continue
        step_j = max(slack[j], 0.0) / (-speed[j])
        if step_j < alpha:
            alpha, blocker = step_j, j
    return alpha, blocker


def constrained_lstsq(matrix, target, constraints, bounds, start, max_iterations=5000, active0=()):
    """Minimize ``||matrix @ x - target||^2`` subject to ``constraints @ x >= bounds``.

    ``start`` must be feasible. Returns ``(x, info)`` where ``info`` carries
    the iteration count, the final active rows and a convergence flag. The
    iteration is deterministic for fixed inputs.
    """
    matrix = np.asarray(matrix, dtype=float)
    target = np.asarray(target, dtype=float)
    constraints = np.asarray(constraints, dtype=float)
    bounds = np.asarray(bounds, dtype=float)
    n = matrix.shape[1]
    x = np.array(start, dtype=float)
    active = sorted(set(active0))
    converged = False
    iterations = 0
    # a step counts as progress only if it moves the residual above noise;
    # comparing p itself would loop forever on ill-conditioned systems where
    # lstsq amplifies roundoff into visible but useless steps
    step_tol = 1e-13 * max(1.0, float(np.max(np.abs(target), initial=0.0)))
    while iterations < max_iterations:
        iterations += 1
        residual = matrix @ x - target
        basis = _null_basis(constraints, active, n)
        if basis.shape[1] == 0:
            p = np.zeros(n)
        else:
            step_z = np.linalg.lstsq(matrix @ basis, -residual, rcond=None)[0]
            p = basis @ step_z
        if float(np.max(np.abs(matrix @ p), initial=0.0)) > step_tol:
            alpha, blocker = _max_step(constraints, bounds, x, p, active)
            x = x + alpha * p
            if blocker is not None:
                active = sorted(active + [blocker])
                row = constraints[blocker]
                # land exactly on the blocking hyperplane
                x = x - row * ((row @ x - bounds[blocker]) / (row @ row))
            continue
        gradient = matrix.T @ residual
        if not active:
            converged = True
            break
        multipliers = np.linalg.lstsq(constraints[np.array(active)].T, gradient, rcond=None)[0]
        drop_tol = 1e-10 * max(1.0, float(np.linalg.norm(gradient, np.inf)))
        drop = next(
            (j for j, lam in zip(active, multipliers) if lam < -drop_tol), None
        )
        if drop is None:
            converged = True
            break
        active.remove(drop)
    if active:
        # null-space steps leak roundoff into the pinned coordinates; land on
        # the active constraints exactly before reporting
        rows = constraints[np.array(active)]
        fix = np.linalg.lstsq(rows, rows @ x - bounds[np.array(active)], rcond=None)[0]
        x = x - fix
    return x, {"iterations": iterations, "active": tuple(active), "converged": converged}


def _feasible_region(dlog: np.ndarray):
    """Constraint rows for free heights: bounds plus the unit-mass cap."""
    q = dlog.size - 1
    constraints = np.vstack([np.eye(q), -dlog[:-1][None, :]])
    bounds = np.concatenate([np.zeros(q), [-1.0]])
    return constraints, bounds


def fit(chain: OptionChain, design: DesignSystem, config: FitConfig | None = None, quote_weights=None) -> FitResult:
    """Fit step-density heights to market quotes and certify optimality.

    ``quote_weights`` optionally maps ``(strike_index, side)`` to a
    multiplicity; quotes mapped to zero are excluded and multiplicities enter
    the objective multiplicatively (used by bootstrap resampling).
    """
    config = config or FitConfig()
    problem = _assemble(chain, design, config, quote_weights)
    q = design.q
    dlog = np.diff(design.log_knots)
    disc = problem.discount
    sqrt_w = np.sqrt(problem.weights)
    matrix = sqrt_w[:, None] * (disc * problem.design_rows)
    target = sqrt_w * (problem.market - disc * problem.offsets)
    if config.ridge > 0.0:
        matrix = np.vstack([matrix, math.sqrt(config.ridge) * np.eye(q)])
        target = np.concatenate([target, np.zeros(q)])
    constraints, bounds = _feasible_region(dlog)
    start = np.full(q, 1.0 / float(dlog.sum()))
    x, info = constrained_lstsq(matrix, target, constraints, bounds, start, config.max_iterations)
    if not info["converged"]:
        raise SolverStalledError(
            "solver stalled: iteration cap reached before optimality",
            diagnostics={"iterations": info["iterations"], "q": q, "rows": len(problem.rows)},
        )
    iterations = info["iterations"]
    if config.ridge == 0.0:
        x, extra = _min_norm_on_face(matrix, x, dlog, config.max_iterations)
        iterations += extra

    clamp = 1e-12 * (1.0 + float(np.max(np.abs(x), initial=0.0)))
    if x.size and float(x.min()) < -clamp:
        raise SolverStalledError(
            "solver stalled: infeasible heights returned",
            diagnostics={"min_height": float(x.min())},
        )
    x = np.maximum(x, 0.0)
    top = (1.0 - x @ dlog[:-1]) / dlog[-1]
    if top < -clamp:
        raise SolverStalledError(
            "solver stalled: infeasible top height returned",
            diagnostics={"top_height": float(top)},
        )
    heights = np.concatenate([x, [max(top, 0.0)]])
    heights[_empty_intervals(heights)] = 0.0
    x = heights[:-1]
    density = PiecewiseDensity(config.tail_factor, design.log_knots, heights)
    fitted_puts, fitted_calls = discounted_prices(design, x, chain.cum_rate)
    fitted = disc * (problem.design_rows @ x + problem.offsets)
    residual = fitted - problem.market
    objective = float(np.sum(problem.weights * residual**2) / problem.n_effective)
    kkt = _kkt_residual(problem, dlog, heights)
    if kkt > config.kkt_tolerance:
        raise SolverStalledError(
            "solver stalled: optimality certificate above tolerance",
            diagnostics={"kkt_residual": kkt, "tolerance": config.kkt_tolerance},
        )
    return FitResult(
        density=density,
        objective=objective,
        fitted_puts=fitted_puts,
        fitted_calls=fitted_calls,
        kkt_residual=kkt,
        active_set=tuple(int(l) for l in np.flatnonzero(heights == 0.0)),
        iterations=iterations,
    )


def _min_norm_on_face(matrix, x, dlog, max_iterations):
    """Minimum-norm heights over the optimal face ``{a : matrix @ a fixed}``.

    The objective is strictly convex in the fitted prices, so the face is an
    affine slice of the feasible set; picking its minimum-norm point makes the
    returned heights reproducible when they are underdetermined.
    """
    face = scipy.linalg.null_space(matrix)
    if face.shape[1] == 0:
        return x, 0
    cap = dlog[:-1]
    constraints = np.vstack([face, -(cap @ face)[None, :]])
    bounds = np.concatenate([-x, [cap @ x - 1.0]])
    w, info = constrained_lstsq(
        face,
        -x,
        constraints,
        bounds,
        np.zeros(face.shape[1]),
        max_iterations,
    )
    if not info["converged"]:
        return x, info["iterations"]
    return x + face @ w, info["iterations"]


def _empty_intervals(heights: np.ndarray) -> np.ndarray:
    """Mask of intervals whose height is zero up to the clamp tolerance."""
    return heights <= 1e-12 * (1.0 + float(np.max(heights, initial=0.0)))


def _kkt_residual(problem: _Problem, dlog: np.ndarray, heights: np.ndarray) -> float:
    """Scaled stationarity residual at the full height vector.

    In the full parametrization the optimum satisfies
    ``gradient_l = lambda * width_l`` on intervals carrying mass and
    ``gradient_l - lambda * width_l >= 0`` on empty ones, with ``lambda`` the
    unit-mass multiplier. The residual is the largest violation divided by the
    largest raw design column norm.
    """
    disc = problem.discount
    residual = disc * (problem.raw_rows @ heights) - problem.market
    gradient = (2.0 / problem.n_effective) * disc * (
        problem.raw_rows.T @ (problem.weights * residual)
    )
    inactive = ~_empty_intervals(heights)
    denom = float(np.sum(dlog[inactive] ** 2))
    lam = float(np.sum(gradient[inactive] * dlog[inactive]) / denom) if denom > 0.0 else 0.0
    stationarity = gradient - lam * dlog
    worst_inactive = float(np.max(np.abs(stationarity[inactive]), initial=0.0))
    worst_active = float(np.max(-stationarity[~inactive], initial=0.0))
    scale = max(1.0, float(np.max(np.linalg.norm(problem.raw_rows, axis=0))))
    return max(worst_inactive, max(worst_active, 0.0)) / scale


def kkt_residual_for_heights(chain, design, heights, config=None, quote_weights=None) -> float:
    """Stationarity residual for an arbitrary full height vector."""
    config = config or FitConfig()
    problem = _assemble(chain, design, config, quote_weights)
    heights = np.asarray(heights, dtype=float)
    dlog = np.diff(design.log_knots)
    if heights.shape != dlog.shape:
        raise GridError(f"expected {dlog.size} heights, got shape {heights.shape}")
    return _kkt_residual(problem, dlog, heights)


def check_kkt(result: FitResult, chain, design, config=None, quote_weights=None) -> float:
    """Recompute the optimality residual of a finished fit."""
    return kkt_residual_for_heights(
        chain, design, result.density.heights, config, quote_weights
    )
