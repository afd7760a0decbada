"""Damped nonlinear least squares (Levenberg-Marquardt) core.

Shared by calibration fitting and the mosaic bundle adjuster. The solver is
generic over the parameter representation: callers supply residual and
Jacobian callbacks plus an optional retraction that applies an update vector
to the current state (plain addition for flat parameter vectors).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericalFailure


@dataclass(frozen=True)
class LmConfig:
    max_iterations: int = 200
    initial_lambda: float = 1e-3
    lambda_up: float = 10.0
    lambda_down: float = 0.1
    cost_tolerance: float = 1e-10      # relative cost decrease
    param_tolerance: float = 1e-10     # step norm
    huber_delta: float | None = None   # None disables the robust loss
    huber_block: int = 1               # residual block size for the robust norm

    def __post_init__(self) -> None:
        if self.max_iterations <= 0 or self.initial_lambda <= 0:
            raise ValueError("LmConfig fields must be positive")
        if self.lambda_up <= 1 or not (0 < self.lambda_down < 1):
            raise ValueError("lambda factors must move damping in opposite directions")
        if self.cost_tolerance <= 0 or self.param_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if self.huber_delta is not None and self.huber_delta <= 0:
            raise ValueError("huber_delta must be positive")


@dataclass
class LmResult:
    state: Any
    cost_trace: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False

    @property
    def initial_cost(self) -> float:
        return self.cost_trace[0]

    @property
    def final_cost(self) -> float:
        return self.cost_trace[-1]


def _block_norms(r: np.ndarray, block: int) -> np.ndarray:
    if block == 1:
        return np.abs(r)
    return np.sqrt(np.sum(r.reshape(-1, block) ** 2, axis=1))


def _robust_cost_and_weights(r: np.ndarray, config: LmConfig) -> tuple[float, np.ndarray | None]:
    """Return (cost, per-scalar IRLS weights or None for plain least squares)."""
    if config.huber_delta is None:
        return float(r @ r), None
    delta = config.huber_delta
    norms = _block_norms(r, config.huber_block)
    small = norms <= delta
    cost = float(np.sum(norms[small] ** 2) + np.sum(2 * delta * norms[~small] - delta**2))
    w = np.where(small, 1.0, delta / np.maximum(norms, 1e-300))
    return cost, np.repeat(w, config.huber_block)


def levenberg_marquardt(
    residuals: Callable[[Any], np.ndarray],
    jacobian: Callable[[Any], Any],
    x0: Any,
    config: LmConfig | None = None,
    retract: Callable[[Any, np.ndarray], Any] | None = None,
) -> LmResult:
    """Minimize the (optionally Huber-robustified) squared residual norm.

    ``jacobian`` may return a dense ndarray or a scipy sparse matrix; the
    normal equations are solved accordingly. ``retract`` applies an update
    vector to the state and defaults to vector addition. Accepted steps never
    increase the cost; the returned trace holds the accepted-cost sequence.
    """
    config = config or LmConfig()
    if retract is None:
        retract = lambda x, delta: x + delta

    x = x0
    r = np.asarray(residuals(x), dtype=float)
    cost, weights = _robust_cost_and_weights(r, config)
    if not math.isfinite(cost):
        raise NumericalFailure("non-finite initial cost")

    result = LmResult(state=x, cost_trace=[cost])
    lam = config.initial_lambda

    for it in range(config.max_iterations):
        result.iterations = it + 1
        J = jacobian(x)
        sparse = sp.issparse(J)
        if weights is not None:
            if sparse:
                J = sp.diags(weights) @ J
            else:
                J = weights[:, None] * J
            rw = weights * r
        else:
            rw = r

        JtJ = (J.T @ J).tocsc() if sparse else J.T @ J
        g = J.T @ rw
        n = JtJ.shape[0]

        accepted = False
        while not accepted:
            if sparse:
                A = JtJ + lam * sp.identity(n, format="csc")
                try:
                    delta = spla.spsolve(A, -g)
                except RuntimeError as exc:
                    raise NumericalFailure(f"sparse solve failed: {exc}") from exc
            else:
                A = JtJ + lam * np.eye(n)
                try:
                    delta = np.linalg.solve(A, -g)
                except np.linalg.LinAlgError:
                    delta = np.linalg.lstsq(A, -g, rcond=None)[0]
            if not np.all(np.isfinite(delta)):
                raise NumericalFailure("non-finite step")

            x_new = retract(x, delta)
            r_new = np.asarray(residuals(x_new), dtype=float)
            cost_new, weights_new = _robust_cost_and_weights(r_new, config)
            if not math.isfinite(cost_new):
                raise NumericalFailure("non-finite cost during step evaluation")

            if cost_new <= cost:
                accepted = True
                step_norm = float(np.linalg.norm(delta))
                rel_decrease = (cost - cost_new) / max(cost, 1e-300)
                x, r, cost, weights = x_new, r_new, cost_new, weights_new
                result.state = x
                result.cost_trace.append(cost)
                lam = max(lam * config.lambda_down, 1e-15)
                if rel_decrease < config.cost_tolerance or step_norm < config.param_tolerance:
                    result.converged = True
                    return result
            else:
                lam *= config.lambda_up
                if lam > 1e15:
                    # Damping exhausted: no descent direction remains.
                    result.converged = cost <= config.cost_tolerance
                    return result

    return result
