"""
Initial data: Gaussians and ground states Q of -Delta Q + Q - |Q|^{alpha-1} Q = 0.

With the nonlinearity written as +lambda h |u|^{alpha-1} u, u = e^{it} Q is a
standing wave for lambda = -1; that is the soliton-bearing sign.
"""
from functools import lru_cache
from typing import Any, Dict
import logging

import numpy as np
from scipy import fft as sfft

from snls_lab.constants import Criticality, Frame, ProfileKind, get_profile_config
from snls_lab.db.schemas.spectral import GridSpec
from snls_lab.errors import InvalidParameterError
from snls_lab.numerics.noise import NoiseModel, criticality_of
from snls_lab.numerics.spectral import FieldState, coordinates, laplacian_symbol

logger = logging.getLogger(__name__)

SOLITON_SIGN = -1


def radius_squared(grid: GridSpec) -> np.ndarray:
    return sum(x ** 2 for x in coordinates(grid))


def gaussian(grid: GridSpec, amplitude: float = 1.0, width: float = 1.0) -> np.ndarray:
    return amplitude * np.exp(-radius_squared(grid) / (2 * width ** 2)).astype(np.complex128)


def soliton_q(grid: GridSpec) -> np.ndarray:
    """Q(x) = 3^{1/4} sech^{1/2}(2x), the d=1 quintic ground state."""
    if grid.d != 1:
        raise InvalidParameterError("the closed-form soliton exists only for d = 1", parameter="d")
    (x,) = coordinates(grid)
    return (3 ** 0.25 / np.sqrt(np.cosh(2 * x))).astype(np.complex128)


def ground_state_residual(q: np.ndarray, grid: GridSpec, alpha: float) -> float:
    """max |Delta Q - Q + |Q|^{alpha-1} Q| on the grid."""
    lap = sfft.ifftn(-laplacian_symbol(grid) * sfft.fftn(q))
    return float(np.max(np.abs(lap - q + np.abs(q) ** (alpha - 1) * q)))


@lru_cache(maxsize=8)
def ground_state(grid: GridSpec, alpha: float, tol: float = 1e-12, max_iter: int = 1000) -> np.ndarray:
    """
    Petviashvili iteration for (1 - Delta) Q = Q^alpha with a stabilizing factor.
    """
    if criticality_of(alpha, grid.d) == Criticality.ENERGY:
        raise InvalidParameterError("no H^1 ground state with a mass term exists at the energy-critical power", parameter="alpha")
    if grid.d == 1 and abs(alpha - 5) < 1e-12:
        q = soliton_q(grid).real.copy()
        q.setflags(write=False)
        return q
    symbol = 1.0 + laplacian_symbol(grid)
    gamma = alpha / (alpha - 1)
    q = np.exp(-radius_squared(grid) / 2)
    for it in range(max_iter):
        q_hat = sfft.fftn(q)
        n_hat = sfft.fftn(np.abs(q) ** alpha)
        stab = np.sum(symbol * np.abs(q_hat) ** 2) / np.real(np.sum(n_hat * np.conj(q_hat)))
        q_new = np.real(sfft.ifftn(stab ** gamma * n_hat / symbol))
        change = np.max(np.abs(q_new - q))
        q = q_new
        if change < tol:
            logger.debug(f"Ground state converged after {it + 1} iterations (d={grid.d}, alpha={alpha})")
            break
    else:
        logger.warning(f"Ground state iteration stopped at max_iter={max_iter}, last change {change:.2e}")
    q.setflags(write=False)
    return q


def make_initial(
    kind: ProfileKind,
    grid: GridSpec,
    model: NoiseModel,
    frame: Frame = Frame.PHYSICAL,
    **params: Any,
) -> FieldState:
    """Named initial profile at t = 0, where the two frames coincide."""
    kind = ProfileKind(kind)
    profile = get_profile_config(kind)
    config: Dict[str, Any] = dict(profile["default_config"])
    unknown = set(params) - set(config)
    if unknown:
        raise InvalidParameterError(f"unknown {profile['name']} parameters: {sorted(unknown)}", parameter=sorted(unknown)[0])
    config.update(params)
    logger.debug(f"Initial data: {profile['description']} with {config}")

    if kind == ProfileKind.GAUSSIAN:
        values = gaussian(grid, config["amplitude"], config["width"])
    elif kind == ProfileKind.SOLITON_SCALED:
        values = config["factor"] * ground_state(grid, model.alpha)
    else:
        values = config["scale"] * ground_state(grid, model.alpha)
    return FieldState(grid=grid, values=values, frame=frame, time=0.0)
