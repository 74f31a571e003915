"""Sequential Domain Reduction of a region of interest (RoI).

Each update re-centres the RoI on the incumbent best point and rescales every
side by a per-dimension contraction rate that pans (rate near 1) when the
incumbent keeps moving in one direction and damps when it oscillates.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import InputError
from .testbed import Box


@dataclass(frozen=True)
class SdrParams:
    gamma_osc: float = 0.7
    gamma_pan: float = 1.0
    eta_zoom: float = 0.9
    min_size: float = 0.5
    update_every: int = 1

    def __post_init__(self):
        if self.min_size <= 0:
            raise InputError("min_size must be positive")
        if self.update_every < 1:
            raise InputError("update_every must be at least 1")


@dataclass(frozen=True)
class RoiState:
    roi: Box
    centre: np.ndarray
    outer: Box
    prev_centre: Optional[np.ndarray] = None
    prev_d: Optional[np.ndarray] = None
    iter: int = 0
    min_size: float = 0.0

    @property
    def widths(self) -> np.ndarray:
        return self.roi.widths


def _trimmed_box(lower, upper, outer: Box, min_size: float) -> Box:
    lower = np.clip(lower, outer.lower, outer.upper)
    upper = np.clip(upper, outer.lower, outer.upper)
    width = np.minimum(np.full(outer.dim, min_size), outer.widths)
    short = (upper - lower) < width
    if np.any(short):
        mid = 0.5 * (lower + upper)
        new_lo = mid - 0.5 * width
        new_hi = mid + 0.5 * width
        shift = np.maximum(outer.lower - new_lo, 0.0) - np.maximum(new_hi - outer.upper, 0.0)
        lower = np.clip(np.where(short, new_lo + shift, lower), outer.lower, outer.upper)
        upper = np.clip(np.where(short, new_hi + shift, upper), outer.lower, outer.upper)
    return Box(lower, upper)


def trim(state: RoiState) -> RoiState:
    """Clip the RoI into the outer box and widen sides shorter than ``min_size``.

    A widened side is centred on the old side's midpoint and then slid back
    inside the outer box, so it keeps ``min_size`` unless the outer box is
    narrower.
    """
    return replace(state, roi=_trimmed_box(state.roi.lower, state.roi.upper, state.outer, state.min_size))


def init_roi(outer: Box, centre, min_size: float = 0.0) -> RoiState:
    """RoI of the outer box's size centred at ``centre``, trimmed to ``outer``."""
    centre = np.asarray(centre, dtype=float)
    if not outer.contains(centre, tol=1e-12):
        raise InputError("SDR centre lies outside the outer box")
    r0 = outer.widths
    lower = centre - 0.5 * r0
    upper = centre + 0.5 * r0
    roi = _trimmed_box(lower, upper, outer, min_size)
    return RoiState(roi=roi, centre=centre.copy(), outer=outer, min_size=min_size)


def shrink_gamma(c_hat, params: SdrParams):
    """Blend of panning (``c_hat = 1``) and oscillation (``c_hat = -1``) rates."""
    return 0.5 * (params.gamma_pan * (1.0 + c_hat) + params.gamma_osc * (1.0 - c_hat))


def contraction(d, prev_d, params: SdrParams) -> np.ndarray:
    """Per-dimension width multiplier from the current and previous moves."""
    c = d * prev_d
    c_hat = np.sqrt(np.abs(c)) * np.sign(c)
    gamma = shrink_gamma(c_hat, params)
    return params.eta_zoom + np.abs(d) * (gamma - params.eta_zoom)


def update_roi(state: RoiState, new_best, params: SdrParams) -> RoiState:
    """Move the RoI to ``new_best`` and rescale each side."""
    new_best = np.asarray(new_best, dtype=float)
    if not state.outer.contains(new_best, tol=1e-9):
        raise InputError("incumbent lies outside the outer box")
    r_prev = state.roi.widths
    d = 2.0 * (new_best - state.centre) / r_prev
    prev_d = state.prev_d if state.prev_d is not None else np.zeros_like(d)
    # far jumps (|d| > 1) can drive the rate negative; a zero width is then
    # widened back to min_size by the trim
    r_new = np.maximum(contraction(d, prev_d, params), 0.0) * r_prev
    roi = _trimmed_box(new_best - 0.5 * r_new, new_best + 0.5 * r_new, state.outer, params.min_size)
    return RoiState(
        roi=roi,
        centre=new_best.copy(),
        outer=state.outer,
        prev_centre=state.centre,
        prev_d=d,
        iter=state.iter + 1,
        min_size=params.min_size,
    )


def due(state: RoiState, k: int, params: SdrParams) -> bool:
    """Whether iteration ``k`` triggers an update (cadence and size test)."""
    return k % params.update_every == 0 and bool(np.all(state.widths >= params.min_size * (1.0 - 1e-9)))


__all__ = ["SdrParams", "RoiState", "init_roi", "update_roi", "trim", "contraction", "shrink_gamma", "due"]
