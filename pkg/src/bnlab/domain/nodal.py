"""Nodal-domain counting by sign sampling on a regular cell grid."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from ..errors import ConfigurationError
from .geometry import DomainSpec


class ResolutionWarning(UserWarning):
    pass


@dataclass
class NodalResult:
    count: int
    representatives: np.ndarray  # (count, N), deepest |g| cell centre per component
    signs: np.ndarray  # (count,)
    peak_values: np.ndarray  # (count,)
    resolution: int
    warnings: list = field(default_factory=list)


def nodal_domains(g, domain: DomainSpec, grid_resolution: int = 16, noise_floor: float = 1e-10) -> NodalResult:
    """Count connected same-sign components of g (face adjacency) on cell centres.

    Components are ordered by decreasing |g| at their representative.
    """
    if grid_resolution < 8:
        raise ConfigurationError("grid resolution must be at least 8 per axis")
    N = domain.N
    lo, hi = domain.bounding_box
    axes = [lo[i] + (np.arange(grid_resolution) + 0.5) * (hi[i] - lo[i]) / grid_resolution for i in range(N)]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([a.ravel() for a in grids], axis=-1)
    inside = domain.contains(pts)
    vals = np.zeros(len(pts))
    vals[inside] = g(pts[inside])
    vals = vals.reshape(grids[0].shape)
    inside = inside.reshape(vals.shape)
    scale = float(np.max(np.abs(vals))) if vals.size else 0.0
    floor = noise_floor * max(scale, 1e-300)
    structure = ndimage.generate_binary_structure(N, 1)
    reps, signs, peaks, notes = [], [], [], []
    absv = np.abs(vals)
    for sgn in (1, -1):
        mask = inside & (sgn * vals > floor)
        labels, n = ndimage.label(mask, structure=structure)
        if n == 0:
            continue
        idx = np.arange(1, n + 1)
        pos = ndimage.maximum_position(absv, labels, idx)
        mx = ndimage.maximum(absv, labels, idx)
        for p, m in zip(pos, np.atleast_1d(mx)):
            reps.append([axes[i][p[i]] for i in range(N)])
            signs.append(sgn)
            peaks.append(float(m))
            if m < 1e3 * floor:
                notes.append(f"component near {reps[-1]} barely above the noise floor; refine the grid")
    weak = inside & (absv <= floor)
    if np.any(weak):
        wl, nw = ndimage.label(weak, structure=structure)
        sizes = ndimage.sum(weak, wl, np.arange(1, nw + 1))
        if np.any(np.asarray(sizes) > 1):
            notes.append("cells with |g| below the noise floor form a connected region")
    for note in notes:
        warnings.warn(note, ResolutionWarning, stacklevel=2)
    order = np.argsort(-np.asarray(peaks))
    return NodalResult(
        count=len(reps),
        representatives=np.asarray(reps, dtype=float).reshape(-1, N)[order],
        signs=np.asarray(signs)[order],
        peak_values=np.asarray(peaks)[order],
        resolution=grid_resolution,
        warnings=notes,
    )


def product_nodal_count(freqs) -> int:
    """Nodal domains of prod sin(k_i x_i) on a box: the product of the frequencies."""
    return int(np.prod(freqs))
