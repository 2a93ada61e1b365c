"""Seeded test-function library for the experiment harness.

All generators are deterministic in their seed.  Version bumps whenever a
generator's output changes, so archived experiment records stay attributable.
"""

from __future__ import annotations

import numpy as np

from .grid import CoarsePartition, DomainSpec, GridFunction

LIBRARY_VERSION = 1

__all__ = ["LIBRARY_VERSION", "sine_product", "fourier_h01", "fourier_free",
           "flattened_profile"]


def sine_product(spec: DomainSpec) -> GridFunction:
    """Product of first sine modes; vanishes on the whole boundary."""
    return GridFunction.from_callable(
        spec, lambda *xs: np.prod([np.sin(np.pi * x) for x in xs], axis=0))


def _mode_indices(dim: int, kmax: int):
    grids = np.meshgrid(*([np.arange(kmax + 1)] * dim), indexing="ij")
    modes = np.stack([g.reshape(-1) for g in grids], axis=1)
    return modes


def fourier_h01(spec: DomainSpec, seed: int, kmax: int = 3) -> GridFunction:
    """Random low-order sine series with decaying coefficients; boundary zero."""
    rng = np.random.default_rng(seed)
    grids = np.meshgrid(*spec.node_coordinates(), indexing="ij")
    vals = np.zeros(spec.node_shape)
    modes = _mode_indices(spec.dim, kmax)
    for k in modes:
        if np.any(k == 0):
            continue
        c = rng.standard_normal() / (1.0 + float(np.sum(k * k)))
        term = np.ones(spec.node_shape)
        for axis in range(spec.dim):
            term = term * np.sin(np.pi * k[axis] * grids[axis])
        vals += c * term
    return GridFunction(spec, vals)


def fourier_free(spec: DomainSpec, seed: int, kmax: int = 3) -> GridFunction:
    """Random low-order cosine series; generic boundary values, nonconstant."""
    rng = np.random.default_rng(seed)
    grids = np.meshgrid(*spec.node_coordinates(), indexing="ij")
    vals = np.zeros(spec.node_shape)
    modes = _mode_indices(spec.dim, kmax)
    for k in modes:
        c = rng.standard_normal() / (1.0 + float(np.sum(k * k)))
        if np.all(k == 0):
            continue  # constants drop out of every average-removed quantity
        term = np.ones(spec.node_shape)
        for axis in range(spec.dim):
            term = term * np.cos(np.pi * k[axis] * grids[axis])
        vals += c * term
    return GridFunction(spec, vals)


def flattened_profile(part: CoarsePartition, seed: int, kmax: int = 3,
                      plateau: float = 0.05, ramp: float = 0.2) -> GridFunction:
    """Random boundary-zero field made exactly flat near every patch center.

    Within distance plateau*H of a center the field is constant (gradient
    zero); it blends back to the underlying random field over a further
    ramp*H.  Plateau and ramp stay inside the patch, so singular weights
    concentrated at the centers see no gradient where they are large.
    """
    spec = part.spec
    if plateau + ramp >= 0.5:
        raise ValueError("plateau + ramp must stay below half a patch")
    base = fourier_h01(spec, seed, kmax)
    grids = np.meshgrid(*spec.node_coordinates(), indexing="ij")
    pts = np.stack([g.reshape(-1) for g in grids], axis=1)

    own = np.minimum((pts * part.m).astype(int), part.m - 1)
    centers = (own + 0.5) * part.H
    dist = np.sqrt(np.sum((pts - centers) ** 2, axis=1))

    own_flat = np.ravel_multi_index(own.T, (part.m,) * spec.dim)
    center_nodes = centers * spec.n
    # centers sit on nodes or half-cells; sample the base field there multilinearly
    center_vals = np.empty(part.num_patches)
    for i in range(part.num_patches):
        mask = own_flat == i
        if not np.any(mask):
            continue
        c = centers[np.argmax(mask)]
        center_vals[i] = _interp_at(base, c)
    anchor = center_vals[own_flat]

    s = np.clip((dist - plateau * part.H) / (ramp * part.H), 0.0, 1.0)
    eta = s * s * (3.0 - 2.0 * s)
    vals = eta * base.values.reshape(-1) + (1.0 - eta) * anchor
    return GridFunction(spec, vals.reshape(spec.node_shape))


def _interp_at(u: GridFunction, x: np.ndarray) -> float:
    spec = u.spec
    idx = []
    wts = []
    for axis in range(spec.dim):
        g = x[axis] * spec.n
        j = min(int(np.floor(g)), spec.n - 1)
        frac = g - j
        idx.append((j, j + 1))
        wts.append((1.0 - frac, frac))
    total = 0.0
    import itertools

    for corner in itertools.product((0, 1), repeat=spec.dim):
        w = 1.0
        pos = []
        for axis, c in enumerate(corner):
            w *= wts[axis][c]
            pos.append(idx[axis][c])
        total += w * u.values[tuple(pos)]
    return total
