# pickplace/sim/solver.py
"""Planar position-based constraint relaxation.

Links are grouped into colours with no shared vertex so each colour is projected
in one vectorised Gauss-Seidel sweep.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..errors import ArgumentError, SimulationError
from .scene import Cable, Fabric, Scene

SKIP_TOL = 1e-12


@dataclass(frozen=True)
class LinkGroup:
    a: np.ndarray
    b: np.ndarray
    rest: np.ndarray


def _chain_groups(n: int, closed: bool, rest: float) -> list[LinkGroup]:
    a = np.arange(n if closed else n - 1)
    b = (a + 1) % n
    if len(a) == 0:
        return []
    colour = a % 2
    if closed and n % 2 == 1:
        colour[-1] = 2
    out = []
    for c in range(3):
        m = colour == c
        if np.any(m):
            out.append(LinkGroup(a[m], b[m], np.full(int(m.sum()), rest)))
    return out


@lru_cache(maxsize=16)
def _cached_chain(n: int, closed: bool, rest: float) -> tuple[LinkGroup, ...]:
    return tuple(_chain_groups(n, closed, rest))


@lru_cache(maxsize=8)
def _grid_groups(n: int, spacing: float) -> tuple[LinkGroup, ...]:
    idx = np.arange(n * n).reshape(n, n)
    diag = spacing * math.sqrt(2.0)
    groups: list[LinkGroup] = []

    def add(a: np.ndarray, b: np.ndarray, rest: float) -> None:
        if a.size:
            groups.append(LinkGroup(a.ravel(), b.ravel(), np.full(a.size, rest)))

    for par in (0, 1):
        add(idx[:, par:-1:2], idx[:, par + 1::2], spacing)  # horizontal, by column parity
    for par in (0, 1):
        add(idx[par:-1:2, :], idx[par + 1::2, :], spacing)  # vertical, by row parity
    for par in (0, 1):
        add(idx[par:-1:2, :-1], idx[par + 1::2, 1:], diag)  # diagonal shear
    for par in (0, 1):
        add(idx[par:-1:2, 1:], idx[par + 1::2, :-1], diag)  # anti-diagonal shear
    return tuple(groups)


def cable_groups(cable: Cable) -> tuple[LinkGroup, ...]:
    return _cached_chain(cable.n, cable.closed, float(cable.rest))


def fabric_groups(fabric: Fabric) -> tuple[LinkGroup, ...]:
    return _grid_groups(fabric.n, float(fabric.spacing))


def project_group(pos: np.ndarray, inv_mass: np.ndarray, g: LinkGroup, unilateral: np.ndarray | bool) -> None:
    """Project one colour of distance constraints in place."""
    d = pos[g.b] - pos[g.a]
    dist = np.sqrt(np.einsum("ij,ij->i", d, d))
    diff = dist - g.rest
    wa, wb = inv_mass[g.a], inv_mass[g.b]
    wsum = wa + wb
    # coincident endpoints separate along +x
    flat = dist <= SKIP_TOL
    if np.any(flat):
        d[flat] = (SKIP_TOL, 0.0)
        dist = np.where(flat, SKIP_TOL, dist)
    active = (np.abs(diff) > SKIP_TOL) & (wsum > 0.0)
    active &= ~np.asarray(unilateral) | (diff > 0.0)
    if not np.any(active):
        return
    k = np.where(active, diff / np.where(active, dist * wsum, 1.0), 0.0)
    corr = k[:, None] * d
    pos[g.a] += wa[:, None] * corr
    pos[g.b] -= wb[:, None] * corr


def relax_constraints(scene: Scene, iterations: int, pinned: dict[int, set[int]] | None = None) -> Scene:
    """Gauss-Seidel projection of all distance constraints, in place; returns ``scene``.

    ``pinned`` maps object id to vertex indices held fixed (zero inverse mass).
    """
    if iterations < 1:
        raise ArgumentError(f"iterations must be >= 1, got {iterations}")
    pinned = pinned or {}
    lo, hi = scene.calib.lower(), scene.calib.upper() - 1e-6

    jobs: list[tuple[np.ndarray, np.ndarray, tuple[LinkGroup, ...], list[np.ndarray | bool]]] = []
    for cab in scene.cables:
        w = np.ones(cab.n)
        w[list(pinned.get(cab.id, ()))] = 0.0
        groups = cable_groups(cab)
        jobs.append((cab.pos, w, groups, [False] * len(groups)))
    for fab in scene.fabrics:
        w = np.ones(fab.n * fab.n)
        w[list(pinned.get(fab.id, ()))] = 0.0
        groups = fabric_groups(fab)
        # links spanning two layers only resist stretching
        uni = [fab.layer[g.a] != fab.layer[g.b] for g in groups]
        jobs.append((fab.pos, w, groups, uni))

    for _ in range(iterations):
        for pos, w, groups, uni in jobs:
            for g, u in zip(groups, uni):
                project_group(pos, w, g, u)
            np.clip(pos, lo, hi, out=pos)

    if not scene.check_finite():
        raise SimulationError("non-finite positions after relaxation")
    return scene


def max_link_residual(scene: Scene) -> float:
    """Largest relative deviation |len - rest| / rest; slack in cross-layer fabric links counts as zero."""
    worst = 0.0
    for cab in scene.cables:
        if cab.n > 1:
            worst = max(worst, float(np.max(np.abs(cab.link_lengths() - cab.rest)) / cab.rest))
    for fab in scene.fabrics:
        for g in fabric_groups(fab):
            dist = np.linalg.norm(fab.pos[g.b] - fab.pos[g.a], axis=1)
            same = fab.layer[g.a] == fab.layer[g.b]
            err = np.where(same, np.abs(dist - g.rest), np.maximum(dist - g.rest, 0.0)) / g.rest
            if err.size:
                worst = max(worst, float(err.max()))
    return worst


def follow_the_leader(cab: Cable, start: int) -> None:
    """Walk away from the held bead ``start`` and set each follower at rest length from its leader.

    A ring is walked halfway round in both directions; the link where the walks meet is left to relaxation.
    """
    n = cab.n
    if n < 2:
        return
    if cab.closed:
        paths = [[(start + k) % n for k in range(n // 2 + 1)], [(start - k) % n for k in range((n + 1) // 2)]]
    else:
        paths = [list(range(start, n)), list(range(start, -1, -1))]
    pos = cab.pos
    for path in paths:
        for a, b in zip(path, path[1:]):
            d = pos[b] - pos[a]
            dist = float(np.hypot(d[0], d[1]))
            if dist > 0.0:
                pos[b] = pos[a] + d * (cab.rest / dist)
