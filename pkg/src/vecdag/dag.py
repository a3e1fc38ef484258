"""Layered DAG construction on grids and general point clouds.

Builders produce a :class:`LayeredDag`: points in topological order,
per-node layer labels, parent index lists, and construction metadata.
Grid construction places nodes on dyadic refinement layers with corner
parent sets; general point clouds go through maximin ordering with
singular-value-gated parent selection; a nearest-neighbor baseline with
maximin ordering is included for comparison runs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DuplicatePoints, NotAGrid, VecdagError
from .polynomials import basis_size, corner_set, norming_constant

LATTICE_TOL = 1e-9


@dataclass
class LayeredDag:
    """A layered DAG over a point set, in topological order.

    Attributes
    ----------
    points : (n, d) coordinates, parents always at smaller indices
    layer : per-node layer label
    parents : per-node integer index arrays into ``points``
    gamma : layer separation ratio
    order_l : polynomial order behind the target parent cardinality
    m : target parent cardinality
    construction : one of grid, grid-augmented, general, maximin-nngp, full
    augmented : mask of nodes added for boundary padding; they carry no
        observations and participate in the prior only
    i0 : first index at which the parent cardinality reaches ``m``
    """

    points: np.ndarray
    layer: np.ndarray
    parents: list[np.ndarray]
    gamma: float
    order_l: int
    m: int
    construction: str
    augmented: np.ndarray = field(default=None)
    i0: int = 0

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.layer = np.asarray(self.layer, dtype=int)
        self.parents = [np.asarray(p, dtype=int) for p in self.parents]
        if self.augmented is None:
            self.augmented = np.zeros(self.n_nodes, dtype=bool)
        self.augmented = np.asarray(self.augmented, dtype=bool)
        for i, pa in enumerate(self.parents):
            if pa.size and pa.max() >= i:
                raise VecdagError(f"node {i} has a parent at index >= {i}")

    @property
    def n_nodes(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    @property
    def observed(self) -> np.ndarray:
        """Mask of nodes that carry observations (not augmented)."""
        return ~self.augmented

    def to_dict(self) -> dict:
        return {
            "dimension": int(self.dimension),
            "gamma": float(self.gamma),
            "order_l": int(self.order_l),
            "m": int(self.m),
            "construction": self.construction,
            "nodes": [
                {
                    "coords": [float(c) for c in self.points[i]],
                    "layer": int(self.layer[i]),
                    "parents": [int(p) for p in self.parents[i]],
                    "augmented": bool(self.augmented[i]),
                }
                for i in range(self.n_nodes)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, payload: dict) -> "LayeredDag":
        nodes = payload["nodes"]
        dag = cls(
            points=np.array([node["coords"] for node in nodes], dtype=float),
            layer=np.array([node["layer"] for node in nodes], dtype=int),
            parents=[np.array(node["parents"], dtype=int) for node in nodes],
            gamma=float(payload["gamma"]),
            order_l=int(payload["order_l"]),
            m=int(payload["m"]),
            construction=payload["construction"],
            augmented=np.array([node["augmented"] for node in nodes], dtype=bool),
        )
        dag.i0 = _first_full_parent_index(dag.parents, dag.m)
        return dag

    @classmethod
    def from_json(cls, text: str) -> "LayeredDag":
        return cls.from_dict(json.loads(text))


def _first_full_parent_index(parents: list[np.ndarray], m: int) -> int:
    for i, pa in enumerate(parents):
        if len(pa) == m:
            return i
    return len(parents)


def _check_distinct(points: np.ndarray):
    rounded = np.round(points, 12)
    if np.unique(rounded, axis=0).shape[0] != points.shape[0]:
        raise DuplicatePoints("point set contains coinciding points")


def _grid_first_layer(l: int) -> int:
    """Smallest positive j whose preceding union offers l+1 pool values per axis."""
    j0 = 1
    while 2 ** (j0 - 1) + 1 < l + 1:
        j0 += 1
    return j0


def _detect_lattice(points: np.ndarray) -> tuple[int, np.ndarray]:
    """Map lattice points to integer index vectors, or raise ``NotAGrid``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = points.shape
    n_side = round(n ** (1.0 / d))
    # guard against off-by-one from the float root
    for cand in (n_side - 1, n_side, n_side + 1):
        if cand >= 2 and cand**d == n:
            n_side = cand
            break
    else:
        raise NotAGrid(f"{n} points cannot form a tensor lattice in dimension {d}")
    idx = np.round(points * (n_side - 1)).astype(int)
    if np.max(np.abs(points - idx / (n_side - 1))) > LATTICE_TOL:
        raise NotAGrid("coordinates are not multiples of 1/(n_side-1) in [0, 1]")
    if idx.min() < 0 or idx.max() > n_side - 1:
        raise NotAGrid("coordinates fall outside the unit cube")
    seen = {tuple(row) for row in idx}
    if len(seen) != n:
        raise NotAGrid("lattice positions are not pairwise distinct")
    return n_side, idx


def _evenly_spaced_subindices(n_side: int, r: int) -> np.ndarray:
    """2^r + 1 indices into 0..n_side-1, complement free of consecutive runs."""
    k = np.arange(2**r + 1)
    idx = np.floor(k * (n_side - 1) / 2**r + 0.5).astype(int)
    idx = np.unique(idx)
    if idx.size != 2**r + 1:
        raise NotAGrid("subgrid index selection collapsed; grid too small")
    return idx


def build_grid_dag(grid: np.ndarray, l: int, augment: bool = False) -> LayeredDag:
    """Build the layered corner-parent DAG on a tensor lattice in [0, 1]^d.

    Layer j holds the nodes of the dyadic level-j sub-lattice that are not
    already on a coarser level, so the union of layers up to j is the full
    (2^j+1)^d lattice. The root layer (cube vertices) has no parents,
    layers before the first corner layer take every earlier-layer node,
    and later layers take corner parent sets of size C(l+d, l) built from
    the coordinate pools of the preceding union. Side lengths that are not
    2^r + 1 are handled by carving out an evenly spaced subgrid, building
    on it through an order-preserving map to the dyadic lattice, and
    attaching the remaining nodes as a final corner-parent layer.

    With ``augment=True`` the middle layers are padded with lattice points
    outside the unit cube so no node's ancestry feels the boundary; padded
    nodes are flagged and carry no observations.

    Raises
    ------
    NotAGrid
        If the input is not the expected tensor lattice.
    DuplicatePoints
        If any location repeats.
    """
    points = np.atleast_2d(np.asarray(grid, dtype=float))
    _check_distinct(points)
    n_side, idx = _detect_lattice(points)
    d = points.shape[1]
    m = basis_size(l, d)

    r = 0
    while 2 ** (r + 1) + 1 <= n_side:
        r += 1
    power = n_side == 2**r + 1

    sub_idx = np.arange(n_side) if power else _evenly_spaced_subindices(n_side, r)
    grid_vals = np.arange(n_side) / (n_side - 1)
    sub_vals = grid_vals[sub_idx]

    builder = _PowerGridBuilder(r, d, l, augment)
    coords_map, layers, parents, aug_flags = builder.run()

    # mapped dyadic coordinates back to original grid values; the padded
    # nodes outside [0, 1] use a piecewise-linear extension of the map
    orig_points = _unmap_coords(coords_map, sub_vals, r)

    if power:
        construction = "grid-augmented" if augment else "grid"
        dag = LayeredDag(
            points=orig_points,
            layer=layers,
            parents=parents,
            gamma=2.0,
            order_l=l,
            m=m,
            construction=construction,
            augmented=aug_flags,
        )
        dag.i0 = _first_full_parent_index(parents, m)
        return dag

    # leftover nodes outside the subgrid form one final corner-parent layer
    sub_set = set(sub_idx.tolist())
    in_sub = np.array([all(v in sub_set for v in row) for row in idx])
    leftover = idx[~in_sub]
    lex = np.lexsort(tuple(leftover[:, h] for h in reversed(range(d))))
    leftover = leftover[lex]

    position = {
        tuple(np.round(c * 2**r).astype(int)): i
        for i, c in enumerate(coords_map)
        if not aug_flags[i]
    }
    pos_of_sub = {v: k for k, v in enumerate(sub_idx.tolist())}

    all_points = [orig_points]
    all_layers = [layers]
    all_parents = list(parents)
    for row in leftover:
        target = grid_vals[row]
        pa_pts = corner_set(target, [sub_vals] * d, l)
        pa_idx = []
        for p in pa_pts:
            key = tuple(
                pos_of_sub[int(np.round(v * (n_side - 1)))] for v in p
            )
            pa_idx.append(position[key])
        all_parents.append(np.array(pa_idx, dtype=int))
    all_points.append(leftover / (n_side - 1))
    all_layers.append(np.full(leftover.shape[0], r + 1, dtype=int))

    dag = LayeredDag(
        points=np.vstack(all_points),
        layer=np.concatenate(all_layers),
        parents=all_parents,
        gamma=2.0,
        order_l=l,
        m=m,
        construction="grid-augmented" if augment else "grid",
        augmented=np.concatenate(
            [aug_flags, np.zeros(leftover.shape[0], dtype=bool)]
        ),
    )
    dag.i0 = _first_full_parent_index(dag.parents, m)
    return dag


def _unmap_coords(coords: np.ndarray, sub_vals: np.ndarray, r: int) -> np.ndarray:
    """Invert the dyadic map k/2^r -> sub_vals[k], extended linearly outside."""
    scale = 2**r
    k = coords * scale
    lo = np.floor(k).astype(int)
    frac = k - lo
    n_sub = sub_vals.size
    out = np.empty_like(coords)
    # clamp the interpolation cell, extrapolating with the boundary spacing
    cell = np.clip(lo, -1, n_sub - 1)
    below = cell < 0
    above = cell >= n_sub - 1
    inner = ~(below | above)
    out[inner] = sub_vals[cell[inner]] + frac[inner] * (
        sub_vals[cell[inner] + 1] - sub_vals[cell[inner]]
    )
    step_lo = sub_vals[1] - sub_vals[0]
    step_hi = sub_vals[-1] - sub_vals[-2]
    out[below] = sub_vals[0] + k[below] * step_lo
    out[above] = sub_vals[-1] + (k[above] - (n_sub - 1)) * step_hi
    return out


class _PowerGridBuilder:
    """Shared machinery for the (2^r+1)^d lattice, with optional padding."""

    def __init__(self, r: int, d: int, l: int, augment: bool):
        self.r = r
        self.d = d
        self.l = l
        self.augment = augment
        self.j0 = _grid_first_layer(l)
        # corner parents plus the node span at most l pool cells per axis
        self.c_l = max(2 * l, 1)

    def run(self):
        r, d = self.r, self.d
        scale = 2**r
        coords_list: list[np.ndarray] = []
        layer_list: list[int] = []
        aug_list: list[bool] = []
        position: dict[tuple[int, ...], int] = {}

        def add_nodes(pts: np.ndarray, j: int):
            for row in pts:
                key = tuple(np.round(row * scale).astype(int))
                if key in position:
                    continue
                position[key] = len(coords_list)
                coords_list.append(row)
                layer_list.append(j)
                aug_list.append(bool(np.any((row < -LATTICE_TOL) | (row > 1 + LATTICE_TOL))))

        for j in range(0, r + 1):
            add_nodes(self._layer_points(j), j)

        coords = np.array(coords_list, dtype=float).reshape(len(coords_list), d)
        layers = np.array(layer_list, dtype=int)
        aug = np.array(aug_list, dtype=bool)

        parents: list[np.ndarray] = []
        layer_starts = np.searchsorted(layers, np.arange(layers.max() + 2))
        for i in range(coords.shape[0]):
            j = layers[i]
            if j == 0:
                parents.append(np.zeros(0, dtype=int))
            elif j < self.j0:
                parents.append(np.arange(layer_starts[j], dtype=int))
            else:
                pools = self._pools(coords[: layer_starts[j]])
                pa_pts = corner_set(coords[i], pools, self.l)
                pa_idx = []
                for p in pa_pts:
                    key = tuple(np.round(p * scale).astype(int))
                    if key not in position or position[key] >= layer_starts[j]:
                        raise VecdagError("corner parent missing from earlier layers")
                    pa_idx.append(position[key])
                parents.append(np.array(pa_idx, dtype=int))
        return coords, layers, parents, aug

    def _layer_points(self, j: int) -> np.ndarray:
        """Level-j lattice candidates in the layer's box, lexicographically sorted.

        Points already placed on coarser layers are filtered out by the
        caller's position map, so the set difference is implicit.
        """
        if self.augment and self.j0 <= j <= self.r - 1:
            margin = 4 * self.c_l  # in units of 2^-j
            span = np.arange(-margin, 2**j + margin + 1)
        else:
            span = np.arange(0, 2**j + 1)
        mesh = np.meshgrid(*([span] * self.d), indexing="ij")
        t = np.stack([m.ravel() for m in mesh], axis=1)
        lex = np.lexsort(tuple(t[:, h] for h in reversed(range(self.d))))
        return t[lex] / 2**j

    def _pools(self, earlier: np.ndarray) -> list[np.ndarray]:
        return [np.unique(earlier[:, h]) for h in range(self.d)]


def maximin_order(points: np.ndarray, seed: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Order points so each one is far (sup-norm) from all earlier ones.

    The first point is index 0 when ``seed`` is None, otherwise drawn
    uniformly. Each subsequent point maximizes the distance to the points
    already ordered, ties resolved toward the lowest original index.

    Returns
    -------
    order : original indices in visit order
    dist : distance from each ordered point to its predecessors; the
        first entry is infinite
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    _check_distinct(points)
    n = points.shape[0]
    if seed is None:
        first = 0
    else:
        first = int(np.random.default_rng(seed).integers(n))
    order = np.empty(n, dtype=int)
    dist = np.empty(n, dtype=float)
    order[0] = first
    dist[0] = np.inf
    best = cdist(points, points[first : first + 1], metric="chebyshev").ravel()
    best[first] = -np.inf
    for k in range(1, n):
        nxt = int(np.argmax(best))
        order[k] = nxt
        dist[k] = best[nxt]
        best = np.minimum(
            best, cdist(points, points[nxt : nxt + 1], metric="chebyshev").ravel()
        )
        best[nxt] = -np.inf
    return order, dist


def _layers_from_dist(dist: np.ndarray, gamma: float) -> np.ndarray:
    """Layer labels from predecessor distances: gamma^-j resolution bands."""
    layer = np.zeros(dist.size, dtype=int)
    finite = np.isfinite(dist)
    raw = np.log(1.0 / dist[finite]) / np.log(gamma)
    layer[finite] = np.maximum(0, np.floor(raw + 1e-9).astype(int))
    return layer


def build_general_dag(
    points: np.ndarray,
    l: int,
    gamma: float = 2.0,
    c_s_init: float = 1.0,
    eps_tol: float = 1e-6,
    seed: int | None = None,
) -> LayeredDag:
    """Build a layered DAG on scattered points with well-spread parents.

    Points are maximin ordered and layered by predecessor distance.
    Early layers, while fewer than C(l+d, l) candidates exist, take every
    earlier-layer node as parents. Later nodes greedily accept nearby
    earlier-layer candidates whose scaled monomial matrix keeps its
    smallest singular value above a threshold that halves after each
    unsuccessful sweep; any shortfall is filled with the nearest
    remaining candidates.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    from .polynomials import scaled_min_singular

    order, dist = maximin_order(points, seed=seed)
    pts = points[order]
    layer = _layers_from_dist(dist, gamma)
    n, d = pts.shape
    m = basis_size(l, d)

    counts = np.bincount(layer)
    cum_before = np.concatenate([[0], np.cumsum(counts)])
    j0 = 0
    for j in range(counts.size):
        if cum_before[j] < m:
            j0 = j
    layer_starts = np.searchsorted(layer, np.arange(counts.size + 1))

    parents: list[np.ndarray] = []
    for i in range(n):
        j = layer[i]
        if j == 0:
            parents.append(np.zeros(0, dtype=int))
            continue
        candidates = np.arange(layer_starts[j])
        if j <= j0:
            parents.append(candidates)
            continue
        dists = np.linalg.norm(pts[candidates] - pts[i], axis=1)
        ranked = candidates[np.argsort(dists, kind="stable")].tolist()
        accepted: list[int] = []
        c_s = c_s_init
        while c_s > eps_tol and len(accepted) < m:
            remaining = []
            for pos, cand in enumerate(ranked):
                if len(accepted) == m:
                    remaining.extend(ranked[pos:])
                    break
                sigma = scaled_min_singular(
                    pts[accepted], pts[cand], pts[i], j, gamma, l
                )
                if sigma >= c_s:
                    accepted.append(cand)
                else:
                    remaining.append(cand)
            ranked = remaining
            c_s *= 0.5
        if len(accepted) < m:
            short = m - len(accepted)
            accepted.extend(ranked[:short])
        parents.append(np.array(sorted(accepted), dtype=int))

    dag = LayeredDag(
        points=pts,
        layer=layer,
        parents=parents,
        gamma=gamma,
        order_l=l,
        m=m,
        construction="general",
    )
    dag.i0 = _first_full_parent_index(parents, m)
    return dag


def build_maximin_nngp_dag(
    points: np.ndarray, parent_count: int, seed: int | None = None
) -> LayeredDag:
    """Nearest-neighbor baseline: maximin order, closest earlier points as parents."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    order, dist = maximin_order(points, seed=seed)
    pts = points[order]
    n = pts.shape[0]
    parents: list[np.ndarray] = []
    for i in range(n):
        k = min(parent_count, i)
        if k == 0:
            parents.append(np.zeros(0, dtype=int))
            continue
        dists = np.linalg.norm(pts[:i] - pts[i], axis=1)
        nearest = np.argsort(dists, kind="stable")[:k]
        parents.append(np.sort(nearest).astype(int))
    dag = LayeredDag(
        points=pts,
        layer=_layers_from_dist(dist, 2.0),
        parents=parents,
        gamma=2.0,
        order_l=0,
        m=parent_count,
        construction="maximin-nngp",
    )
    dag.i0 = _first_full_parent_index(parents, parent_count)
    return dag


def build_full_dag(points: np.ndarray) -> LayeredDag:
    """Saturated reference DAG: every node conditions on all predecessors."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    _check_distinct(points)
    n = points.shape[0]
    parents = [np.arange(i, dtype=int) for i in range(n)]
    return LayeredDag(
        points=points,
        layer=np.arange(n, dtype=int),
        parents=parents,
        gamma=2.0,
        order_l=0,
        m=max(n - 1, 0),
        construction="full",
        i0=max(n - 1, 0),
    )


@dataclass(frozen=True)
class DagValidation:
    """Measured layered-DAG health: parent spread and layer separation."""

    node_norming_constants: np.ndarray
    layer_min_separation: dict[int, float]
    measured_separation_factor: float
    norming_max: float
    norming_ok: bool
    layered_ok: bool

    def to_dict(self) -> dict:
        finite = np.isfinite(self.norming_max)
        return {
            "norming_ok": bool(self.norming_ok),
            "layered_ok": bool(self.layered_ok),
            "norming_max": float(self.norming_max) if finite else "infinite",
            "measured_separation_factor": float(self.measured_separation_factor),
            "layer_min_separation": {
                str(j): float(s) for j, s in self.layer_min_separation.items()
            },
        }


def validate_dag(dag: LayeredDag, norming_bound: float = np.inf) -> DagValidation:
    """Check the two structural conditions a layered DAG is meant to satisfy.

    For every node with a full corner-size parent set, the parent set's
    norming constant is computed over the enclosing cube of the node and
    its parents; the layered check measures the minimum sup-norm
    separation of each cumulative layer union against the gamma^-j decay
    it should follow, and verifies parents sit on strictly earlier layers.
    """
    n, d = dag.points.shape
    m_full = basis_size(dag.order_l, d)
    resolution = 2**9 + 1 if d == 1 else 65
    constants = np.full(n, np.nan)
    for i in range(n):
        pa = dag.parents[i]
        if len(pa) != m_full or len(pa) == 0:
            continue
        cloud = np.vstack([dag.points[pa], dag.points[i : i + 1]])
        corner = cloud.min(axis=0)
        side = float((cloud.max(axis=0) - corner).max())
        if side <= 0:
            continue
        constants[i] = norming_constant(
            dag.points[pa], (corner, side), dag.order_l, resolution=resolution
        )

    layered_ok = True
    for i in range(n):
        j = dag.layer[i]
        if j >= 1 and len(dag.parents[i]):
            if np.any(dag.layer[dag.parents[i]] >= j):
                layered_ok = False
                break

    separations: dict[int, float] = {}
    factor = np.inf
    for j in sorted(set(dag.layer.tolist())):
        union = dag.points[dag.layer <= j]
        if union.shape[0] < 2:
            continue
        pair = cdist(union, union, metric="chebyshev")
        np.fill_diagonal(pair, np.inf)
        sep = float(pair.min())
        separations[int(j)] = sep
        factor = min(factor, sep * dag.gamma**j)
    if not separations:
        factor = np.nan
    if factor == 0:
        layered_ok = False

    evaluated = constants[~np.isnan(constants)]
    norming_max = float(np.max(evaluated)) if evaluated.size else np.nan
    norming_ok = not np.any(np.isinf(evaluated)) and (
        np.isnan(norming_max) or norming_max <= norming_bound
    )
    return DagValidation(
        node_norming_constants=constants,
        layer_min_separation=separations,
        measured_separation_factor=factor,
        norming_max=norming_max,
        norming_ok=bool(norming_ok),
        layered_ok=bool(layered_ok),
    )
