"""Queen-adjacency lattice graph and intrinsic autoregressive (ICAR) densities.

The graph is built once from grid coordinates and is immutable afterwards;
every spatial prior in the model queries it through the two ICAR operations
below.  The joint ICAR density is evaluated in pairwise-difference form,
``-(1/(2 v)) * sum over neighbor pairs (x_i - x_j)^2``, never through the
dense ``D - A`` matrix, so graphs with thousands of sites stay cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GridError

__all__ = [
    "GridSpec",
    "LatticeGraph",
    "build_queen_adjacency",
    "make_grid",
    "icar_conditional",
    "icar_log_density_unnormalized",
    "pairwise_diff_ss",
]


@dataclass(frozen=True)
class GridSpec:
    """One lattice cell: external 1-based id plus integer grid coordinates."""

    site_id: int
    row: int
    col: int


@dataclass(frozen=True)
class LatticeGraph:
    """Immutable adjacency structure over ``n_sites`` lattice cells.

    ``neighbors[i]`` holds the 0-based indices adjacent to site ``i``;
    ``degree[i]`` is its count; ``edges`` lists each unordered neighbor pair
    exactly once with ``edges[:, 0] < edges[:, 1]``.
    """

    n_sites: int
    neighbors: tuple[np.ndarray, ...]
    degree: np.ndarray
    edges: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n_sites < 2:
            raise GridError("a lattice needs at least 2 sites", code="GRID_TOO_SMALL")
        for i, nbrs in enumerate(self.neighbors):
            if nbrs.size == 0:
                raise GridError(
                    f"site index {i} has no neighbors", code="GRID_ISOLATED_SITE"
                )
            if i in nbrs:
                raise GridError(f"site index {i} is its own neighbor")
            for j in nbrs:
                if i not in self.neighbors[j]:
                    raise GridError(
                        f"adjacency not symmetric between {i} and {j}"
                    )


def make_grid(n_rows: int, n_cols: int) -> list[GridSpec]:
    """Full rectangular grid with row-major site ids 1..n_rows*n_cols."""
    return [
        GridSpec(site_id=r * n_cols + c + 1, row=r, col=c)
        for r in range(n_rows)
        for c in range(n_cols)
    ]


def build_queen_adjacency(grid: list[GridSpec]) -> LatticeGraph:
    """Build the queen-adjacency graph: cells sharing an edge or corner.

    Sites are indexed 0..I-1 in order of ascending ``site_id``.  Duplicate
    coordinates and isolated cells are construction errors.
    """
    if len(grid) < 2:
        raise GridError("a lattice needs at least 2 sites", code="GRID_TOO_SMALL")
    cells = sorted(grid, key=lambda g: g.site_id)
    ids = [g.site_id for g in cells]
    if ids != list(range(1, len(cells) + 1)):
        raise GridError(
            "site_id values must be contiguous 1..I", code="GRID_BAD_IDS"
        )
    coord_to_index: dict[tuple[int, int], int] = {}
    for idx, g in enumerate(cells):
        key = (g.row, g.col)
        if key in coord_to_index:
            raise GridError(
                f"duplicate cell coordinates {key} (site_id {g.site_id})",
                code="GRID_DUPLICATE_CELL",
            )
        coord_to_index[key] = idx

    offsets = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]
    neighbors = []
    for g in cells:
        nbrs = [
            coord_to_index[(g.row + dr, g.col + dc)]
            for dr, dc in offsets
            if (g.row + dr, g.col + dc) in coord_to_index
        ]
        if not nbrs:
            raise GridError(
                f"site_id {g.site_id} at {(g.row, g.col)} has no neighbors",
                code="GRID_ISOLATED_SITE",
            )
        neighbors.append(np.array(sorted(nbrs), dtype=np.int64))

    degree = np.array([n.size for n in neighbors], dtype=np.int64)
    edges = np.array(
        [(i, j) for i, nbrs in enumerate(neighbors) for j in nbrs if i < j],
        dtype=np.int64,
    )
    return LatticeGraph(
        n_sites=len(cells),
        neighbors=tuple(neighbors),
        degree=degree,
        edges=edges,
    )


def icar_conditional(
    values: np.ndarray, i: int, variance: float, graph: LatticeGraph
) -> tuple[float, float]:
    """Conditional law of site ``i`` given the rest of an ICAR field.

    Returns ``(mean, var)`` where mean is the arithmetic mean of the
    neighbors' values and var is ``variance / degree(i)``.
    """
    if variance <= 0:
        raise ValueError("variance must be positive")
    nbrs = graph.neighbors[i]
    return float(np.mean(values[nbrs])), variance / graph.degree[i]


def pairwise_diff_ss(values: np.ndarray, graph: LatticeGraph) -> float:
    """Sum of squared differences over unordered neighbor pairs."""
    d = values[graph.edges[:, 0]] - values[graph.edges[:, 1]]
    return float(np.dot(d, d))


def icar_log_density_unnormalized(
    values: np.ndarray, variance: float, graph: LatticeGraph
) -> float:
    """Log of the improper joint ICAR density, up to its (absent) constant."""
    if variance <= 0:
        raise ValueError("variance must be positive")
    return -0.5 * pairwise_diff_ss(values, graph) / variance
