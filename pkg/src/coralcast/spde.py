"""Mesh, finite elements, and sparse precision matrices for the random field.

The spatial effect is a Matern-type Gaussian Markov random field built by
finite-element discretization on a triangulated mesh: with lumped mass
matrix C, stiffness matrix G and parameters kappa (inverse range) and tau
(inverse scale), the field precision is

    Q = tau^2 (kappa^4 C + 2 kappa^2 G + G C^-1 G)

which is the smoothness-one (alpha = 2) construction in two dimensions.
The mesh is a structured grid over the data bounding box plus an extension
margin, each square split into two triangles; structured meshing keeps
assembly deterministic and resolution-controlled, and the projection matrix
recovers arbitrary site locations by barycentric interpolation.

The temporal effect uses the intrinsic first-order random-walk structure
matrix; ``sum_to_zero_basis`` gives the reduced coordinates used to pin its
null space during inference.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .linalg import CholeskySolver

__all__ = [
    "Mesh",
    "FemSystem",
    "SpdeParams",
    "Rw1Structure",
    "Projection",
    "build_mesh",
    "assemble_fem",
    "spde_precision",
    "rw1_precision",
    "sum_to_zero_basis",
    "mesh_contains",
    "project",
    "sample_gmrf",
    "write_mesh_csv",
]

DEFAULT_EXTENSION = 0.5

_EPS = 1e-9


@dataclass(frozen=True)
class Mesh:
    nodes: np.ndarray       # (m, 2) lon/lat
    triangles: np.ndarray   # (k, 3) node indices
    origin: tuple[float, float]
    spacing: float
    shape: tuple[int, int]  # nodes per axis (nx, ny)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]


@dataclass(frozen=True)
class FemSystem:
    c_diag: np.ndarray      # lumped mass, one positive entry per node
    g: sp.csc_matrix        # stiffness

    @property
    def n_nodes(self) -> int:
        return self.c_diag.shape[0]


@dataclass(frozen=True)
class SpdeParams:
    log_kappa: float
    log_tau: float

    def __post_init__(self):
        if not (math.isfinite(self.log_kappa) and math.isfinite(self.log_tau)):
            raise ValueError("SPDE parameters must be finite")


@dataclass(frozen=True)
class Rw1Structure:
    years: tuple[int, ...]
    r: sp.csc_matrix


@dataclass(frozen=True)
class Projection:
    a: sp.csr_matrix        # sites x nodes, rows are barycentric weights


def build_mesh(sites: np.ndarray, extension: float = DEFAULT_EXTENSION,
               resolution: float = 0.1) -> Mesh:
    """Structured triangle mesh covering the sites plus an extension margin.

    Nodes sit on a regular grid at the given spacing; the extension pushes
    the mesh boundary away from the data so boundary effects of the SPDE
    stay off the region of interest.
    """
    sites = np.atleast_2d(np.asarray(sites, dtype=float))
    if sites.size == 0:
        raise ValueError("at least one site is required")
    if resolution <= 0:
        raise ValueError("mesh resolution must be positive")
    x0 = sites[:, 0].min() - extension
    x1 = sites[:, 0].max() + extension
    y0 = sites[:, 1].min() - extension
    y1 = sites[:, 1].max() + extension
    ncx = max(1, math.ceil((x1 - x0) / resolution - _EPS))
    ncy = max(1, math.ceil((y1 - y0) / resolution - _EPS))
    nx, ny = ncx + 1, ncy + 1
    xs = x0 + resolution * np.arange(nx)
    ys = y0 + resolution * np.arange(ny)
    gx, gy = np.meshgrid(xs, ys)               # row-major: node = iy*nx + ix
    nodes = np.column_stack([gx.ravel(), gy.ravel()])
    tris = []
    for iy in range(ncy):
        for ix in range(ncx):
            a = iy * nx + ix
            b = a + 1
            c = a + nx
            d = c + 1
            tris.append((a, b, d))
            tris.append((a, d, c))
    return Mesh(nodes=nodes, triangles=np.asarray(tris, dtype=np.int64),
                origin=(x0, y0), spacing=resolution, shape=(nx, ny))


def assemble_fem(mesh: Mesh) -> FemSystem:
    """Linear-element stiffness and lumped mass matrices.

    Per triangle with vertices p0,p1,p2 and area T the basis gradients are
    constant, giving the element stiffness T * grad_i . grad_j; the lumped
    mass spreads T/3 onto each vertex.
    """
    tri = mesh.triangles
    p = mesh.nodes
    v0, v1, v2 = p[tri[:, 0]], p[tri[:, 1]], p[tri[:, 2]]
    e1 = v1 - v0
    e2 = v2 - v0
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    area = 0.5 * np.abs(det)
    if np.any(area <= 0):
        raise ValueError("mesh contains a degenerate triangle")
    # gradients of the three barycentric basis functions
    gx = np.stack([v1[:, 1] - v2[:, 1], v2[:, 1] - v0[:, 1],
                   v0[:, 1] - v1[:, 1]], axis=1) / det[:, None]
    gy = np.stack([v2[:, 0] - v1[:, 0], v0[:, 0] - v2[:, 0],
                   v1[:, 0] - v0[:, 0]], axis=1) / det[:, None]
    n = mesh.n_nodes
    rows, cols, vals = [], [], []
    for i in range(3):
        for j in range(3):
            rows.append(tri[:, i])
            cols.append(tri[:, j])
            vals.append(area * (gx[:, i] * gx[:, j] + gy[:, i] * gy[:, j]))
    g = sp.coo_matrix(
        (np.concatenate(vals),
         (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsc()
    c_diag = np.zeros(n)
    for i in range(3):
        np.add.at(c_diag, tri[:, i], area / 3.0)
    return FemSystem(c_diag=c_diag, g=g)


def spde_precision(fem: FemSystem, params: SpdeParams) -> sp.csc_matrix:
    """Sparse Matern (alpha = 2) precision tau^2(k^4 C + 2 k^2 G + G C^-1 G)."""
    kappa2 = math.exp(2.0 * params.log_kappa)
    tau2 = math.exp(2.0 * params.log_tau)
    c = sp.diags(fem.c_diag)
    c_inv = sp.diags(1.0 / fem.c_diag)
    g = fem.g
    q = tau2 * (kappa2 * kappa2 * c + 2.0 * kappa2 * g + g @ c_inv @ g)
    q = (q + q.T) * 0.5  # symmetrize away round-off
    return sp.csc_matrix(q)


def rw1_precision(years, precision: float) -> tuple[Rw1Structure, sp.csc_matrix]:
    """First-difference structure matrix R and the scaled precision theta*R.

    R is intrinsic: v'Rv = sum (v_{t+1} - v_t)^2, with a single zero
    eigenvalue on constants.  The sum-to-zero constraint removing that null
    space is applied at inference time via ``sum_to_zero_basis``.
    """
    years = tuple(int(y) for y in years)
    if len(years) < 2:
        raise ValueError("random walk needs at least two years")
    if precision <= 0:
        raise ValueError("precision must be positive")
    t = len(years)
    main = np.full(t, 2.0)
    main[0] = main[-1] = 1.0
    off = np.full(t - 1, -1.0)
    r = sp.diags([off, main, off], offsets=(-1, 0, 1)).tocsc()
    return Rw1Structure(years=years, r=r), sp.csc_matrix(precision * r)


def sum_to_zero_basis(t: int) -> np.ndarray:
    """Basis B of the sum-to-zero subspace: v = B z with 1'v = 0 exactly."""
    if t < 2:
        raise ValueError("need at least two coordinates")
    b = np.vstack([np.eye(t - 1), -np.ones(t - 1)])
    return b


def mesh_contains(mesh: Mesh, sites: np.ndarray) -> np.ndarray:
    """Boolean mask of sites inside the mesh hull."""
    sites = np.atleast_2d(np.asarray(sites, dtype=float))
    nx, ny = mesh.shape
    h = mesh.spacing
    x0, y0 = mesh.origin
    u = (sites[:, 0] - x0) / h
    v = (sites[:, 1] - y0) / h
    return ((u >= -_EPS) & (u <= nx - 1 + _EPS)
            & (v >= -_EPS) & (v <= ny - 1 + _EPS))


def project(mesh: Mesh, sites: np.ndarray) -> Projection:
    """Barycentric projection rows mapping node values to site values."""
    sites = np.atleast_2d(np.asarray(sites, dtype=float))
    nx, ny = mesh.shape
    h = mesh.spacing
    x0, y0 = mesh.origin
    rows, cols, vals = [], [], []
    for i, (x, y) in enumerate(sites):
        u = (x - x0) / h
        v = (y - y0) / h
        if not (-_EPS <= u <= nx - 1 + _EPS and -_EPS <= v <= ny - 1 + _EPS):
            raise ValueError(f"site ({x}, {y}) outside mesh hull")
        ix = min(int(math.floor(u)), nx - 2)
        iy = min(int(math.floor(v)), ny - 2)
        ix = max(ix, 0)
        iy = max(iy, 0)
        s = u - ix
        t = v - iy
        a = iy * nx + ix
        b = a + 1
        c = a + nx
        d = c + 1
        if s >= t:   # lower-right triangle (a, b, d)
            nodes = (a, b, d)
            weights = (1.0 - s, s - t, t)
        else:        # upper-left triangle (a, d, c)
            nodes = (a, d, c)
            weights = (1.0 - t, s, t - s)
        kept = [(nd, w) for nd, w in zip(nodes, weights) if w > 1e-9]
        total = sum(w for _, w in kept)
        for nd, w in kept:
            rows.append(i)
            cols.append(nd)
            vals.append(w / total)
    a_mat = sp.csr_matrix((vals, (rows, cols)),
                          shape=(sites.shape[0], mesh.n_nodes))
    return Projection(a=a_mat)


def sample_gmrf(q, seed: int | np.random.SeedSequence) -> np.ndarray:
    """One zero-mean draw with covariance Q^{-1}, deterministic per seed."""
    solver = q if isinstance(q, CholeskySolver) else CholeskySolver(q)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(solver.n)
    return solver.sample(z)


def write_mesh_csv(nodes_path, triangles_path, mesh: Mesh) -> None:
    """Diagnostic dump of nodes and triangle index triples."""
    with open(nodes_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "lon", "lat"])
        for i, (x, y) in enumerate(mesh.nodes):
            writer.writerow([i, f"{x:.10g}", f"{y:.10g}"])
    with open(triangles_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["a", "b", "c"])
        for a, b, c in mesh.triangles:
            writer.writerow([a, b, c])
