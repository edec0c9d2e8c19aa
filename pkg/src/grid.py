"""
Grid module with the radial discretization of R^d.

A radial function u(|x|) is stored by its samples on a uniform mesh
r_i = i * dr of [0, r_max]. Integrals over R^d become weighted sums with
trapezoid weights that carry the sphere area and the r^(d-1) Jacobian.
"""

import logging
from typing import Tuple

import numpy as np
from scipy.special import gamma

from src.errors import FieldError, GridError

logger = logging.getLogger(__name__)

MIN_NODES = 16


def sphere_area(dim: int) -> float:
    """Area of the unit (dim-1)-sphere, 2 pi^(d/2) / Gamma(d/2)."""
    return float(2.0 * np.pi ** (dim / 2.0) / gamma(dim / 2.0))


def ball_volume(dim: int, radius: float) -> float:
    """Volume of the radius-`radius` ball in R^dim."""
    return float(np.pi ** (dim / 2.0) * radius**dim / gamma(dim / 2.0 + 1.0))


class RadialGrid:
    """
    Uniform radial mesh on [0, r_max] together with its quadrature weights.

    Instances are immutable: the node and weight arrays are flagged read-only
    so a grid can be shared between threads.
    """

    def __init__(self, dim: int, n: int, r_max: float):
        """
        Initialize a new RadialGrid. Use make_grid() to get validation.

        Args:
            dim: Spatial dimension d
            n: Number of nodes, including r = 0 and r = r_max
            r_max: Radius of the computational ball
        """
        self._dim = int(dim)
        self._n = int(n)
        self._r_max = float(r_max)
        self._dr = self._r_max / (self._n - 1)

        nodes = np.arange(self._n, dtype=float) * self._dr
        nodes[-1] = self._r_max
        endpoint = np.ones(self._n)
        endpoint[0] = endpoint[-1] = 0.5
        weights = sphere_area(self._dim) * nodes ** (self._dim - 1) * self._dr * endpoint

        nodes.flags.writeable = False
        weights.flags.writeable = False
        self._nodes = nodes
        self._weights = weights

    @property
    def dim(self) -> int:
        """Spatial dimension d."""
        return self._dim

    @property
    def n(self) -> int:
        """Number of nodes."""
        return self._n

    @property
    def r_max(self) -> float:
        """Outer radius, where the Dirichlet wall sits."""
        return self._r_max

    @property
    def dr(self) -> float:
        """Mesh spacing."""
        return self._dr

    @property
    def nodes(self) -> np.ndarray:
        """Radii r_i."""
        return self._nodes

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weights w_i with sum(w_i f(r_i)) ~ integral of f over the ball."""
        return self._weights

    @property
    def critical_exponent(self) -> float:
        """Sobolev exponent 2* = 2d/(d-2)."""
        return 2.0 * self._dim / (self._dim - 2)

    @property
    def subcritical_exponent(self) -> float:
        """Exponent (2d+2)/(d-1) of the defocusing potential energy."""
        return (2.0 * self._dim + 2.0) / (self._dim - 1)

    def same_as(self, other: "RadialGrid") -> bool:
        """Whether two grids describe the same mesh."""
        return (
            self._dim == other.dim
            and self._n == other.n
            and self._r_max == other.r_max
        )

    def __repr__(self) -> str:
        return f"RadialGrid(dim={self._dim}, n={self._n}, r_max={self._r_max:g})"


class RadialField:
    """
    Complex samples u(r_i) of a radial function on a RadialGrid.
    """

    def __init__(self, grid: RadialGrid, values: np.ndarray):
        """
        Initialize a new RadialField.

        Args:
            grid: The grid the samples live on
            values: Complex samples, one per node

        Raises:
            FieldError: If the length is wrong or a sample is not finite
        """
        values = np.array(values, dtype=complex)
        if values.shape != (grid.n,):
            raise FieldError(f"expected {grid.n} samples, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise FieldError("field contains non-finite samples")
        values.flags.writeable = False
        self._grid = grid
        self._values = values

    @property
    def grid(self) -> RadialGrid:
        """The grid the field is sampled on."""
        return self._grid

    @property
    def values(self) -> np.ndarray:
        """Read-only complex samples."""
        return self._values

    @property
    def modulus(self) -> np.ndarray:
        """Pointwise |u(r_i)|."""
        return np.abs(self._values)

    def with_values(self, values: np.ndarray) -> "RadialField":
        """A new field on the same grid."""
        return RadialField(self._grid, values)

    @classmethod
    def zeros(cls, grid: RadialGrid) -> "RadialField":
        """The zero field on `grid`."""
        return cls(grid, np.zeros(grid.n, dtype=complex))


def make_grid(dim: int, n: int, r_max: float) -> RadialGrid:
    """
    Build a validated radial grid.

    Args:
        dim: Spatial dimension, at least 3
        n: Node count, at least 16
        r_max: Finite positive radius

    Returns:
        The grid

    Raises:
        GridError: On any violated precondition
    """
    if int(dim) != dim or dim < 3:
        raise GridError(f"dimension must be an integer >= 3, got {dim}")
    if int(n) != n or n < MIN_NODES:
        raise GridError(f"need at least {MIN_NODES} nodes, got {n}")
    if not np.isfinite(r_max) or r_max <= 0:
        raise GridError(f"r_max must be finite and positive, got {r_max}")
    if dim < 5:
        logger.warning("dimension %d < 5: the scattering and blow-up dichotomy needs d >= 5", dim)
    return RadialGrid(int(dim), int(n), float(r_max))


def integrate(grid: RadialGrid, samples: np.ndarray) -> float:
    """
    Integrate a radial function over the ball of radius r_max.

    Args:
        grid: The grid the samples live on
        samples: Real samples f(r_i)

    Returns:
        sum(w_i * f(r_i))
    """
    samples = np.asarray(samples, dtype=float)
    if samples.shape != (grid.n,):
        raise FieldError(f"expected {grid.n} samples, got shape {samples.shape}")
    if not np.all(np.isfinite(samples)):
        raise FieldError("integrand contains non-finite samples")
    return float(np.dot(grid.weights, samples))


def radial_derivative(f: RadialField) -> RadialField:
    """
    Second-order finite-difference u_r.

    Central differences inside, one-sided second-order at r_max, and u_r(0) = 0
    from the even reflection u(-dr) = u(dr).
    """
    du = np.gradient(f.values, f.grid.dr, edge_order=2)
    du[0] = 0.0
    return f.with_values(du)


def laplacian(f: RadialField) -> RadialField:
    """
    Central-difference radial Laplacian u_rr + (d-1)/r u_r.

    The origin uses the symmetry limit 2d (u_1 - u_0) / dr^2; the wall node is
    pinned by the Dirichlet condition and gets 0.
    """
    grid = f.grid
    u = f.values
    h = grid.dr
    r = grid.nodes
    lap = np.zeros_like(u)
    lap[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / h**2 + (grid.dim - 1) / r[1:-1] * (
        u[2:] - u[:-2]
    ) / (2.0 * h)
    lap[0] = 2.0 * grid.dim * (u[1] - u[0]) / h**2
    return f.with_values(lap)


def lp_norm(f: RadialField, p: float) -> float:
    """
    L^p(R^d) norm of a radial field; p = inf gives the max modulus.

    Raises:
        ValueError: If p < 1
    """
    if p < 1:
        raise ValueError(f"L^p norm needs p >= 1, got {p}")
    if np.isinf(p):
        return float(np.max(f.modulus))
    return integrate(f.grid, f.modulus**p) ** (1.0 / p)


def flux_coefficients(grid: RadialGrid) -> np.ndarray:
    """Flux coefficients k_{i+1/2} for i = 0..n-2, with k_{1/2} = 0."""
    i = np.arange(0, grid.n - 1, dtype=float)
    return 2.0 * grid.dim * np.cumsum(i ** (grid.dim - 1)) / (2.0 * i + 1.0)


def edge_weights(grid: RadialGrid) -> np.ndarray:
    """
    Weights of the discrete Dirichlet form on the edges (i, i+1).

    sum(edge_weights * |u_{i+1} - u_i|^2) equals -<u, A u> for the operator A
    of flux_laplacian_bands whenever u(r_max) = 0.
    """
    return sphere_area(grid.dim) * grid.dr ** (grid.dim - 2) * flux_coefficients(grid)


def flux_laplacian_bands(grid: RadialGrid) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Tridiagonal bands of the conservative radial Laplacian on nodes 1..n-2.

    Row i reads (k_{i+1/2} (u_{i+1} - u_i) - k_{i-1/2} (u_i - u_{i-1})) / (i^(d-1) dr^2).
    Scaled by the quadrature weights the matrix is symmetric, so the operator
    is self-adjoint in the inner product sum(w_i conj(u_i) v_i). The flux
    coefficients solve k_{i+1/2} (2i+1) = k_{i-1/2} (2i-1) + 2d i^(d-1) with
    k_{1/2} = 0, which makes the operator exact on r^2 at every node; away
    from the origin k_{i+1/2} ~ (i + 1/2)^(d-1). The wall value is u(r_max) = 0.

    Returns:
        (lower, diag, upper), each of length n-2, in the layout of
        tridiag.solve_tridiag (lower[0] and upper[-1] are unused zeros)
    """
    h = grid.dr
    jacobian = np.arange(1, grid.n - 1, dtype=float) ** (grid.dim - 1)
    flux = flux_coefficients(grid)
    outer_flux = flux[1:]
    inner_flux = flux[:-1]
    lower = inner_flux / (jacobian * h**2)
    upper = outer_flux / (jacobian * h**2)
    diag = -(lower + upper)
    upper[-1] = 0.0
    return lower, diag, upper


def apply_flux_laplacian(f: RadialField) -> RadialField:
    """
    Apply the conservative Laplacian of flux_laplacian_bands to a field.

    Node 0 gets the origin limit of laplacian() and the wall node gets 0.
    """
    lower, diag, upper = flux_laplacian_bands(f.grid)
    u = f.values
    out = np.zeros_like(u)
    inner = u[1:-1]
    out[1:-1] = diag * inner
    out[2:-1] += lower[1:] * inner[:-1]
    out[1:-2] += upper[:-1] * inner[1:]
    out[0] = 2.0 * f.grid.dim * (u[1] - u[0]) / f.grid.dr**2
    return f.with_values(out)


def gradient_density(f: RadialField) -> np.ndarray:
    """
    Nodal density of |grad u|^2 that integrates to gradient_norm_sq(f).

    Each edge's share of the Dirichlet form is split evenly between its two
    end nodes and divided by the node's weight; the origin gets 0.
    """
    grid = f.grid
    half = 0.5 * edge_weights(grid) * np.abs(np.diff(f.values)) ** 2
    share = np.zeros(grid.n)
    share[:-1] += half
    share[1:] += half
    weights = grid.weights
    density = np.zeros(grid.n)
    density[1:] = share[1:] / weights[1:]
    return density


def gradient_norm_sq(f: RadialField) -> float:
    """
    ||grad u||_2^2 as the Dirichlet form of the conservative Laplacian.

    This is the kinetic part of the energy the Crank-Nicolson step conserves.
    """
    return float(np.dot(edge_weights(f.grid), np.abs(np.diff(f.values)) ** 2))
