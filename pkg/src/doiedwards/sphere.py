"""Discrete calculus on the unit sphere.

Scalar fields on S2 are held as coefficients in a real orthonormal
spherical-harmonic basis.  Ordering is degree-major and fixed for file
I/O: (l, m) with l = 0..L and m running from -l to l, flat index
l*(l+1) + m.  For m > 0 the basis function is

    sqrt(2) K(l,m) P_l^m(cos theta) cos(m phi),

for m < 0 the sin(|m| phi) partner, and K(l,0) P_l(cos theta) for m = 0,
where K(l,m) is the 4pi-orthonormalization constant.  The measure is the
plain surface measure, total mass 4pi.

Quadrature pairs Gauss-Legendre nodes in cos(theta) with a uniform
longitude grid.  The grid is sized with headroom (L+3 latitudes,
2L+6 longitudes) so integrands of combined degree up to 2L+5 are
integrated exactly.  That covers products of two basis functions plus
the degree-2 factor kappa:uu that the drift operator introduces, so all
quadratic terms are dealiased: pointwise products followed by analysis
give the exact orthogonal projection.

The drift field of the model is G(u) = kappa u - (kappa:uu) u, where
kappa:uu is the double contraction u . kappa u.  For traceless kappa it
satisfies the divergence identity div G = -3 kappa:uu.  Gradients are
synthesized from exact ladder relations for d/dtheta of the normalized
Legendre functions; the divergence is the quadrature adjoint of those
same synthesis matrices, which makes integration by parts

    int (div X) g dmu = - int X . grad g dmu

hold to rounding error by construction, not merely to truncation order.

Everything here is immutable after construction and safe to share
across threads.
"""

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import roots_legendre

from . import kernels

FOUR_PI = 4.0 * np.pi


class KappaTensor:
    """Constant traceless velocity-gradient tensor.

    The model requires tr kappa = 0 (incompressible flow).  The
    constructor projects out any trace part and warns when the
    correction exceeds rounding scale.
    """

    def __init__(self, entries):
        k = np.array(entries, dtype=np.float64).reshape(3, 3)
        tr = float(np.trace(k))
        scale = max(1.0, float(np.abs(k).max()))
        if abs(tr) > 1e-12 * scale:
            warnings.warn(
                "kappa has trace %.3e; projecting onto traceless part" % tr,
                stacklevel=2,
            )
        k = k - (tr / 3.0) * np.eye(3)
        k.flags.writeable = False
        self.entries = k

    @classmethod
    def shear(cls, rate=1.0):
        """Simple shear: single entry kappa[0,1] = rate."""
        k = np.zeros((3, 3))
        k[0, 1] = rate
        return cls(k)

    @classmethod
    def zero(cls):
        return cls(np.zeros((3, 3)))

    @property
    def norm(self):
        return float(np.linalg.norm(self.entries))

    def is_zero(self):
        return not self.entries.any()

    def key(self):
        """Hashable identity for caching factorizations."""
        return self.entries.tobytes()

    def dot(self, u):
        """kappa applied to vectors u, shape (..., 3)."""
        return u @ self.entries.T

    def contract_uu(self, u):
        """kappa:uu = u . kappa u for vectors u of shape (..., 3)."""
        return np.einsum("...i,ij,...j->...", u, self.entries, u)

    def __repr__(self):
        return "KappaTensor(%s)" % np.array2string(self.entries, separator=", ")


def g_vector(kappa, u):
    """Tangential drift G(u) = kappa u - (kappa:uu) u.

    Accepts a single unit vector or an array of shape (..., 3); the
    result is tangent to the sphere at each u up to rounding.
    """
    u = np.asarray(u, dtype=np.float64)
    return kappa.dot(u) - kappa.contract_uu(u)[..., None] * u


def _flat_index(l, m):
    return l * (l + 1) + m


@dataclass(frozen=True)
class SphereGrid:
    """Quadrature grid plus lazily built transform matrices."""

    degree: int
    cos_theta: np.ndarray = field(repr=False)
    gl_weights: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def n_theta(self):
        return self.cos_theta.shape[0]

    @property
    def n_phi(self):
        return self.phi.shape[0]

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_coeffs(self):
        return (self.degree + 1) ** 2

    @cached_property
    def _tables(self):
        """Scalar basis and angular-derivative matrices, node-major.

        Returns (Y, Tt, Tp): Y synthesizes node values from coefficients,
        Tt gives d/dtheta and Tp gives (1/sin theta) d/dphi.
        """
        L = self.degree
        A, dA = kernels.legendre_tables(self.cos_theta, L)
        sin_t = np.sqrt(1.0 - self.cos_theta**2)
        over = A / sin_t[:, None]

        nth, nph, M = self.n_theta, self.n_phi, self.n_coeffs
        Y = np.zeros((nth, nph, M))
        Tt = np.zeros((nth, nph, M))
        Tp = np.zeros((nth, nph, M))
        cos_m = np.cos(np.outer(np.arange(L + 1), self.phi))
        sin_m = np.sin(np.outer(np.arange(L + 1), self.phi))
        r2 = np.sqrt(2.0)
        for l in range(L + 1):
            for m in range(l + 1):
                t = l * (l + 1) // 2 + m
                if m == 0:
                    col = _flat_index(l, 0)
                    Y[:, :, col] = A[:, t, None]
                    Tt[:, :, col] = dA[:, t, None]
                else:
                    cc = _flat_index(l, m)
                    cs = _flat_index(l, -m)
                    Y[:, :, cc] = r2 * A[:, t, None] * cos_m[m]
                    Y[:, :, cs] = r2 * A[:, t, None] * sin_m[m]
                    Tt[:, :, cc] = r2 * dA[:, t, None] * cos_m[m]
                    Tt[:, :, cs] = r2 * dA[:, t, None] * sin_m[m]
                    Tp[:, :, cc] = -r2 * m * over[:, t, None] * sin_m[m]
                    Tp[:, :, cs] = r2 * m * over[:, t, None] * cos_m[m]
        shape = (nth * nph, M)
        return Y.reshape(shape), Tt.reshape(shape), Tp.reshape(shape)

    @cached_property
    def basis(self):
        """Synthesis matrix, shape (n_nodes, n_coeffs)."""
        return self._tables[0]

    @cached_property
    def grad_basis(self):
        """Cartesian surface-gradient synthesis matrices, shape (3, n_nodes, n_coeffs)."""
        _, Tt, Tp = self._tables
        cos_t = self.nodes[:, 2]
        sin_t = np.sqrt(1.0 - cos_t**2)
        cos_p = np.tile(np.cos(self.phi), self.n_theta)
        sin_p = np.tile(np.sin(self.phi), self.n_theta)
        e_theta = np.stack([cos_t * cos_p, cos_t * sin_p, -sin_t])
        e_phi = np.stack([-sin_p, cos_p, np.zeros_like(cos_p)])
        G = np.empty((3, self.n_nodes, self.n_coeffs))
        for k in range(3):
            G[k] = e_theta[k][:, None] * Tt + e_phi[k][:, None] * Tp
        return G

    def synthesis(self, coeffs):
        return self.basis @ coeffs

    def analysis(self, values):
        return self.basis.T @ (self.weights * values)

    def integrate(self, values):
        return float(self.weights @ values)

    def __eq__(self, other):
        return isinstance(other, SphereGrid) and other.degree == self.degree

    def __hash__(self):
        return hash(("SphereGrid", self.degree))


def harmonic_basis(cos_theta, phi, degree):
    """Basis synthesis matrix on an arbitrary outer-product grid.

    Rows follow the theta-major layout (point j = i_theta * len(phi) +
    i_phi), columns the usual flat harmonic ordering.  Used to evaluate
    coefficient data away from a SphereGrid's own quadrature nodes, for
    instance on a finite-difference mesh.
    """
    cos_theta = np.asarray(cos_theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    A, _ = kernels.legendre_tables(cos_theta, degree)
    nth, nph = cos_theta.shape[0], phi.shape[0]
    M = (degree + 1) ** 2
    Y = np.zeros((nth, nph, M))
    cos_m = np.cos(np.outer(np.arange(degree + 1), phi))
    sin_m = np.sin(np.outer(np.arange(degree + 1), phi))
    r2 = np.sqrt(2.0)
    for l in range(degree + 1):
        for m in range(l + 1):
            t = l * (l + 1) // 2 + m
            if m == 0:
                Y[:, :, _flat_index(l, 0)] = A[:, t, None]
            else:
                Y[:, :, _flat_index(l, m)] = r2 * A[:, t, None] * cos_m[m]
                Y[:, :, _flat_index(l, -m)] = r2 * A[:, t, None] * sin_m[m]
    return Y.reshape(nth * nph, M)


def build_grid(L):
    """Quadrature grid exact through combined degree 2L+5.

    Uses L+3 Gauss-Legendre latitudes and 2L+6 uniform longitudes; node
    count is Theta(L^2).  Transform matrices are built lazily on first
    use, so constructing a grid is cheap even at large L.
    """
    if not (2 <= int(L) <= 128):
        raise ValueError("degree L must satisfy 2 <= L <= 128, got %r" % (L,))
    L = int(L)
    n_theta = L + 3
    n_phi = 2 * L + 6
    x, v = roots_legendre(n_theta)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    sin_t = np.sqrt(1.0 - x**2)
    # theta-major node layout: node j = i_theta * n_phi + i_phi
    u = np.empty((n_theta * n_phi, 3))
    u[:, 0] = np.outer(sin_t, np.cos(phi)).ravel()
    u[:, 1] = np.outer(sin_t, np.sin(phi)).ravel()
    u[:, 2] = np.repeat(x, n_phi)
    w = np.repeat(v, n_phi) * (2.0 * np.pi / n_phi)
    for arr in (x, v, phi, u, w):
        arr.flags.writeable = False
    return SphereGrid(degree=L, cos_theta=x, gl_weights=v, phi=phi, nodes=u, weights=w)


class SphereField:
    """Scalar field on S2 held as harmonic coefficients.

    Immutable; arithmetic returns new fields.  Node values are
    synthesized lazily and cached.  A field built from node samples
    keeps the samples it was given (its coefficients are the degree-L
    orthogonal projection), so pointwise quantities like tangency and
    positivity are judged on the original data.
    """

    __slots__ = ("grid", "coeffs", "_values")

    def __init__(self, grid, coeffs, _values=None):
        coeffs = np.asarray(coeffs, dtype=np.float64)
        if coeffs.shape != (grid.n_coeffs,):
            raise ValueError(
                "expected %d coefficients, got shape %r" % (grid.n_coeffs, coeffs.shape)
            )
        self.grid = grid
        c = coeffs.copy()
        c.flags.writeable = False
        self.coeffs = c
        self._values = _values

    @classmethod
    def from_coeffs(cls, grid, coeffs):
        return cls(grid, coeffs)

    @classmethod
    def from_values(cls, grid, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (grid.n_nodes,):
            raise ValueError(
                "expected %d node values, got shape %r" % (grid.n_nodes, values.shape)
            )
        v = values.copy()
        v.flags.writeable = False
        return cls(grid, grid.analysis(values), _values=v)

    @classmethod
    def from_function(cls, grid, fn):
        return cls.from_values(grid, fn(grid.nodes))

    @classmethod
    def constant(cls, grid, value):
        coeffs = np.zeros(grid.n_coeffs)
        coeffs[0] = value * np.sqrt(FOUR_PI)
        return cls(grid, coeffs)

    @classmethod
    def zero(cls, grid):
        return cls(grid, np.zeros(grid.n_coeffs))

    @property
    def values(self):
        if self._values is None:
            v = self.grid.synthesis(self.coeffs)
            v.flags.writeable = False
            self._values = v
        return self._values

    def integral(self):
        """int f dmu, exact from the constant coefficient."""
        return float(self.coeffs[0]) * np.sqrt(FOUR_PI)

    def lp_norm(self, r):
        return lp_norm(self, r)

    def __add__(self, other):
        self._check_same_grid(other)
        return SphereField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check_same_grid(other)
        return SphereField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return SphereField(self.grid, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return SphereField(self.grid, -self.coeffs)

    def _check_same_grid(self, other):
        if other.grid is not self.grid and other.grid != self.grid:
            raise ValueError("fields live on different grids")

    def __repr__(self):
        return "SphereField(L=%d, |c|=%.3e)" % (
            self.grid.degree,
            float(np.linalg.norm(self.coeffs)),
        )


class TangentField:
    """Tangent vector field stored as Cartesian components at nodes."""

    __slots__ = ("grid", "values", "_components")

    def __init__(self, grid, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (3, grid.n_nodes):
            raise ValueError("expected values of shape (3, n_nodes)")
        v = values.copy()
        v.flags.writeable = False
        self.grid = grid
        self.values = v
        self._components = None

    @property
    def components(self):
        """The three Cartesian components as SphereFields."""
        if self._components is None:
            self._components = tuple(
                SphereField.from_values(self.grid, self.values[k]) for k in range(3)
            )
        return self._components

    def max_normal_component(self):
        """max_j |X(u_j) . u_j|, which should vanish for a tangent field."""
        return float(np.abs(np.einsum("kj,jk->j", self.values, self.grid.nodes)).max())

    def dot_with(self, vecs):
        """Pointwise X . vecs for vecs of shape (n_nodes, 3); returns node array."""
        return np.einsum("kj,jk->j", self.values, vecs)


def surface_gradient(f):
    """Tangential gradient of a scalar field, exact at the grid nodes."""
    G = f.grid.grad_basis
    vals = np.stack([G[k] @ f.coeffs for k in range(3)])
    return TangentField(f.grid, vals)


def surface_divergence(X):
    """Divergence of a tangent field via the exact quadrature adjoint.

    Coefficients are -G_k^T (w X_k) summed over the Cartesian components,
    i.e. minus the adjoint of the gradient synthesis, so the duality
    <div X, g> = -<X, grad g> is exact in floating point.
    """
    grid = X.grid
    G = grid.grad_basis
    coeffs = np.zeros(grid.n_coeffs)
    for k in range(3):
        coeffs -= G[k].T @ (grid.weights * X.values[k])
    return SphereField(grid, coeffs)


def advect(kappa, f):
    """Drift term div(G f) computed as G . grad f - 3 (kappa:uu) f.

    Products are formed pointwise on the grid and re-analyzed; with the
    grid's quadrature headroom the analysis is the exact orthogonal
    projection onto degree L (no aliasing).
    """
    grid = f.grid
    g_nodes = g_vector(kappa, grid.nodes)
    grad = surface_gradient(f)
    vals = grad.dot_with(g_nodes) - 3.0 * kappa.contract_uu(grid.nodes) * f.values
    return SphereField.from_values(grid, vals)


def quadratic_moment(kappa, f):
    """int (kappa:uu) f dmu by quadrature (exact for band-limited f)."""
    grid = f.grid
    return grid.integrate(kappa.contract_uu(grid.nodes) * f.values)


def lp_norm(f, r):
    """L^r(S2) norm by quadrature of |f|^r; r may be numpy.inf."""
    if r == np.inf:
        return float(np.abs(f.values).max())
    r = float(r)
    if r < 1.0:
        raise ValueError("r must be >= 1")
    w = f.grid.weights
    return float((w @ np.abs(f.values) ** r) ** (1.0 / r))
