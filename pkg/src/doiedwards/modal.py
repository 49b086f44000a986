"""Sine-mode algebra in the tube coordinate.

A field f(s,u) on ]0,1[ x S2 with f(0,.) = f(1,.) = 0 is expanded as

    f(s,u) = sum_{n=1}^{N} f_n(u) H_n(s),    H_n(s) = sqrt(2) sin(n pi s),

with each f_n a SphereField on a shared grid.  This module supplies the
projections onto that basis, the running-moment profile kappa:lambda(f)
(a cosine series in s), the bilinear coupling B built from it, and the
norms and functionals the solver's estimates are phrased in.

All s-integrals of trigonometric products are evaluated in closed form
through the overlap J(k,n) = int_0^1 sin(k pi s) cos(n pi s) ds, never
by quadrature, so the sphere discretization is the only spatial error
source.  1-D quadrature appears only in project_sine for arbitrary
user-supplied integrands.
"""

import numpy as np
from scipy.special import roots_legendre

from . import kernels
from .sphere import FOUR_PI, SphereField, g_vector, quadratic_moment, surface_gradient

INV_4PI = 1.0 / FOUR_PI


def one_n(n):
    """Sine coefficient of the constant 1: sqrt(2)(1-(-1)^n)/(n pi).

    Vanishes for even n; 2 sqrt(2)/(n pi) for odd n.
    """
    n = int(n)
    if n < 1:
        raise ValueError("mode index must be >= 1")
    return np.sqrt(2.0) * (1.0 - (-1.0) ** n) / (n * np.pi)


def one_vector(n_modes):
    """Array of one_n(n) for n = 1..n_modes."""
    n = np.arange(1, n_modes + 1)
    return np.sqrt(2.0) * (1.0 - (-1.0) ** n) / (n * np.pi)


def sine_overlap(k, n):
    """J(k,n) = int_0^1 sin(k pi s) cos(n pi s) ds for integers k, n >= 0.

    Equals 2k/(pi (k^2 - n^2)) when k+n is odd and 0 otherwise (parity
    rules out the k = +-n degeneracy).  Vectorized over k.
    """
    k = np.asarray(k)
    n = int(n)
    out = np.zeros(np.shape(k), dtype=np.float64)
    odd = (k + n) % 2 != 0
    np.divide(2.0 * k, np.pi * (k * k - n * n), out=out, where=odd)
    return out if out.shape else float(out)


class ModalField:
    """Stack of sine-mode SphereFields sharing one grid.

    Mode coefficients live in a (n_modes, n_coeffs) array; row n-1 holds
    mode n.  Immutable; arithmetic returns new instances.
    """

    __slots__ = ("grid", "coeffs", "_node_values")

    def __init__(self, grid, coeffs):
        coeffs = np.asarray(coeffs, dtype=np.float64)
        if coeffs.ndim != 2 or coeffs.shape[1] != grid.n_coeffs:
            raise ValueError(
                "expected coefficients of shape (N, %d), got %r"
                % (grid.n_coeffs, coeffs.shape)
            )
        self.grid = grid
        c = coeffs.copy()
        c.flags.writeable = False
        self.coeffs = c
        self._node_values = None

    @classmethod
    def zeros(cls, n_modes, grid):
        return cls(grid, np.zeros((n_modes, grid.n_coeffs)))

    @classmethod
    def from_modes(cls, modes):
        if not modes:
            raise ValueError("need at least one mode")
        grid = modes[0].grid
        return cls(grid, np.stack([m.coeffs for m in modes]))

    @property
    def n_modes(self):
        return self.coeffs.shape[0]

    def mode(self, n):
        """Mode n as a SphereField (1-based)."""
        if not (1 <= n <= self.n_modes):
            raise IndexError("mode %d out of range 1..%d" % (n, self.n_modes))
        return SphereField(self.grid, self.coeffs[n - 1])

    def node_values(self):
        """Node synthesis of every mode, shape (n_modes, n_nodes); cached."""
        if self._node_values is None:
            v = self.coeffs @ self.grid.basis.T
            v.flags.writeable = False
            self._node_values = v
        return self._node_values

    def mode_l1_norms(self):
        return np.abs(self.node_values()) @ self.grid.weights

    def mode_lp_norms(self, r):
        if r == np.inf:
            return np.abs(self.node_values()).max(axis=1)
        return (np.abs(self.node_values()) ** r @ self.grid.weights) ** (1.0 / r)

    def mode_integrals(self):
        """int f_n dmu for every n, from the constant coefficients."""
        return self.coeffs[:, 0] * np.sqrt(FOUR_PI)

    def max_mode_l1(self):
        return float(self.mode_l1_norms().max()) if self.n_modes else 0.0

    def __add__(self, other):
        self._check(other)
        return ModalField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return ModalField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return ModalField(self.grid, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return ModalField(self.grid, -self.coeffs)

    def _check(self, other):
        if self.grid != other.grid or self.n_modes != other.n_modes:
            raise ValueError("modal fields are not compatible")

    def __repr__(self):
        return "ModalField(N=%d, L=%d)" % (self.n_modes, self.grid.degree)


def _gauss_panels(n_panels, n_points=6):
    """Composite Gauss-Legendre rule on [0,1]: returns (points, weights)."""
    x, w = roots_legendre(n_points)
    h = 1.0 / n_panels
    left = h * np.arange(n_panels)
    pts = (left[:, None] + 0.5 * h * (x[None, :] + 1.0)).ravel()
    wts = np.broadcast_to(0.5 * h * w, (n_panels, n_points)).ravel()
    return pts, wts


def sine_coefficients(fn, n_modes):
    """Sine coefficients of a scalar function of s by composite quadrature.

    fn maps a float s to a float; returns int_0^1 fn(s) H_n(s) ds for
    n = 1..n_modes.  The rule uses 4 n_modes panels, enough to resolve
    H_{n_modes} to rounding.
    """
    pts, wts = _gauss_panels(4 * n_modes)
    samples = np.array([float(fn(s)) for s in pts])
    n = np.arange(1, n_modes + 1)
    H = np.sqrt(2.0) * np.sin(np.pi * np.outer(n, pts))
    return H @ (wts * samples)


def project_sine(fn, n_modes, grid):
    """Project a field-valued function of s onto the sine modes.

    fn maps a float s to node values on the grid (array of length
    n_nodes) or to a float for functions constant in u.  Returns the
    ModalField of g_n(u) = int_0^1 g(s,u) H_n(s) ds.  Finite sine sums
    are recovered exactly up to rounding.
    """
    pts, wts = _gauss_panels(4 * n_modes)
    samples = np.empty((pts.shape[0], grid.n_nodes))
    for i, s in enumerate(pts):
        samples[i] = fn(s)
    n = np.arange(1, n_modes + 1)
    H = np.sqrt(2.0) * np.sin(np.pi * np.outer(n, pts))
    mode_values = H @ (wts[:, None] * samples)
    coeffs = mode_values @ (grid.weights[:, None] * grid.basis)
    return ModalField(grid, coeffs)


class CosProfile:
    """Scalar profile c0 + sum_q c_q cos(q pi s) on [0,1]."""

    __slots__ = ("constant", "coeffs")

    def __init__(self, constant, coeffs):
        self.constant = float(constant)
        c = np.asarray(coeffs, dtype=np.float64).copy()
        c.flags.writeable = False
        self.coeffs = c

    @property
    def n_terms(self):
        return self.coeffs.shape[0]

    def __call__(self, s):
        s = np.asarray(s, dtype=np.float64)
        q = np.arange(1, self.n_terms + 1)
        return self.constant + np.cos(np.pi * np.multiply.outer(s, q)) @ self.coeffs

    def derivative(self, s):
        s = np.asarray(s, dtype=np.float64)
        q = np.arange(1, self.n_terms + 1)
        return -np.sin(np.pi * np.multiply.outer(s, q)) @ (np.pi * q * self.coeffs)

    def sup_abs(self, n_samples=513):
        return float(np.abs(self(np.linspace(0.0, 1.0, n_samples))).max())

    def sup_abs_derivative(self, n_samples=513):
        return float(np.abs(self.derivative(np.linspace(0.0, 1.0, n_samples))).max())


def lambda_profile(kappa, psi):
    """Tube-stretch profile kappa:lambda(psi) as a cosine series.

    lambda(psi)(s) = int_0^s int_S2 psi u x u dmu ds'; contracting with
    kappa and integrating each sine mode gives

        kappa:lambda(psi)(s) = sqrt(2) sum_q (m_q/(q pi)) (1 - cos(q pi s)),

    m_q = int (kappa:uu) psi_q dmu.  Coefficients are padded to 2N so
    downstream products keep every generated frequency.
    """
    grid = psi.grid
    kuu = kappa.contract_uu(grid.nodes)
    m = psi.node_values() @ (grid.weights * kuu)
    q = np.arange(1, psi.n_modes + 1)
    amp = np.sqrt(2.0) * m / (q * np.pi)
    coeffs = np.zeros(2 * psi.n_modes)
    coeffs[: psi.n_modes] = -amp
    return CosProfile(amp.sum(), coeffs)


def lambda_full_vs_homogeneous_check(kappa, psi, n_samples=201):
    """Max deviation of the profile when the uniform part is restored.

    The uniform density 1/4pi adds s/3 tr(kappa) to kappa:lambda, which
    is identically zero for traceless kappa; the return value is the
    measured max over s of the difference, computed from the actual
    quadrature of the uniform second moment rather than assumed zero.
    """
    grid = psi.grid
    kuu = kappa.contract_uu(grid.nodes)
    uniform_rate = INV_4PI * grid.integrate(kuu)
    s = np.linspace(0.0, 1.0, n_samples)
    base = lambda_profile(kappa, psi)(s)
    full = base + s * uniform_rate
    return float(np.abs(full - base).max())


def b_coefficients(kappa, phi, psi, n_out):
    """Bilinear coupling b_n = int_0^1 d/ds[phi kappa:lambda(psi)] H_n ds.

    Integrating by parts (boundary terms vanish with the sine basis)
    gives b_n = -sqrt(2) n pi int_0^1 phi (kappa:lambda(psi)) cos(n pi s) ds,
    and the s-integral is the exact product-to-sum convolution of phi's
    sine modes with the profile's cosine series.  Returns a ModalField
    with n_out modes.
    """
    profile = lambda_profile(kappa, psi)
    W = kernels.trig_weight_matrix(
        profile.constant, profile.coeffs, phi.n_modes, n_out
    )
    n = np.arange(1, n_out + 1)
    coeffs = (-2.0 * np.pi) * n[:, None] * (W @ phi.coeffs)
    return ModalField(phi.grid, coeffs)


def cos_projection(f, N):
    """int_0^1 f(s) cos(N pi s) ds as a SphereField.

    Uses the analytic overlap int sin(p pi s) cos(N pi s) ds, so the
    coupling is sqrt(2) p (1-(-1)^{p+N}) / (pi (p^2-N^2)) with the p = N
    term dropping out.  N = 0 is allowed and returns the plain
    s-average, which the stretch coupling needs when n = q.
    """
    if N < 0:
        raise ValueError("cosine frequency must be >= 0")
    p = np.arange(1, f.n_modes + 1)
    w = np.sqrt(2.0) * sine_overlap(p, N)
    return SphereField(f.grid, w @ f.coeffs)


def brt_coefficient(f, q, n):
    """Stretch-route coupling int_0^1 d/ds[(int_0^s H_q) f] H_n ds.

    Assembled from three cosine projections via the exact decomposition
    (n/q)(E1 + E2 + E3) with E1 = -2 int f cos(n pi s) ds,
    E2 = int f cos((n+q) pi s) ds, E3 = int f cos(|n-q| pi s) ds.
    """
    if q < 1 or n < 1:
        raise ValueError("q and n must be >= 1")
    e1 = cos_projection(f, n) * (-2.0)
    e2 = cos_projection(f, n + q)
    e3 = cos_projection(f, abs(n - q))
    return (e1 + e2 + e3) * (n / q)


def drift_dot_gradients(f, kappa):
    """Node values of G . grad f_n for every mode, shape (N, n_nodes)."""
    grid = f.grid
    g_nodes = g_vector(kappa, grid.nodes)
    out = np.zeros((f.n_modes, grid.n_nodes))
    for k in range(3):
        out += (f.coeffs @ grid.grad_basis[k].T) * g_nodes[:, k]
    return out


def xr_norm(f, kappa, r):
    """Truncated X_r norm: max_n n^3 ||f_n||_r + max_n n ||G . grad f_n||_r."""
    return xr_norm_detail(f, kappa, r)["value"]


def xr_norm_detail(f, kappa, r):
    """X_r norm with the argmax locations of both suprema.

    The report keys are value, weighted_lr (per-mode n^3 ||f_n||_r),
    weighted_drift (per-mode n ||G . grad f_n||_r), argmax_lr and
    argmax_drift (1-based mode indices).  An argmax sitting at n = N is
    a sign the truncation is too short.
    """
    n = np.arange(1, f.n_modes + 1)
    lr = f.mode_lp_norms(r)
    drift = drift_dot_gradients(f, kappa)
    if r == np.inf:
        dn = np.abs(drift).max(axis=1)
    else:
        dn = (np.abs(drift) ** r @ f.grid.weights) ** (1.0 / r)
    t1 = n**3 * lr
    t2 = n * dn
    return {
        "value": float(t1.max() + t2.max()),
        "weighted_lr": t1,
        "weighted_drift": t2,
        "argmax_lr": int(np.argmax(t1)) + 1,
        "argmax_drift": int(np.argmax(t2)) + 1,
    }


def xi_chi(fd):
    """Weighted squared-L1 mode sums (xi, chi) = (sum n^2 a_n^2, sum n^4 a_n^2)."""
    a = fd.mode_l1_norms()
    n = np.arange(1, fd.n_modes + 1)
    return float(np.sum(n**2 * a**2)), float(np.sum(n**4 * a**2))


def probability_check(f, s_samples=65):
    """Mass defect and minimum density of F = f + 1/4pi.

    Over a uniform s sample grid: max_s |int (f + 1/4pi) dmu - 1| and
    min over (s, nodes) of f + 1/4pi.
    """
    s = np.linspace(0.0, 1.0, int(s_samples))
    n = np.arange(1, f.n_modes + 1)
    H = np.sqrt(2.0) * np.sin(np.pi * np.outer(s, n))
    mass_profile = H @ f.mode_integrals()
    point_values = H @ f.node_values()
    return float(np.abs(mass_profile).max()), float(point_values.min() + INV_4PI)


def sup_l1_profile(f, s_samples=65):
    """sup over s samples of ||f(s,.)||_{L1(S2)}."""
    s = np.linspace(0.0, 1.0, int(s_samples))
    n = np.arange(1, f.n_modes + 1)
    H = np.sqrt(2.0) * np.sin(np.pi * np.outer(s, n))
    vals = H @ f.node_values()
    return float((np.abs(vals) @ f.grid.weights).max())


def abs_l1_profile(f, s_samples=65):
    """Per-sample ||f(s,.)||_{L1(S2)} on a uniform s grid, with the grid."""
    s = np.linspace(0.0, 1.0, int(s_samples))
    n = np.arange(1, f.n_modes + 1)
    H = np.sqrt(2.0) * np.sin(np.pi * np.outer(s, n))
    vals = H @ f.node_values()
    return s, np.abs(vals) @ f.grid.weights


FORMAT_TAG = "doiedwards-modal-v1"


def save_modal(path, f, kappa):
    """Write a ModalField with its driving tensor to an .npz container.

    Layout: 'format' tag, 'n_modes', 'degree', 'kappa' (3x3 row-major)
    and 'coeffs' of shape (n_modes, (L+1)^2) in the degree-major
    harmonic ordering (l ascending, m from -l to l).
    """
    np.savez(
        path,
        format=FORMAT_TAG,
        n_modes=np.int64(f.n_modes),
        degree=np.int64(f.grid.degree),
        kappa=kappa.entries,
        coeffs=f.coeffs,
    )


def load_modal(path, grid=None):
    """Read a ModalField container; returns (field, kappa).

    Pass an existing grid of the right degree to reuse its cached
    transform matrices.
    """
    from .sphere import KappaTensor, build_grid

    with np.load(path, allow_pickle=False) as data:
        tag = str(data["format"])
        if tag != FORMAT_TAG:
            raise ValueError("unrecognized container format %r" % tag)
        degree = int(data["degree"])
        n_modes = int(data["n_modes"])
        kappa = KappaTensor(data["kappa"])
        coeffs = np.array(data["coeffs"])
    if coeffs.shape[0] != n_modes:
        raise ValueError("corrupt container: mode count mismatch")
    if grid is None:
        grid = build_grid(degree)
    elif grid.degree != degree:
        raise ValueError("grid degree %d does not match container %d" % (grid.degree, degree))
    return ModalField(grid, coeffs), kappa
