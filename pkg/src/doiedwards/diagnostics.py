"""Empirical certification of the solver's quantitative estimates.

Each verify_* routine measures a normalized quantity whose boundedness
is the claim and reports a flat-trend verdict over a parameter grid.  A
finite grid cannot certify a supremum, so the honest surrogate is the
absence of growth: the log-log least-squares slope of the running
maximum of the normalized values, fitted over the trailing half of the
grid, must stay at or below SLOPE_LIMIT.  Randomized inputs come from
seeded generators and the seed lands in the report.

The bottom half is an independent cross-check discretization: a
second-order finite-difference solver for the stationary problem on a
cell-centered latitude-longitude mesh.  Cell centers at colatitude
(a + 1/2) delta keep every stencil point away from the poles, and the
drift term uses a conservative flux form whose pole-face fluxes vanish
identically, so the discrete divergence sums to zero exactly (the mesh
analogue of the Stokes identity the spectral side gets by adjointness).
"""

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.fft
import scipy.sparse
import scipy.sparse.linalg

from . import kernels, modal, stationary
from .modal import INV_4PI, ModalField, sine_overlap
from .sphere import (
    KappaTensor,
    SphereField,
    build_grid,
    g_vector,
    harmonic_basis,
)

SLOPE_LIMIT = 0.1


class PicardDiverged(RuntimeError):
    """The fixed-point iteration on the eps-terms failed to contract."""


@dataclass
class BoundReport:
    """Measured bound data with a flat-trend verdict.

    normalized holds measured values times the predicted growth factor;
    the verdict is true when their log-log trend slope (and any
    companion slopes in details ending with '_slope') stays at or below
    SLOPE_LIMIT.
    """

    bound_name: str
    parameter_grid: list
    measured: list
    normalized: list
    max_normalized: float
    slope: float
    verdict: bool
    seed: int | None = None
    details: dict = field(default_factory=dict)

    def to_json(self, path=None):
        payload = {
            "bound_name": self.bound_name,
            "parameter_grid": self.parameter_grid,
            "measured": self.measured,
            "normalized": self.normalized,
            "max_normalized": self.max_normalized,
            "slope": self.slope,
            "verdict": bool(self.verdict),
            "seed": self.seed,
            "details": self.details,
        }
        text = json.dumps(payload, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("parameter,measured,normalized\n")
            for p, m, z in zip(self.parameter_grid, self.measured, self.normalized):
                tag = p if np.isscalar(p) else ":".join(str(c) for c in p)
                fh.write("%s,%.17e,%.17e\n" % (tag, m, z))


def trend_slope(grid_values, values, floor=1e-300):
    """Log-log least-squares slope of the running maximum, tail window.

    The claim behind every verdict is that a supremum stays bounded, so
    the fitted quantity is the running maximum of the normalized values:
    the question a growing grid answers is whether the sup seen so far
    keeps climbing.  A direct fit of the raw values would misread two
    harmless shapes as growth, small-index transients that approach the
    plateau from below and parity oscillations whose endpoints tilt a
    short window.  The running maximum is flat for both, while genuine
    growth survives untouched.  The fit window is the trailing half of
    the usable points, at least eight when available, so the verdict
    rests on the asymptotic range.  Exact zeros are skipped first.
    """
    x = np.asarray(grid_values, dtype=np.float64)
    y = np.asarray(values, dtype=np.float64)
    keep = (x > 0) & (y > floor)
    xk = np.log10(x[keep])
    yk = np.log10(np.maximum.accumulate(y[keep]))
    start = max(0, xk.size - max(8, (xk.size + 1) // 2))
    xk, yk = xk[start:], yk[start:]
    if xk.size < 2:
        return 0.0
    return float(np.polyfit(xk, yk, 1)[0])


def _verdict(slope, details):
    slopes = [slope] + [v for k, v in details.items() if k.endswith("_slope")]
    return bool(max(slopes) <= SLOPE_LIMIT)


def _report(name, grid_vals, measured, normalized, seed, details, slope_grid=None):
    xs = slope_grid if slope_grid is not None else grid_vals
    slope = trend_slope(xs, normalized)
    return BoundReport(
        bound_name=name,
        parameter_grid=list(grid_vals),
        measured=[float(v) for v in measured],
        normalized=[float(v) for v in normalized],
        max_normalized=float(np.max(normalized)) if len(normalized) else 0.0,
        slope=slope,
        verdict=_verdict(slope, details),
        seed=seed,
        details=details,
    )


def _lp(grid, values, r):
    if r == np.inf:
        return float(np.abs(values).max())
    return float((np.abs(values) ** r) @ grid.weights) ** (1.0 / r)


def _drift_values(cache, coeffs):
    grid = cache.grid
    g_nodes = g_vector(cache.kappa, grid.nodes)
    out = np.zeros(grid.n_nodes)
    for k in range(3):
        out += g_nodes[:, k] * (grid.grad_basis[k] @ coeffs)
    return out


def verify_resolvent_bound(
    kappa, n_max=20, r=2.0, grid=None, trials=12, seed=1234, power_iters=80
):
    """Certify the n^-2 resolvent decay and the companion drift bound.

    For r=2 the operator norm of L_n^-1 comes from power iteration on
    the normal operator (transposed solves against the cached
    factorization); for other r it is a max over randomized unit-norm
    right-hand sides.  The companion measures ||G . grad L_n^-1 psi||_r
    over the same trials, whose claim is n-uniform boundedness.
    """
    if n_max > 64:
        raise ValueError("n_max above 64 is outside the verified desk scale")
    grid = grid or build_grid(8)
    cache = stationary.OperatorCache(grid, kappa)
    rng = np.random.default_rng(seed)
    M = grid.n_coeffs

    measured, z_measured = [], []
    for n in range(1, n_max + 1):
        if r == 2.0:
            v = rng.standard_normal(M)
            v /= np.linalg.norm(v)
            lam = 0.0
            for _ in range(power_iters):
                w = cache.solve_mode(n, v)
                w = cache.solve_mode(n, w, trans=1)
                lam_new = float(v @ w)
                v = w / np.linalg.norm(w)
                if abs(lam_new - lam) <= 1e-14 * abs(lam_new):
                    lam = lam_new
                    break
                lam = lam_new
            measured.append(np.sqrt(lam))
        else:
            best = 0.0
            for _ in range(trials):
                c = rng.standard_normal(M)
                psi_norm = _lp(grid, grid.basis @ c, r)
                h = cache.solve_mode(n, c)
                best = max(best, _lp(grid, grid.basis @ h, r) / psi_norm)
            measured.append(best)
        z_best = 0.0
        for _ in range(trials):
            c = rng.standard_normal(M)
            psi_norm = _lp(grid, grid.basis @ c, r)
            h = cache.solve_mode(n, c)
            z_best = max(z_best, _lp(grid, _drift_values(cache, h), r) / psi_norm)
        z_measured.append(z_best)

    ns = np.arange(1, n_max + 1)
    normalized = ns**2 * np.array(measured)
    details = {
        "r": float(r),
        "z_companion": [float(v) for v in z_measured],
        "z_slope": trend_slope(ns, z_measured),
    }
    return _report(
        "resolvent_n2_decay", ns.tolist(), measured, normalized, seed, details
    )


def _random_xr_modes(rng, n_modes, grid, r):
    """Random modal field with mode r-norms pinned to p^-3."""
    coeffs = rng.standard_normal((n_modes, grid.n_coeffs))
    f = ModalField(grid, coeffs)
    scale = np.arange(1, n_modes + 1, dtype=np.float64) ** -3.0
    norms = f.mode_lp_norms(r)
    return ModalField(grid, coeffs * (scale / norms)[:, None])


def verify_b_bound(kappa, N=32, trials=20, r=1.0, grid=None, seed=2024):
    """Certify ||b_n(phi, psi)||_r <= C n^-2 ||phi||_Xr ||psi||_Xr."""
    grid = grid or build_grid(8)
    rng = np.random.default_rng(seed)
    best = np.zeros(N)
    for _ in range(trials):
        phi = _random_xr_modes(rng, N, grid, r)
        psi = _random_xr_modes(rng, N, grid, r)
        denom = modal.xr_norm(phi, kappa, r) * modal.xr_norm(psi, kappa, r)
        b = modal.b_coefficients(kappa, phi, psi, N)
        best = np.maximum(best, b.mode_lp_norms(r) / denom)
    ns = np.arange(1, N + 1)
    normalized = ns**2 * best
    details = {"r": float(r), "trials": trials}
    return _report("b_bilinear_n2_decay", ns.tolist(), best, normalized, seed, details)


def verify_cos_bound(N_max=32, trials=20, grid=None, seed=77, n_field_modes=None):
    """Certify N^2 ||int f cos(N pi s) ds||_L1 <= C ||f||_X1.

    The X1 norm is taken with kappa = 0 (the estimate only uses the
    p^3-weighted part, and no flow tensor enters the projection).
    """
    grid = grid or build_grid(8)
    kz = KappaTensor.zero()
    P = n_field_modes or (2 * N_max + 1)
    rng = np.random.default_rng(seed)
    best = np.zeros(N_max)
    for _ in range(trials):
        f = _random_xr_modes(rng, P, grid, 1.0)
        xnorm = modal.xr_norm(f, kz, 1.0)
        for N in range(1, N_max + 1):
            c = modal.cos_projection(f, N)
            val = _lp(grid, c.values, 1.0) / xnorm
            best[N - 1] = max(best[N - 1], val)
    ns = np.arange(1, N_max + 1)
    normalized = ns**2 * best
    details = {"field_modes": P, "trials": trials}
    return _report(
        "cos_projection_n2_decay", ns.tolist(), best, normalized, seed, details
    )


def cos_partial_fraction_case(N_max=32, p_max=20000):
    """Worst-case cosine projection against its partial-fraction bound.

    For f_p = p^-3 times the constant field the projection sums exactly,
    while the estimate replaces the signed sine-cosine overlaps
    2p / (pi (p^2 - N^2)), nonzero only for p + N odd, by their absolute
    values.  Returns per-N normalized measured values and normalized
    bound values; sign cancellation across the pole at p = N keeps their
    ratio within a small constant.
    """
    p = np.arange(1, p_max + 1, dtype=np.float64)
    meas, bound = [], []
    for N in range(1, N_max + 1):
        overlap = sine_overlap(p, N)
        meas.append(N**2 * np.sqrt(2.0) * abs(float(overlap @ p**-3.0)))
        bound.append(N**2 * np.sqrt(2.0) * float(np.abs(overlap) @ p**-3.0))
    return {
        "N": list(range(1, N_max + 1)),
        "normalized_measured": meas,
        "normalized_bound": bound,
    }


def verify_brt_bound(q_max=16, n_max=16, trials=12, grid=None, seed=99):
    """Certify ||brt(f, q, n)||_L1 <= C (q/n) ||f||_X1 over a (q, n) grid.

    The verdict requires flat trends along both axes of the grid, each
    taken on the max envelope over the other index.
    """
    grid = grid or build_grid(8)
    kz = KappaTensor.zero()
    P = 2 * (n_max + q_max)
    rng = np.random.default_rng(seed)
    best = np.zeros((q_max, n_max))
    for _ in range(trials):
        f = _random_xr_modes(rng, P, grid, 1.0)
        xnorm = modal.xr_norm(f, kz, 1.0)
        for q in range(1, q_max + 1):
            for n in range(1, n_max + 1):
                v = modal.brt_coefficient(f, q, n)
                best[q - 1, n - 1] = max(
                    best[q - 1, n - 1],
                    (n / q) * _lp(grid, v.values, 1.0) / xnorm,
                )
    ns = np.arange(1, n_max + 1)
    qs = np.arange(1, q_max + 1)
    slope_n = trend_slope(ns, best.max(axis=0))
    slope_q = trend_slope(qs, best.max(axis=1))
    pairs = [(int(q), int(n)) for q in qs for n in ns]
    flat = [float(best[q - 1, n - 1]) for q, n in pairs]
    details = {
        "n_slope": slope_n,
        "q_slope": slope_q,
        "field_modes": P,
        "trials": trials,
    }
    slope = max(slope_n, slope_q)
    verdict = _verdict(slope, {})
    return BoundReport(
        bound_name="brt_qn_ratio",
        parameter_grid=pairs,
        measured=flat,
        normalized=flat,
        max_normalized=float(best.max()),
        slope=slope,
        verdict=verdict and _verdict(0.0, details),
        seed=seed,
        details=details,
    )


def stretch_coupling_coefficients(kappa, fe, q_max, n_sum):
    """Coefficients a_qn of the deviation coupling, shape (n_sum, q_max).

    a_qn is the H_n projection of d/ds[kappa:lambda(f^e) H_q]; columns
    are indexed by q.  Mirrors the bilinear assembly with a unit mode in
    the phi slot.
    """
    profile = modal.lambda_profile(kappa, fe)
    W = kernels.trig_weight_matrix(profile.constant, profile.coeffs, q_max, n_sum)
    n = np.arange(1, n_sum + 1)
    return (-2.0 * np.pi) * n[:, None] * W


def _stretch_energy_exact(kappa, fe, q):
    """||d/ds(kappa:lambda(f^e) H_q)||^2_{L2(0,1)} by panel quadrature."""
    profile = modal.lambda_profile(kappa, fe)
    x, w = modal._gauss_panels(4 * (profile.n_terms + q))
    lam, dlam = profile(x), profile.derivative(x)
    h = np.sqrt(2.0) * np.sin(q * np.pi * x)
    dh = np.sqrt(2.0) * q * np.pi * np.cos(q * np.pi * x)
    return float(w @ (dlam * h + lam * dh) ** 2)


def verify_mode_coupling_bounds(
    trajectory, kappa, stationary_ref, q_max=16, n_sum=4096
):
    """Certify the deviation-coupling inequalities along a trajectory.

    At each stored snapshot with deviation f^d = f^e - f: the ratio of
    sum n^2 ||f_n^d|| ||I_n|| to sum n^4 ||f_n^d||^2 for both coupling
    routes (I_1n couples f^d through the f^e stretch, I_2n couples the
    stationary f through the f^d stretch), with the 0/0 state reported
    as 0.  The companion check certifies sum_n a_qn^2 <= C q^2 and its
    exact identity with the stretch energy (Parseval, tail-extrapolated).
    """
    if not trajectory.snapshots:
        raise ValueError("trajectory carries no stored snapshots")
    f = stationary_ref
    N = f.n_modes
    n = np.arange(1, N + 1)
    ratios1, ratios2, times = [], [], []
    for t, fe in trajectory.snapshots:
        fd = fe - f
        a = fd.mode_l1_norms()
        rhs = float((n**4) @ a**2)
        if rhs == 0.0:
            r1 = r2 = 0.0
        else:
            i1 = modal.b_coefficients(kappa, fd, fe, N).mode_l1_norms()
            i2 = modal.b_coefficients(kappa, f, fd, N).mode_l1_norms()
            r1 = float((n**2) @ (a * i1)) / rhs
            r2 = float((n**2) @ (a * i2)) / rhs
        times.append(float(t))
        ratios1.append(r1)
        ratios2.append(r2)

    _, fe_last = trajectory.snapshots[-1]
    aq = stretch_coupling_coefficients(kappa, fe_last, q_max, n_sum)
    partial_half = (aq[: n_sum // 2] ** 2).sum(axis=0)
    partial_full = (aq**2).sum(axis=0)
    # a_qn ~ c/n for large n, so the Parseval tail is ~ c^2/n_sum and one
    # Richardson step removes it
    extrapolated = 2.0 * partial_full - partial_half
    exact = np.array(
        [_stretch_energy_exact(kappa, fe_last, q) for q in range(1, q_max + 1)]
    )
    qs = np.arange(1, q_max + 1)
    nonzero = exact > 0
    parseval_err = (
        float(np.abs(extrapolated[nonzero] / exact[nonzero] - 1.0).max())
        if nonzero.any()
        else 0.0
    )
    aqn_ratio = extrapolated / qs**2

    measured = [max(a, b) for a, b in zip(ratios1, ratios2)]
    idx = np.arange(1, len(measured) + 1)
    details = {
        "ratios_i1": ratios1,
        "ratios_i2": ratios2,
        "times": times,
        "aqn_parseval_rel_err": parseval_err,
        "aqn_q2_ratio": [float(v) for v in aqn_ratio],
        "aqn_slope": trend_slope(qs, aqn_ratio),
    }
    return _report(
        "mode_coupling_ratios",
        times,
        measured,
        measured,
        None,
        details,
        slope_grid=idx,
    )


# ----------------------------------------------------------------------
# Finite-difference cross-check discretization


@dataclass
class DenseSolution:
    """Stationary solve on the finite-difference mesh.

    values has shape (n_s, n_lat * n_lon) over interior s points and
    flattened theta-major cells; area_weights are midpoint cell areas.
    """

    s: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    values: np.ndarray
    area_weights: np.ndarray
    epsilon: float
    iterations: int

    @property
    def n_lat(self):
        return self.theta.shape[0]

    @property
    def n_lon(self):
        return self.phi.shape[0]


def _cell_mesh(n_lat, n_lon):
    d_theta = np.pi / n_lat
    d_phi = 2.0 * np.pi / n_lon
    theta = (np.arange(n_lat) + 0.5) * d_theta
    phi = np.arange(n_lon) * d_phi
    return theta, phi, d_theta, d_phi


def _unit_vectors(theta, phi):
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    u = np.stack([st * cp, st * sp, ct], axis=-1)
    e_theta = np.stack([ct * cp, ct * sp, -st], axis=-1)
    e_phi = np.stack([-sp, cp, np.zeros_like(sp)], axis=-1)
    return u, e_theta, e_phi


def flux_divergence_matrix(kappa, n_lat, n_lon):
    """Sparse matrix of f -> div(G f) in conservative flux form.

    Face velocities are evaluated analytically at face midpoints and
    cell values averaged onto faces (second order).  The theta faces at
    the poles carry sin(theta) = 0, so no pole closure is needed and
    the area-weighted column sums vanish identically.
    """
    theta, phi, d_theta, d_phi = _cell_mesh(n_lat, n_lon)
    sin_c = np.sin(theta)

    rows, cols, vals = [], [], []

    def cell(a, b):
        return a * n_lon + b

    # interior theta faces at a_f * d_theta, between cells a_f-1 and a_f
    for af in range(1, n_lat):
        th_f = af * d_theta
        tt, pp = np.full(n_lon, th_f), phi
        u, e_t, _ = _unit_vectors(tt, pp)
        v_t = np.einsum("bk,bk->b", g_vector(kappa, u), e_t)
        flux = np.sin(th_f) * v_t * 0.5
        b = np.arange(n_lon)
        up, dn = cell(af - 1, b), cell(af, b)
        for src in (up, dn):
            rows.extend([up, dn])
            cols.extend([src, src])
            vals.extend([flux / (sin_c[af - 1] * d_theta), -flux / (sin_c[af] * d_theta)])

    # phi faces at (b + 1/2) d_phi, between cells b and b+1 (periodic)
    for a in range(n_lat):
        ph_f = (np.arange(n_lon) + 0.5) * d_phi
        u, _, e_p = _unit_vectors(np.full(n_lon, theta[a]), ph_f)
        v_p = np.einsum("bk,bk->b", g_vector(kappa, u), e_p)
        flux = v_p * 0.5 / (sin_c[a] * d_phi)
        b = np.arange(n_lon)
        left, right = cell(a, b), cell(a, (b + 1) % n_lon)
        for src in (left, right):
            rows.extend([left, right])
            cols.extend([src, src])
            vals.extend([flux, -flux])

    n_cells = n_lat * n_lon
    return scipy.sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_cells, n_cells),
    ).tocsr()


def cell_quadrature(n_lat, n_lon):
    """Cell nodes (flattened theta-major) and midpoint area weights."""
    theta, phi, d_theta, d_phi = _cell_mesh(n_lat, n_lon)
    tt = np.repeat(theta, n_lon)
    pp = np.tile(phi, n_lat)
    u, _, _ = _unit_vectors(tt, pp)
    w = np.repeat(np.sin(theta), n_lon) * d_theta * d_phi
    return u, w


def solve_mode_fd(n, kappa, rhs_fn, n_lat, n_lon=None):
    """Per-mode resolvent solve (n^2 pi^2 + div(G .)) h = rhs on the mesh."""
    n_lon = n_lon or 2 * n_lat
    A = flux_divergence_matrix(kappa, n_lat, n_lon)
    nodes, _ = cell_quadrature(n_lat, n_lon)
    op = (A + (n * np.pi) ** 2 * scipy.sparse.identity(A.shape[0])).tocsc()
    return scipy.sparse.linalg.spsolve(op, rhs_fn(nodes))


def resolvent_mode_oracle(n, kappa, rhs_fn, n_lat, n_lon=None):
    """Richardson-extrapolated per-mode solve on the coarse cell centers.

    The fine mesh triples both directions, so coarse centers reappear
    exactly (theta index 3a+1, phi index 3b) and the second-order error
    cancels pointwise without interpolation.
    """
    n_lon = n_lon or 2 * n_lat
    coarse = solve_mode_fd(n, kappa, rhs_fn, n_lat, n_lon)
    fine = solve_mode_fd(n, kappa, rhs_fn, 3 * n_lat, 3 * n_lon)
    fine_grid = fine.reshape(3 * n_lat, 3 * n_lon)
    nested = fine_grid[1::3, ::3].ravel()
    return (9.0 * nested - coarse) / 8.0


def oracle_dense_solve(
    kappa,
    epsilon,
    s_points=48,
    latlon_resolution=(48, 96),
    tol=1e-11,
    max_iters=80,
):
    """Stationary solve by finite differences plus Picard on the eps-terms.

    The linear backbone (s-diffusion plus drift divergence) separates: a
    discrete sine transform diagonalizes the second-difference matrix, so
    the backbone factors into one small sparse sphere solve per sine
    frequency instead of one coupled solve over the full s-times-sphere
    mesh.  Each sweep re-evaluates the eps-coupled terms (kappa:uu
    multiplication, sphere moment, stretch transport d/ds of f times the
    running integral of its own moment) from the previous iterate.
    """
    n_lat, n_lon = latlon_resolution
    if s_points > 64:
        raise ValueError("s_points above 64 is outside the oracle's desk scale")
    n_s = int(s_points)
    h = 1.0 / (n_s + 1)
    s = (np.arange(1, n_s + 1)) * h
    theta, phi, _, _ = _cell_mesh(n_lat, n_lon)
    nodes, w_cells = cell_quadrature(n_lat, n_lon)
    n_cells = n_lat * n_lon

    A = flux_divergence_matrix(kappa, n_lat, n_lon)
    eye = scipy.sparse.identity(n_cells, format="csc")
    mu = (2.0 - 2.0 * np.cos(np.arange(1, n_s + 1) * np.pi * h)) / h**2
    shifted = [scipy.sparse.linalg.splu((A + m * eye).tocsc()) for m in mu]

    def backbone_solve(rhs_flat):
        rhs_hat = scipy.fft.dst(rhs_flat.reshape(n_s, n_cells), type=1, axis=0, norm="ortho")
        sol_hat = np.empty_like(rhs_hat)
        for k in range(n_s):
            sol_hat[k] = shifted[k].solve(rhs_hat[k])
        return scipy.fft.idst(sol_hat, type=1, axis=0, norm="ortho").ravel()

    kuu = kappa.contract_uu(nodes)
    source = np.tile((3.0 + epsilon) * INV_4PI * kuu, n_s)

    x = np.zeros(n_s * n_cells)
    iterations = 0
    for iterations in range(1, max_iters + 1):
        X = x.reshape(n_s, n_cells)
        if epsilon == 0.0:
            rhs = source
        else:
            m = X @ (kuu * w_cells)
            m_pad = np.concatenate([[0.0], m])
            lam = 0.5 * h * np.cumsum(m_pad[:-1] + m_pad[1:])
            P = np.zeros((n_s + 2, n_cells))
            P[1:-1] = X * lam[:, None]
            dP = (P[2:] - P[:-2]) / (2.0 * h)
            expl = epsilon * (kuu[None, :] * X - INV_4PI * m[:, None] - dP)
            rhs = source + expl.ravel()
        x_new = backbone_solve(rhs)
        if not np.all(np.isfinite(x_new)):
            raise PicardDiverged("non-finite iterate at sweep %d" % iterations)
        delta = np.abs(x_new - x).max()
        scale = max(1e-30, np.abs(x_new).max())
        if delta > 1e8 * scale:
            raise PicardDiverged("iterate growing at sweep %d" % iterations)
        x = x_new
        if delta <= tol * scale:
            break
    else:
        raise PicardDiverged("no contraction within %d sweeps" % max_iters)

    return DenseSolution(
        s=s,
        theta=theta,
        phi=phi,
        values=x.reshape(n_s, n_cells),
        area_weights=w_cells,
        epsilon=float(epsilon),
        iterations=iterations,
    )


def evaluate_modal_on_mesh(f, dense):
    """Modal field sampled on the oracle's (s, cell) mesh."""
    Y = harmonic_basis(np.cos(dense.theta), dense.phi, f.grid.degree)
    H = np.sqrt(2.0) * np.sin(
        np.pi * np.outer(dense.s, np.arange(1, f.n_modes + 1))
    )
    return H @ (f.coeffs @ Y.T)


def dense_relative_l1(f, dense):
    """Relative L1(Q) distance between a modal field and an oracle solve."""
    spec = evaluate_modal_on_mesh(f, dense)
    num = float((np.abs(spec - dense.values) @ dense.area_weights).sum())
    den = float((np.abs(spec) @ dense.area_weights).sum())
    return num / den
