"""Time integration of the modal evolution system.

Each sine mode obeys d f_n / dt = -T(eps, f)_n: the drift is minus the
stationary residual, so steady states of the march are exactly the
Newton solver's zeros.  The stiff per-mode linear part L_n = n^2 pi^2
+ div(G .) is treated implicitly through cached dense factorizations;
the eps-coupled terms (the kappa:uu multiplication, the moment
correction, the bilinear coupling and its share of the source) stay
explicit, which is harmless in the perturbative regime the model lives
in.

Two schemes are provided.  imex-euler is backward Euler on L_n with a
forward-Euler explicit part (first order).  imex-cn is Crank-Nicolson
on L_n with a trapezoidal explicit part evaluated through an implicit
Euler predictor (second order overall).

Diagnostics recorded along a trajectory: mass defect, minimum of
F = f + 1/4pi, the weighted mode sums xi and chi, and when a stationary
reference is supplied the sup-over-s L1 distance to it.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import modal, stationary
from .modal import INV_4PI, ModalField
from .sphere import build_grid


class StepRejected(RuntimeError):
    """A time step produced non-finite state.

    Carries the failing time and, when raised out of evolve, the
    trajectory recorded up to that point.
    """

    def __init__(self, message, t, trajectory=None):
        super().__init__(message)
        self.t = t
        self.trajectory = trajectory


class InsufficientData(RuntimeError):
    """Not enough usable samples for a decay fit."""


_SCHEMES = ("imex-euler", "imex-cn")


@dataclass
class EvolutionConfig:
    n_modes: int = 32
    sphere_degree: int = 8
    dt: float = 0.005
    t_final: float = 3.0
    scheme: str = "imex-cn"
    snapshot_stride: int = 10
    s_samples: int = 65
    initial_data: str = "zero"
    initial_path: str = ""
    seed: int = 0
    store_snapshots: bool = False

    def validate(self):
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        if not (2 <= self.sphere_degree <= 128):
            raise ValueError("sphere_degree out of range")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.dt > 0.1:
            raise ValueError("dt above 0.1 is refused: the explicit terms need it")
        if self.t_final <= 0:
            raise ValueError("t_final must be positive")
        if self.scheme not in _SCHEMES:
            raise ValueError("scheme must be one of %s" % (_SCHEMES,))
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")
        if self.initial_data not in ("zero", "modal-file", "randomized-admissible"):
            raise ValueError("unknown initial_data %r" % self.initial_data)
        if self.initial_data == "modal-file" and not self.initial_path:
            raise ValueError("initial_data=modal-file needs initial_path")
        return self


class Trajectory:
    """Diagnostic time series with optional state snapshots."""

    CSV_COLUMNS = ("t", "mass_error", "min_F", "xi", "chi", "dist_sup_L1")

    def __init__(self):
        self.times = []
        self.mass_error = []
        self.min_F = []
        self.xi = []
        self.chi = []
        self.dist_sup_L1 = []
        self.snapshots = []
        self.final_field = None

    def record(self, t, f, reference=None, s_samples=65, keep_state=False):
        mass, min_f = modal.probability_check(f, s_samples)
        xi, chi = modal.xi_chi(f if reference is None else f - reference)
        self.times.append(float(t))
        self.mass_error.append(mass)
        self.min_F.append(min_f)
        self.xi.append(xi)
        self.chi.append(chi)
        if reference is None:
            self.dist_sup_L1.append(np.nan)
        else:
            self.dist_sup_L1.append(modal.sup_l1_profile(f - reference, s_samples))
        if keep_state:
            self.snapshots.append((float(t), f))

    def as_arrays(self):
        return {
            "t": np.array(self.times),
            "mass_error": np.array(self.mass_error),
            "min_F": np.array(self.min_F),
            "xi": np.array(self.xi),
            "chi": np.array(self.chi),
            "dist_sup_L1": np.array(self.dist_sup_L1),
        }

    def to_csv(self, path):
        data = self.as_arrays()
        table = np.column_stack([data[c] for c in self.CSV_COLUMNS])
        header = ",".join(self.CSV_COLUMNS)
        np.savetxt(path, table, delimiter=",", header=header, comments="", fmt="%.17e")

    @classmethod
    def from_csv(cls, path):
        raw = np.genfromtxt(path, delimiter=",", names=True)
        traj = cls()
        raw = np.atleast_1d(raw)
        traj.times = list(raw["t"])
        traj.mass_error = list(raw["mass_error"])
        traj.min_F = list(raw["min_F"])
        traj.xi = list(raw["xi"])
        traj.chi = list(raw["chi"])
        traj.dist_sup_L1 = list(raw["dist_sup_L1"])
        return traj


def explicit_terms(f, epsilon, kappa, cache):
    """Coefficient stack of the explicit (eps-coupled plus source) part.

    E(f)_n = eps (kappa:uu) f_n - (eps/4pi) int (kappa:uu) f_n dmu
             - eps B(f,f)_n + ((3+eps)/4pi) (kappa:uu) 1_n,
    so that d f / dt = -L f + E(f).
    """
    grid = cache.grid
    out = stationary.source_coeffs(cache, epsilon, f.n_modes).copy()
    if epsilon != 0.0:
        node_vals = f.node_values()
        weighted = (grid.weights * cache.kuu_nodes) * node_vals
        out += epsilon * (weighted @ grid.basis)
        moments = node_vals @ (grid.weights * cache.kuu_nodes)
        out[:, 0] -= (epsilon * INV_4PI) * moments * np.sqrt(4.0 * np.pi)
        out -= epsilon * modal.b_coefficients(kappa, f, f, f.n_modes).coeffs
    return out


def rhs_mode(n, f, epsilon, kappa):
    """Drift of mode n, assembled term by term from the public operators.

    Intentionally independent of apply_T's vectorized path; the
    equality rhs_mode = -T(eps,f)_n is a cross-check, not a definition.
    """
    from .sphere import SphereField, advect, quadratic_moment

    f_n = f.mode(n)
    grid = f.grid
    out = (-(n * np.pi) ** 2) * f_n - advect(kappa, f_n)
    if epsilon != 0.0:
        kuu = kappa.contract_uu(grid.nodes)
        out = out + epsilon * SphereField.from_values(grid, kuu * f_n.values)
        out = out - SphereField.constant(
            grid, epsilon * INV_4PI * quadratic_moment(kappa, f_n)
        )
        b_n = modal.b_coefficients(kappa, f, f, n).mode(n)
        out = out - epsilon * b_n
    source = SphereField.from_values(
        grid, ((3.0 + epsilon) * INV_4PI) * kappa.contract_uu(grid.nodes)
    )
    return out + modal.one_n(n) * source


def step(f, dt, epsilon, kappa, scheme="imex-cn", cache=None):
    """One IMEX step of the modal system."""
    cache = cache or stationary.OperatorCache(f.grid, kappa)
    if scheme == "imex-euler":
        new = _step_euler(f, dt, epsilon, kappa, cache)
    elif scheme == "imex-cn":
        new = _step_cn(f, dt, epsilon, kappa, cache)
    else:
        raise ValueError("scheme must be one of %s" % (_SCHEMES,))
    if not np.all(np.isfinite(new.coeffs)):
        raise StepRejected("state became non-finite", t=np.nan)
    return new


def _solve_shifted(cache, rhs, c):
    """Per-mode solves of (I + c L_n) x_n = rhs_n on a coefficient stack."""
    if not np.all(np.isfinite(rhs)):
        raise StepRejected("explicit stage produced non-finite values", t=np.nan)
    out = np.empty_like(rhs)
    for n in range(1, rhs.shape[0] + 1):
        out[n - 1] = scipy.linalg.lu_solve(cache.shifted_lu(n, c), rhs[n - 1])
    return out


def _apply_L_stack(cache, coeffs):
    n2 = (np.arange(1, coeffs.shape[0] + 1) * np.pi) ** 2
    return n2[:, None] * coeffs + coeffs @ cache.advect_matrix.T


def _step_euler(f, dt, epsilon, kappa, cache):
    e0 = explicit_terms(f, epsilon, kappa, cache)
    rhs = f.coeffs + dt * e0
    return ModalField(f.grid, _solve_shifted(cache, rhs, dt))


def _step_cn(f, dt, epsilon, kappa, cache):
    e0 = explicit_terms(f, epsilon, kappa, cache)
    pred = ModalField(f.grid, _solve_shifted(cache, f.coeffs + dt * e0, dt))
    e1 = explicit_terms(pred, epsilon, kappa, cache)
    rhs = f.coeffs - 0.5 * dt * _apply_L_stack(cache, f.coeffs) + 0.5 * dt * (e0 + e1)
    return ModalField(f.grid, _solve_shifted(cache, rhs, 0.5 * dt))


def randomized_admissible_initial(grid, n_modes, rng, margin=0.5):
    """Smooth random initial data with exact unit mass and F0 >= 0.

    Mode coefficients decay like n^-3 in the mode index and (l+1)^-2 in
    harmonic degree; each mode's mean is zeroed so the mass profile is
    exactly 1, then the amplitude is scaled so min F0 stays above
    (1-margin)/4pi.
    """
    coeffs = rng.standard_normal((n_modes, grid.n_coeffs))
    n = np.arange(1, n_modes + 1)
    ells = np.repeat(np.arange(grid.degree + 1), 2 * np.arange(grid.degree + 1) + 1)
    coeffs *= (n ** -3.0)[:, None] * ((ells + 1.0) ** -2.0)[None, :]
    coeffs[:, 0] = 0.0
    f = ModalField(grid, coeffs)
    _, min_f = modal.probability_check(f, 129)
    undershoot = INV_4PI - min_f  # how far below 1/4pi the field dips
    if undershoot > 0:
        scale = margin * INV_4PI / undershoot
        if scale < 1.0:
            f = f * scale
    return f


def initial_state(config, grid, reference_kappa=None):
    """Initial ModalField per the config's initial_data policy."""
    if config.initial_data == "zero":
        return ModalField.zeros(config.n_modes, grid)
    if config.initial_data == "randomized-admissible":
        rng = np.random.default_rng(config.seed)
        return randomized_admissible_initial(grid, config.n_modes, rng)
    f, _ = modal.load_modal(config.initial_path, grid=grid)
    if f.n_modes != config.n_modes:
        raise ValueError(
            "initial file has %d modes, config wants %d" % (f.n_modes, config.n_modes)
        )
    return f


def evolve(config, epsilon, kappa, stationary_ref=None, grid=None, initial=None):
    """March the modal system to t_final, recording diagnostics.

    Snapshots (diagnostics and, if store_snapshots, states) land every
    snapshot_stride steps plus the initial and final instants.  Raises
    StepRejected with the failing time attached.
    """
    config.validate()
    if grid is None:
        grid = build_grid(config.sphere_degree)
    cache = stationary.OperatorCache(grid, kappa)
    f = initial if initial is not None else initial_state(config, grid)
    if stationary_ref is not None and stationary_ref.n_modes != f.n_modes:
        raise ValueError("stationary reference has a different mode count")

    n_steps = max(1, int(round(config.t_final / config.dt)))
    traj = Trajectory()
    traj.record(
        0.0, f, stationary_ref, config.s_samples, keep_state=config.store_snapshots
    )
    t = 0.0
    for k in range(1, n_steps + 1):
        try:
            f = step(f, config.dt, epsilon, kappa, config.scheme, cache)
        except StepRejected as err:
            raise StepRejected(str(err), t=k * config.dt, trajectory=traj) from err
        t = k * config.dt
        if k % config.snapshot_stride == 0 or k == n_steps:
            traj.record(
                t, f, stationary_ref, config.s_samples,
                keep_state=config.store_snapshots,
            )
    traj.final_field = f
    return traj


def fit_decay(trajectory, t_min, xi_floor=1e-28):
    """Least-squares slope of log xi(t) beyond t_min.

    Returns (rate, amplitude, fit_residual) with xi ~ amplitude *
    exp(rate t).  Samples at or below xi_floor are dropped (they are
    rounding noise); fewer than 10 usable samples raises
    InsufficientData.
    """
    t = np.array(trajectory.times)
    xi = np.array(trajectory.xi)
    keep = (t >= t_min) & (xi > xi_floor)
    if keep.sum() < 10:
        raise InsufficientData(
            "only %d usable samples beyond t_min=%.3g" % (keep.sum(), t_min)
        )
    tt, yy = t[keep], np.log(xi[keep])
    slope, intercept = np.polyfit(tt, yy, 1)
    resid = float(np.sqrt(np.mean((yy - (slope * tt + intercept)) ** 2)))
    return float(slope), float(np.exp(intercept)), resid


def check_probability(f, s_samples=65):
    """Mass defect and minimum of F = f + 1/4pi over an s sample grid."""
    return modal.probability_check(f, s_samples)
