import numpy as np
import pytest
from scipy.integrate import quad

from doiedwards import modal
from doiedwards.modal import INV_4PI, ModalField
from doiedwards.sphere import KappaTensor, SphereField, build_grid

RT2 = np.sqrt(2.0)


def H(n, s):
    return RT2 * np.sin(n * np.pi * s)


def single_mode(grid, n_modes, p, coeffs):
    c = np.zeros((n_modes, grid.n_coeffs))
    c[p - 1] = coeffs
    return ModalField(grid, c)


def test_one_n_matches_quadrature():
    for n in (1, 2, 3, 8, 15):
        ref = quad(lambda s: H(n, s), 0.0, 1.0, limit=200)[0]
        assert abs(modal.one_n(n) - ref) < 1e-12


def test_one_vector_even_entries_vanish():
    v = modal.one_vector(12)
    assert np.abs(v[1::2]).max() == 0.0
    assert np.allclose(v[0::2], RT2 * 2.0 / (np.pi * np.arange(1, 13, 2)))


@pytest.mark.parametrize("n", [1, 2, 5, 12])
def test_sine_overlap_matches_quadrature(n):
    for k in (1, 2, 3, 7, 20, -3):
        ref = quad(
            lambda s: np.sin(k * np.pi * s) * np.cos(n * np.pi * s), 0.0, 1.0,
            limit=200,
        )[0]
        assert abs(modal.sine_overlap(np.array([k]), n)[0] - ref) < 1e-12


def test_lambda_profile_matches_cumulative_quadrature(grid8, shear):
    rng = np.random.default_rng(2)
    f = ModalField(grid8, rng.standard_normal((8, grid8.n_coeffs)) / 50.0)
    prof = modal.lambda_profile(shear, f)

    kuu = shear.contract_uu(grid8.nodes)
    s_fine = np.linspace(0.0, 1.0, 20001)
    moments = np.array([grid8.integrate(kuu * f.mode(n).values) for n in range(1, 9)])
    m_of_s = (H(np.arange(1, 9)[:, None], s_fine[None, :]) * moments[:, None]).sum(axis=0)
    lam_ref = np.concatenate([[0.0], np.cumsum(0.5 * (m_of_s[1:] + m_of_s[:-1]) * np.diff(s_fine))])

    samples = np.linspace(0.0, 1.0, 11)
    got = prof(samples)
    ref = np.interp(samples, s_fine, lam_ref)
    assert np.abs(got - ref).max() < 1e-8


def test_b_coefficients_single_modes_match_defining_integral(grid8, shear):
    rng = np.random.default_rng(4)
    for p, q in ((1, 1), (2, 3), (5, 2)):
        phi_u = rng.standard_normal(grid8.n_coeffs) / 30.0
        psi_u = rng.standard_normal(grid8.n_coeffs) / 30.0
        phi = single_mode(grid8, 8, p, phi_u)
        psi = single_mode(grid8, 8, q, psi_u)
        m_q = grid8.integrate(shear.contract_uu(grid8.nodes) * psi.mode(q).values)
        b = modal.b_coefficients(shear, phi, psi, 8)

        def lam(s):
            return m_q * RT2 * (1.0 - np.cos(q * np.pi * s)) / (q * np.pi)

        def dlamH(s, n):
            h = 1e-7
            g = lambda t: lam(t) * H(p, t)
            return (g(s + h) - g(s - h)) / (2 * h) * H(n, s)

        for n in (1, 2, 3, 6):
            ref = quad(lambda s: dlamH(s, n), 0.0, 1.0, limit=400)[0]
            got = b.mode(n).coeffs
            assert np.abs(got - ref * phi_u).max() < 1e-6


def test_b_coefficients_single_modes_match_convolution_formula(grid8, shear):
    # hand derivation: (1 - cos q pi s) H_p = H_p - (1/sqrt 2)(H_{p+q} + H_{p-q})
    # then differentiate the sines and pair against H_n term by term
    def j(n, k):
        if (n + k) % 2 == 0:
            return 0.0
        return 2.0 * n / (np.pi * (n * n - k * k))

    rng = np.random.default_rng(9)
    for p, q in ((1, 2), (3, 3), (4, 1)):
        phi_u = rng.standard_normal(grid8.n_coeffs) / 30.0
        psi_u = rng.standard_normal(grid8.n_coeffs) / 30.0
        phi = single_mode(grid8, 10, p, phi_u)
        psi = single_mode(grid8, 10, q, psi_u)
        m_q = grid8.integrate(shear.contract_uu(grid8.nodes) * psi.mode(q).values)
        b = modal.b_coefficients(shear, phi, psi, 10)
        for n in (1, 2, 5, 9):
            deriv_pairing = 2.0 * np.pi * (
                p * j(n, p)
                - 0.5 * ((p + q) * j(n, p + q) + (p - q) * j(n, p - q))
            )
            ref = m_q * RT2 / (q * np.pi) * deriv_pairing
            got = b.mode(n).coeffs
            assert np.abs(got - ref * phi_u).max() < 1e-10


def test_b_bilinearity(grid8, shear):
    rng = np.random.default_rng(21)
    f = ModalField(grid8, rng.standard_normal((6, grid8.n_coeffs)))
    g = ModalField(grid8, rng.standard_normal((6, grid8.n_coeffs)))
    b_sum = modal.b_coefficients(shear, f, g + g, 6)
    b_two = modal.b_coefficients(shear, f, g, 6)
    assert np.abs(b_sum.coeffs - 2.0 * b_two.coeffs).max() < 1e-12


def test_cos_projection_matches_quadrature(grid8):
    rng = np.random.default_rng(6)
    f = ModalField(grid8, rng.standard_normal((7, grid8.n_coeffs)) / 10.0)
    for N in (0, 1, 4, 8):
        proj = modal.cos_projection(f, N)
        ref = np.zeros(grid8.n_coeffs)
        for p in range(1, 8):
            w = quad(
                lambda s: H(p, s) * np.cos(N * np.pi * s), 0.0, 1.0, limit=200
            )[0]
            ref += w * f.coeffs[p - 1]
        assert np.abs(proj.coeffs - ref).max() < 1e-9


def test_brt_coefficient_matches_defining_integral(grid8):
    rng = np.random.default_rng(8)
    for p, q, n in ((1, 2, 3), (2, 2, 2), (3, 1, 4), (2, 5, 5)):
        f = single_mode(grid8, 8, p, rng.standard_normal(grid8.n_coeffs) / 20.0)
        got = modal.brt_coefficient(f, q, n)

        def inner(s):
            return RT2 * (1.0 - np.cos(q * np.pi * s)) / (q * np.pi)

        def integrand(s):
            h = 1e-7
            g = lambda t: inner(t) * H(p, t)
            return (g(s + h) - g(s - h)) / (2 * h) * H(n, s)

        ref = quad(integrand, 0.0, 1.0, limit=400)[0]
        assert np.abs(got.coeffs - ref * f.coeffs[p - 1]).max() < 1e-6


def test_xr_norm_is_absolutely_homogeneous(grid8, shear):
    rng = np.random.default_rng(10)
    f = ModalField(grid8, rng.standard_normal((6, grid8.n_coeffs)))
    for r in (1.0, 1.1, 2.0):
        base = modal.xr_norm(f, shear, r)
        assert abs(modal.xr_norm(f * (-2.5), shear, r) - 2.5 * base) < 1e-10 * base


def test_xr_norm_detail_components(grid8, shear):
    rng = np.random.default_rng(12)
    f = ModalField(grid8, rng.standard_normal((6, grid8.n_coeffs)))
    total = modal.xr_norm(f, shear, 1.0)
    detail = modal.xr_norm_detail(f, shear, 1.0)
    assert abs(detail["value"] - total) < 1e-12
    recombined = max(detail["weighted_lr"]) + max(detail["weighted_drift"])
    assert abs(recombined - total) < 1e-12
    assert detail["weighted_lr"][detail["argmax_lr"] - 1] == max(detail["weighted_lr"])


def test_xi_chi_closed_form(grid8):
    c = np.zeros((3, grid8.n_coeffs))
    c[:, 0] = [0.5, -0.25, 0.125]
    f = ModalField(grid8, c)
    a = np.abs(c[:, 0]) * np.sqrt(4.0 * np.pi)
    n = np.arange(1, 4)
    xi, chi = modal.xi_chi(f)
    assert abs(xi - np.sum(n**2 * a**2)) < 1e-12
    assert abs(chi - np.sum(n**4 * a**2)) < 1e-12


def test_probability_check_zero_field(grid8):
    f = ModalField.zeros(8, grid8)
    mass_error, min_f = modal.probability_check(f)
    assert mass_error == 0.0
    assert abs(min_f - INV_4PI) < 1e-15


def test_probability_check_detects_negative_density(grid8):
    c = np.zeros((1, grid8.n_coeffs))
    c[0, 0] = -1.0  # f = -Y00/sqrt(4pi) etc., strongly negative at s=1/2
    f = ModalField(grid8, c)
    mass_error, min_f = modal.probability_check(f)
    assert min_f < -0.1
    assert mass_error > 0.5


def test_sup_l1_profile_constant_mode(grid8):
    c = np.zeros((1, grid8.n_coeffs))
    c[0, 0] = 1.0
    f = ModalField(grid8, c)
    # |f(s, .)|_L1 = sqrt(4pi) H_1(s), peaking at s = 1/2
    assert abs(modal.sup_l1_profile(f) - np.sqrt(4 * np.pi) * RT2) < 1e-12
    s, prof = modal.abs_l1_profile(f, s_samples=5)
    assert np.allclose(prof, np.sqrt(4 * np.pi) * np.abs(H(1, s)), atol=1e-12)


def test_mode_lp_norms_consistency(grid8, shear):
    rng = np.random.default_rng(14)
    f = ModalField(grid8, rng.standard_normal((5, grid8.n_coeffs)))
    assert np.allclose(f.mode_lp_norms(1.0), f.mode_l1_norms(), atol=1e-13)
    assert f.max_mode_l1() == f.mode_l1_norms().max()


def test_cos_profile_evaluation_and_derivative():
    prof = modal.CosProfile(0.3, np.array([0.5, -0.2, 0.1]))
    s = np.linspace(0.0, 1.0, 101)
    direct = 0.3 + 0.5 * np.cos(np.pi * s) - 0.2 * np.cos(2 * np.pi * s) + 0.1 * np.cos(3 * np.pi * s)
    assert np.abs(prof(s) - direct).max() < 1e-14
    h = 1e-6
    fd = (prof(s[1:-1] + h) - prof(s[1:-1] - h)) / (2 * h)
    assert np.abs(prof.derivative(s[1:-1]) - fd).max() < 1e-6
    assert prof.sup_abs() >= np.abs(direct).max() - 1e-12


def test_save_load_round_trip(tmp_path, grid8, shear):
    rng = np.random.default_rng(15)
    f = ModalField(grid8, rng.standard_normal((6, grid8.n_coeffs)))
    path = tmp_path / "field.npz"
    modal.save_modal(path, f, shear)
    g, k = modal.load_modal(path, grid=grid8)
    assert np.array_equal(g.coeffs, f.coeffs)
    assert np.array_equal(k.entries, shear.entries)
    assert g.grid is grid8


def test_load_rejects_foreign_grid(tmp_path, grid8, shear):
    f = ModalField.zeros(3, grid8)
    path = tmp_path / "field.npz"
    modal.save_modal(path, f, shear)
    with pytest.raises(ValueError, match="degree"):
        modal.load_modal(path, grid=build_grid(6))


def test_modal_arithmetic(grid8):
    rng = np.random.default_rng(16)
    a = ModalField(grid8, rng.standard_normal((4, grid8.n_coeffs)))
    b = ModalField(grid8, rng.standard_normal((4, grid8.n_coeffs)))
    assert np.allclose((a + b).coeffs, a.coeffs + b.coeffs)
    assert np.allclose((a - b).coeffs, a.coeffs - b.coeffs)
    assert np.allclose((a * 3.0).coeffs, 3.0 * a.coeffs)
