import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment

from glekit import matrixkit as mk
from glekit import quadratic as qa
from glekit.errors import SingularCovariance, UnsupportedPotential
from glekit.model import Kind
from glekit.particles import InitPoint, init_ensemble, make_stepper, empirical_moments

from conftest import quadratic_gmv, quadratic_omv, quadratic_umv, random_quadratic


def multisets_match(a, b, tol=1e-10):
    a, b = np.asarray(a, complex), np.asarray(b, complex)
    if a.shape != b.shape:
        return False
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max()) <= tol


# ---------------------------------------------------------------------------
# assemble
# ---------------------------------------------------------------------------


def test_assemble_overdamped_two_particles():
    dd = qa.assemble(quadratic_omv(omega2=1.0, eta2=1.0), N=2)
    assert np.allclose(dd.B, [[-1.5, 0.5], [0.5, -1.5]], atol=1e-15)
    assert np.array_equal(dd.D, np.eye(2))


def test_assemble_underdamped_single_particle():
    dd = qa.assemble(quadratic_umv(omega2=1.0, eta2=0.0, gamma=2.0), N=1)
    assert np.allclose(dd.B, [[0.0, 1.0], [-1.0, -2.0]], atol=1e-15)
    assert np.allclose(dd.D, np.diag([0.0, 2.0]), atol=1e-15)


def test_assemble_generalized_single_particle():
    dd = qa.assemble(quadratic_gmv(eta2=0.0), N=1)
    assert np.allclose(dd.B, [[0, 1, 0], [-1, 0, 1], [0, -1, -1]], atol=1e-15)
    assert np.allclose(dd.D, np.diag([0.0, 0.0, 1.0]), atol=1e-15)


def test_assemble_rejects_nonquadratic():
    from conftest import doublewell_gmv

    with pytest.raises(UnsupportedPotential):
        qa.assemble(doublewell_gmv(), N=1)


# ---------------------------------------------------------------------------
# base_spectrum
# ---------------------------------------------------------------------------


def test_base_spectrum_overdamped():
    assert np.allclose(qa.base_spectrum(quadratic_omv(1.0, 1.0)), [-2.0, -1.0])


def test_base_spectrum_underdamped_printed_formulas():
    w = qa.base_spectrum(quadratic_umv(omega2=1.0, eta2=1.0, gamma=2.0))
    assert multisets_match(w, [-1.0, -1.0, -1.0 + 1j, -1.0 - 1j])


def test_base_spectrum_generalized_decoupled_mode():
    w = qa.base_spectrum(quadratic_gmv(omega2=1.0, eta2=0.0, lambdas=(0.0,), alphas=(1.0,)))
    assert w.shape == (6,)  # both branches, duplicated when eta2 = 0
    uniq = np.unique(np.round(w, 10))
    assert multisets_match(uniq, [-1.0, -1j, 1j])


def test_base_spectrum_matches_two_particle_drift(rng):
    # the two-particle drift carries each branch exactly once
    for kind in (Kind.OVERDAMPED, Kind.UNDERDAMPED, Kind.GENERALIZED):
        for m in (1, 2, 3):
            for _ in range(7):
                model = random_quadratic(kind, rng, m=m)
                base = qa.base_spectrum(model)
                eigs = mk.eig(qa.assemble(model, 2).B)
                assert multisets_match(base, eigs), f"kind={kind}, m={m}"


def test_base_spectrum_subset_of_larger_systems(rng):
    for kind in (Kind.OVERDAMPED, Kind.UNDERDAMPED, Kind.GENERALIZED):
        model = random_quadratic(kind, rng)
        base = qa.base_spectrum(model)
        for N in (3, 5):
            eigs = mk.eig(qa.assemble(model, N).B)
            for lam in base:
                assert np.min(np.abs(eigs - lam)) <= 1e-8, f"{lam} missing for N={N}"


def test_single_particle_drift_equals_noninteracting_branch(rng):
    # with one particle the empirical mean is the particle itself: eta2 drops out
    model = random_quadratic(Kind.GENERALIZED, rng)
    free = quadratic_gmv(
        omega2=model.omega2,
        eta2=0.0,
        beta=model.beta,
        lambdas=model.memory.diag[0],
        alphas=model.memory.diag[1],
    )
    eigs = mk.eig(qa.assemble(model, 1).B)
    base_free = qa.base_spectrum(free)
    # the free branch carries each root twice; the N=1 drift once
    uniq = np.unique(np.round(base_free, 10))
    assert multisets_match(np.sort_complex(eigs), np.sort_complex(uniq), tol=1e-8)


# ---------------------------------------------------------------------------
# lattice
# ---------------------------------------------------------------------------


def test_lattice_two_reals():
    rep = qa.spectrum_lattice([-1.0, -2.0], cap=2)
    assert multisets_match(rep.lattice, [0.0, -1.0, -2.0, -3.0, -4.0])


def test_lattice_single_value():
    rep = qa.spectrum_lattice([-1.0], cap=3)
    assert multisets_match(rep.lattice, [0.0, -1.0, -2.0, -3.0])


def test_lattice_complex_pair():
    rep = qa.spectrum_lattice([-1.0 + 1j, -1.0 - 1j], cap=1)
    assert multisets_match(rep.lattice, [0.0, -1.0 + 1j, -1.0 - 1j])


@settings(deadline=None, max_examples=25)
@given(
    re=st.lists(st.floats(min_value=-3.0, max_value=-0.1), min_size=1, max_size=3),
    cap=st.integers(min_value=1, max_value=4),
)
def test_lattice_contains_zero_and_is_closed(re, cap):
    base = np.asarray(re, dtype=complex)
    rep = qa.spectrum_lattice(base, cap=cap)
    assert np.min(np.abs(rep.lattice)) <= 1e-12
    for pt, k in zip(rep.lattice, rep.multi_indices):
        if sum(k) < cap:
            for lam in base:
                shifted = pt + lam
                assert np.min(np.abs(rep.lattice - shifted)) <= 1e-9
    gap = qa.spectral_gap(rep)
    assert gap >= 0.1 - 1e-9


def test_spectrum_report_and_gap():
    rep = qa.spectrum_report(quadratic_omv(1.0, 1.0), cap=4)
    assert qa.spectral_gap(rep) == pytest.approx(1.0)
    assert rep.kind == "overdamped"
    assert rep.parameters["omega2"] == 1.0


# ---------------------------------------------------------------------------
# fundamental solution
# ---------------------------------------------------------------------------


def test_ou_fundamental_point_value():
    val = qa.ou_fundamental(np.zeros((1, 1)), np.eye(1), 1.0, [0.3], [0.3])
    assert val == pytest.approx((4 * np.pi) ** -0.5, rel=1e-12)


def test_ou_fundamental_long_time_variance():
    # scalar stable drift relaxes to variance 2 * D_inf = 1; the printed
    # displacement e^{-tB} y diverges for stable B, so the invariant profile
    # is read off at y = 0 (the stationary-density formula carries no y)
    for x in (-1.0, 0.0, 0.7):
        val = qa.ou_fundamental(np.array([[-1.0]]), np.eye(1), 50.0, [x], [0.0])
        ref = np.exp(-0.5 * x * x) / np.sqrt(2 * np.pi)
        assert val == pytest.approx(ref, rel=1e-10)
    d_inf = mk.gram_integral(np.array([[-1.0]]), np.eye(1), 50.0)[0, 0]
    assert 2.0 * d_inf == pytest.approx(1.0, rel=1e-12)


def test_ou_fundamental_normalizes_for_memory_block():
    model = quadratic_gmv(eta2=0.0)
    dd = qa.assemble(model, 1)
    D = model.beta_inv * dd.D
    t = 1.0
    y = np.array([0.5, 0.0, -0.2])
    axes = [np.linspace(-8.0, 8.0, 129)] * 3
    qg, pg, zg = np.meshgrid(*axes, indexing="ij")
    h = axes[0][1] - axes[0][0]
    Dt = mk.gram_integral(dd.B, D, t)
    prec = np.linalg.inv(Dt)
    mean = mk.expm(-t * dd.B) @ y
    dx = np.stack([qg - mean[0], pg - mean[1], zg - mean[2]], axis=-1)
    quad = np.einsum("...i,ij,...j->...", dx, prec, dx)
    dens = np.exp(-0.25 * quad) / ((4 * np.pi) ** 1.5 * np.sqrt(np.linalg.det(Dt)))
    # spot-check the vectorized field against the scalar entry point
    assert dens[64, 64, 64] == pytest.approx(
        qa.ou_fundamental(dd.B, D, t, [0.0, 0.0, 0.0], y), rel=1e-12
    )
    total = dens.sum() * h**3
    assert total == pytest.approx(1.0, abs=1e-6)


def test_ou_fundamental_raises_on_degenerate_pair():
    with pytest.raises(SingularCovariance):
        qa.ou_fundamental(np.zeros((2, 2)), np.diag([1.0, 0.0]), 1.0, [0, 0], [0, 0])


def test_fundamental_kernel_convention_reported():
    # the kernel's displacement uses the reversed drift; forward Monte Carlo
    # must match e^{tB} y and the discrepancy against e^{-tB} y is real
    B = np.array([[-1.0, 0.5], [0.0, -2.0]])
    D = np.eye(2)
    rep = qa.fundamental_mc_discrepancy(B, D, 0.8, [1.0, -1.0], seed=3)
    assert rep.mean_err_forward <= 5 * rep.mc_se
    assert rep.mean_err_printed > 20 * rep.mc_se


# ---------------------------------------------------------------------------
# mean-field Gaussian law
# ---------------------------------------------------------------------------


def test_meanfield_green_scalar_closed_form():
    for t in (0.3, 1.0, 4.0):
        law = qa.meanfield_green([[-1.0]], [[-1.0]], [[1.0]], t, [1.0])
        assert law.mean[0] == pytest.approx(np.exp(-t), rel=1e-12)
        assert law.cov[0, 0] == pytest.approx((1 - np.exp(-4 * t)) / 2, rel=1e-11)
    late = qa.meanfield_green([[-1.0]], [[-1.0]], [[1.0]], 40.0, [1.0])
    assert late.cov[0, 0] == pytest.approx(0.5, rel=1e-12)


def test_meanfield_green_time_zero():
    law = qa.meanfield_green(np.eye(2), np.zeros((2, 2)), np.eye(2), 0.0, [1.0, 2.0])
    assert np.array_equal(law.mean, [1.0, 2.0])
    assert np.array_equal(law.cov, np.zeros((2, 2)))


def test_riccati_covariance_satisfies_printed_ode(rng):
    # dQ/dt = 2 [D + (B+K) Q], checked by centered differences
    for _ in range(5):
        n = int(rng.integers(1, 4))
        B = rng.uniform(-1, 1, (n, n)) - 2.0 * np.eye(n)
        K = rng.uniform(-0.5, 0.5, (n, n))
        R = rng.uniform(-1, 1, (n, n))
        D = R @ R.T
        for t in rng.uniform(0.1, 2.0, 3):
            Q = qa.riccati_covariance(B, K, D, t)
            h = 1e-5
            fd = (qa.riccati_covariance(B, K, D, t + h) - qa.riccati_covariance(B, K, D, t - h)) / (
                2 * h
            )
            rhs = 2.0 * (D + (B + K) @ Q)
            assert np.max(np.abs(fd - rhs)) <= 1e-6 * max(1.0, np.max(np.abs(rhs)))


def test_riccati_equals_gram_in_one_dimension(rng):
    for _ in range(10):
        b, k = rng.uniform(-2, -0.1), rng.uniform(-1, 1)
        d = rng.uniform(0.1, 2)
        t = rng.uniform(0.1, 3)
        Q = qa.riccati_covariance([[b]], [[k]], [[d]], t)[0, 0]
        G = qa.meanfield_green([[b]], [[k]], [[d]], t, [0.0]).cov[0, 0]
        assert Q == pytest.approx(G, rel=1e-10)


def test_meanfield_green_covariance_psd_along_time(rng):
    for _ in range(5):
        model = random_quadratic(Kind.GENERALIZED, rng)
        B, K, D = qa.split_BK(model)
        for t in (0.1, 0.5, 1.0, 3.0, 10.0):
            law = qa.meanfield_green(B, K, D, t, np.zeros(B.shape[0]))
            w = np.linalg.eigvalsh(law.cov)
            assert w[0] >= -1e-10 * max(1.0, w[-1])


def test_split_bk_examples():
    B, K, D = qa.split_BK(quadratic_omv(1.0, 1.0, beta=1.0))
    assert (B[0, 0], K[0, 0], D[0, 0]) == (-1.0, -1.0, 1.0)

    B, K, D = qa.split_BK(quadratic_umv(1.0, 1.0, beta=1.0, gamma=1.0))
    assert np.allclose(B, [[0, 1], [-1, -1]])
    assert np.allclose(K, [[0, 0], [-1, 0]])
    assert np.allclose(D, np.diag([0.0, 1.0]))

    B, K, D = qa.split_BK(quadratic_gmv())
    assert np.allclose(B, [[0, 1, 0], [-1, 0, 1], [0, -1, -1]])
    expected_K = np.zeros((3, 3))
    expected_K[1, 0] = -1.0
    assert np.allclose(K, expected_K)
    assert np.allclose(D, np.diag([0.0, 0.0, 1.0]))


def test_generalized_models_are_hypoelliptic(rng):
    # positive definite A and nonzero coupling propagate noise everywhere
    for _ in range(20):
        model = random_quadratic(Kind.GENERALIZED, rng, m=int(rng.integers(1, 3)))
        dd = qa.assemble(model, 1)
        _, hypo = mk.kalman_rank(dd.B, dd.D)
        assert hypo


def test_meanfield_green_matches_particle_moments():
    # interacting ensemble from a point start tracks the Gaussian law
    model = quadratic_gmv()
    N, dt, T = 4000, 1e-3, 1.0
    ens = init_ensemble(model, N, seed=5, init=InitPoint([1.0, 0.0, 0.0]))
    stepper = make_stepper(model, dt)
    for _ in range(int(T / dt)):
        stepper.step(ens)
    mean, cov, se = empirical_moments(ens)
    law = qa.meanfield_law(model, T, [1.0, 0.0, 0.0])
    assert np.all(np.abs(mean - law.mean) <= 4.0 * se)
    from glekit.particles import covariance_se

    cse = covariance_se(cov, N)
    assert np.all(np.abs(cov - law.cov) <= 4.0 * cse)
