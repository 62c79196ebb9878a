import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from enantio_ep.core import InvalidArgument, eig2
from enantio_ep.three_level import (ANCHOR_EP_R, E_MINUS, E_PLUS, X_HAT, Y_HAT, Z_HAT,
                                    MolecularFieldConfig, Polarization3, reference_config,
                                    build_hamiltonian, calibrate_convention, discriminant_parts,
                                    ep_closed_form, ep_pair, ep_trajectory_sweep, locate_eps,
                                    matrix_element, omega123, rates, rotation_euler, rotation_z)


@pytest.fixture(scope="module")
def ref():
    return reference_config("R")


def generic_config(eta=0.7, dphi=0.3, hand="R"):
    """Non-coplanar real dipoles with linear polarizations."""
    return MolecularFieldConfig(
        d1E=np.array([1.0, 0.2, 0.1]), d2E=np.array([0.1, 0.9, -0.3]), d12=np.array([0.2, -0.1, 1.1]),
        F1=2e-3, F2=eta * 2e-3,
        e1=Polarization3.linear("x"), e2=Polarization3.linear("y"), e3=Polarization3.linear("z"),
        phase_light=dphi, handedness=hand)


# ----------------------------------------------------------- matrix elements

def test_matrix_element_linear():
    assert matrix_element(Z_HAT, 3e-6, Polarization3.linear("z")) == pytest.approx(3e-6)


def test_bilinear_vs_sesquilinear_circular():
    pol_p, pol_m = Polarization3.circular(+1), Polarization3.circular(-1)
    assert abs(matrix_element(E_PLUS, 1.0, pol_p)) < 1e-15
    assert matrix_element(E_PLUS, 1.0, pol_m) == pytest.approx(1.0)
    assert matrix_element(E_PLUS, 1.0, pol_p, conjugate=True) == pytest.approx(1.0)


def test_half_amplitude_convention():
    pol = Polarization3.linear("z")
    assert matrix_element(Z_HAT, 2.0, pol, "half-amplitude") == pytest.approx(1.0)
    with pytest.raises(InvalidArgument):
        matrix_element(Z_HAT, 1.0, pol, "quarter")


def test_circular_phase_under_rotation():
    beta = 0.37
    pol = Polarization3.circular(-1)
    m0 = matrix_element(E_PLUS, 1.0, pol)
    m1 = matrix_element(rotation_z(beta) @ E_PLUS, 1.0, pol)
    assert abs(m1) == pytest.approx(abs(m0))
    assert m1 / m0 == pytest.approx(np.exp(1j * beta))


def test_polarization_must_be_normalized():
    with pytest.raises(InvalidArgument):
        Polarization3(np.array([1.0, 1.0, 0.0]))


def test_config_validation():
    with pytest.raises(InvalidArgument):
        generic_config().replace(handedness="X")
    with pytest.raises(InvalidArgument):
        generic_config().replace(d1E=np.zeros(3), d2E=np.zeros(3), d12=np.zeros(3))
    with pytest.raises(InvalidArgument):
        generic_config().replace(F1=math.nan)


# ------------------------------------------------------------------ rates

def test_rates_eta_zero(ref):
    r = rates(ref.replace(F1=0.0))
    assert r.Gamma1 == 0 and r.gamma == pytest.approx(-r.Gamma2 / 2)


def test_rates_equal_fields(ref):
    assert rates(ref.with_eta(1.0)).gamma == pytest.approx(0.0, abs=1e-20)


def test_reference_rates(ref):
    r = rates(ref)
    assert r.Gamma1 == pytest.approx(2 * math.pi * 4e-6)
    assert r.Gamma2 == pytest.approx(2 * math.pi * 2e-6)
    half = rates(reference_config(rabi_convention="half-amplitude"))
    assert half.Gamma1 == pytest.approx(2 * math.pi * (1e-3) ** 2)


# ----------------------------------------------------------------- omega123

def test_omega_flips_with_handedness():
    c = generic_config()
    assert omega123(c.mirrored(), 1e-6) == pytest.approx(-omega123(c, 1e-6))


def test_coplanar_quarter_phase_kills_enantiosensitivity():
    c = generic_config(dphi=math.pi / 2).replace(d1E=X_HAT, d2E=Y_HAT, d12=X_HAT + Y_HAT)
    assert abs(omega123(c, 1e-6).real) < 1e-25


def test_omega_invariant_under_rotation_about_e3(ref):
    w0 = omega123(ref, 2e-6)
    for beta in (0.3, 1.1, -2.4):
        assert omega123(ref.rotated(rotation_z(beta)), 2e-6) == pytest.approx(w0, rel=1e-12)


def test_ep_positions_invariant_under_rotation_about_e3(ref):
    a = ep_closed_form(ref)
    b = ep_closed_form(ref.rotated(rotation_z(0.8)))
    for x, y in zip(a, b):
        assert x.params["Delta"] == pytest.approx(y.params["Delta"], rel=1e-12)


def test_general_rotation_matrix():
    R = rotation_euler("zyz", [0.1, 0.2, 0.3])
    assert np.allclose(R @ R.T, np.eye(3))
    with pytest.raises(InvalidArgument):
        generic_config().rotated(2 * np.eye(3))


# -------------------------------------------------------------- hamiltonian

def test_no_fields_gives_hermitian():
    c = generic_config().replace(F1=0.0, F2=0.0)
    H = build_hamiltonian(c, 1e-5, 2e-6)
    assert np.allclose(H, H.conj().T)


@settings(max_examples=60, deadline=None)
@given(st.floats(-5e-5, 5e-5), st.floats(-1e-5, 1e-5), st.floats(0, 2), st.floats(-math.pi, math.pi))
def test_traceless_and_discriminant(Delta, F3, eta, dphi):
    c = generic_config(eta, dphi)
    H = build_hamiltonian(c, Delta, F3)
    assert abs(np.trace(H)) < 1e-20
    re, im = discriminant_parts(c, Delta, F3)
    lam = eig2(H).lambda_plus
    scale = max(abs(complex(re, im)), 1e-25)
    assert abs(lam * lam - complex(re, im)) <= 1e-10 * scale + 1e-24


def test_common_decay_shift(ref):
    H0 = build_hamiltonian(ref, 1e-5, 1e-6)
    H1 = build_hamiltonian(ref, 1e-5, 1e-6, include_common_decay=True)
    assert np.allclose(H1 - H0, -0.5j * rates(ref).Gamma_avg * np.eye(2))


def test_handedness_flip_negates_im_delta():
    # only the three-photon term flips; together with Delta -> -Delta the whole Im part does
    c = generic_config()
    r1, i1 = discriminant_parts(c, 1e-5, 2e-6)
    r2, i2 = discriminant_parts(c.mirrored(), -1e-5, 2e-6)
    assert r2 == pytest.approx(r1, rel=1e-12) and i2 == pytest.approx(-i1, rel=1e-12)
    _, j1 = discriminant_parts(c, 0.0, 2e-6)
    _, j2 = discriminant_parts(c.mirrored(), 0.0, 2e-6)
    assert j2 == pytest.approx(-j1, rel=1e-12)


def test_im_delta_vanishes_at_zero_detuning_quarter_phase(ref):
    _, im = discriminant_parts(ref.replace(phase_light=math.pi / 2), 0.0, 2e-6)
    assert abs(im) < 1e-25


def test_equal_rates_im_delta_is_omega(ref):
    c = ref.with_eta(1.0)
    _, im = discriminant_parts(c, 3e-6, 2e-6)
    assert im == pytest.approx(omega123(c, 2e-6).real)


# --------------------------------------------------------------------- EPs

def test_closed_form_eps_are_coalescences(ref):
    for ep in ep_closed_form(ref):
        H = build_hamiltonian(ref, ep.params["Delta"], ep.params["F3"])
        assert ep.gap < 1e-8 * np.linalg.norm(H)
        assert ep.phase_rigidity < 1e-4


def test_reference_ep_values(ref):
    r = rates(ref)
    R = min(ep_closed_form(ref), key=lambda e: e.params["Delta"])
    assert R.params["Delta"] == pytest.approx(-r.geometric, rel=1e-12)
    assert R.params["F3"] == pytest.approx(r.gamma / 2, rel=1e-12)


def test_mirror_law_closed_form(ref):
    pair = ep_pair(ref)
    for a, b in zip(pair["R"], pair["L"]):
        assert a.params["Delta"] == pytest.approx(-b.params["Delta"], rel=1e-12)
        assert a.params["F3"] == pytest.approx(b.params["F3"], rel=1e-12)


def test_equal_rates_eps_on_detuning_axis(ref):
    eps = ep_closed_form(ref.with_eta(1.0))
    G = rates(ref.with_eta(1.0)).Gamma_avg
    assert sorted(e.params["Delta"] for e in eps) == pytest.approx([-G, G])
    assert all(e.params["F3"] == 0 for e in eps)


def test_eta_zero_eps_on_field_axis(ref):
    eps = ep_closed_form(ref.with_eta(0.0))
    assert all(abs(e.params["Delta"]) < 1e-20 for e in eps)


def test_no_fields_no_eps(ref):
    assert ep_closed_form(ref.replace(F1=0.0, F2=0.0)) == []


def test_numeric_matches_closed_form(ref):
    for c in (ref, ref.mirrored(), generic_config()):
        closed = sorted((e.params["Delta"], e.params["F3"]) for e in ep_closed_form(c))
        numeric = sorted((e.params["Delta"], e.params["F3"]) for e in locate_eps(c))
        assert len(numeric) == 2
        for (x0, y0), (x1, y1) in zip(closed, numeric):
            assert x1 == pytest.approx(x0, rel=1e-6)
            assert y1 == pytest.approx(y0, rel=1e-6)


def test_trajectory_sweep_handedness_swap(ref):
    etas = np.linspace(0, 2, 21)
    a = ep_trajectory_sweep(ref, eta=etas)
    b = ep_trajectory_sweep(ref.field_handedness_flipped(), eta=etas)
    key = lambda r: (r["eta"], r["branch"])
    aR = {key(r): r for r in a if r["handedness"] == "R"}
    bL = {key(r): r for r in b if r["handedness"] == "L"}
    for k, r in aR.items():
        assert bL[k]["Delta"] == pytest.approx(r["Delta"], abs=1e-20)
        assert bL[k]["F3"] == pytest.approx(r["F3"], abs=1e-20)


def test_trajectory_sweep_arguments(ref):
    with pytest.raises(InvalidArgument):
        ep_trajectory_sweep(ref)
    rows = ep_trajectory_sweep(ref, dphi=[0.0, 1.0])
    assert len(rows) == 8


def test_calibration_selects_full_amplitude():
    conv, scores = calibrate_convention()
    assert conv == "full-amplitude"
    ep = min(ep_closed_form(reference_config()), key=lambda e: e.params["Delta"])
    # detuning agrees with the anchor; the field coordinate differs by a factor ~2
    assert ep.params["Delta"] == pytest.approx(ANCHOR_EP_R[0], rel=0.01)
    assert ep.params["F3"] / ANCHOR_EP_R[1] == pytest.approx(2.0, rel=0.01)
