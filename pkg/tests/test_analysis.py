import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from purimetro import analysis as an
from purimetro import channels as chn
from purimetro import engine as eng
from purimetro import linalg as la
from purimetro import pec
from purimetro.stats import exact_moments

rates = st.floats(min_value=1e-6, max_value=0.45)


def test_bias_bound():
    assert an.bias_bound(1.0, 1.0) == 0.0
    assert an.bias_bound(0.9, 2.0) == pytest.approx(0.4)
    with pytest.raises(ValueError):
        an.bias_bound(1.5, 1.0)


def test_ratio_variance_handles_zero_mean():
    assert an.ratio_variance(0.0, 0.5, 1.0, 0.3, 0.1) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        an.ratio_variance(1.0, 0.0, 1.0, 1.0, 0.0)


def test_variance_bound_dominates_exact_delta_variance():
    # single-layer PVCP with Z observable; compare with the exact delta-method variance
    gates = [eng.Gate(la.H, chn.depolarizing(0.01))]
    noise = eng.CswapNoise(local=chn.depolarizing(0.05), control_prep=chn.depolarizing(0.001))
    dec = pec.decomposition_for("depolarizing", 0.05)
    out = eng.run_vcp_circuit(gates, la.projector(la.ket("0")), cswap_noise=noise, pec=dec,
                              pec_handling="signed")
    mom = exact_moments(out.joint_distribution(), [1, -1], out.gamma)
    shots = 10**6
    exact = an.ratio_variance(**mom) / shots
    bound = an.variance_bound(out.gamma, mom["mu_y"], 1, 1, shots)
    assert exact <= bound


def test_sampling_cost():
    assert an.sampling_cost(1.0, 1.0, 0.01) == pytest.approx(1e4)
    with pytest.raises(ValueError):
        an.sampling_cost(1.0, 0.0, 0.01)


def test_eta():
    assert an.eta_m(0.5, 0.8) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        an.eta_m(1.0, 0.0)


def test_cost_examples():
    dep = an.cost_comparison("depolarizing", 0.05)
    assert dep.ignore_cost == pytest.approx(1 / 0.95**2)
    assert dep.pec_cost == pytest.approx(1.0789473684**2, abs=1e-9)
    assert dep.verdict == "ignore-cheaper"
    assert an.cost_comparison("dephasing", 0.05).verdict == "equal"
    assert an.cost_comparison("amplitude_damping", 0.05).verdict == "ignore-cheaper"
    with pytest.raises(ValueError):
        an.cost_comparison("dephasing", 0.5)


@settings(max_examples=50, deadline=None)
@given(rates)
def test_dephasing_costs_agree(p):
    r = an.cost_comparison("dephasing", p)
    assert abs(r.ignore_cost - r.pec_cost) <= 1e-9 * r.pec_cost


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(["depolarizing", "amplitude_damping"]), rates)
def test_ignoring_beats_pec(family, p):
    r = an.cost_comparison(family, p)
    assert r.ignore_cost < r.pec_cost


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["depolarizing", "dephasing", "amplitude_damping"]), st.floats(0.0, 0.45))
def test_f01_matches_channel(family, p):
    rep = chn.check_theorem1(chn.depolarizing(0.01), chn.make_channel(family, p))
    assert rep.f01 == pytest.approx(an.f01_closed_form(family, p), abs=1e-12)


def test_scaling_scan_shape():
    pts = an.scaling_scan(N_grid=[1, 10, 100])
    methods = {(p.method, p.m, p.L) for p in pts}
    assert ("sql", 1, 1) in methods and ("pvcp", 3, 2) in methods
    sql = [p for p in pts if p.method == "sql"]
    assert sql[0].variance == pytest.approx(1e-6)


def test_pvcp_without_noise_is_unbiased():
    pt = an.pvcp_point(50, 2, 1, 0.0, 0.0)
    assert pt.bias_sq == 0.0
    assert pt.variance == pytest.approx((1 + 6) / 1e6 / 2500)
