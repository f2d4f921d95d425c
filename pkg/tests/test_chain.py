import itertools
import math
from collections import defaultdict
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdaloha import analytic as an
from hdaloha import chain as ch
from hdaloha.core import MOVEMENTS, NetworkState, PreconditionError, movement, movement_class, validate_params


def protocol_rates(l1, l2, p1, p2, state):
    """Movement probabilities by enumerating one slot's random events.

    Works on Fractions for exact arithmetic.  Arrival: node 1 / node 2 / none;
    a node transmits if it holds a packet, receives nothing, and its coin
    succeeds; a lone transmission departs.
    """
    out = defaultdict(Fraction)
    arrivals = ((1, l1), (2, l2), (0, 1 - l1 - l2))
    for (j, pa), c1, c2 in itertools.product(arrivals, (True, False), (True, False)):
        pr = pa * (p1 if c1 else 1 - p1) * (p2 if c2 else 1 - p2)
        t1 = state[0] > 0 and j != 1 and c1
        t2 = state[1] > 0 and j != 2 and c2
        i = 1 if (t1 and not t2) else 2 if (t2 and not t1) else 0
        out[(i, j)] += pr
    return {k: v for k, v in out.items() if v != 0}


rationals = st.fractions(min_value=Fraction(1, 100), max_value=Fraction(99, 100), max_denominator=100)


@settings(max_examples=100, deadline=None)
@given(rationals, rationals, rationals, rationals, st.integers(0, 3), st.integers(0, 3))
def test_slot_rate_matches_protocol_enumeration(a, b, p1, p2, n1, n2):
    l1, l2 = a / 2, b / 2
    exact = protocol_rates(l1, l2, p1, p2, (n1, n2))
    assert sum(exact.values()) == 1
    params = validate_params(float(l1), float(l2), float(p1), float(p2))
    row = ch.rate_row(params, (n1, n2))
    for tag in set(exact) | set(row):
        assert row.get(tag, 0.0) == pytest.approx(float(exact.get(tag, 0)), abs=1e-15)
    assert abs(sum(row.values()) - 1) <= 1e-15


def test_slot_rate_examples(params_a):
    assert ch.slot_rate(params_a, (1, 1), movement(0, 0)) == pytest.approx(0.4, abs=1e-15)
    assert ch.slot_rate(params_a, (0, 0), movement(0, 1)) == pytest.approx(0.1, abs=1e-15)
    assert ch.slot_rate(params_a, (1, 0), movement(1, 0)) == pytest.approx(0.4, abs=1e-15)
    row = ch.rate_row(params_a, (1, 0))
    assert sorted(row.values()) == pytest.approx(sorted([0.1, 0.05, 0.4, 0.05, 0.4]))
    assert ch.slot_rate(params_a, (3, 2), movement(1, 2)) == pytest.approx(0.1 * 0.5)
    with pytest.raises(PreconditionError):
        ch.slot_rate(params_a, (0, 1), movement(1, 2))


def test_sgn():
    assert (ch.sgn(0), ch.sgn(1), ch.sgn(7)) == (0, 1, 1)


def test_witness_examples(params_a):
    w = ch.witness(params_a)
    assert w.phi((1, 1)) == pytest.approx(0.0625, abs=1e-16)
    assert w.phi((0, 0)) == 1
    assert w.nu((1, 1), movement(1, 2)) == pytest.approx(0.0125, abs=1e-16)
    assert w.psi(movement_class((1, 1), movement(2, 1))) == pytest.approx(0.25)
    assert w.c_inv() == pytest.approx(1 / 0.5625)


def test_witness_zero_arrivals_phi_is_one_at_origin():
    w = ch.witness(validate_params(0, 0.2, 0.5, 0.5))
    assert w.phi((0, 0)) == 1 and w.phi((2, 0)) == 0


def test_theorem_identity_spot_check(params_a):
    w = ch.witness(params_a)
    state, m = NetworkState(1, 1), movement(2, 1)
    lhs = ch.slot_rate(params_a, state, m) * w.phi(state)
    rhs = w.psi(movement_class(state, m)) * w.nu(state, m)
    assert lhs == pytest.approx(3.125e-3, abs=1e-18)
    assert rhs == pytest.approx(3.125e-3, abs=1e-18)


@pytest.mark.parametrize("fixture", ["params_a", "params_b", "params_high"])
def test_theorem_identity_holds(fixture, request):
    params = request.getfixturevalue(fixture)
    rep = ch.verify_theorem_identity(params, 20)
    assert rep.max_abs_error <= 1e-12
    assert rep.nu_consistency_ok
    # 441 states; boundary rows have fewer valid movements


def test_identity_pair_count(params_a):
    N = 20
    expected = sum(
        1 for n1, n2 in itertools.product(range(N + 1), repeat=2) for m in MOVEMENTS
        if n1 >= m.dep[0] and n2 >= m.dep[1]
    )
    assert ch.verify_theorem_identity(params_a, N).pairs_checked == expected


def test_injected_nu_fault_is_localized(params_a):
    w = ch.witness(params_a, nu_perturbation={((2, 3), (0, 2)): 1e-3})
    rep = ch.verify_theorem_identity(params_a, 20, w)
    assert rep.max_abs_error > 1e-12
    assert rep.worst_pair[0] == (2, 3) and rep.worst_pair[1].tag == (0, 2)
    assert rep.worst_class.base_state == (2, 3)
    assert not rep.nu_consistency_ok
    assert [c.base_state for c in rep.nu_inconsistent] == [(2, 3)]


def test_swapped_p_in_nu_fails(params_b):
    swapped = validate_params(0.2, 0.1, 0.4, 0.6)
    rep = ch.verify_theorem_identity(params_b, 10, ch.witness(params_b, swapped))
    assert rep.max_abs_error > 1e-6


def test_window_precondition(params_a):
    with pytest.raises(PreconditionError):
        ch.verify_theorem_identity(params_a, 1)


def test_phi_sum_identity(params_b):
    w = ch.witness(params_b)
    r1, r2 = an.utilization(params_b)
    for N in (5, 20, 80):
        s = sum(w.phi((i, j)) for i in range(N + 1) for j in range(N + 1))
        geometric = (1 - r1 ** (N + 1)) * (1 - r2 ** (N + 1)) / ((1 - r1) * (1 - r2))
        assert s == pytest.approx(geometric, rel=1e-12)
        assert w.c_inv() - s <= w.c_inv() * (r1 ** (N + 1) + r2 ** (N + 1) + 1e-14)


# --- truncated chain --------------------------------------------------------

def test_kernel_reject_policy_example(params_a):
    c = ch.build_truncated_kernel(params_a, 1, "reject-to-self")
    # a(1,2) and a(2,1) leave the window too, so their mass joins the self-loop
    assert c.kernel[c.index((1, 1)), c.index((1, 1))] == pytest.approx(0.6)
    with pytest.raises(ValueError):
        ch.build_truncated_kernel(params_a, 1, "wrap")


def test_kernel_small_example(params_a):
    c = ch.build_truncated_kernel(params_a, 1)
    K = c.kernel.toarray()
    assert c.size == 4 and c.boundary_policy == "reflect-to-self"
    i00, i10, i01, i11 = c.index((0, 0)), c.index((1, 0)), c.index((0, 1)), c.index((1, 1))
    assert K[i00, i00] == pytest.approx(0.8) and K[i00, i10] == pytest.approx(0.1) and K[i00, i01] == pytest.approx(0.1)
    # arrivals at the cap are dropped: a(0,1), a(0,2) join the self-loop,
    # a(1,2) and a(2,1) keep their departure
    assert K[i11, i11] == pytest.approx(0.5)
    assert K[i11, i01] == pytest.approx(0.25) and K[i11, i10] == pytest.approx(0.25)


def test_kernel_structure(params_b):
    N = 6
    c = ch.build_truncated_kernel(params_b, N)
    coo = c.kernel.tocoo()
    states = c.states()
    for r, col in zip(coo.row, coo.col):
        assert np.all(np.abs(states[r] - states[col]) <= 1)
    assert max(np.diff(c.kernel.indptr)) <= 9


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 0.49), st.floats(0, 0.49), st.floats(0.01, 0.99), st.floats(0.01, 0.99),
       st.sampled_from([1, 5, 40]), st.sampled_from(ch.BOUNDARY_POLICIES))
def test_kernel_rows_stochastic(l1, l2, p1, p2, N, policy):
    c = ch.build_truncated_kernel(validate_params(l1, l2, p1, p2), N, policy)
    rows = np.asarray(c.kernel.sum(axis=1)).ravel()
    assert np.max(np.abs(rows - 1)) <= 1e-14
    assert c.kernel.min() >= 0


def test_stationary_examples(params_a, params_b):
    pi = ch.stationary_distribution(ch.build_truncated_kernel(params_a, 40), 1e-12)
    assert pi[0] == pytest.approx(0.5625, abs=1e-9)
    assert pi.sum() == pytest.approx(1, abs=1e-12)
    N = 60
    pi = ch.stationary_distribution(ch.build_truncated_kernel(params_b, N), 1e-12).reshape(N + 1, N + 1)
    assert float(pi.sum(1) @ np.arange(N + 1)) == pytest.approx(10 / 11, abs=1e-6)


def test_stationary_residual(params_high):
    c = ch.build_truncated_kernel(params_high, 50)
    pi = ch.stationary_distribution(c, 1e-12)
    assert np.abs(c.kernel.T @ pi - pi).sum() <= 1e-12


def test_stationary_without_arrivals():
    c = ch.build_truncated_kernel(validate_params(0, 0, 0.3, 0.6), 5)
    pi = ch.stationary_distribution(c)
    assert pi[0] == 1 and pi[1:].sum() == 0


def test_stationary_reducible_restricts_to_reachable():
    params = validate_params(0, 0.3, 0.5, 0.6)
    N = 30
    pi = ch.stationary_distribution(ch.build_truncated_kernel(params, N)).reshape(N + 1, N + 1)
    assert pi[1:].sum() == 0
    rho2 = an.utilization(params).rho2
    # one-dimensional birth-death chain: truncation renormalizes the geometric law
    norm = 1 - rho2 ** (N + 1)
    assert pi[0, :5] == pytest.approx([(1 - rho2) * rho2**k / norm for k in range(5)], abs=1e-12)


def test_stationary_nonconvergence_raises(params_a):
    c = ch.build_truncated_kernel(params_a, 10)
    with pytest.raises(ch.ConvergenceError) as info:
        ch.stationary_distribution(c, tol=1e-300, max_iter=3)
    assert info.value.residual > 0


def test_compare_to_product_form(params_a, params_b, params_high):
    assert ch.compare_to_product_form(params_a, 40) <= 1e-8
    assert ch.compare_to_product_form(params_b, 80) <= 1e-6
    assert ch.compare_to_product_form(params_high, 120) <= 1e-6
    with pytest.raises(an.InstabilityError):
        ch.compare_to_product_form(validate_params(0.3, 0.3, 0.5, 0.5), 10)


def test_oracle_converges_with_truncation(params_high):
    tvs = [ch.compare_to_product_form(params_high, N) for N in (10, 20, 40, 80)]
    assert all(a > b for a, b in zip(tvs, tvs[1:]))
    assert tvs[-1] <= 1e-12


def test_reject_policy_is_exact_on_every_window(params_high):
    # rejecting whole movements keeps the closed form exact on the window,
    # so the distance sits at rounding level for every N
    tvs = [ch.compare_to_product_form(params_high, N, boundary_policy="reject-to-self") for N in (5, 10, 20)]
    assert max(tvs) <= 1e-12


def test_choose_truncation(params_a, params_high):
    assert ch.choose_truncation(params_a) == math.ceil(math.log(1e-10) / math.log(0.25))
    r = max(an.utilization(params_high))
    assert r ** ch.choose_truncation(params_high) <= 1e-10
    assert ch.choose_truncation(validate_params(0, 0, 0.5, 0.5)) == 1
    assert ch.choose_truncation(validate_params(0.225, 0.01, 0.3, 0.5)) == 512
