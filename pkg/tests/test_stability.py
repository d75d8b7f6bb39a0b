"""Tests for the no-overload certificates and gain checks."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from dsmx.lti import FirFilter, companion_realization, hinf_norm, l1_norm, ntf_of
from dsmx.stability import (
    QuantizerSpec,
    beta_envelope,
    build_report,
    impulse_l1,
    input_bound,
    lee_check,
    save_report,
    sufficient_condition,
)

ONE = FirFilter([1.0])


class TestQuantizerSpec:
    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            QuantizerSpec(M=0.0, delta=0.5)
        with pytest.raises(ValueError):
            QuantizerSpec(M=1.0, delta=0.0)
        with pytest.raises(ValueError):
            QuantizerSpec(M=-1.0, delta=0.5)


class TestInputBound:
    def test_zero_feedback(self):
        # no feedback: the whole no-overload range is available to u
        q = QuantizerSpec(M=3.0, delta=0.5)
        assert input_bound(ONE, FirFilter([0.0, 0.0]), q) == 4.0

    def test_matches_formula(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            taps = np.concatenate(([0.0], rng.normal(size=4)))
            r = FirFilter(taps)
            p = FirFilter(rng.normal(size=3))
            if l1_norm(p) == 0.0:
                continue
            q = QuantizerSpec(M=float(rng.uniform(0.5, 4.0)), delta=float(rng.uniform(0.1, 1.0)))
            expect = (q.M + 1.0 - q.delta * l1_norm(r)) / l1_norm(p)
            assert_allclose(input_bound(p, r, q), expect, rtol=1e-15)

    def test_can_go_negative(self):
        # delta*||r||_1 beyond M+1 certifies nothing, reported as negative
        q = QuantizerSpec(M=1.0, delta=1.0)
        r = FirFilter([0.0, 3.0])
        assert input_bound(ONE, r, q) < 0.0

    def test_rejects_bad_filters(self):
        q = QuantizerSpec(M=1.0, delta=0.5)
        with pytest.raises(ValueError):
            input_bound(ONE, FirFilter([1.0, 0.5]), q)
        with pytest.raises(ValueError):
            input_bound(FirFilter([0.0, 0.0]), FirFilter([0.0, 0.5]), q)


class TestImpulseL1:
    def test_delay_line_sums_to_order(self):
        # companion A is nilpotent: ||A^i B|| = 1 for i < N, then 0
        for order in (1, 2, 5, 12):
            taps = np.concatenate(([0.0], np.linspace(0.3, -0.2, order)))
            ss = companion_realization(FirFilter(taps))
            assert impulse_l1(ss.A, ss.B) == float(order)

    def test_geometric(self):
        a = np.array([[0.7]])
        b = np.array([1.0])
        assert_allclose(impulse_l1(a, b), 1.0 / 0.3, rtol=1e-10)

    def test_divergent_raises(self):
        with pytest.raises(ValueError, match="spectral radius"):
            impulse_l1(np.array([[1.0]]), np.array([1.0]))


class TestBetaEnvelope:
    def test_pure_delay(self):
        beta = beta_envelope(np.zeros((1, 1)), np.ones(1), 1.0, 5)
        assert_allclose(beta, np.ones(5))

    def test_monotone_and_limit(self):
        a = np.array([[0.6]])
        b = np.array([1.0])
        beta = beta_envelope(a, b, 0.25, 200)
        assert np.all(np.diff(beta) >= 0.0)
        assert_allclose(beta[-1], 0.25 * impulse_l1(a, b), rtol=1e-10)

    def test_scales_with_delta(self):
        a = np.array([[0.3]])
        b = np.array([2.0])
        assert_allclose(
            beta_envelope(a, b, 0.8, 10), 0.8 / 0.1 * beta_envelope(a, b, 0.1, 10)
        )

    def test_validation(self):
        with pytest.raises(ValueError):
            beta_envelope(np.zeros((1, 1)), np.ones(1), 1.0, 0)
        with pytest.raises(ValueError):
            beta_envelope(np.array([[1.0]]), np.ones(1), 1.0, 4)


class TestLeeCheck:
    def test_unity_ntf(self):
        assert lee_check(ONE) == (True, 1.0)

    def test_differencer_peaks_at_two(self):
        ok, peak = lee_check(FirFilter([1.0, 1.0]))
        assert not ok
        assert peak == 2.0

    def test_custom_limit(self):
        ok, peak = lee_check(FirFilter([1.0, 1.0]), limit=2.5)
        assert ok and peak == 2.0


class TestSufficientCondition:
    def test_zero_order_edge(self):
        # N=0: condition reduces to 1 <= M + 1 + delta - u
        q = QuantizerSpec(M=1.0, delta=1.0)
        assert sufficient_condition(ONE, q, 2.0)
        assert not sufficient_condition(ONE, q, 2.01)

    def test_rejects_negative_level(self):
        with pytest.raises(ValueError):
            sufficient_condition(ONE, QuantizerSpec(M=1.0, delta=1.0), -0.1)

    @settings(max_examples=60, deadline=None)
    @given(
        taps=st.lists(st.floats(-0.5, 0.5), min_size=1, max_size=5),
        m=st.floats(0.5, 4.0),
        delta=st.floats(0.05, 1.5),
        u=st.floats(0.0, 3.0),
    )
    def test_implies_l1_certificate(self, taps, m, delta, u):
        # peak-gain test is the conservative end of the l1 chain, so a pass
        # here must also pass the l1 budget and the input bound
        r = FirFilter([0.0] + taps)
        ntf = ntf_of(r)
        q = QuantizerSpec(M=m, delta=delta)
        if not sufficient_condition(ntf, q, u):
            return
        assert delta * l1_norm(ntf) <= q.M + 1.0 + delta - u + 1e-9
        assert input_bound(ONE, r, q) >= u - 1e-9


class TestBuildReport:
    def test_fields_consistent(self):
        r = FirFilter([0.0, 0.9, -0.35, 0.1])
        q = QuantizerSpec(M=3.0, delta=0.5)
        rep = build_report(ONE, r, q)
        assert_allclose(rep.u_max, input_bound(ONE, r, q), rtol=1e-15)
        assert rep.l1_r == l1_norm(r)
        assert rep.l1_p == 1.0
        assert rep.lee_value == hinf_norm(ntf_of(r))
        assert rep.lee_ok == (rep.lee_value < 1.5)
        assert rep.g_l1 == float(r.order)
        assert rep.beta_limit == q.delta * rep.g_l1

    def test_sufficient_uses_certified_level(self):
        r = FirFilter([0.0, 0.2])
        q = QuantizerSpec(M=3.0, delta=0.5)
        rep = build_report(ONE, r, q)
        assert rep.sufficient == sufficient_condition(ntf_of(r), q, max(rep.u_max, 0.0))
        probe = build_report(ONE, r, q, u_inf=100.0)
        assert not probe.sufficient


class TestSaveReport:
    def test_round_trip_values(self, tmp_path):
        r = FirFilter([0.0, 0.5, -0.25])
        q = QuantizerSpec(M=1.0, delta=0.5)
        rep = build_report(ONE, r, q)
        path = tmp_path / "stability.txt"
        save_report(rep, q, str(path))
        fields = {}
        for line in path.read_text().splitlines():
            if line.startswith("#"):
                continue
            key, value = line.split(": ", 1)
            fields[key] = value
        assert float(fields["u_max"]) == rep.u_max
        assert float(fields["l1_r"]) == rep.l1_r
        assert fields["lee_ok"] == ("yes" if rep.lee_ok else "no")
        assert float(fields["g_l1"]) == 2.0
        if rep.u_max > 0:
            assert_allclose(
                float(fields["u_max_db"]), 20.0 * np.log10(rep.u_max), atol=1e-6
            )

    def test_negative_bound_has_no_db_line(self, tmp_path):
        q = QuantizerSpec(M=1.0, delta=1.0)
        r = FirFilter([0.0, 3.0])
        rep = build_report(ONE, r, q)
        path = tmp_path / "stability.txt"
        save_report(rep, q, str(path))
        assert "u_max_db" not in path.read_text()
