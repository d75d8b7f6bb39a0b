"""Release acceptance checks.

Each test verifies one numbered criterion from the release checklist (see
README) and registers a one-line verdict that is echoed after the run.  The
reference modulator is the order-32 lowpass design cascaded over two stages;
its documented figures are about -60.6 dB cascaded in-band NTF gain, a
stability bound of 0.4765, 95-odd dB peak-to-peak SNR and an 84 dB-ish peak
sweep SNR with a 4-level quantizer.  Everything here is deterministic: fixed
seeds, no dithering.
"""

import numpy as np
import pytest

from dsmx import lmi, sdp
from dsmx.design import (
    BandSpec,
    DesignSpec,
    ZeroAssignment,
    build_bandpass_real,
    companion_pair,
    design,
)
from dsmx.lti import (
    FirFilter,
    band_max,
    cascade_error_filter,
    fir_power,
    freq_response,
    hinf_norm,
    l1_norm,
    ntf_of,
)
from dsmx.metrics import snr_pp, snr_sweep, spectrum
from dsmx.sim import UniformQuantizer, simulate, simulate_cascade, simulate_cascade_linear
from dsmx.stability import QuantizerSpec, beta_envelope, input_bound, sufficient_condition

ONE = FirFilter([1.0])
LOWPASS_BAND = (0.0, np.pi / 32)
TONE = 2.0 * np.pi * 0.0325  # test tone, 0.0325 cycles/sample


def _random_band(rng) -> BandSpec:
    # half lowpass, half bandpass, widths up to most of the axis
    if rng.uniform() < 0.5:
        return BandSpec(0.0, rng.uniform(0.1, 0.7) * np.pi)
    c = rng.uniform(0.2, 0.8) * np.pi
    hw = rng.uniform(0.05 * np.pi, 0.9 * min(c, np.pi - c))
    return BandSpec(c, hw)


def test_reference_design_cascaded_attenuation(flagship, record):
    """Criterion 1: two cascaded order-32 stages reach the documented
    in-band attenuation, and the solve stays within the runtime budget."""
    casc_db = 20.0 * np.log10(band_max(fir_power(flagship.result.ntf, 2), LOWPASS_BAND))
    ok = -62.6 <= casc_db <= -58.6 and flagship.elapsed < 60.0
    record(
        1,
        ok,
        f"cascaded in-band max {casc_db:.2f} dB in [-62.6, -58.6], "
        f"solve {flagship.elapsed:.1f} s < 60 s",
    )


def test_reference_design_stability_bound(flagship, record):
    """Criterion 2: the admissible-input bound of the two-stage cascade
    reproduces 0.4765 within 5%."""
    q = QuantizerSpec(M=1.0, delta=0.5)
    bound = input_bound(ONE, cascade_error_filter(flagship.result.r, 2), q)
    rel = bound / 0.4765 - 1.0
    record(2, abs(rel) <= 0.05, f"input bound {bound:.4f} vs 0.4765 ({rel:+.3%})")


def test_reference_design_snr(flagship, record):
    """Criterion 3: peak-to-peak SNR of the simulated cascade lands in
    [90, 102] dB and the amplitude sweep peaks within 3 dB of 84.4 dB."""
    q = UniformQuantizer(0.5, 4)
    kk = np.arange(2 ** 16)
    u = 0.5 * np.sin(TONE * kk)
    trace = simulate_cascade(ONE, flagship.result.r, 2, q, u)
    pp = snr_pp(trace, u, LOWPASS_BAND)

    amps = 10.0 ** (np.arange(-80.0, 0.5, 1.0) / 20.0)
    sweep = snr_sweep(flagship.result, q, amps, TONE, 8192, m=2)
    # the sweep is assessed up to half of full scale (amplitude 0.5 = M+1
    # halved), past which every modulator saturates
    in_range = sweep.amplitudes <= 0.5 + 1e-12
    peak = float(np.max(sweep.snr_db[in_range]))
    ok = 90.0 <= pp <= 102.0 and abs(peak - 84.4) <= 3.0
    record(
        3,
        ok,
        f"snr_pp {pp:.1f} dB in [90, 102], sweep peak {peak:.1f} dB vs 84.4 +- 3",
    )


def test_bandpass_design_with_zeros(record):
    """Criterion 4: the capped bandpass design with zeros pinned at the
    band centre solves to optimality and the grid max meets gamma."""
    res = design(
        DesignSpec(
            order=32,
            bands=(BandSpec(np.pi / 2, np.pi / 16),),
            hinf_cap=1.5,
            zeros=(ZeroAssignment(np.pi / 2, 1),),
        )
    )
    zero_mag = abs(freq_response(res.ntf, np.pi / 2)) if res.ntf else np.inf
    rep = res.bands[0]
    gm = band_max(res.ntf, rep.band.interval()) if res.ntf else np.inf
    rel = abs(gm - rep.gamma) / rep.gamma if res.ntf else np.inf
    ok = res.status == sdp.OPTIMAL and zero_mag < 1e-6 and rel <= 1e-3
    record(
        4,
        ok,
        f"{res.status}, |T(pi/2)| = {zero_mag:.1e} < 1e-6, "
        f"grid max vs gamma rel {rel:.1e} <= 1e-3",
    )


def test_multiband_design_with_zeros(record):
    """Criterion 5: three capped bands with zeros at every centre are
    feasible, each in-band max meets its level, each centre is notched."""
    centers = (np.pi / 4, np.pi / 2, 3 * np.pi / 4)
    res = design(
        DesignSpec(
            order=32,
            bands=tuple(BandSpec(c, np.pi / 16) for c in centers),
            hinf_cap=1.5,
            zeros=tuple(ZeroAssignment(c, 1) for c in centers),
        )
    )
    ok = res.status == sdp.OPTIMAL
    worst_rel = -np.inf
    worst_notch = 0.0
    if ok:
        for rep in res.bands:
            gm = band_max(res.ntf, rep.band.interval())
            worst_rel = max(worst_rel, gm / rep.gamma - 1.0)
            worst_notch = max(worst_notch, abs(freq_response(res.ntf, rep.band.center)))
        ok = worst_rel <= 1e-3 and worst_notch < 1e-6
    gammas = ", ".join(f"{rep.gamma:.3f}" for rep in res.bands)
    record(
        5,
        ok,
        f"{res.status}, gammas [{gammas}], worst in-band excess {worst_rel:.1e}, "
        f"worst centre magnitude {worst_notch:.1e} < 1e-6",
    )


def test_random_certificates_tight_and_minimal(record):
    """Criterion 6: on 50 random solved specs the band grid max never
    exceeds gamma beyond 1e-3 relative, and shrinking gamma by 5% makes the
    pinned certificate infeasible in at least 48 cases."""
    rng = np.random.default_rng(60)
    certs = []
    draws = 0
    # deep-suppression draws (gamma ~ 1e-3) can defeat the 1e-8 certificate
    # tolerance in 64-bit arithmetic and come back NumericalTrouble; those
    # produce no certificate to check and are redrawn
    while len(certs) < 50 and draws < 70:
        draws += 1
        order = int(rng.integers(2, 9))
        band = _random_band(rng)
        res = design(DesignSpec(order=order, bands=(band,)))
        if res.status == sdp.OPTIMAL:
            certs.append((order, band, res))

    tight = infeasible = 0
    for order, band, res in certs:
        if band_max(res.ntf, band.interval()) <= res.gamma * (1.0 + 1e-3):
            tight += 1
        prob = lmi.LmiProblem()
        alpha = [prob.declare_scalar(f"a{k}") for k in range(order)]
        t = prob.declare_scalar("t")
        build_bandpass_real(prob, alpha, t, order, band.center, band.halfwidth)
        for k in range(order):
            prob.add_equality([(alpha[k], 0, 1.0)], float(res.r.coeffs[k + 1]))
        prob.add_equality([(t, 0, 1.0)], (0.95 * res.gamma) ** 2)
        prob.set_objective({t: 1.0})
        if sdp.solve(prob.compile()).status == sdp.INFEASIBLE:
            infeasible += 1

    ok = len(certs) == 50 and tight == 50 and infeasible >= 48
    record(
        6,
        ok,
        f"{len(certs)} certificates from {draws} draws, grid max tight {tight}/50, "
        f"5% shrink infeasible {infeasible}/50 >= 48",
    )


def test_first_order_design_matches_scan(record):
    """Criterion 7: the order-1 lowpass design agrees with a 1e-4-step
    brute-force scan of the single tap."""
    res = design(DesignSpec(order=1, bands=(BandSpec(0.0, np.pi / 2),)))
    # |1 + a e^{-jw}|^2 = 1 + a^2 + 2a cos(w) is monotone in cos(w), so the
    # band maximum sits at an endpoint; any |a| > 0.2 already exceeds the
    # whole scan range, so the optimum lies inside it
    a = np.arange(-0.2, 0.2 + 1e-12, 1e-4)
    g = np.maximum(np.abs(1.0 + a), np.sqrt(1.0 + a * a))
    best = int(np.argmin(g))
    da = abs(float(res.r.coeffs[1]) - a[best])
    dg = abs(res.gamma - g[best])
    ok = res.status == sdp.OPTIMAL and da <= 1e-3 and dg <= 1e-4
    record(7, ok, f"|da| = {da:.1e} <= 1e-3, |dgamma| = {dg:.1e} <= 1e-4")


def test_real_embedding_preserves_definiteness(record):
    """Criterion 8: negative definiteness of 100 random Hermitian matrices
    agrees exactly with their 2x-real embeddings."""
    rng = np.random.default_rng(80)
    agree = negdef = 0
    for _ in range(100):
        dim = int(rng.integers(1, 7))
        a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        h = (a + a.conj().T) / 2.0
        if rng.uniform() < 0.5:
            h = h - (np.max(np.linalg.eigvalsh(h)) + rng.uniform(0.01, 1.0)) * np.eye(dim)
        emb = np.block([[h.real, -h.imag], [h.imag, h.real]])
        nd_c = bool(np.all(np.linalg.eigvalsh(h) < 0.0))
        nd_r = bool(np.all(np.linalg.eigvalsh(emb) < 0.0))
        agree += nd_c == nd_r
        negdef += nd_c
    # both verdicts must occur or the agreement check proves nothing
    ok = agree == 100 and 20 <= negdef <= 80
    record(8, ok, f"agreement {agree}/100, {negdef} negative definite")


def test_simulation_respects_certified_bounds(record):
    """Criterion 9: for 100 random designs driven at the admissible input
    level, error, quantizer input and state deviation stay inside the
    certified envelopes."""
    rng = np.random.default_rng(90)
    length = 256
    designed = draws = violations = 0
    while designed < 100 and draws < 130:
        draws += 1
        order = int(rng.integers(1, 7))
        band = _random_band(rng)
        res = design(DesignSpec(order=order, bands=(band,)))
        if res.status != sdp.OPTIMAL:
            continue
        designed += 1
        delta = float(rng.choice([0.25, 0.5, 1.0]))
        # enough levels that the admissible level is positive
        need = max(l1_norm(res.r), 1.0 / delta)
        q = UniformQuantizer(delta, 2 * int(np.ceil((need + 0.5) / 2.0)) + 2)
        bound = input_bound(ONE, res.r, q.spec)
        u = bound * rng.uniform(-1.0, 1.0, length)
        trace = simulate(ONE, res.r, q, u)
        # the quantization-free loop reproduces the ideal state trajectory
        ideal = simulate_cascade_linear(ONE, res.r, 1, u, np.zeros(length))
        dev = np.linalg.norm(trace.x - ideal.x, axis=1)
        beta = beta_envelope(*companion_pair(order), delta, length)
        ok_run = (
            np.max(np.abs(trace.n)) <= delta + 1e-9
            and np.max(np.abs(trace.psi)) <= q.M + 1.0 + 1e-9
            and dev[0] == 0.0
            and np.all(dev[1:] <= beta[: length - 1] + 1e-9)
        )
        violations += not ok_run
    ok = designed == 100 and violations == 0
    record(9, ok, f"{designed} designs simulated, bound violations {violations}")


def test_stability_condition_chain(record):
    """Criterion 10: on 1000 random instances the peak-gain sufficient test
    implies the l1 test, which matches the admissible-level test both ways."""
    rng = np.random.default_rng(100)
    broken = [0, 0, 0]
    sufficient_hits = level_hits = 0
    for _ in range(1000):
        order = int(rng.integers(1, 11))
        taps = rng.normal(0.0, 1.0, order) * 10.0 ** rng.uniform(-2.0, 0.3)
        r = FirFilter(np.concatenate(([0.0], taps)))
        ntf = ntf_of(r)
        delta = 10.0 ** rng.uniform(-1.0, 0.5)
        q = QuantizerSpec(10.0 ** rng.uniform(-0.5, 1.0), delta)
        u = rng.uniform(0.0, 1.3 * (q.M + 1.0))
        admissible = input_bound(ONE, r, q) >= u
        l1_level = delta * l1_norm(r) + u <= q.M + 1.0
        l1_ntf = l1_norm(ntf) <= (q.M + 1.0 + delta - u) / delta
        peak = sufficient_condition(ntf, q, u)
        broken[0] += peak and not l1_ntf
        broken[1] += l1_ntf != l1_level
        broken[2] += l1_level != admissible
        sufficient_hits += peak
        level_hits += admissible
    ok = broken == [0, 0, 0] and sufficient_hits >= 20 and 100 <= level_hits <= 900
    record(
        10,
        ok,
        f"counterexamples {broken}, sufficient holds on {sufficient_hits}, "
        f"admissible on {level_hits} of 1000",
    )


def test_cascade_shaping_matches_model(flagship, record):
    """Criterion 11: linearized two-stage noise shaping follows |1+R|^2 on
    the spectral grid, and the cascade never exceeds the per-stage norm
    raised to the stage count."""
    ntf = flagship.result.ntf
    h_ratio = hinf_norm(fir_power(ntf, 2)) / hinf_norm(ntf) ** 2

    rng = np.random.default_rng(110)
    length = 8192
    w = rng.normal(0.0, 0.1, length)
    lin = simulate_cascade_linear(ONE, flagship.result.r, 2, np.zeros(length), w)
    sy = spectrum(lin.y)
    sw = spectrum(w)
    idx = np.where((sy.omega >= LOWPASS_BAND[0]) & (sy.omega <= LOWPASS_BAND[1]))[0]
    model = np.abs(freq_response(fir_power(ntf, 2), sy.omega[idx]))
    diff_db = 20.0 * np.log10(sy.magnitude[idx] + 1e-300) - 20.0 * np.log10(
        sw.magnitude[idx] * model + 1e-300
    )
    mean_diff = float(np.mean(diff_db))
    ok = abs(mean_diff) < 1.0 and h_ratio <= 1.0 + 1e-9
    record(
        11,
        ok,
        f"band-averaged shaping error {mean_diff:+.2f} dB < 1, "
        f"norm ratio {h_ratio:.9f} <= 1",
    )
