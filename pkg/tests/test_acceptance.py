"""Closed-loop acceptance checks; each test records one PASS/FAIL line."""
import filecmp
import math
import os
import subprocess
import sys
import time
import warnings

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from nvdac import Config
from nvdac import dynamics as dyn
from nvdac import pipeline as pl
from nvdac.analysis import (
    _symmetry_group,
    count_dips,
    dip_centers,
    fit_damped_cosine,
    fit_exponential,
    fit_field_from_odmr,
    fit_lorentzian,
)
from nvdac.data import Trace
from nvdac.pressure import default_paper_model, params_at
from nvdac.sequences import mean_sweep, preset, sample_sweep
from nvdac.spinops import FieldVector, build_ground_hamiltonian, transition_frequency

CFG = Config()
ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


@pytest.fixture(scope="module")
def series():
    t = time.perf_counter()
    means = pl.series_means(CFG)
    return means, time.perf_counter() - t


# ---------------------------------------------------------------------------

def test_01_resonance_formulas_match_diagonalization(report):
    t = time.perf_counter()
    model = default_paper_model()
    worst = 0.0
    for p in pl.SERIES_PRESSURES:
        par = params_at(model, p)
        h = build_ground_hamiltonian(par, FieldVector(460.0))
        f0 = transition_frequency(h, (0, 1), (0, 0))
        f1 = transition_frequency(h, (-1, 1), (-1, 0))
        zeeman = par.gamma_n * 460.0
        worst = max(worst, abs(f0 - (abs(par.q) + zeeman)),
                    abs(f1 - (abs(par.q) + abs(par.a_par) + zeeman)))
    dt = time.perf_counter() - t
    ok = worst <= 2e3 and dt < 1.0
    report("1 resonance formulas", ok,
           f"max |exact - formula| = {worst / 1e3:.3f} kHz (tol 2 kHz), {dt:.2f} s")
    assert ok


def test_02_pressure_slopes(series, report):
    means, t_means = series
    t = time.perf_counter()
    inside = 0
    for seed in range(50):
        res = pl.series_from_means(means, seed)
        inside += (abs(abs(res.q_trend.slope) - 3.5e3) <= 0.4e3
                   and abs(abs(res.a_trend.slope) - 4.9e3) <= 1.1e3)
    dt = t_means + time.perf_counter() - t
    ok = inside >= 45 and dt < 120
    report("2 pressure slopes", ok,
           f"{inside}/50 runs with |dQ/dP| in 3.5 ± 0.4 and |dA/dP| in 4.9 ± 1.1 kHz/GPa, {dt:.0f} s")
    assert ok


def test_03_endpoint_values(series, report):
    means, _ = series
    recs = {r.pressure: r for r in pl.series_from_means(means, CFG.rng_seed).records}
    checks = [
        ("|Q| 0.6", recs[0.6].q_abs.value, 4.94e6, 10e3),
        ("|A| 0.6", recs[0.6].a_par_abs.value, 2.16e6, 10e3),
        ("|Q| 16.6", recs[16.6].q_abs.value, 4.89e6, 25e3),
        ("|A| 16.6", recs[16.6].a_par_abs.value, 2.10e6, 25e3),
    ]
    ok = all(abs(v - target) <= tol for _, v, target, tol in checks)
    report("3 endpoint values", ok, ", ".join(
        f"{n} = {v / 1e6:.4f} MHz ({target / 1e6:.2f} ± {tol / 1e3:g} kHz)" for n, v, target, tol in checks))
    assert ok


def test_04_eslac_polarization(report):
    t = time.perf_counter()
    opt = dyn.OpticalModel()
    par = params_at(default_paper_model(), 0.6)
    rho = dyn.optical_pump(dyn.thermal_state(dyn.N_FULL), opt, par, FieldVector(460.0), 5e-6)
    p_plus = dyn.nuclear_populations(rho)[0]
    peak = minimize_scalar(lambda b: -dyn.dnp_efficiency_scan(opt, par, [b])[0], bounds=(400, 620),
                           method="bounded", options={"xatol": 0.5}).x
    pol0 = dyn.dnp_efficiency_scan(opt, par, [0.0])[0]
    dt = time.perf_counter() - t
    ok = p_plus > 0.8 and abs(peak - 507) <= 30 and pol0 < 0.1 and dt < 30
    report("4 ESLAC DNP", ok, f"P(m_I=+1) = {p_plus:.3f} at 460 G, peak at {peak:.1f} G (507 ± 30), "
           f"polarization {pol0:.3g} at 0 G, {dt:.1f} s")
    assert ok


def test_05_readout_contrast(report):
    opt = dyn.OpticalModel()
    dim = dyn.readout(dyn.basis_state(0, 0), opt, 3e-7, shots=300_000)[0]
    bright = dyn.readout(dyn.basis_state(0, 1), opt, 3e-7, shots=300_000)[0]
    ratio = dim / bright
    ok = abs(ratio - 0.80) <= 0.02
    report("5 readout contrast", ok, f"|0,0>/|0,+1> count ratio = {ratio:.4f} (0.80 ± 0.02)")
    assert ok


def _trials(name, fitter, key, truth, tol, n=200):
    ctx = pl.context_for(CFG, name, 0.6)
    seq = preset(name, ctx)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", dyn.RWAWarning)
        mean = mean_sweep(seq, ctx)
    hits = 0
    for seed in range(n):
        fit = fitter(sample_sweep(mean, seq, ctx, seed=seed))
        hits += fit.converged and abs(fit.params[key] - truth) <= tol
    return hits


def test_06_coherence_fits(report):
    rabi = _trials("rabi_e", fit_damped_cosine, "frequency", 62e6, 0.005 * 62e6)
    fid = _trials("fid_n", fit_damped_cosine, "decay", 70e-6, 10e-6)
    t1 = _trials("t1_e", fit_exponential, "decay", 254e-6, 31e-6)
    ok = min(rabi, fid, t1) >= 190
    report("6 coherence fits", ok, f"Rabi 62 MHz ± 0.5%: {rabi}/200, T2n* 70 ± 10 us: {fid}/200, "
           f"T1e 254 ± 31 us: {t1}/200 (need 190)")
    assert ok


def _noise_free_fit(name, ctx, overrides):
    seq = preset(name, ctx, overrides)
    m = mean_sweep(seq, ctx)
    return fit_lorentzian(Trace(m.x, m.y, None), 1)


def test_07_linewidth_law(report):
    ctx = CFG.context(0.6)
    fw = _noise_free_fit("nmr_pulsed_ms0", ctx, {"rabi": 150, "nmr_span": 40e3, "points": 81})
    width = fw.params["fwhm_1"]
    law = 1 / (math.pi * ctx.noise.t2n_star)
    cw = [_noise_free_fit("nmr_cw", ctx, {"rabi": r}).params["fwhm_1"] for r in (1e3, 2e3, 5e3, 10e3, 20e3)]
    mono = bool(np.all(np.diff(cw) > 0))
    ok = abs(width / law - 1) <= 0.10 and mono
    report("7 linewidth law", ok, f"pulsed FWHM {width:.0f} Hz vs 1/(pi T2n*) = {law:.0f} Hz (±10%), "
           f"CW FWHM {', '.join(f'{w / 1e3:.1f}' for w in cw)} kHz increasing: {mono}")
    assert ok


def _field_error(fit_field, truth):
    ang = min(math.degrees(math.acos(min(1.0, abs(np.dot(r @ fit_field.vector, truth.vector))
                                         / (fit_field.magnitude * truth.magnitude))))
              for r in _symmetry_group())
    return abs(fit_field.magnitude - truth.magnitude), ang


def test_08_odmr_structure(report):
    _, ctx, tr = pl.simulate_preset(CFG, "odmr_cw", 16.6)
    n = count_dips(tr)
    checks = pl.odmr_checks(fit_lorentzian(tr, 4), ctx, n)

    # closed loop: low-power ODMR at two tilted fields, inverted back to (B, theta, phi)
    worst_b, worst_a = 0.0, 0.0
    for theta, phi in ((12.0, 75.0), (25.0, 40.0)):
        truth = FieldVector(460.0, math.radians(theta), math.radians(phi))
        c = pl.context_for(CFG, "odmr_cw", 0.6, field=truth)
        seq = preset("odmr_cw", c, {"rabi": 0.5e6})
        mean = mean_sweep(seq, c)
        for seed in range(5):
            s = sample_sweep(mean, seq, c, seed=seed)
            centres = dip_centers(fit_lorentzian(s, count_dips(s)))
            db, da = _field_error(fit_field_from_odmr(centres, c.params.d_gs).field, truth)
            worst_b, worst_a = max(worst_b, db), max(worst_a, da)
    loop_ok = worst_b <= 1.0 and worst_a <= 0.5
    ok = all(ch.passed for ch in checks) and loop_ok
    report("8 ODMR structure", ok, "; ".join(ch.line() for ch in checks)
           + f"; field inversion worst error {worst_b:.2f} G / {worst_a:.3f} deg (1 G / 0.5 deg)")
    assert ok


def _random_state(rng, dim):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def test_09_state_invariants(report):
    rng = np.random.default_rng(9)
    par = params_at(default_paper_model(), 0.6)
    b = FieldVector(460.0)
    opt, noise = dyn.OpticalModel(), dyn.NoiseModel()
    h9 = dyn.hamiltonian_for(par, b, dyn.N_GS)
    worst = [0.0, 0.0, math.inf]
    ops = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", dyn.RWAWarning)
        for _ in range(1000):
            rho = _random_state(rng, dyn.N_GS if rng.random() < 0.5 else dyn.N_FULL)
            for _ in range(rng.integers(1, 5)):
                kind = rng.choice(["free", "mw", "rf", "pump", "settle"])
                if kind == "pump":
                    r21 = rho if rho.shape[0] == dyn.N_FULL else dyn.embed(rho)
                    rho = dyn.optical_pump(r21, opt, par, b, float(rng.choice([0.5e-6, 1e-6, 3e-6])), noise)
                elif kind == "settle":
                    rho = dyn.settle(rho, opt)
                elif kind == "free":
                    # as in the engine, free evolution follows the decay of the optical cycle
                    rho = dyn.free_evolution(dyn.settle(rho, opt), h9, noise, rng.uniform(0, 500e-6))
                else:
                    rho = dyn.settle(rho, opt)
                    f = rng.uniform(2.0e9, 2.9e9) if kind == "mw" else rng.uniform(4.8e6, 7.5e6)
                    rabi = rng.uniform(1e6, 62e6) if kind == "mw" else rng.uniform(1e3, 50e3)
                    drive = dyn.make_drive(h9, kind, f, rabi, rng.uniform(0, 2 * math.pi))
                    dur = rng.uniform(0, 1e-6 if kind == "mw" else 100e-6)
                    rho = dyn.coherent_pulse(rho, drive, dur, noise, t0=rng.uniform(0, 1e-3))
                worst = [max(w, d) if i != 2 else min(w, d)
                         for i, (w, d) in enumerate(zip(worst, dyn.state_defects(rho)))]
                ops += 1
    ok = worst[0] < 1e-8 and worst[1] < 1e-9 and worst[2] > -1e-8
    report("9 state invariants", ok, f"{ops} operations on 1000 random states: max trace error "
           f"{worst[0]:.1e}, max Hermiticity error {worst[1]:.1e}, min eigenvalue {worst[2]:.1e}")
    assert ok


def test_10_reproduce_deterministic(tmp_path, report):
    outs = []
    for threads in (1, 4, 8):
        out = tmp_path / f"t{threads}"
        env = dict(os.environ, NVDAC_THREADS=str(threads))
        r = subprocess.run([sys.executable, "-m", "nvdac.cli", "reproduce", "4a", "--seed", "3",
                            "--workers", "8", "--out", str(out)], env=env, capture_output=True, text=True)
        assert r.returncode in (0, 1), r.stderr
        outs.append(out)
    names = sorted(os.listdir(outs[0]))
    same = all(sorted(os.listdir(o)) == names and
               filecmp.cmpfiles(outs[0], o, names, shallow=False)[0] == names
               for o in outs[1:])
    ok = bool(names) and same
    report("10 determinism", ok, f"{len(names)} files byte-identical for NVDAC_THREADS 1, 4, 8: {same}")
    assert ok
