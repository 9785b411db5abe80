"""End-to-end acceptance criteria, each at its stated tolerance and runtime.

Every test appends one PASS/FAIL line to ``conftest.ACCEPTANCE``; the lines
are printed in the pytest terminal summary. The experiment protocol is the
default :class:`ExperimentConfig` (train seed 1 with 100k slots, test seed 2
with 20k slots), fixed before any result was inspected. Criteria that this
link model does not meet are marked ``xfail``; they still run at full
tolerance and report FAIL.
"""

import time
from dataclasses import replace

import numpy as np
import pytest
from scipy import special

from conftest import ACCEPTANCE, ar1
from csipred import channel, experiments, link, neural
from csipred.config import ExperimentConfig, Sweep
from csipred.experiments import (doppler_generalization, fd_tcsi, fdd_reports, fit_on, input_len,
                                 target_strategy, train_trace)
from csipred.predictors import PredictorSpec, build_windows, flops
from csipred.simulation import IDEAL, run_tdd, throughput_gain
from csipred.wiener import build_filter_bank, estimate_autocorrelation, wiener_predict

pytestmark = pytest.mark.slow


def _record(n, ok, detail, t0, limit):
    secs = time.perf_counter() - t0
    ok = bool(ok) and secs < limit
    ACCEPTANCE.append(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}  ({secs:.1f}s, limit {limit:g}s)")
    assert ok, detail


@pytest.fixture(scope="module")
def exp():
    return ExperimentConfig()


@pytest.fixture(scope="module")
def table(exp):
    return exp.table()


def _closed_form(kind, p, d, t, out=None):
    out = t - 1 if out is None else out
    if kind == "wiener":
        return out * (2 * p - 1)
    if kind == "dnn":
        return 2 * d * (p + out)
    if kind == "lstm":
        return p * (8 * d * d + 12 * d) + 2 * d * out
    return p * (6 * d * d + 11 * d) + 2 * d * out


def test_c01_flops_exact():
    t0 = time.perf_counter()
    bad = []
    for p in range(1, 9):
        for d in (4, 8, 16, 32):
            for t in (4, 32, 40):
                for kind in ("wiener", "dnn", "gru", "lstm"):
                    spec = PredictorSpec(kind, input_len=p, hidden=d, t_csi=t)
                    if flops(spec) != _closed_form(kind, p, d, t):
                        bad.append((kind, p, d, t))
                    fdd = spec.with_(mode="fdd_scalar", horizon=1)
                    if flops(fdd) != _closed_form(kind, p, d, t, out=1):
                        bad.append((kind, p, d, t, "fdd"))
    quoted = flops(PredictorSpec("gru", input_len=4, hidden=16, t_csi=4))
    _record(1, not bad and quoted == 6944, f"{len(bad)} mismatches over 384 grid points; GRU D=16 -> {quoted}", t0, 1)


def test_c02_wiener_ar1_oracle():
    t0 = time.perf_counter()
    x = ar1(0.9, 200_000, seed=11)
    spec = PredictorSpec("wiener", input_len=4, t_csi=5)
    bank = build_filter_bank(estimate_autocorrelation(x[:100_000], 20), 4, 5)
    w = build_windows(x[100_000:], spec)
    err = wiener_predict(bank, w.inputs) - w.targets_tdd
    dev = max(abs(np.mean(err[:, t - 1] ** 2) / (1 - 0.9 ** (2 * t)) - 1) for t in (1, 2, 4))
    # orthogonality holds against the statistics the filter was designed from
    d = build_windows(x[:100_000], spec, stride=1)
    e_in = wiener_predict(bank, d.inputs) - d.targets_tdd
    ortho = np.abs(e_in.T @ d.inputs / len(d)).max()
    _record(2, dev < 0.05 and ortho < 0.01, f"max rel dev from 1-rho^2tau {dev:.4f}; orthogonality residual {ortho:.4f}",
            t0, 30)


def test_c03_zoh_limit():
    t0 = time.perf_counter()
    x = ar1(0.9, 200_000, seed=12)
    lag = int(np.ceil(np.log(0.05) / np.log(0.9)))
    spec = PredictorSpec("zoh", input_len=1, t_csi=lag + 1)
    w = build_windows(x, spec)
    power = np.mean((w.inputs[:, 0] - w.targets_tdd[:, lag - 1]) ** 2)
    _record(3, 1.8 <= power <= 2.2, f"lag {lag} (rho^lag={0.9 ** lag:.3f}): ZOH error power {power:.3f}", t0, 10)


def test_c04_gradient_checks():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = {}
    for kind in ("dnn", "gru", "lstm"):
        errs = []
        for draw in range(10):
            m = neural.NeuralModel(kind, 4, 5, 3, seed=draw)
            for k in m.params:
                m.params[k] = rng.normal(scale=0.6, size=m.params[k].shape)
            errs.append(neural.gradient_check(m, rng.normal(size=(8, 4)), rng.normal(size=(8, 3))))
        worst[kind] = max(errs)
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    _record(4, all(v < 1e-4 for v in worst.values()), f"max relative error over 10 draws: {detail}", t0, 60)


def test_c05_eesm_properties():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    ident = max(abs(link.eesm_compress(np.full((4, 13), g), b) / g - 1)
                for g, b in zip(rng.uniform(0.01, 1000, 200), rng.uniform(0.5, 20, 200)))
    mono = 0
    for _ in range(1000):
        g = rng.gamma(1.0, 4.0, size=(2, 10)) + 1e-3
        b = rng.uniform(1, 20)
        h = g.copy()
        h[rng.integers(2), rng.integers(10)] += rng.uniform(0.01, 5)
        mono += link.eesm_compress(h, b) > link.eesm_compress(g, b)
    g = rng.gamma(1.0, 4.0, size=(4, 13))
    lim = abs(link.eesm_compress(g, 1e8) / g.mean() - 1)
    _record(5, ident < 1e-9 and mono == 1000 and lim < 1e-4,
            f"uniform-grid rel err {ident:.1e}; monotone {mono}/1000; beta->inf rel err {lim:.1e}", t0, 10)


def test_c06_channel_statistics():
    t0 = time.perf_counter()
    worst = 0.0
    for fd in (5.0, 10.0, 20.0):
        h = channel.generate_tap_process(fd, 200_000, seed=100 + int(fd))
        r0 = np.mean(np.abs(h) ** 2)
        for m in (1, 8, 32):
            emp = np.real(np.mean(h[m:] * np.conj(h[:-m]))) / r0
            worst = max(worst, abs(emp - special.j0(2 * np.pi * fd * m * 1e-3)))
    _record(6, worst <= 0.05, f"max |R(m)/R(0) - J0| = {worst:.4f}", t0, 60)


@pytest.mark.xfail(strict=False, reason="gain over ZOH stays below 5%: ideal CSI itself gains only about 6% "
                                        "under the independent-layer link model")
def test_c07_prediction_beats_zoh(exp, table):
    t0 = time.perf_counter()
    tr, te = train_trace(exp, table), experiments.test_trace(exp, table)
    reports = {s.kind: run_tdd(te, table, fit_on(exp, s, [tr])) for s in exp.predictors}
    ideal = run_tdd(te, table, IDEAL, t_csi=32, history=max(s.input_len for s in exp.predictors))
    gain = {k: throughput_gain(reports[k], reports["zoh"]) for k in ("wiener", "gru")}
    gain_ideal = throughput_gain(ideal, reports["zoh"])
    dominates = all(ideal.unconditioned_tp >= r.unconditioned_tp for r in reports.values())
    n = reports["zoh"].n_intervals
    ok = all(g >= 0.05 for g in gain.values()) and dominates and n >= 300
    _record(7, ok, f"gain over ZOH: wiener {gain['wiener']:.2%}, gru {gain['gru']:.2%} (ideal {gain_ideal:.2%}); "
                   f"ideal dominates {dominates}; {n} intervals", t0, 900)


def test_c08_waterfall(exp):
    t0 = time.perf_counter()
    low, high = [(5, 16), (10, 8), (20, 4)], [(10, 40), (20, 32)]
    pair = [(10, 32), (20, 16)]
    _, rows = fd_tcsi(exp, points=[(float(f), t) for f, t in low + high + pair])
    curve = {}
    for kind, fd, t, _, tau, _, m in rows:
        curve.setdefault((kind, int(fd), t), {})[tau] = m
    ok, parts = True, []
    for kind in ("wiener", "gru"):
        # the waterfall value of a point is its MSE at the last horizon of the interval
        lo = max(curve[kind, f, t][t - 1] for f, t in low)
        hi = min(curve[kind, f, t][t - 1] for f, t in high)
        # equal f_D * tau on both curves: 10 Hz at 2j slots, 20 Hz at j slots
        gap = max(abs(curve[kind, 10, 32][2 * j] - curve[kind, 20, 16][j]) for j in range(1, 16))
        ok &= lo < -5 and hi > -2 and gap <= 1.5
        parts.append(f"{kind}: worst low {lo:.2f} dB, best high {hi:.2f} dB, "
                     f"10Hz/32 vs 20Hz/16 max gap {gap:.2f} dB")
    _record(8, ok, "; ".join(parts), t0, 1200)


def test_c09_input_length_saturation(exp):
    t0 = time.perf_counter()
    e = replace(exp, sweep=Sweep(dopplers=(40.0,), t_csi_list=(4,), input_lens=(2, 3, 4, 5, 6, 7)))
    _, rows = input_len(e, kinds=("wiener",))
    vals = [r[4] for r in rows]
    spread = max(vals) - min(vals)
    _record(9, spread < 0.3, f"Wiener MSE over P=2..7: {', '.join(f'{v:.2f}' for v in vals)} dB; spread {spread:.3f} dB",
            t0, 300)


def test_c10_target_strategy(exp):
    t0 = time.perf_counter()
    _, rows = target_strategy(exp)
    by = {(r[0], r[1]): r for r in rows}
    ok, parts = True, []
    for kind in ("wiener", "gru"):
        b, c = by[kind, "best_cqi"], by[kind, "by_cqi"]
        ok &= c[3] <= b[3] + 0.2 and c[2] == 15 * b[2]
        parts.append(f"{kind}: by-CQI {c[3]:.2f} dB vs best-CQI {b[3]:.2f} dB, FLOPs {c[2]}/{b[2]}")
    _record(10, ok, "; ".join(parts), t0, 900)


@pytest.mark.xfail(strict=False, reason="P(-1) and P(+1) differ by about 0.002 at the flat optimum and swap "
                                        "order between seeds")
def test_c11_fdd_horizon(exp):
    t0 = time.perf_counter()
    ok, parts = True, []
    for kind in ("wiener", "gru"):
        reports = fdd_reports(exp, kind)
        best = max(reports, key=lambda h: reports[h].unconditioned_tp)
        r = reports[best]
        m1, p1 = r.cqi_error_hist.get(-1, 0.0), r.cqi_error_hist.get(1, 0.0)
        std_best, std_2 = r.conditioned_std, reports[2].conditioned_std
        ok &= best > 16 and std_best < std_2 and m1 < p1
        tps = ", ".join(f"{h}:{reports[h].unconditioned_tp:.2f}" for h in reports)
        parts.append(f"{kind}: best horizon {best} ({tps} Mbps), std {std_best:.2f} vs {std_2:.2f} at 2, "
                     f"P(-1)={m1:.3f} P(+1)={p1:.3f}")
    _record(11, ok, "; ".join(parts), t0, 900)


@pytest.mark.xfail(strict=False, reason="mixed-Doppler GRU loses 1.8 dB at 5 Hz with the fixed 100k-window "
                                        "training budget")
def test_c12_doppler_generalization(exp):
    t0 = time.perf_counter()
    header, rows = doppler_generalization(exp)
    loss = {(r[0], r[1]): r[5] for r in rows}
    dopplers = exp.sweep.dopplers
    gru_ok = all(loss["gru", f] <= 1.5 for f in dopplers)
    worse = sum(loss["wiener", f] > loss["gru", f] for f in dopplers)
    detail = "; ".join(f"{k} loss " + ", ".join(f"{f:g}Hz {loss[k, f]:.2f}" for f in dopplers) + " dB"
                       for k in ("gru", "wiener"))
    _record(12, gru_ok and worse >= 2, f"{detail}; Wiener worse at {worse}/3", t0, 1800)
