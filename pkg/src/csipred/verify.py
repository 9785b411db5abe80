"""Oracle and invariant checks runnable outside the test suite."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from . import channel, link, neural, predictors, wiener
from .errors import ConfigurationError


@dataclass
class Check:
    name: str
    passed: bool
    detail: str
    seconds: float


def _ar1(rho: float, n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    e = rng.normal(scale=np.sqrt(1 - rho * rho), size=n)
    x = np.empty(n)
    x[0] = rng.normal()
    for i in range(1, n):
        x[i] = rho * x[i - 1] + e[i]
    return x


def check_cqi_table(table_path=None):
    try:
        table = link.load_cqi_table(table_path)
    except ConfigurationError as exc:
        return False, f"table validation failed: {exc}"
    return True, f"15 entries, target {table.bler_target}"


def check_eesm(table_path=None):
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(50):
        g = rng.gamma(1.0, 5.0, size=(4, 8)) + 1e-3
        beta = rng.uniform(0.5, 20)
        brute = -beta * np.log(np.mean([np.exp(-v / beta) for v in g.ravel()]))
        worst = max(worst, abs(link.eesm_compress(g, beta) - brute) / brute)
    two = link.eesm_compress(np.array([[1.0, 3.0]]), 1.0)
    limit = link.eesm_compress(np.array([[1.0, 3.0]]), 1e6)
    ok = worst < 1e-12 and abs(two - 1.5662) < 1e-4 and abs(limit - 2.0) < 1e-4
    return ok, f"brute-force rel err {worst:.2e}, [1,3] beta=1 -> {two:.4f}, beta=1e6 -> {limit:.6f}"


def check_wiener_ar1(table_path=None):
    ac = wiener.ar1_autocorrelation(0.9, 4)
    bank = wiener.build_filter_bank(ac, 1, 1, horizons=(2,))
    closed = abs(bank.coefficients[0, 0] - 0.81) < 1e-12 and abs(bank.analytic_mmse[0] - 0.3439) < 1e-12
    x = _ar1(0.9, 200_000, 1)
    est = wiener.estimate_autocorrelation(x[:100_000], 20)
    spec = predictors.PredictorSpec("wiener", input_len=4, t_csi=5)
    b = wiener.build_filter_bank(est, 4, 5)
    w = predictors.build_windows(x[100_000:], spec)
    pred = wiener.wiener_predict(b, w.inputs)
    worst = 0.0
    for tau in (1, 2, 4):
        mse = np.mean((pred[:, tau - 1] - w.targets_tdd[:, tau - 1]) ** 2)
        worst = max(worst, abs(mse / (1 - 0.9 ** (2 * tau)) - 1))
    ok = closed and worst < 0.05
    return ok, f"a=0.81/mmse=0.3439 {'ok' if closed else 'WRONG'}, empirical vs 1-rho^2tau max rel dev {worst:.3f}"


def check_gradients(table_path=None):
    rng = np.random.default_rng(0)
    worst = {}
    for kind in ("dnn", "gru", "lstm"):
        errs = []
        for draw in range(10):
            m = neural.NeuralModel(kind, 3, 3, 2, seed=draw)
            for k in m.params:
                m.params[k] = rng.normal(scale=0.7, size=m.params[k].shape)
            x = rng.normal(size=(6, 3))
            y = rng.normal(size=(6, 2))
            errs.append(neural.gradient_check(m, x, y))
        worst[kind] = max(errs)
    ok = all(v < 1e-4 for v in worst.values())
    return ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items())


def check_bessel(table_path=None):
    worst = 0.0
    for fd in (5.0, 10.0, 20.0):
        h = channel.generate_tap_process(fd, 200_000, seed=int(fd))
        r0 = np.mean(np.abs(h) ** 2)
        for m in (1, 8, 32):
            emp = np.real(np.mean(h[m:] * np.conj(h[:-m]))) / r0
            worst = max(worst, abs(emp - special.j0(2 * np.pi * fd * m * 1e-3)))
    return worst < 0.05, f"max |R(m)/R(0) - J0| = {worst:.3f}"


def check_flops(table_path=None):
    bad = []
    for kind in ("dnn", "gru", "lstm"):
        for d in (4, 16):
            spec = predictors.PredictorSpec(kind, input_len=4, hidden=d, t_csi=4)
            _, counted = neural.counted_forward(neural.NeuralModel(kind, 4, d, 3), np.ones(4))
            if counted != predictors.flops(spec):
                bad.append(f"{kind}/D={d}")
    paper = predictors.flops(predictors.PredictorSpec("gru", input_len=4, hidden=16, t_csi=4))
    ok = not bad and paper == 6944
    return ok, f"GRU D=16 P=4 T=4 -> {paper}" + (f"; mismatches {bad}" if bad else "")


def check_interpolation(table_path=None):
    ac = wiener.ar1_autocorrelation(0.9, 8)
    dense = predictors.interpolate([1.0, 1.0], 4, "lmmse", ac)
    gram = np.array([[1, 0.9 ** 4], [0.9 ** 4, 1]])
    oracle = np.linalg.solve(gram, [0.81, 0.81]).sum()
    return abs(dense[2] - oracle) < 1e-12, f"midpoint {dense[2]:.5f} vs 2x2 solve {oracle:.5f}"


CHECKS: dict[str, Callable] = {
    "cqi-table": check_cqi_table,
    "eesm-brute-force": check_eesm,
    "wiener-ar1": check_wiener_ar1,
    "gradients": check_gradients,
    "bessel-autocorrelation": check_bessel,
    "flops": check_flops,
    "lmmse-interpolation": check_interpolation,
}


def run_checks(table_path=None, inject: str | None = None, report=print) -> list[Check]:
    """Run every check and report one status line each.

    `inject="gradient"` corrupts the analytic gradients so the gradient
    check must fail (negative control).
    """
    results = []
    for name, fn in CHECKS.items():
        t0 = time.perf_counter()
        try:
            if inject == "gradient" and name == "gradients":
                with neural.inject_gradient_fault():
                    ok, detail = fn(table_path)
            else:
                ok, detail = fn(table_path)
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        c = Check(name, bool(ok), detail, time.perf_counter() - t0)
        results.append(c)
        report(f"[{'PASS' if c.passed else 'FAIL'}] {name}: {detail} ({c.seconds:.1f}s)")
    return results
