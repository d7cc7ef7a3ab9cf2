"""Exit criteria, one test per criterion, each at its stated tolerance and time budget.

Every test records a one-line verdict that conftest prints in the terminal
summary (and prints it directly, visible with ``-s``).
"""

import itertools
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import CRITERIA
from lpbalance.balancing import ALGORITHMS, Greedy, check_refined_guarantee, refined_constant, run_greedy
from lpbalance.harness import ExperimentConfig, InstanceSource, run_experiment, run_validation_suite
from lpbalance.instances import gen_adversarial_wc, gen_random, gen_walsh_instance, walsh_opt
from lpbalance.offline import brute_force_opt, fractional_lower_bound
from lpbalance.olo import SEQUENCE_KINDS, benchmark_sequence, run_olo_game
from lpbalance.smoothing import (INF, PNormParams, SmoothingParams, dual_norm, linlp_bound, linlp_vector,
                                 lp_norm, psi, psi_gradient)

pytestmark = pytest.mark.acceptance

GRID_M = (2, 8, 64)
GRID_P = (2.0, 4.0, 16.0)
GRID_EPS = (0.1, 0.5, 1.0)


def record(num, ok, msg):
    CRITERIA[num] = (bool(ok), msg)
    print(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {msg}")
    assert ok, msg


def grid_samples(seed, total=10_000):
    """(m, p, eps, u) blocks covering the grid, at least ``total`` points overall."""
    rng = np.random.default_rng(seed)
    cells = list(itertools.product(GRID_M, GRID_P, GRID_EPS))
    per = -(-total // len(cells))
    for m, p, eps in cells:
        scale = 10.0 ** rng.uniform(-3, 4, size=(per, 1))
        u = rng.random((per, m)) * scale
        u[rng.random((per, m)) < 0.2] = 0.0
        yield m, p, eps, u, rng


def test_c01_psi_sandwich():
    t0 = time.perf_counter()
    count, worst = 0, -np.inf
    for m, p, eps, u, _ in grid_samples(1):
        sp = SmoothingParams.of(p, m, eps)
        norm, val = lp_norm(u, p), psi(u, sp)
        scale = norm + sp.radius
        # positive = violation, in units of the relative tolerance
        worst = max(worst, float(np.max((norm - val) / scale)), float(np.max((val - norm - sp.radius) / scale)))
        count += len(u)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 5.0 and count >= 10_000
    record(1, ok, f"psi sandwich on {count} points; worst relative excess {worst:.2e}; {elapsed:.2f}s (< 5s)")


def test_c02_gradient_stability_and_fd():
    worst_ratio, worst_fd, count = 0.0, 0.0, 0
    for m, p, eps, u, rng in grid_samples(2):
        sp = SmoothingParams.of(p, m, eps)
        v = rng.random(u.shape)
        g, gv = psi_gradient(u, sp), psi_gradient(u + v, sp)
        lo, hi = math.exp(-eps) * g, math.exp(eps) * g
        excess = np.maximum((lo - gv) / lo, (gv - hi) / hi)
        worst_ratio = max(worst_ratio, float(excess.max()))
        count += len(u)

        pts = u[:100]
        h = 1e-5 * np.maximum(1.0, pts.max(axis=1))
        step = h[:, None, None] * np.eye(m)[None]
        fd = (psi(pts[:, None, :] + step, sp) - psi(pts[:, None, :] - step, sp)) / (2 * h[:, None])
        gp = g[:100]
        rel = np.abs(fd - gp).max(axis=1) / np.abs(gp).max(axis=1)
        worst_fd = max(worst_fd, float(rel.max()))
    ok = worst_ratio <= 1e-9 and worst_fd <= 1e-6
    record(2, ok, f"e^(+-eps) stability on {count} pairs, worst relative excess {worst_ratio:.2e}; "
                  f"finite differences worst relative error {worst_fd:.2e} (<= 1e-6)")


def olo_cases():
    """100 sequences: four kinds, m in {2, 8, 64}, n up to 10^4."""
    rng = np.random.default_rng(3)
    ns = (10, 100, 1000, 10_000)
    for i in range(100):
        kind = SEQUENCE_KINDS[i % 4]
        m = GRID_M[(i // 4) % 3]
        n = ns[(i // 12) % 4]
        eps = GRID_EPS[i % 3]
        p = GRID_P[(i // 7) % 3]
        yield benchmark_sequence(kind, n, m, rng), SmoothingParams.of(p, m, eps)


def test_c03_olo_regret():
    t0 = time.perf_counter()
    bad_bound = bad_tele = runs = 0
    max_n = 0
    for ws, sp in olo_cases():
        rec = run_olo_game(ws, sp)
        bad_bound += not rec.bound_satisfied
        bad_tele += not rec.telescoping_satisfied
        runs += 1
        max_n = max(max_n, rec.rounds)
    elapsed = time.perf_counter() - t0
    ok = bad_bound == 0 and bad_tele == 0 and elapsed < 30.0 and runs == 100
    record(3, ok, f"{runs} OLO runs (n up to {max_n}): {bad_bound} regret violations, "
                  f"{bad_tele} telescoping violations; {elapsed:.2f}s (< 30s)")


def test_c04_linlp():
    rng = np.random.default_rng(4)
    worst, worst_dual, count = -np.inf, 0.0, 0
    per = -(-10_000 // 9)
    for p, m in itertools.product((2.0, 3.0, 8.0), GRID_M):
        params = PNormParams(p, m)
        u = rng.random((per, m)) * 10.0 ** rng.uniform(-3, 4, size=(per, 1))
        u[rng.random((per, m)) < 0.2] = 0.0
        u[u.max(axis=1) == 0, 0] = 1.0
        v = rng.random((per, m))
        lhs = lp_norm(u + v, p)
        rhs = np.array([linlp_bound(a, b, params) for a, b in zip(u, v)])
        worst = max(worst, float(np.max((lhs - rhs) / np.maximum(1.0, rhs))))
        pos = rng.random((per, m)) * 10.0 ** rng.uniform(-3, 4, size=(per, 1)) + 1e-12
        dn = np.array([float(dual_norm(linlp_vector(a, params), p)) for a in pos])
        worst_dual = max(worst_dual, float(np.abs(dn - 1.0).max()))
        count += per
    ok = worst <= 1e-9 and worst_dual <= 1e-9
    record(4, ok, f"linLp bound on {count} pairs, worst relative excess {worst:.2e}; "
                  f"| ||g(u)||_q - 1 | <= {worst_dual:.2e}")


def test_c05_greedy_grad():
    worst, count = -np.inf, 0
    for m, p, eps, u, rng in grid_samples(5):
        sp = SmoothingParams.of(p, m, eps)
        v, w = rng.random(u.shape), rng.random(u.shape)
        swap = psi(u + v, sp) > psi(u + w, sp)
        v[swap], w[swap] = w[swap].copy(), v[swap].copy()
        g = psi_gradient(u, sp)
        lhs = np.sum(g * v, axis=1)
        rhs = math.exp(2 * eps) * np.sum(g * w, axis=1)
        worst = max(worst, float(np.max(lhs - rhs)))
        count += len(u)
    record(5, worst <= 1e-9, f"greedyGrad on {count} triples; worst excess {worst:.2e} (<= 1e-9)")


def test_c06_example1():
    t0 = time.perf_counter()
    details, ok = [], True
    for m in (3, 8):
        cfg = ExperimentConfig(InstanceSource.parse(f"example1:m={m},eps=0.5"), ("greedy_wr",), p=200.0,
                               eps=0.5, order="random", trials=100, master_seed=m)
        rep = run_experiment(cfg)
        loads = np.array([r.linf_load for r in rep.rows])
        opt = brute_force_opt(InstanceSource.parse(f"example1:m={m},eps=0.5").build(), PNormParams(INF, m))
        ok &= len(loads) == 100 and bool(np.all(loads == m * 0.5)) and opt.value == 1.0
        details.append(f"m={m}: linf loads {sorted(set(loads.tolist()))}, OPT={opt.value}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 1.0
    record(6, ok, "; ".join(details) + f"; {elapsed:.2f}s (< 1s)")


def test_c07_adversary():
    t0 = time.perf_counter()
    details, ok = [], True
    p, m = 2, 8
    for M in (1, 3):
        tr = gen_adversarial_wc(Greedy(PNormParams(p, m)), M, p)
        alg = float(lp_norm(tr.algorithm_load, p))
        wit = float(lp_norm(tr.instance.load_of(tr.witness.choices), p))
        forced = p * M * m ** (1 / p) / 2 ** (2 + 1 / p)
        ok &= alg >= forced - 1e-9 and wit <= M * m ** (1 / p) + 1e-9 and abs(forced - M) < 1e-12
        details.append(f"M={M}: greedy {alg:.4f} >= {forced:.4f}, witness {wit:.4f} <= {M * m ** 0.5:.4f}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 1.0
    record(7, ok, "; ".join(details) + f"; {elapsed:.2f}s (< 1s)")


def test_c08_walsh_lower_bound():
    t0 = time.perf_counter()
    details, ok = [], True
    for p in (2, 4):
        opt = walsh_opt(p)
        cfg = ExperimentConfig(InstanceSource.parse(f"walsh:p={p}"), ALGORITHMS, p=float(p), eps=0.5,
                               order="random", trials=10_000, master_seed=100 + p)
        rep = run_experiment(cfg)
        for alg in ALGORITHMS:
            loads = rep.loads(alg)
            mean, se = loads.mean(), loads.std(ddof=1) / math.sqrt(len(loads))
            good = len(loads) == 10_000 and mean >= 1.01 * opt - 3 * se
            ok &= good
            details.append(f"p={p} {alg} {mean:.4f}>={1.01 * opt:.4f}")
        exact = {brute_force_opt(gen_walsh_instance(p, coin_seed=s), PNormParams(p, 2**p)).value for s in range(100)}
        ok &= exact == {opt}
        details.append(f"p={p} brute OPT over 100 coin draws {sorted(exact)}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 60.0
    record(8, ok, "; ".join(details) + f"; {elapsed:.1f}s (< 60s)")


def random_suite():
    """Walsh p in {2, 4} plus 20 random instances with m <= 8, n <= 40, k <= 3."""
    rng = np.random.default_rng(9)
    suite = [(InstanceSource.parse("walsh:p=2"), 2.0), (InstanceSource.parse("walsh:p=4"), 4.0)]
    dists = ("uniform", "bernoulli:0.5", "sparse:2")
    for i in range(20):
        m, n = int(rng.integers(2, 9)), int(rng.integers(5, 41))
        src = InstanceSource.parse(f"random:m={m},k=3,n={n},seed={i},dist={dists[i % 3]},vary_k=true,cap=1000000")
        suite.append((src, 2.0 if i % 2 == 0 else 4.0))
    return suite


@pytest.fixture(scope="module")
def random_order_runs():
    t0 = time.perf_counter()
    runs = []
    for i, (src, p) in enumerate(random_suite()):
        cache = {}
        inst = src.build(0)
        assert inst.m <= 8 or src.kind == "walsh"
        assert inst.n <= 40 and max(inst.ks) <= 3
        for eps in (0.25, 0.5, 1.0):
            cfg = ExperimentConfig(src, ("greedy_wr", "ultimate"), p=p, eps=eps, order="random",
                                   trials=2000, master_seed=1000 * i, opt_mode="auto")
            rep = run_experiment(cfg, cache)
            runs.append((src, p, eps, rep))
    return runs, time.perf_counter() - t0


def _mean_se(loads):
    return loads.mean(), loads.std(ddof=1) / math.sqrt(len(loads))


def test_c09_ultimate_random_order(random_order_runs):
    runs, elapsed = random_order_runs
    ok, worst = True, -np.inf
    for src, p, eps, rep in runs:
        m = src.build(0).m
        rows = [r for r in rep.rows if r.algorithm == "ultimate"]
        assert {r.opt_kind for r in rows} <= {"exact", "analytic"}
        opt = float(np.mean([r.opt_bound for r in rows]))
        mean, se = _mean_se(np.array([r.final_load for r in rows]))
        bound = (1 + 4 * eps) * (opt + 6 * p * (m ** (1 / p) - 1) / eps)
        ok &= len(rows) == 2000 and mean <= bound + 3 * se
        ok &= all(b.satisfied for b in rep.bounds if b.algorithm == "ultimate" and b.name == "ultimate_random")
        worst = max(worst, mean / bound)
    ok &= elapsed < 120.0
    record(9, ok, f"{len(runs)} (instance, eps) runs x 2000 orders; worst mean/bound {worst:.3f}; "
                  f"suite {elapsed:.1f}s (< 120s)")


def test_c10_greedy_wr_random_order(random_order_runs):
    runs, _ = random_order_runs
    ok, worst = True, -np.inf
    for src, p, eps, rep in runs:
        m = src.build(0).m
        rows = [r for r in rep.rows if r.algorithm == "greedy_wr"]
        opt = float(np.mean([r.opt_bound for r in rows]))
        mean, se = _mean_se(np.array([r.final_load for r in rows]))
        bound = (1 + 4 * eps) * opt + (3 * p + 1) * m ** (1 - 1 / p) / eps
        ok &= len(rows) == 2000 and mean <= bound + 3 * se
        ok &= all(b.satisfied for b in rep.bounds if b.algorithm == "greedy_wr" and b.name == "greedy_wr_random")
        worst = max(worst, mean / bound)
    record(10, ok, f"{len(runs)} (instance, eps) runs x 2000 orders; worst mean/bound {worst:.3f}")


def small_instances(count, seed):
    rng = np.random.default_rng(seed)
    dists = ("uniform", "bernoulli:0.5", "sparse:2")
    for i in range(count):
        m, k, n = int(rng.integers(2, 7)), int(rng.integers(1, 4)), int(rng.integers(1, 11))
        yield gen_random(m, k, n, seed=(seed, i), distribution=dists[i % 3], vary_k=bool(i % 2))


def test_c11_greedy_constant():
    ok, worst, taus = True, 0.0, 0
    for i, inst in enumerate(small_instances(200, 11)):
        p = 2.0 if i % 2 == 0 else 4.0
        params = PNormParams(p, inst.m)
        opt = brute_force_opt(inst, params).value
        load = run_greedy(inst, params).final_load
        ok &= load <= refined_constant(p) * opt + 1e-9
        if opt > 0:
            worst = max(worst, load / opt)
        if i < 50:
            for tau in range(1, inst.n + 1):
                ok &= check_refined_guarantee(inst, tau, params)
                taus += 1
    record(11, ok, f"200 instances, worst greedy/OPT {worst:.3f} <= p/ln(3/2) "
                   f"({refined_constant(2):.2f} or {refined_constant(4):.2f}); refined check at {taus} (instance, tau) pairs")


def test_c12_correlation_lemmas():
    t0 = time.perf_counter()
    records = run_validation_suite(trials=10_000, seed=12, eps=0.5)
    elapsed = time.perf_counter() - t0
    failed = [r for r in records if not r.passed]
    ok = not failed and elapsed < 30.0 and all(r.trials == 10_000 for r in records)
    record(12, ok, f"{len(records)} validator records over 50 vector sets, {len(failed)} failures; "
                   f"{elapsed:.1f}s (< 30s)")


def test_c13_oracle_consistency():
    ok, worst_gap, worst_wit = True, -np.inf, 0.0
    for i, inst in enumerate(small_instances(200, 13)):
        p = (2.0, 3.0, 4.0)[i % 3]
        params = PNormParams(p, inst.m)
        exact = brute_force_opt(inst, params)
        lb = fractional_lower_bound(inst, params, max_iters=300)
        worst_gap = max(worst_gap, lb.value - exact.value)
        wit = abs(float(lp_norm(inst.load_of(exact.certificate.choices), p)) - exact.value)
        worst_wit = max(worst_wit, wit)
    ok = worst_gap <= 1e-9 and worst_wit <= 1e-12
    record(13, ok, f"200 instances: max(fractional - exact) {worst_gap:.2e} (<= 1e-9); "
                   f"witness recompute error {worst_wit:.1e} (<= 1e-12)")


def test_c14_reproducibility(tmp_path):
    configs = [
        ["--source", "walsh:p=4", "--p", "4", "--order", "random", "--trials", "300", "--seed", "7"],
        ["--source", "random:m=5,k=3,n=12,seed=3", "--p", "3", "--order", "random", "--trials", "200",
         "--seed", "11", "--eps", "0.25"],
        ["--source", "example1:m=4,eps=0.5", "--p", "inf", "--order", "given"],
    ]
    same = 0
    for c, args in enumerate(configs):
        for fmt in ("csv", "json"):
            outs = []
            for run in range(2):
                out = tmp_path / f"{c}.{run}.{fmt}"
                proc = subprocess.run([sys.executable, "-m", "lpbalance", "run", *args, "--format", fmt,
                                       "--out", str(out)], capture_output=True, text=True)
                assert proc.returncode == 0, proc.stderr
                outs.append(out.read_bytes())
            same += outs[0] == outs[1] and len(outs[0]) > 0
    total = 2 * len(configs)
    record(14, same == total, f"{same}/{total} repeated CLI executions byte-identical")
