"""End-to-end acceptance checks at their stated tolerances and time budgets.

Each test appends one ``[PASS]``/``[FAIL]`` line to the log printed in the
terminal summary, then asserts.
"""

import math
import time

import numpy as np
import pytest

from branchfront import branching, control, levy, reaction, semigroup
from branchfront.branching import BranchingConfig, Status
from branchfront.levy import LevyModel
from branchfront.semigroup import heaviside

N_MC = 100_000
J = 200


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def record(log, number, ok, detail, elapsed, budget):
    ok = ok and elapsed < budget
    log.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail} "
               f"({elapsed:.1f}s of {budget:g}s)")
    assert ok, log[-1]


def test_criterion_01_speed(bm, acceptance_log):
    with Timer() as tm:
        res = levy.front_speed_all(bm, 1.0)
    inf_err = abs(res["inf_form"].q - math.sqrt(2))
    spread = max(abs(r.q - res["inf_form"].q) for r in res.values())
    ok = inf_err <= 1e-9 and spread <= 1e-5
    record(acceptance_log, 1, ok,
           f"q={res['inf_form'].q:.12f}, |q-sqrt2|={inf_err:.1e}, form spread={spread:.1e}",
           tm.elapsed, 1)


def test_criterion_02_degenerate(acceptance_log):
    with Timer() as tm:
        errs = [abs(r.q - b) for b in (0.3, 0.7, 1.5)
                for r in levy.front_speed_all(LevyModel(drift=b), 1.0).values()]
    record(acceptance_log, 2, max(errs) <= 1e-12, f"max |q-b|={max(errs):.1e}", tm.elapsed, 1)


def test_criterion_03_reaction_oracle(dyadic_rf, acceptance_log):
    q0 = np.linspace(0.01, 0.99, 20)
    ts = np.linspace(0.25, 5.0, 20)
    with Timer() as tm:
        err = 0.0
        for t in ts:
            exact = q0 / (q0 + math.exp(-t) * (1 - q0))
            # Q_t(q) = 1 - R_t(1 - q)
            err = max(err, np.max(np.abs(1 - reaction.R_t(dyadic_rf, 1 - q0, t) - exact)))
    record(acceptance_log, 3, err <= 1e-8, f"max error={err:.1e} on 20x20 grid", tm.elapsed, 1)


def test_criterion_04_trotter(bm, dyadic_rf, u0, acceptance_log):
    with Timer() as tm:
        worst, gaps, n1 = math.inf, {}, None
        for n in range(1, 65):
            br = semigroup.trotter_bounds(bm, dyadic_rf, u0, 1.0, n)
            worst = min(worst, float(np.min(br.upper.values - br.lower.values)))
            gaps[n] = br.gap
            if n == 1:
                n1 = br
        _, final = semigroup.solve(bm, dyadic_rf, u0, 1.0, tol=0.02)
    lo0, hi0 = n1.lower(0.0), n1.upper(0.0)
    ok = (worst >= -1e-12 and gaps[64] < gaps[1] and final.gap < 0.02
          and abs(lo0 - 0.2689) <= 0.01 and abs(hi0 - 0.5) <= 0.01)
    record(acceptance_log, 4, ok,
           f"min(upper-lower)={worst:.1e}, gap(1)={gaps[1]:.4f}, gap(64)={gaps[64]:.4f}, "
           f"solve gap={final.gap:.4f} at n={final.n}, n=1 bracket at 0=[{lo0:.4f}, {hi0:.4f}]",
           tm.elapsed, 60)


def test_criterion_05_picard(bm, dyadic_rf, u0, solved_t1, acceptance_log):
    _, br = solved_t1
    with Timer() as tm:
        res = semigroup.picard_solve(bm, dyadic_rf, u0, 1.0)
    v = res.solution.values
    excess = float(max(np.max(br.lower.values - v), np.max(v - br.upper.values)))
    ok = res.converged and excess <= 1e-3
    record(acceptance_log, 5, ok,
           f"{res.iterations} iterations, worst excursion outside bracket={excess:.1e}",
           tm.elapsed, 120)


@pytest.fixture(scope="module")
def solution_t1(bm, dyadic_rf, u0):
    return control.solution_path(bm, dyadic_rf, u0, 1.0, J=J)


def test_criterion_06_control(bm, dyadic_rf, u0, acceptance_log):
    notes, ok = [], True
    with Timer() as tm:
        for t, x in ((0.5, 0.0), (1.0, 0.0), (1.0, 1.0)):
            mid, br = semigroup.solve(bm, dyadic_rf, u0, t, tol=0.02)
            ref, gap = float(mid(np.array([x]))[0]), br.gap
            for name, pol in control.bundled_policies(dyadic_rf, t, seed=1).items():
                est = control.estimate_value(bm, x, t, pol, dyadic_rf, heaviside, N_MC, J, seed=1)
                ok &= est.mean <= ref + gap + 3 * est.stderr
                if name == "zero" and (t, x) == (1.0, 0.0):
                    zero_ok = abs(est.mean - 0.25) <= 3 * est.stderr
                    ok &= zero_ok
                    notes.append(f"zero at (1,0)={est.mean:.4f}+-{est.stderr:.4f}")
            opt = control.optimal_policy(bm, dyadic_rf, u0, t, J)
            est = control.estimate_value(bm, x, t, opt, dyadic_rf, heaviside, N_MC, J, seed=1)
            reach = est.mean - (ref - gap - 3 * est.stderr - 0.01)
            ok &= reach >= 0
            notes.append(f"opt({t:g},{x:g})={est.mean:.4f} vs u={ref:.4f}")
    record(acceptance_log, 6, ok, "; ".join(notes), tm.elapsed, 300)


def test_criterion_07_martingale(bm, dyadic_rf, solution_t1, acceptance_log):
    with Timer() as tm:
        chk = control.martingale_check(bm, dyadic_rf, solution_t1, 0.0, 1.0,
                                       [0.25, 0.5, 0.75, 1.0], n_paths=N_MC, seed=1)
    limit = 3 * max(chk.stderrs) + solution_t1.gap
    record(acceptance_log, 7, chk.max_deviation < limit,
           f"max deviation={chk.max_deviation:.1e} < {limit:.1e} (u={chk.reference:.4f})",
           tm.elapsed, 120)


def test_criterion_08_extinction(bm, acceptance_log):
    law = reaction.OffspringLaw(((0, 0.25), (2, 0.75)))
    with Timer() as tm:
        est = branching.extinction_estimate(BranchingConfig(bm, law), t_long=30.0,
                                            n_runs=N_MC, seed=1)
    se = math.sqrt((1 / 3) * (2 / 3) / N_MC)
    err = abs(est.probability - 1 / 3)
    record(acceptance_log, 8, err <= 3 * se,
           f"estimate={est.probability:.5f}, |err|={err:.1e} vs 3se={3 * se:.1e}",
           tm.elapsed, 120)


def test_criterion_09_mckean(bm, dyadic_rf, solved_t1, acceptance_log):
    mid, br = solved_t1
    xs = [-1.0, 0.0, 1.0]
    with Timer() as tm:
        ests = branching.mckean_check(BranchingConfig(bm, reaction.dyadic()), heaviside, 1.0, xs,
                                      n_runs=N_MC, seed=1)
    ok, notes = True, []
    for e in ests:
        ref = float(mid(np.array([e.x]))[0])
        ok &= abs(e.estimate.mean - ref) <= 3 * e.estimate.stderr + br.gap and not e.flagged
        notes.append(f"x={e.x:g}: {e.estimate.mean:.4f} vs {ref:.4f}")
    record(acceptance_log, 9, ok, "; ".join(notes) + f" (gap {br.gap:.4f})", tm.elapsed, 180)


def test_criterion_10_medians(bm, dyadic_rf, u0, acceptance_log):
    ok, notes = True, []
    cfg = BranchingConfig(bm, reaction.dyadic(), cap=1_000_000)
    with Timer() as tm:
        for t in (1.0, 2.0, 4.0):
            mid, _ = semigroup.solve(bm, dyadic_rf, u0, t, tol=0.02)
            m = semigroup.median(mid)
            lo, hi = semigroup.best_median_bounds(t)
            ok &= lo <= m <= hi
            notes.append(f"PDE m({t:g})={m:.3f} in [{lo:.3f}, {hi:.3f}]")
        speeds = {}
        for t, runs in ((4.0, 10_000), (8.0, 10_000), (10.0, 10_000), (12.0, 2_000)):
            batch = branching.simulate_runs(cfg, t, runs, seed=1)
            alive = batch.mask(Status.ALIVE)
            # capped runs are dropped; more than 1% would flag the estimate
            n_capped = int(batch.mask(Status.CAP_EXCEEDED).sum())
            ok &= n_capped <= branching.CAPPED_FLAG_FRACTION * runs
            m = float(np.median(batch.rightmost[alive]))
            speeds[t] = float(np.median(batch.rightmost[alive] / t))
            if t <= 10:
                lo, hi = semigroup.best_median_bounds(t)
                ok &= lo <= m <= hi
                notes.append(f"BBM m({t:g})={m:.2f} in [{lo:.2f}, {hi:.2f}]")
        ok &= speeds[4.0] < speeds[12.0] < math.sqrt(2)
        notes.append(f"speed(4)={speeds[4.0]:.4f} < speed(12)={speeds[12.0]:.4f} < sqrt2 "
                     f"({n_capped} of {runs} runs capped at t=12)")
    record(acceptance_log, 10, ok, "; ".join(notes), tm.elapsed, 600)
