"""Acceptance criteria 1-15.

Every criterion records one line per sub-check (``PASS``/``FAIL``) that is
printed in the terminal summary.  Each check returns a deterministic report
dict; criterion 15 reruns all of them and compares the JSON byte for byte.
"""
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from sketchbench.calibration import constant
from sketchbench.io import report_json
from sketchbench.leverage import exact_scores, uniform_scores
from sketchbench.linalg import random_orthonormal, singular_values, spiked_orthonormal
from sketchbench.pipeline import (
    EmbeddingSpec,
    fast_low_distortion,
    fast_ose_chain,
    fast_ose_lowbits,
    log2_4,
    reduce_regression,
    resolve_stages,
)
from sketchbench.randbits import BitSource
from sketchbench.regression import (
    SgdSchedule,
    lstsq_oracle,
    objective,
    ridge_oracle,
    sgd_solve,
    sketch_and_solve,
    stochastic_gradient,
)
from sketchbench.sketch import (
    KINDS,
    SketchParams,
    build_sketch,
    diagonal_count,
    ind_diag_violations,
    less_rows_violations,
    osnap_violations,
    row_nnz_stats,
)
from sketchbench.transform import fjlt_build, hadamard_apply, hadamard_recursive, rht_max_row_norm_check
from sketchbench.verify import (
    gaussian_spectrum_check,
    moment_audit,
    singular_value_bounds_check,
    universality_check,
)

SEED = 2024
FIRST_RUN = {}


class Checks:
    """Collects named sub-check outcomes for one criterion."""

    def __init__(self, number, title):
        self.number, self.title = number, title
        self.items = []
        self.report = {"criterion": number}

    def add(self, name, passed, detail=""):
        self.items.append((name, bool(passed), detail))
        self.report.setdefault("checks", {})[name] = bool(passed)

    def emit(self):
        for name, passed, detail in self.items:
            line = f"C{self.number:<2} {'PASS' if passed else 'FAIL'}  {self.title} :: {name}"
            ACCEPTANCE_LINES.append(line + (f"  [{detail}]" if detail else ""))
        failed = [n for n, p, _ in self.items if not p]
        assert not failed, f"criterion {self.number} failed: {failed}"


def _ratio(ok, total):
    return f"{int(ok)}/{total}"


# -- 1 ---------------------------------------------------------------------


def criterion_1(c):
    worst_orth = 0.0
    for k in range(1, 11):
        n = 2 ** k
        cols = hadamard_apply(np.eye(n)) / math.sqrt(n)
        worst_orth = max(worst_orth, float(np.abs(cols.T @ cols - np.eye(n)).max()))
    src = BitSource(SEED)
    worst_oracle = 0.0
    for i in range(100):
        n = 2 ** (i % 9)
        x = src.gaussian(n)
        want = hadamard_recursive(x)
        worst_oracle = max(worst_oracle, float(np.linalg.norm(hadamard_apply(x) - want)
                                               / max(1.0, np.linalg.norm(want))))
    c.report.update(worst_orthogonality=worst_orth, worst_oracle_gap=worst_oracle)
    c.add("orthogonality n=2..1024 <= 1e-12", worst_orth <= 1e-12, f"{worst_orth:.2e}")
    c.add("butterfly == recursive oracle <= 1e-12", worst_oracle <= 1e-12, f"{worst_oracle:.2e}")


# -- 2 ---------------------------------------------------------------------

MOMENT_SCORES = exact_scores(spiked_orthonormal(64, 8, 2, 5))


def criterion_2(c):
    for kind in KINDS:
        scores = MOMENT_SCORES if kind in ("less-ent", "less-rows") else None
        t0 = time.perf_counter()
        a = moment_audit(kind, 16, 64, 0.25, 20000, 200, 0.015, SEED, scores)
        secs = time.perf_counter() - t0
        c.report[kind] = a.to_dict()
        c.add(f"{kind} mean within 0.015", a.mean_ok, f"max {a.max_mean_dev:.4f}")
        c.add(f"{kind} variance within p+-0.015", a.var_ok,
              f"max {a.max_var_dev:.4f}, {a.var_pass_fraction:.1%} of entries inside")
        c.add(f"{kind} covariance within 0.015", a.cov_ok, f"max {a.max_cov_dev:.4f}")
        c.add(f"{kind} runtime < 60 s", secs < 60, f"{secs:.1f} s")


# -- 3 ---------------------------------------------------------------------


def criterion_3(c):
    src = BitSource(SEED)
    osnap = rows = diag = 0
    bound = None
    for _ in range(100):
        osnap += osnap_violations(build_sketch(SketchParams("osnap", 16, 64, 0.25), src))
        S = build_sketch(SketchParams("less-rows", 16, 64, 0.25, scores=MOMENT_SCORES), src)
        bound = S.summands
        rows += less_rows_violations(S) + int(row_nnz_stats(S)[1] > bound)
        diag += ind_diag_violations(build_sketch(SketchParams("ind-diag", 16, 64, 0.25), src))
    c.report.update(osnap=osnap, less_rows=rows, ind_diag=diag, row_bound=bound)
    c.add("OSNAP s per column, one per block", osnap == 0, f"{osnap} violations / 100 builds")
    c.add("LESS-IND-ROWS row nnz <= beta1 p sum(l)", rows == 0, f"{rows} violations, bound {bound}")
    c.add("IND-DIAG support on <= np diagonals", diag == 0, f"{diag} violations")


# -- 4 ---------------------------------------------------------------------


def criterion_4(c):
    t0 = time.perf_counter()
    frac = gaussian_spectrum_check(400, 100, 4.0, 100, SEED)
    secs = time.perf_counter() - t0
    c.report["fraction"] = frac
    c.add("singular values in band >= 99/100", frac >= 0.99, _ratio(frac * 100, 100))
    c.add("runtime < 30 s", secs < 30, f"{secs:.1f} s")


# -- 5 ---------------------------------------------------------------------

D5, N5, EPS5, DELTA5 = 16, 4096, 0.5, 0.1


def op_point_5():
    m = math.ceil(constant("ose_c1") * D5 / EPS5 ** 2)
    pm = min(m, math.ceil(constant("ose_c2") * log2_4(D5, DELTA5)))
    return m, pm


def _eps_hat(smin, smax):
    smin, smax = np.asarray(smin), np.asarray(smax)
    return np.maximum(smax - 1, 1 / smin - 1)


def criterion_5(c):
    m, pm = op_point_5()
    c.report.update(m=m, pm=pm)
    t0 = time.perf_counter()
    for kind in KINDS:
        res = singular_value_bounds_check(kind, D5, N5, m, pm / m, EPS5, 50, SEED)
        ok = round(res.success * 50)
        c.report[kind] = {"success": res.success}
        c.add(f"{kind} 0.5 <= smin, smax <= 1.5 in >= 45/50", ok >= 45, _ratio(ok, 50))
        meds = []
        for mm in (m, 2 * m, 4 * m):
            r = singular_value_bounds_check(kind, D5, N5, mm, pm / mm, EPS5, 50, SEED)
            meds.append(float(np.median(_eps_hat(r.smin, r.smax))))
        c.report[kind]["median_eps_hat"] = meds
        mono = all(a >= b for a, b in zip(meds, meds[1:]))
        c.add(f"{kind} median distortion non-increasing as m doubles", mono,
              ", ".join(f"{v:.3f}" for v in meds))
    secs = time.perf_counter() - t0
    c.add("runtime < 5 min", secs < 300, f"{secs:.0f} s")


# -- 6 ---------------------------------------------------------------------


def criterion_6(c):
    d, n, theta, delta = 32, 4096, 1.0, 0.1
    m = math.ceil((1 + theta) * d)
    pm = min(m, math.ceil(log2_4(d, delta)))
    c.report.update(m=m, pm=pm)
    for kind in KINDS:
        res = singular_value_bounds_check(kind, d, n, m, pm / m, 0.5, 50, SEED)
        kap = np.asarray(res.kappa)
        ok = int((kap <= 12).sum())
        c.report[kind] = {"kappa_q90": float(np.quantile(kap, 0.9)), "within": ok}
        c.add(f"{kind} kappa <= 12 in >= 45/50", ok >= 45,
              f"{ok}/50, 90th pct {np.quantile(kap, 0.9):.2f}")


# -- 7 ---------------------------------------------------------------------


def criterion_7(c):
    U = random_orthonormal(1024, 16, BitSource(SEED))
    frac = rht_max_row_norm_check(U, 100, 0.1, seed=SEED, squared_bound=True)
    c.report["fraction"] = frac
    c.add("max squared row norm < 16d/n in >= 95/100", frac >= 0.95, _ratio(frac * 100, 100))


# -- 8 ---------------------------------------------------------------------


def criterion_8(c):
    m, pm = op_point_5()
    U = spiked_orthonormal(N5, D5, 4, BitSource(SEED))
    src = BitSource(SEED, 8)
    ok = plain_ok = 0
    for _ in range(50):
        op = fjlt_build(N5, D5, m, pm / m, "less-rows", src, round_up=True)
        s = singular_values(op.apply(U))
        ok += s[0] >= 1 - EPS5 and s[-1] <= 1 + EPS5
        S = build_sketch(SketchParams("less-rows", m, N5, pm / m, scores=uniform_scores(N5, D5),
                                      round_up=True), src)
        s = singular_values(S.apply(U))
        plain_ok += s[0] >= 1 - EPS5 and s[-1] <= 1 + EPS5
    c.report.update(fjlt=int(ok), plain_uniform=int(plain_ok))
    c.add("RHT + uniform LESS distortion <= 0.5 in >= 45/50", ok >= 45,
          f"{int(ok)}/50 (uniform LESS without RHT: {int(plain_ok)}/50)")


# -- 9 ---------------------------------------------------------------------


def criterion_9(c):
    n, d = 8192, 16
    U = random_orthonormal(n, d, BitSource(SEED))
    spec = EmbeddingSpec(d, n)
    ok = ok_low = 0
    for t in range(50):
        r = fast_ose_chain(U, spec, SEED + t).report
        ok += 0.5 <= r.smin and r.smax <= 2
        r = fast_ose_lowbits(U, spec, SEED + t).report
        ok_low += 0.5 <= r.smin and r.smax <= 2
    c.report.update(chain=int(ok), lowbits=int(ok_low), dims=resolve_stages(spec).as_dict())
    c.add("chain 1/2 <= smin <= smax <= 2 in >= 45/50", ok >= 45, _ratio(ok, 50))
    c.add("low-bits 1/2 <= smin <= smax <= 2 in >= 45/50", ok_low >= 45, _ratio(ok_low, 50))
    total, stage3 = [], []
    for k in (13, 14, 15):
        nn = 2 ** k
        V = random_orthonormal(nn, d, BitSource(SEED, k))
        res = fast_ose_lowbits(V, EmbeddingSpec(d, nn), SEED)
        total.append(res.report.bits_used)
        stage3.append(res.report.extra["stage_bits"][-1])
    c.report.update(total_bits=total, stage3_bits=stage3)
    grow = lambda xs: max(b / a - 1 for a, b in zip(xs, xs[1:]))
    c.add("low-bits total bits_used grows <= 10% per doubling of n", grow(total) <= 0.10,
          f"{total}, worst growth {grow(total):.0%}")
    c.add("low-bits diagonal stage bits grow <= 10% per doubling of n", grow(stage3) <= 0.10,
          f"{stage3}, worst growth {grow(stage3):.0%}")


# -- 10 --------------------------------------------------------------------


def criterion_10(c):
    A = spiked_orthonormal(4096, 16, 4, BitSource(SEED))
    for eps in (0.5, 0.25):
        vals = [fast_low_distortion(A, eps, seed=SEED + t).report for t in range(50)]
        ok = sum(r.eps_hat <= eps for r in vals)
        c.report[str(eps)] = {"m": vals[0].m, "within": ok,
                              "median": float(np.median([r.eps_hat for r in vals]))}
        c.add(f"eps={eps}: eps_hat <= eps in >= 45/50 (m={vals[0].m})", ok >= 45,
              f"{ok}/50, median {np.median([r.eps_hat for r in vals]):.3f}")


# -- 11 --------------------------------------------------------------------


def problem(seed, n=2000, d=50, noise=0.1):
    src = BitSource(seed, 77)
    A = src.gaussian(n * d).reshape(n, d)
    return A, A @ src.gaussian(d) + noise * src.gaussian(n)


def criterion_11(c):
    eps, lam = 0.1, 100.0
    ok_ls = ok_ridge = 0
    worst_ls = worst_ridge = 0.0
    for t in range(50):
        A, b = problem(SEED + t)
        At, bt, _ = reduce_regression(A, b, eps, seed=SEED + t)
        x = lstsq_oracle(At, bt)
        r = objective(A, b, x) / objective(A, b, lstsq_oracle(A, b))
        ok_ls += r <= 1 + 10 * eps
        worst_ls = max(worst_ls, r)
        f = lambda z: objective(A, b, z) + lam * float(z @ z)
        r = f(ridge_oracle(At, bt, lam)) / f(ridge_oracle(A, b, lam))
        ok_ridge += r <= 1 + 10 * eps
        worst_ridge = max(worst_ridge, r)
    c.report.update(unconstrained=int(ok_ls), ridge=int(ok_ridge),
                    worst_unconstrained=worst_ls, worst_ridge=worst_ridge)
    c.add("unconstrained f(x~) <= (1+10eps) f* in >= 45/50", ok_ls >= 45,
          f"{ok_ls}/50, worst ratio {worst_ls:.3f}")
    c.add("ridge f(x~) <= (1+10eps) f* in >= 45/50", ok_ridge >= 45,
          f"{ok_ridge}/50, worst ratio {worst_ridge:.3f}")


# -- 12 --------------------------------------------------------------------


def criterion_12(c):
    n, d, k, alpha, T = 2000, 50, 50, 1.0, 200
    A, b = problem(SEED)
    lev = exact_scores(A)
    p = lev.sampling_probabilities()
    x = BitSource(SEED, 5).gaussian(d)
    src = BitSource(SEED, 6)
    G = np.array([stochastic_gradient(A, b, x, p, k, src) for _ in range(5000)])
    full = 2 * A.T @ (A @ x - b)
    z = np.abs(G.mean(0) - full) / (G.std(0) / math.sqrt(5000))
    c.report["gradient_max_z"] = float(z.max())
    c.add("gradient unbiased within 3 sigma (5000 resamples)", z.max() <= 3, f"max z {z.max():.2f}")

    sched = SgdSchedule(k, alpha, d, T)
    t = np.arange(T)
    exact = bool(np.array_equal(sched.etas(), sched.beta / (1 + sched.beta * t / 8)))
    c.add("eta_t matches closed form", exact, f"beta {sched.beta:.5f}")

    ratios, kappas2, curves = [], [], []
    for s in range(20):
        A, b = problem(SEED + s)
        fstar = objective(A, b, lstsq_oracle(A, b))
        ss = sketch_and_solve(A, b, seed=SEED + s)
        sv = singular_values(A @ ss.R)
        kappas2.append(float((sv[-1] / sv[0]) ** 2))
        tr = sgd_solve(A, b, ss.x0, ss.R, exact_scores(A), sched, BitSource(SEED + s, 9),
                       check=True)
        err = tr.objectives - fstar
        ratios.append(float(err[T] / err[0]))
        curves.append(err)
    med_ratio = float(np.median(ratios))
    med_curve = np.median(np.array(curves), axis=0)
    ts = np.arange(20, T + 1)
    slope = float(np.polyfit(np.log(ts), np.log(med_curve[ts]), 1)[0])
    k_ok = int(sum(v <= 2.5 for v in kappas2))
    c.report.update(median_ratio=med_ratio, slope=slope, kappa2_within=k_ok,
                    kappa2_q90=float(np.quantile(kappas2, 0.9)))
    c.add("median (f(x200)-f*)/(f(x0)-f*) <= 0.1 over 20 seeds", med_ratio <= 0.1,
          f"{med_ratio:.3f}")
    c.add("log-log error slope on t in [20,200] within [-1.5,-0.6]", -1.5 <= slope <= -0.6,
          f"{slope:.3f}")
    c.add("kappa(AR)^2 <= 2.5 in >= 18/20", k_ok >= 18,
          f"{k_ok}/20, 90th pct {np.quantile(kappas2, 0.9):.2f}")


# -- 13 --------------------------------------------------------------------


def criterion_13(c):
    m, n, d, p = 64, 256, 8, 0.25
    C = constant("universality_C")
    U = random_orthonormal(n, d, BitSource(SEED))
    for kind in KINDS:
        st = universality_check(kind, m, n, d, p, trials=100, seed=SEED, U=U)
        c.report[kind] = {"q95": st.percentile95, "ratio": st.ratio}
        c.add(f"{kind} 95th pct d_H <= {C} zeta", st.passed,
              f"d_H {st.percentile95:.3f}, zeta {st.zeta:.2f}, ratio {st.ratio:.3f}")
    a = universality_check("gaussian", m, n, d, p, trials=100, seed=SEED, U=U)
    b = universality_check("gaussian", m, n, d, p, trials=100, seed=SEED + 1, U=U)
    r = a.percentile95 / b.percentile95
    c.report["null_ratio"] = r
    c.add("Gaussian null reruns within factor 2", 0.5 <= r <= 2, f"{r:.3f}")


# -- 14 --------------------------------------------------------------------


def criterion_14(c):
    src = BitSource(SEED)
    worst = 0.0
    worst_raw = 0.0
    identity = True
    for m, n, p in [(16, 64, 0.25), (64, 1024, 1 / 64), (128, 4096, 1 / 256), (256, 8192, 1 / 32)]:
        for _ in range(10):
            words0 = src.words_drawn
            S = build_sketch(SketchParams("ind-diag", m, n, p), src)
            npc = diagonal_count(n, p)
            bound = 4 * npc * (math.ceil(math.log2(m)) + math.ceil(math.log2(n)))
            worst = max(worst, S.bits_used / bound)
            worst_raw = max(worst_raw, 64 * (src.words_drawn - words0) / (64 * bound))
            identity &= sum(S.bit_costs.values()) == S.bits_used
            identity &= src.check_accounting()
    c.report.update(worst_fraction=worst, worst_raw_fraction=worst_raw)
    c.add("IND-DIAG bits_used <= 4 np (log m + log n)", worst <= 1, f"worst {worst:.2f} of bound")
    c.add("word-level bits <= 64 x bound", worst_raw <= 1, f"worst {worst_raw:.3f} of 64x bound")
    c.add("bit counter equals sum of declared costs", identity)


CRITERIA = {
    1: ("Hadamard orthogonality", criterion_1),
    2: ("Covariance profile", criterion_2),
    3: ("Exact structural sparsity", criterion_3),
    4: ("Gaussian spectrum baseline", criterion_4),
    5: ("Subspace embedding success", criterion_5),
    6: ("m=(1+theta)d regime", criterion_6),
    7: ("RHT row-norm uniformization", criterion_7),
    8: ("FJLT pipeline", criterion_8),
    9: ("Fast OSE chain", criterion_9),
    10: ("Leverage-score low distortion", criterion_10),
    11: ("Regression reduction", criterion_11),
    12: ("SGD convergence", criterion_12),
    13: ("Universality statistics", criterion_13),
    14: ("Bit accounting", criterion_14),
}


def run_criterion(number):
    title, fn = CRITERIA[number]
    c = Checks(number, title)
    fn(c)
    return c


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    c = run_criterion(number)
    FIRST_RUN[number] = report_json(c.report)
    c.emit()


def test_criterion_15_reproducible():
    c = Checks(15, "Reproducibility")
    for number in sorted(CRITERIA):
        again = report_json(run_criterion(number).report)
        first = FIRST_RUN.get(number)
        if first is None:
            first = report_json(run_criterion(number).report)
        c.add(f"criterion {number} report byte-identical on rerun", first == again)
    c.emit()
