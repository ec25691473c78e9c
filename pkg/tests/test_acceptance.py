"""End-to-end acceptance suite.

Each test verifies one headline guarantee at its stated tolerance and prints
one [PASS]/[FAIL] line (run with ``pytest -s`` to see them as they happen).
The suite shares one base seed; statistical checks carry explicit
standard-error allowances for their own Monte Carlo resolution.
"""

import json

import numpy as np
import pytest
from scipy.stats import chisquare

from brsnis import (benchmark_mixture, bootstrap_br_snis, bootstrap_replay_batch,
                    bound_constants, build_sample_bank, coverage_check,
                    estimate_kappa, estimate_omega, fit_geometric_rate,
                    isir_step, key_relation_check, make_gaussian_mixture,
                    make_logistic_posterior, mixture_test_function,
                    mixture_truth, pool_bias_bound, replication_stats,
                    rolling_hpd_bound, run_chains, sliced_wasserstein,
                    snis_bias_bound, snis_estimate, snis_hpd_bound,
                    snis_mse_bound, synthetic_logistic_data)
from brsnis import (LogisticPosteriorSpec, ModelSpec, RollingConfig,
                    TestFunction, WeightedSampleSet)
from brsnis.cli import main as cli_main

ACCEPTANCE_SEED = 1234


def rng_for(tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([ACCEPTANCE_SEED, tag]))


def report(label: str, ok: bool, detail: str):
    print(f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
    assert ok, f"{label}: {detail}"


def snis_batch(model, f, m: int, reps: int, rng, chunk: int = 200) -> np.ndarray:
    """Vectorized replicated SNIS estimates (one shared stream)."""
    out = np.empty(reps)
    done = 0
    while done < reps:
        take = min(chunk, reps - done)
        draws = model.propose(rng, take * m)
        lw = model.log_weight(draws).reshape(take, m)
        fv = f(draws).reshape(take, m)
        shift = lw.max(axis=1, keepdims=True)
        w = np.exp(lw - shift)
        out[done:done + take] = (w * fv).sum(axis=1) / w.sum(axis=1)
        done += take
    return out


@pytest.fixture(scope="module")
def mix2_setup():
    spec = benchmark_mixture(2)
    model = make_gaussian_mixture(spec)
    return spec, model, mixture_test_function(spec), mixture_truth(spec)


@pytest.fixture(scope="module")
def constants2(mix2_setup):
    """Estimated weight constants for the two-dimensional benchmark."""
    _, model, _, _ = mix2_setup
    rng = rng_for(100)
    kappa = estimate_kappa(model, 10 ** 6, rng)
    omega = estimate_omega(model, restarts=32, draws=10 ** 6, rng=rng)
    return omega, kappa


@pytest.fixture(scope="module")
def cold_chain_runs(mix2_setup):
    """Recycled estimates of 10^4 cold-start chains for N in {8, 32, 128}."""
    _, model, f, _ = mix2_setup
    runs = {}
    for tag, n in enumerate((8, 32, 128)):
        batch = run_chains(model, f, n_candidates=n, n_iters=20,
                           n_chains=10 ** 4, rng=rng_for(200 + tag))
        runs[n] = batch.recycled_estimates
    return runs


class TestStationaryUnbiasedness:
    def test_single_step_recycled_estimates_center_on_truth(self, mix2_setup):
        _, model, f, truth = mix2_setup
        batch = run_chains(model, f, n_candidates=32, n_iters=1,
                           n_chains=10 ** 5, rng=rng_for(1), init="target")
        values = batch.recycled_estimates[:, 0]
        se = values.std(ddof=1) / np.sqrt(len(values))
        gap = abs(values.mean() - truth)
        report("stationary-start unbiasedness",
               gap <= 3.0 * se, f"|mean-truth|={gap:.2e} vs 3se={3 * se:.2e}")


class TestPoolBiasBound:
    def test_empirical_bias_under_closed_form_bound(self, mix2_setup,
                                                    constants2, cold_chain_runs):
        _, _, f, truth = mix2_setup
        omega, kappa = constants2
        worst = -np.inf
        ok = True
        for n, recycled in cold_chain_runs.items():
            consts = bound_constants(max(omega, 1.0), max(kappa, 1.0), n)
            bias = recycled.mean(axis=0) - truth
            se = recycled.std(axis=0, ddof=1) / np.sqrt(recycled.shape[0])
            for step in range(recycled.shape[1]):
                bound = pool_bias_bound(consts, step + 1) * f.sup_bound
                margin = abs(bias[step]) - (bound + 4.0 * se[step])
                worst = max(worst, margin)
                ok = ok and margin <= 0
        report("recycled-estimate bias bound (N in {8,32,128}, k 1..20)", ok,
               f"worst excess over bound+4se = {worst:.2e}")


class TestBiasDecayRate:
    def test_fitted_decay_no_slower_than_theory(self, mix2_setup, constants2,
                                                cold_chain_runs):
        _, _, _, truth = mix2_setup
        omega, _ = constants2
        recycled = cold_chain_runs[32]
        bias = np.abs(recycled.mean(axis=0) - truth)
        se = recycled.std(axis=0, ddof=1) / np.sqrt(recycled.shape[0])
        # Fit over the initial run of iterations where the signal clears the
        # replication noise; past that point |bias| flattens into noise.
        usable = bias > 3.0 * se
        limit = int(np.argmax(~usable)) if not usable.all() else len(usable)
        limit = max(limit, 3)
        ks = np.arange(1, limit + 1, dtype=float)
        slope, _ = fit_geometric_rate(bias[:limit], ks)
        log_rate = np.log((2 * omega - 1) / (2 * omega + 30))
        report("geometric bias decay at N=32",
               slope <= log_rate,
               f"fitted slope {slope:.3f} vs log rate {log_rate:.3f} "
               f"({limit} usable iterations)")


class TestFixedBudgetComparison:
    def test_bootstrap_cuts_bias_order_of_magnitude(self):
        spec = benchmark_mixture(7)
        model = make_gaussian_mixture(spec)
        f = mixture_test_function(spec)
        truth = mixture_truth(spec)
        m, n = 16384, 129
        k = m // (n - 1)
        rounds = m // (n - 1)
        reps, chunk = 5000, 250
        rng = rng_for(4)
        snis_est = np.empty(reps)
        br_est = np.empty(reps)
        done = 0
        while done < reps:
            take = min(chunk, reps - done)
            draws = model.propose(rng, take * (m + 1))
            lw = model.log_weight(draws).reshape(take, m + 1)
            fv = f(draws).reshape(take, m + 1)
            bank_lw, bank_fv = lw[:, :m], fv[:, :m]
            shift = bank_lw.max(axis=1, keepdims=True)
            w = np.exp(bank_lw - shift)
            snis_est[done:done + take] = (w * bank_fv).sum(axis=1) / w.sum(axis=1)
            br_est[done:done + take] = bootstrap_replay_batch(
                bank_lw, bank_fv, lw[:, m], fv[:, m], n_candidates=n,
                burn_in=k - 1, rounds=rounds, rng=rng, single_precision=True)
            done += take
        stats_snis = replication_stats(snis_est, truth, batch_size=100)
        stats_br = replication_stats(br_est, truth, batch_size=100)
        bias_ok = abs(stats_br.bias) <= \
            0.1 * abs(stats_snis.bias) + 3.0 * stats_br.bias_se
        mse_ok = stats_br.mse <= 2.0 * stats_snis.mse + 3.0 * stats_br.mse_se
        report("fixed-budget bias reduction (M=16384, N=129)",
               bias_ok and mse_ok,
               f"|bias| {abs(stats_snis.bias):.5f}->{abs(stats_br.bias):.5f} "
               f"(3se={3 * stats_br.bias_se:.5f}), "
               f"mse {stats_snis.mse:.5f}->{stats_br.mse:.5f} "
               f"({len(stats_br.batch_bias)} batches of 100)")


class TestSnisClosedFormBounds:
    def test_bias_and_mse_under_bounds(self, mix2_setup, constants2):
        _, model, f, truth = mix2_setup
        _, kappa = constants2
        rng = rng_for(5)
        ok = True
        details = []
        for m in (100, 1000, 10000):
            estimates = snis_batch(model, f, m, 10 ** 4, rng,
                                   chunk=max(1, 10 ** 6 // m))
            bias = estimates.mean() - truth
            bias_se = estimates.std(ddof=1) / np.sqrt(len(estimates))
            sq = (estimates - truth) ** 2
            mse, mse_se = sq.mean(), sq.std(ddof=1) / np.sqrt(len(sq))
            bias_ok = abs(bias) <= snis_bias_bound(kappa, m) + 3.0 * bias_se
            mse_ok = mse <= snis_mse_bound(kappa, m) + 3.0 * mse_se
            ok = ok and bias_ok and mse_ok
            details.append(
                f"M={m}: |bias|={abs(bias):.4f}<={snis_bias_bound(kappa, m):.4f}"
                f", mse={mse:.4f}<={snis_mse_bound(kappa, m):.4f}")
        report("closed-form estimator bounds", ok, "; ".join(details))


class TestHighProbabilityCoverage:
    def test_deviation_bounds_cover_at_level(self, mix2_setup, constants2,
                                             gauss_student_1d):
        _, model, f, truth = mix2_setup
        omega, kappa = constants2
        n, k, k0, delta = 32, 20, 10, 0.1
        batch = run_chains(model, f, n, k, 10 ** 4, rng_for(6))
        rolling = batch.recycled_estimates[:, k0:].mean(axis=1)
        consts = bound_constants(max(omega, 1.0), max(kappa, 1.0), n)
        bound = rolling_hpd_bound(consts, delta, k0, k) * f.sup_bound
        rolling_cov = coverage_check(rolling, truth, bound, delta)

        _, model1, f1, truth1 = gauss_student_1d
        rng = rng_for(7)
        omega1 = estimate_omega(model1, restarts=8, draws=2 * 10 ** 5, rng=rng)
        estimates = snis_batch(model1, f1, 1000, 10 ** 4, rng)
        bound1 = snis_hpd_bound(max(omega1, 1.0), 1000, delta) * f1.sup_bound
        snis_cov = coverage_check(estimates, truth1, bound1, delta)
        report("high-probability coverage at delta=0.1",
               rolling_cov.passed and snis_cov.passed,
               f"rolling violations {rolling_cov.violation_fraction:.4f}, "
               f"plain violations {snis_cov.violation_fraction:.4f}")


class TestWeightConstantsReproduction:
    def test_benchmark_constants_within_factor_three(self):
        spec = benchmark_mixture(7)
        model = make_gaussian_mixture(spec)
        rng = rng_for(8)
        kappa = estimate_kappa(model, 10 ** 6, rng)
        omega = estimate_omega(model, restarts=32, draws=10 ** 6, rng=rng)
        kappa_ok = 700.0 / 3.0 <= kappa <= 700.0 * 3.0
        omega_ok = 1e4 / 3.0 <= omega <= 1e4 * 3.0
        report("weight-constant reproduction (d=7 benchmark)",
               kappa_ok and omega_ok,
               f"kappa_hat={kappa:.3g} (target 7e2 within 3x), "
               f"omega_hat={omega:.3g} (target 1e4 within 3x)")


class TestKernelInvariants:
    def test_insertion_retention_key_relation_duality(self, mix2_setup):
        spec, model, f, _ = mix2_setup
        rng = rng_for(9)

        slots = np.empty(10 ** 5, dtype=int)
        y = np.zeros(2)
        for i in range(len(slots)):
            _, pool = isir_step(model, y, f, 8, rng, y_log_weight=0.0,
                                y_f_value=0.0)
            slots[i] = pool.insertion_index
        chi_p = chisquare(np.bincount(slots, minlength=8)).pvalue

        flat = ModelSpec(dim=1, log_weight=lambda x: np.zeros(len(x)),
                         propose=lambda r, c: r.standard_normal((c, 1)),
                         target_sample=lambda r, c: r.standard_normal((c, 1)))
        unit = TestFunction(fn=lambda pts: np.ones(len(pts)), sup_bound=1.0)
        n_flat, steps = 16, 10 ** 5
        batch = run_chains(flat, unit, n_flat, 1, steps, rng_for(10),
                           init="proposal", keep_states=True)
        kept = np.all(batch.states[:, 1] == batch.states[:, 0], axis=1)
        p_keep = 1.0 / n_flat
        retention_gap = abs(kept.mean() - p_keep)
        retention_se = np.sqrt(p_keep * (1 - p_keep) / steps)

        key = key_relation_check(model, f, spec.means[0], n_candidates=16,
                                 replications=10 ** 5, rng=rng_for(11),
                                 mc_draws=10 ** 6)

        dual = self._duality_gap(model, f, n_pool=8, reps=10 ** 5,
                                 rng=rng_for(12))
        ok = (chi_p > 0.001 and retention_gap <= 4.0 * retention_se
              and abs(key.z_score) <= 3.0 and dual <= 4.0)
        report("kernel-level invariants",
               ok,
               f"slot chi-square p={chi_p:.4f}, retention gap={retention_gap:.2e} "
               f"(4se={4 * retention_se:.2e}), key-relation z={key.z_score:.2f}, "
               f"max duality z={dual:.2f}")

    @staticmethod
    def _duality_gap(model, f, n_pool, reps, rng):
        """Both factorizations of the extended target must agree on the first
        two moments of (f(state), unnormalized pool mean).

        Route one samples the state from the target and surrounds it with
        fresh candidates.  Route two draws whole pools from the proposal
        product, tilts them by their mean weight, and takes the state's
        moments as weight-normalized within-pool averages; its standard
        errors use the usual normalized-weights delta approximation.
        """
        y = model.target_sample(rng, reps)
        fy = f(y)
        wy = np.exp(model.log_weight(y))
        fresh = model.propose(rng, reps * (n_pool - 1))
        wf = np.exp(model.log_weight(fresh)) * f(fresh)
        u_pool = (wy * fy + wf.reshape(reps, -1).sum(axis=1)) / n_pool

        pool_draws = model.propose(rng, reps * n_pool)
        w_all = np.exp(model.log_weight(pool_draws)).reshape(reps, n_pool)
        f_all = f(pool_draws).reshape(reps, n_pool)
        u1 = w_all.mean(axis=1)
        tilt = u1 / u1.sum()
        uf = (w_all * f_all).mean(axis=1)
        state_mean = uf / u1
        state_sq = (w_all * f_all ** 2).mean(axis=1) / u1

        gaps = []
        route_one = (fy, u_pool, fy ** 2, u_pool ** 2, fy * u_pool)
        route_two = (state_mean, uf, state_sq, uf ** 2, state_mean * uf)
        for a, b in zip(route_one, route_two):
            mean_a = a.mean()
            se_a = a.std(ddof=1) / np.sqrt(reps)
            mean_b = float(tilt @ b)
            se_b = float(np.sqrt(np.sum(tilt ** 2 * (b - mean_b) ** 2)))
            gaps.append(abs(mean_a - mean_b) / np.sqrt(se_a ** 2 + se_b ** 2))
        return max(gaps)


class TestSlicedWassersteinMixing:
    def test_decay_and_pool_size_ordering(self, mix2_setup, constants2):
        _, model, f, _ = mix2_setup
        omega, kappa = constants2
        chains, groups = 4000, 6
        curves = {}
        for tag, n in enumerate((8, 32, 128)):
            consts = bound_constants(max(omega, 1.0), max(kappa, 1.0), n)
            k_max = max(2 * consts.t_mix + 2, 6)
            rng = rng_for(300 + tag)
            sw = np.empty((groups, k_max + 1))
            for g in range(groups):
                batch = run_chains(model, f, n, k_max, chains, rng,
                                   init="proposal", keep_states=True)
                reference = model.target_sample(rng, chains)
                for k in range(k_max + 1):
                    # One shared projection set for every slice comparison:
                    # the distance floor then cancels across k and N.
                    proj_rng = np.random.default_rng(
                        np.random.SeedSequence([ACCEPTANCE_SEED, 777]))
                    sw[g, k] = sliced_wasserstein(batch.states[:, k], reference,
                                                  100, proj_rng)
            curves[n] = (sw.mean(axis=0),
                         sw.std(axis=0, ddof=1) / np.sqrt(groups),
                         consts.t_mix)
        decay_ok = True
        for n, (mean, se, _) in curves.items():
            for k in range(1, len(mean)):
                decay_ok = decay_ok and \
                    mean[k] <= mean[k - 1] + 2.0 * (se[k] + se[k - 1])
        order_ok = True
        for small, large in ((8, 32), (32, 128)):
            m_s, se_s, t_s = curves[small]
            m_l, se_l, t_l = curves[large]
            k_s, k_l = min(2 * t_s, len(m_s) - 1), min(2 * t_l, len(m_l) - 1)
            order_ok = order_ok and \
                m_l[k_l] <= m_s[k_s] + 2.0 * (se_l[k_l] + se_s[k_s])
        report("sliced Wasserstein mixing curves",
               decay_ok and order_ok,
               "; ".join(f"N={n}: sw(0)={c[0][0]:.3f}->sw(end)={c[0][-1]:.3f} "
                         f"(T={c[2]})" for n, c in curves.items()))


class TestLogisticPredictiveOrdering:
    def test_bootstrap_reduces_predictive_tv(self):
        dim, n_obs, tau2 = 5, 200, 5e-2
        theta_star = 1.5 * np.array([1.0, -1.0, 0.5, -0.5, 0.25])
        data_rng = rng_for(13)
        x, y = synthetic_logistic_data(data_rng, dim, n_obs, theta_star)
        spec = LogisticPosteriorSpec(x, y, prior_precision=tau2)
        model = make_logistic_posterior(spec)
        x_test = data_rng.standard_normal((200, dim))
        predictive = TestFunction(
            fn=lambda pts: 1.0 / (1.0 + np.exp(-(pts @ x_test.T))),
            sup_bound=1.0)

        reference = self._reference_predictive(model, predictive, rng_for(14))

        ok = True
        details = []
        reps = 10 ** 3
        for tag, (m, n) in enumerate(((32, 9), (512, 33))):
            k = m // (n - 1)
            cfg = RollingConfig(n, k, k - 1)
            rng = rng_for(400 + tag)
            snis_sum = np.zeros(len(x_test))
            br_sum = np.zeros(len(x_test))
            for _ in range(reps):
                bank = build_sample_bank(model, predictive, m, rng)
                snis_sum += snis_estimate(WeightedSampleSet(bank.log_weights,
                                                            bank.f_values))
                br_sum += bootstrap_br_snis(bank, cfg, rounds=k, rng=rng)
            tv_snis = np.abs(snis_sum / reps - reference).mean()
            tv_br = np.abs(br_sum / reps - reference).mean()
            ok = ok and tv_br <= tv_snis
            details.append(f"M={m}: tv_snis={tv_snis:.5f} tv_br={tv_br:.5f}")
        report("logistic predictive distance ordering", ok, "; ".join(details))

    @staticmethod
    def _reference_predictive(model, predictive, rng, draws=10 ** 6,
                              chunk=50000):
        points = model.propose(rng, draws)
        lw = model.log_weight(points)
        w = np.exp(lw - lw.max())
        acc = None
        for start in range(0, draws, chunk):
            block = predictive(points[start:start + chunk])
            part = w[start:start + chunk] @ block
            acc = part if acc is None else acc + part
        return acc / w.sum()


class TestOutputDeterminism:
    def test_byte_identical_csv_across_thread_counts(self, tmp_path):
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps({
            "schema": 1,
            "model": {"name": "gaussian-mixture", "dim": 2},
            "estimator": "br-snis",
            "grid": [{"N": 9, "k": 8, "k0": 4}],
            "replications": 8,
            "batch_size": 4,
            "seed": ACCEPTANCE_SEED,
            "out": str(tmp_path / "run.csv"),
            "omega": 18.0,
            "kappa": 6.0,
        }), encoding="utf-8")
        outputs = []
        for threads in ("1", "4"):
            assert cli_main(["experiment", "--config", str(config_path),
                             "--threads", threads]) == 0
            outputs.append(((tmp_path / "run.csv").read_bytes(),
                            (tmp_path / "run.csv.summary.json").read_bytes()))
        ok = outputs[0] == outputs[1]
        report("byte-identical output across thread counts", ok,
               f"csv bytes {len(outputs[0][0])}, match={ok}")
