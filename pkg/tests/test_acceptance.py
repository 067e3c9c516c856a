"""Acceptance gate: every criterion at its stated tolerance, one line each.

Heavy experiment sweeps run once per session and feed several criteria.  All
runs flow through the harness entry point (the same code path the service
uses), with timing capture off so outputs are deterministic.
"""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from conftest import record_criterion
from safe_lcmdp.bandit import default_instance, run_oplbsp
from safe_lcmdp.cmdp import ExplicitPolicy, dp_optimal, evaluate_policy
from safe_lcmdp.envs import gen_tabular
from safe_lcmdp.estimator import EstimatorState, chol_update
from safe_lcmdp.harness import ExperimentConfig, run_single_seed
from safe_lcmdp.lpsolve import StandardLp, optimal_safe_policy, solve
from safe_lcmdp.bandit import solve_opt_pes
from safe_lcmdp.opse import LambdaEvaluations, OpseConfig, bisection

from conftest import random_tabular_cmdp
from test_bandit import simplex_grid_oracle
from test_lpsolve import _vertex_enumeration_value
from test_opse import exact_composite_softmax, seeded_estimator

CMDP_SEEDS = tuple(range(1, 11))
LINEAR_SEEDS = tuple(range(1, 6))


def _sweep(env: str, algo: str, episodes: int, seeds) -> dict[int, object]:
    logs = {}
    for seed in seeds:
        cfg = ExperimentConfig(
            env=env, algo=algo, episodes=episodes, seeds=(seed,),
            out_dir="unused", record_timing=False,
        )
        logs[seed] = run_single_seed(cfg, seed)
    return logs


@pytest.fixture(scope="session")
def opse_tabular():
    return _sweep("tabular", "opse", 20_000, CMDP_SEEDS)


@pytest.fixture(scope="session")
def opse_streaming():
    return _sweep("streaming", "opse", 20_000, CMDP_SEEDS)


@pytest.fixture(scope="session")
def opse_linear():
    return _sweep("linear", "opse", 5_000, LINEAR_SEEDS)


@pytest.fixture(scope="session")
def ghosh_runs():
    return {
        "tabular": _sweep("tabular", "ghosh", 10_000, CMDP_SEEDS),
        "streaming": _sweep("streaming", "ghosh", 10_000, CMDP_SEEDS),
    }


@pytest.fixture(scope="session")
def dope_tabular():
    return _sweep("tabular", "dope", 10_000, CMDP_SEEDS)


def _max_shortfall(log) -> float:
    return float(np.max(log.b - log.utility_value))


class TestZeroViolation:
    def test_tabular_and_streaming(self, opse_tabular, opse_streaming):
        worst = -np.inf
        for logs in (opse_tabular, opse_streaming):
            for log in logs.values():
                worst = max(worst, _max_shortfall(log))
        passed = worst <= 1e-9
        record_criterion(
            "zero-violation (tabular+streaming, seeds 1-10, K=20000)",
            passed, f"max exact shortfall {worst:.3e} (tolerance 1e-9)",
        )
        assert passed

    def test_linear(self, opse_linear):
        worst = max(_max_shortfall(log) for log in opse_linear.values())
        passed = worst <= 1e-9
        record_criterion(
            "zero-violation (linear |S|=100 d=5, seeds 1-5, K=5000)",
            passed, f"max exact shortfall {worst:.3e} (tolerance 1e-9)",
        )
        assert passed


class TestSublinearRegret:
    @staticmethod
    def _mean_ratio(logs, k_hi, k_lo):
        hi = np.mean([log.cum_regret[k_hi - 1] / k_hi for log in logs.values()])
        lo = np.mean([log.cum_regret[k_lo - 1] / k_lo for log in logs.values()])
        return hi / lo, hi, lo

    def test_tabular(self, opse_tabular):
        ratio, hi, lo = self._mean_ratio(opse_tabular, 20_000, 2_000)
        passed = ratio <= 0.5
        record_criterion(
            "sublinear regret (tabular)", passed,
            f"mean regret/K {lo:.5f}@2000 -> {hi:.5f}@20000, ratio {ratio:.3f} (need <= 0.5)",
        )
        assert passed

    def test_streaming(self, opse_streaming):
        ratio, hi, lo = self._mean_ratio(opse_streaming, 20_000, 2_000)
        passed = ratio <= 0.5
        record_criterion(
            "sublinear regret (streaming)", passed,
            f"mean regret/K {lo:.5f}@2000 -> {hi:.5f}@20000, ratio {ratio:.3f} (need <= 0.5)",
        )
        assert passed

    def test_linear(self, opse_linear):
        ratio, hi, lo = self._mean_ratio(opse_linear, 5_000, 500)
        passed = ratio <= 0.5
        record_criterion(
            "sublinear regret (linear)", passed,
            f"mean regret/K {lo:.5f}@500 -> {hi:.5f}@5000, ratio {ratio:.3f} (need <= 0.5)",
        )
        assert passed


class TestDeploymentPlateau:
    def test_second_half_share(self, opse_tabular, opse_streaming, opse_linear):
        worst_share = 0.0
        for logs in (opse_tabular, opse_streaming, opse_linear):
            for log in logs.values():
                total = int(log.cum_safe_deploys[-1])
                if total == 0:
                    continue
                half = len(log.episode) // 2
                second = total - int(log.cum_safe_deploys[half - 1])
                worst_share = max(worst_share, second / total)
        passed = worst_share <= 0.10
        record_criterion(
            "deployment plateau (2nd-half share <= 10%)", passed,
            f"worst run share {worst_share:.4f}",
        )
        assert passed


class TestBaselineContrast:
    def test_ghosh_positive_violation(self, ghosh_runs):
        zero_seeds = {
            env: [seed for seed, log in logs.items() if log.cum_violation[-1] <= 0.0]
            for env, logs in ghosh_runs.items()
        }
        passed = not any(zero_seeds.values())
        detail = "; ".join(
            f"{env}: min cumVio {min(l.cum_violation[-1] for l in logs.values()):.4f}"
            + (f", zero on seeds {zero_seeds[env]}" if zero_seeds[env] else "")
            for env, logs in ghosh_runs.items()
        )
        record_criterion(
            "baseline contrast: optimistic variant violates on every seed (K=10000)", passed, detail
        )
        assert passed

    def test_dope_zero_violation_and_sublinear(self, dope_tabular):
        worst = max(_max_shortfall(log) for log in dope_tabular.values())
        hi = np.mean([log.cum_regret[-1] / 10_000 for log in dope_tabular.values()])
        lo = np.mean([log.cum_regret[999] / 1_000 for log in dope_tabular.values()])
        ratio = hi / lo
        passed = worst <= 1e-9 and ratio <= 0.5
        record_criterion(
            "baseline contrast: extended-LP baseline safe and sublinear (tabular)", passed,
            f"max shortfall {worst:.3e}, regret/K ratio {ratio:.3f} (need <= 0.5)",
        )
        assert passed


class TestBanditSuite:
    def test_full_suite(self):
        worst_shortfall = -np.inf
        worst_plateau = 0.0
        rates = []
        for seed in CMDP_SEEDS:
            inst = default_instance(seed)
            sink = []
            log = run_oplbsp(inst, 10_000, seed=seed, record_timing=False, round_sink=sink)
            worst_shortfall = max(worst_shortfall, float(np.max(inst.b - log.utility_value)))
            unconf = np.array([r.unconfident for r in sink])
            if unconf.sum() > 0:
                worst_plateau = max(worst_plateau, unconf[5_000:].sum() / unconf.sum())
            rates.append((log.cum_regret[999] / 1_000, log.cum_regret[-1] / 10_000))
        mean_lo = np.mean([r[0] for r in rates])
        mean_hi = np.mean([r[1] for r in rates])
        drop_ok = mean_hi <= 0.6 * mean_lo
        passed = worst_shortfall <= 1e-9 and worst_plateau <= 0.05 and drop_ok
        record_criterion(
            "bandit suite (seeds 1-10, K=10000)", passed,
            f"max shortfall {worst_shortfall:.3e}, 2nd-half unconfident share {worst_plateau:.4f}, "
            f"regret rate {mean_lo:.4f}->{mean_hi:.4f} (need >=40% drop)",
        )
        assert passed


class TestMonotonicity:
    def test_exact_backup_grid(self):
        grid = np.arange(0.0, 10.0 + 1e-9, 0.25)
        assert len(grid) == 41
        worst = np.inf
        for case in range(20):
            local = np.random.default_rng(4000 + case)
            cm = random_tabular_cmdp(
                local,
                S=int(local.integers(2, 5)),
                A=int(local.integers(2, 4)),
                H=int(local.integers(2, 5)),
            )
            values = []
            for lam in grid:
                pol = exact_composite_softmax(cm, lam, kappa=0.4)
                _, v_u = evaluate_policy(cm, pol, cm.utilities)
                values.append(v_u)
            worst = min(worst, float(np.min(np.diff(values))))
        passed = worst >= -1e-8
        record_criterion(
            "softmax utility monotone in lambda (41-point grid, 20 models)", passed,
            f"smallest increment {worst:.3e} (tolerance -1e-8)",
        )
        assert passed


class TestOracleEquivalences:
    def test_all(self, rng):
        failures = []

        # Opt-Pes enumeration vs simplex grid search
        worst_gap = 0.0
        for _ in range(40):
            obj = rng.normal(size=4)
            con = rng.normal(size=4)
            b = float(np.quantile(con, rng.uniform(0.2, 0.8)))
            dist = solve_opt_pes(obj, con, b)
            if dist is None:
                continue
            oracle = simplex_grid_oracle(obj, con, b)
            worst_gap = max(worst_gap, oracle - float(dist @ obj))
        if worst_gap > 2e-3:
            failures.append(f"opt-pes vs grid gap {worst_gap:.2e}")

        # internal simplex vs vertex enumeration
        worst_lp = 0.0
        done = 0
        while done < 30:
            n = int(rng.integers(2, 6))
            x0 = rng.uniform(0, 2, size=n)
            g = rng.normal(size=(int(rng.integers(1, 5)), n))
            h = g @ x0 - rng.uniform(0.1, 1.0, size=g.shape[0])
            cap = np.concatenate([g, [-np.ones(n)]])
            cap_rhs = np.concatenate([h, [-(x0.sum() + 2.0)]])
            lp = StandardLp(c=rng.normal(size=n), g_ineq=cap, h_ineq=cap_rhs)
            sol = solve(lp)
            worst_lp = max(worst_lp, abs(sol.objective - _vertex_enumeration_value(lp)))
            done += 1
        if worst_lp > 1e-6:
            failures.append(f"simplex vs vertex enumeration gap {worst_lp:.2e}")

        # constrained-optimal oracle vs pairwise-mixture enumeration
        worst_mix = 0.0
        for trial in range(3):
            local = np.random.default_rng(600 + trial)
            cm = random_tabular_cmdp(local, S=4, A=2, H=3)
            _, max_u = dp_optimal(cm, cm.utilities)
            cm = type(cm)(
                H=cm.H, features=cm.features, transitions=cm.transitions,
                theta_r=cm.theta_r, theta_u=cm.theta_u, b=0.6 * max_u, s1=cm.s1,
            )
            vr, vu = [], []
            for assignment in itertools.product(range(2), repeat=12):
                pol = ExplicitPolicy.deterministic(np.array(assignment).reshape(3, 4), 2)
                vr.append(evaluate_policy(cm, pol, cm.rewards)[1])
                vu.append(evaluate_policy(cm, pol, cm.utilities)[1])
            vr, vu = np.array(vr), np.array(vu)
            feas, infeas = vu >= cm.b, vu < cm.b
            best = vr[feas].max() if feas.any() else -np.inf
            if feas.any() and infeas.any():
                alpha = (cm.b - vu[infeas][None, :]) / (vu[feas][:, None] - vu[infeas][None, :])
                best = max(best, float((alpha * vr[feas][:, None] + (1 - alpha) * vr[infeas][None, :]).max()))
            _, lp_value = optimal_safe_policy(cm)
            worst_mix = max(worst_mix, abs(lp_value - best))
        if worst_mix > 1e-4:
            failures.append(f"occupancy LP vs mixture enumeration gap {worst_mix:.2e}")

        # incremental factorization vs from-scratch
        worst_chol = 0.0
        for _ in range(20):
            d = int(rng.integers(3, 12))
            M = rng.normal(size=(d, d))
            gram = M @ M.T + np.eye(d)
            L = np.linalg.cholesky(gram)
            for _ in range(50):
                x = rng.normal(size=d)
                gram = gram + np.outer(x, x)
                chol_update(L, x)
            fresh = np.linalg.cholesky(gram)
            worst_chol = max(worst_chol, np.linalg.norm(L - fresh) / np.linalg.norm(fresh))
        if worst_chol > 1e-8:
            failures.append(f"incremental cholesky drift {worst_chol:.2e}")

        # bisection bracket width is exactly lambda_max * 2^-T
        from safe_lcmdp.envs import gen_streaming

        cm, safe = gen_streaming(1)
        est = seeded_estimator(cm, safe.policy, episodes=40, seed=3)
        cfg = OpseConfig(episodes=1, seed=1, c_r=2.0, c_u=2.0, c_dagger=2.0,
                         bisection_iters=8, lambda_max=300.0)
        evals = LambdaEvaluations(est, cm.rewards, cm.utilities, cfg, cm.s1)
        result = bisection(evals, cfg, cm.b)
        if result.lam_hi - result.lam_lo != 300.0 * 2.0**-8:
            failures.append("bisection width mismatch")

        passed = not failures
        record_criterion(
            "oracle equivalences (opt-pes, LP, mixtures, cholesky, bisection)",
            passed, "; ".join(failures) if failures else "all five within tolerance",
        )
        assert passed


class TestInvariantSuites:
    def test_randomized_invariants(self):
        failures = []

        # head bounds, occupancy normalization/flow, entropy gap: 100 cases each
        head_violations = 0
        occ_violations = 0
        gap_violations = 0
        for case in range(100):
            local = np.random.default_rng(7000 + case)
            cm = random_tabular_cmdp(local, S=3, A=2, H=3)
            pol = ExplicitPolicy.uniform(3, 3, 2)
            est = seeded_estimator(cm, pol, episodes=int(local.integers(0, 25)), seed=case)
            cfg = OpseConfig(episodes=1, seed=1)
            lam = float(local.uniform(0, cfg.lambda_max))
            from safe_lcmdp.opse import backward_pass, head_q_at_state

            w = backward_pass(est, cm.rewards, cm.utilities, cfg, lam)
            ent = 1 + cfg.kappa * np.log(cm.num_actions)
            for h in range(cm.H):
                beta = est.bonus_table(h)
                left = cm.H - (h + 1)
                for s in range(cm.num_states):
                    q_r, q_u, q_dag = head_q_at_state(w, est, cfg, cm.rewards, cm.utilities, h, s)
                    if not (
                        np.all(q_r - cm.rewards[h, s] >= -1e-12)
                        and np.all(q_r - cm.rewards[h, s] <= left * ent + 1e-12)
                        and np.all(q_u - cm.utilities[h, s] >= -1e-12)
                        and np.all(q_u - cm.utilities[h, s] <= left + 1e-12)
                        and np.all(q_dag >= cfg.b_dagger * beta[s] - 1e-12)
                        and np.all(q_dag <= cfg.b_dagger * (beta[s] + left) + 1e-12)
                    ):
                        head_violations += 1

            from conftest import random_policy
            from safe_lcmdp.cmdp import occupancy

            rpol = random_policy(local, 3, 3, 2)
            w_occ = occupancy(cm, rpol).w
            if not (
                np.allclose(w_occ.sum(axis=(1, 2)), 1.0, atol=1e-9)
                and np.sum(w_occ * cm.rewards) == pytest.approx(
                    evaluate_policy(cm, rpol, cm.rewards)[1], abs=1e-9
                )
            ):
                occ_violations += 1

            _, v0 = evaluate_policy(cm, rpol, cm.rewards)
            _, vk = evaluate_policy(cm, rpol, cm.rewards, kappa=0.2)
            if not -1e-12 <= vk - v0 <= 0.2 * cm.H * np.log(2) + 1e-12:
                gap_violations += 1

        if head_violations:
            failures.append(f"head bounds violated in {head_violations} cases")
        if occ_violations:
            failures.append(f"occupancy invariants violated in {occ_violations} cases")
        if gap_violations:
            failures.append(f"entropy gap violated in {gap_violations} cases")

        # bonus monotone shrinkage: 100 recorded episodes on one estimator
        cm, safe = gen_tabular(1)
        est = EstimatorState(cm.features, cm.H)
        rng_local = np.random.default_rng(0)
        mono_violations = 0
        for _ in range(100):
            before = [est.bonus_table(h).copy() for h in range(cm.H)]
            est.record_episode(cm.sample_trajectory(safe.policy, rng_local))
            for h in range(cm.H):
                if not np.all(est.bonus_table(h) <= before[h] + 1e-12):
                    mono_violations += 1
        if mono_violations:
            failures.append(f"bonus shrinkage violated {mono_violations} times")

        # determinism: identical seeds, bit-identical logs (with timing off)
        cfg = ExperimentConfig(
            env="tabular", algo="opse", episodes=300, seeds=(3,),
            out_dir="unused", record_timing=False,
        )
        a = run_single_seed(cfg, 3).to_csv()
        b = run_single_seed(cfg, 3).to_csv()
        if a != b:
            failures.append("seeded runs are not bit-identical")

        passed = not failures
        record_criterion(
            "invariant suites (heads, occupancy, entropy gap, bonuses, determinism)",
            passed, "; ".join(failures) if failures else "all randomized suites clean",
        )
        assert passed
