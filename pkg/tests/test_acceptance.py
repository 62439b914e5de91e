"""End-to-end acceptance checks for the full attack/countermeasure pipeline.

Every test prints a single ``[acceptance] <name>: PASS/FAIL (...)`` verdict
line before asserting, so a failing check still identifies itself; run with
``pytest -s tests/test_acceptance.py`` to see the lines.  The two full sweeps
and the Monte Carlo suite are expensive (tens of minutes combined) and are
shared through module-scoped fixtures.
"""

import time

import numpy as np
import pytest
import yaml

from bb84_mismatch import squashing
from bb84_mismatch.attack import (
    EveMeasurementModel,
    GeneralizedStrategy,
    HonestChannel,
    RestrictedStrategy,
    ScramblingPolicy,
    _dark_sift_term,
    observables,
    sift_basis,
    strategy_error,
    strategy_rate,
)
from bb84_mismatch.cli import main as cli_main
from bb84_mismatch.optimizer import OptimizerConfig, Scenario, optimize, sweep
from bb84_mismatch.oracle import validation_suite
from bb84_mismatch.receiver import (
    POLARIZATIONS,
    SCRAMBLING_ANGLES,
    EfficiencyMap,
    ReceiverParams,
    raw_click_vector,
)

LOSSES = [float(x) for x in range(21)]

TINY_CONFIG = """
channel:
  loss_db: 6.0
optimizer:
  restarts: 2
  penalty_rounds: 3
  seed: 5
strategy_space: restricted_4
"""


def _verdict(name: str, ok: bool, detail: str) -> bool:
    print(f"\n[acceptance] {name}: {'PASS' if ok else 'FAIL'} ({detail})", flush=True)
    return ok


def default_scenario(off_diag: float = 0.001) -> Scenario:
    return Scenario(
        eve=EveMeasurementModel(0.5, 0.0, 0.25),
        params=ReceiverParams(dark_counts=1e-6, fidelity=0.98, click_model="paper_approx"),
        emap=EfficiencyMap.from_diag(0.1, off_diag),
        nominal_eta=0.1,
    )


def _run_sweep(space: str):
    # Independent points (no warm chain): the generalized run at each loss
    # then reuses the restricted run's restarts verbatim as its first phase,
    # which makes the dominance comparison structural rather than statistical.
    start = time.perf_counter()
    points = sweep(
        LOSSES,
        space,
        "total_rate",
        ScramblingPolicy.uniform(),
        HonestChannel(0.0, 0.5),
        OptimizerConfig(),
        default_scenario(),
        warm_start=False,
    )
    return points, time.perf_counter() - start


@pytest.fixture(scope="module")
def restricted_sweep():
    return _run_sweep("restricted_4")


@pytest.fixture(scope="module")
def generalized_sweep():
    return _run_sweep("generalized_32")


@pytest.fixture(scope="module")
def validation_report():
    start = time.perf_counter()
    report = validation_suite(
        n_scenarios=100, trials=1_000_000, master_seed=20240817, z_threshold=4.0
    )
    return report, time.perf_counter() - start


class TestSquashingClosedForms:
    def test_closed_forms_match_enumeration(self):
        rng = np.random.default_rng(909)
        worst = 0.0
        for _ in range(10_000):
            probs = rng.random(4)
            table = squashing.pattern_probabilities(probs)
            for b, basis_name in enumerate(squashing.BASES):
                mask = squashing.PATTERN_DECISIONS[:, squashing.OUTCOME_H + 2 * b]
                mask = mask + squashing.PATTERN_DECISIONS[:, squashing.OUTCOME_V + 2 * b]
                direct = squashing.basis_prob(probs, basis_name)
                worst = max(worst, abs(direct - float(table @ mask)))
            for det in range(4):
                summed = float(table @ squashing.PATTERN_DECISIONS[:, det])
                worst = max(worst, abs(squashing.outcome_prob(probs, det) - summed))
        ok = worst <= 1e-12
        assert _verdict(
            "squashing-closed-forms", ok,
            f"max |closed form - enumeration| = {worst:.3e} over 10000 vectors; bound 1e-12",
        )


class TestReductionIdentities:
    def test_degenerate_policy_equals_single_angle_formula(self):
        scen = default_scenario()
        rng = np.random.default_rng(17)
        mismatches = 0
        for _ in range(25):
            strat = RestrictedStrategy(rng.uniform(0.05, 3.0, size=4))
            obs = observables(
                strat, ScramblingPolicy.no_scrambling(), scen.eve, scen.params, scen.emap
            )
            for j in POLARIZATIONS:
                machinery = strategy_rate(j, 0, strat, scen.eve, scen.params, scen.emap)
                pair = sift_basis(j, 0)
                coef = scen.eve.coefficient_matrix()
                direct = 0.0
                for q in POLARIZATIONS:
                    probs = raw_click_vector(q, q, strat.mu[q], 0, scen.params, scen.emap)
                    direct += coef[j, q] * squashing.basis_prob(probs, pair)
                direct += scen.eve.p_none * _dark_sift_term(pair, scen.params.dark_counts)
                if obs.rate_per_pol[j] != machinery or machinery != direct:
                    mismatches += 1
        ok = mismatches == 0
        assert _verdict(
            "single-angle-reduction", ok,
            f"{mismatches} bitwise mismatches over 25 strategies x 4 polarizations",
        )

    def test_uniform_policy_equals_quarter_quarter_aggregation(self):
        scen = default_scenario()
        rng = np.random.default_rng(18)
        mismatches = 0
        for _ in range(10):
            mu = rng.uniform(0.05, 3.0, size=(4, 4))
            f = rng.dirichlet(np.ones(4), size=4)
            strat = GeneralizedStrategy(mu, f)
            obs = observables(
                strat, ScramblingPolicy.uniform(), scen.eve, scen.params, scen.emap
            )
            rate = np.zeros(4)
            err = np.zeros(4)
            for j in POLARIZATIONS:
                for theta in SCRAMBLING_ANGLES:
                    rate[j] += 0.25 * strategy_rate(j, theta, strat, scen.eve, scen.params, scen.emap)
                    err[j] += 0.25 * strategy_error(j, theta, strat, scen.eve, scen.params, scen.emap)
            if obs.rate_total != float(rate.sum() / 4.0):
                mismatches += 1
            if obs.error_total != float(err.sum() / 4.0):
                mismatches += 1
            if np.any(obs.rate_per_pol != rate) or np.any(obs.error_per_pol != err):
                mismatches += 1
        ok = mismatches == 0
        assert _verdict(
            "uniform-aggregation-reduction", ok,
            f"{mismatches} bitwise mismatches over 10 generalized strategies",
        )


class TestNoMismatchNoAdvantage:
    def test_best_attack_without_mismatch_stays_at_intercept_resend(self):
        start = time.perf_counter()
        scen = Scenario(
            eve=EveMeasurementModel(0.5, 0.0, 0.25),
            params=ReceiverParams(dark_counts=0.0, fidelity=1.0, click_model="paper_approx"),
            emap=EfficiencyMap.uniform(0.1),
            nominal_eta=0.1,
        )
        channel = HonestChannel(0.0, 0.5)
        results = {}
        for space in ("restricted_4", "generalized_32"):
            results[space] = optimize(
                space, "total_rate", ScramblingPolicy.no_scrambling(),
                channel, OptimizerConfig(), scen,
            )
        elapsed = time.perf_counter() - start
        ok = all(r.feasible and r.qber >= 0.245 for r in results.values())
        detail = ", ".join(
            f"{space} qber={r.qber:.6f} feasible={r.feasible}"
            for space, r in results.items()
        )
        assert _verdict(
            "no-mismatch-no-advantage", ok, f"{detail}; floor 0.245; {elapsed:.0f}s"
        )


class TestScramblingCountermeasure:
    def test_restricted_attack_forced_above_25_percent(self, restricted_sweep):
        points, elapsed = restricted_sweep
        infeasible = [p.loss_db for p in points if not p.result.feasible]
        qbers = [p.result.qber for p in points if p.result.feasible]
        ok = not infeasible and all(q > 0.25 for q in qbers)
        assert _verdict(
            "scrambling-restricted-floor", ok,
            f"min QBER {min(qbers):.4f} over {len(points)} losses 0-20 dB, "
            f"{len(infeasible)} infeasible; target > 0.25; {elapsed:.0f}s (budget 600s)",
        )

    def test_floor_holds_across_off_diagonal_leakage(self):
        start = time.perf_counter()
        failures = []
        worst = 1.0
        for off_diag in (0.0005, 0.0025, 0.005):
            scen = default_scenario(off_diag)
            for loss in (0.0, 10.0, 20.0):
                res = optimize(
                    "restricted_4", "total_rate", ScramblingPolicy.uniform(),
                    HonestChannel(loss, 0.5), OptimizerConfig(), scen,
                )
                if not (res.feasible and res.qber > 0.25):
                    failures.append((off_diag, loss, res.qber, res.feasible))
                if res.feasible:
                    worst = min(worst, res.qber)
        elapsed = time.perf_counter() - start
        ok = not failures
        assert _verdict(
            "scrambling-floor-off-diagonal", ok,
            f"min QBER {worst:.4f} over off-diag {{0.0005,0.0025,0.005}} x losses "
            f"{{0,10,20}} dB, {len(failures)} below floor; {elapsed:.0f}s",
        )


class TestGeneralizedAttack:
    def test_bypass_reaches_sub_5_percent_up_to_17_db(self, generalized_sweep):
        points, elapsed = generalized_sweep
        in_range = [p for p in points if p.loss_db <= 17.0]
        infeasible = [p.loss_db for p in in_range if not p.result.feasible]
        qbers = [p.result.qber for p in in_range if p.result.feasible]
        ok = not infeasible and all(q < 0.05 for q in qbers)
        assert _verdict(
            "generalized-bypass-sub-5pct", ok,
            f"QBER range [{min(qbers):.4f}, {max(qbers):.4f}] over losses <= 17 dB, "
            f"{len(infeasible)} infeasible; target < 0.05; {elapsed:.0f}s (budget 1800s)",
        )

    def test_generalized_never_worse_than_restricted(self, restricted_sweep, generalized_sweep):
        r_points, _ = restricted_sweep
        g_points, _ = generalized_sweep
        gaps = []
        for rp, gp in zip(r_points, g_points):
            assert rp.loss_db == gp.loss_db
            if rp.result.feasible and gp.result.feasible:
                gaps.append(gp.result.qber - rp.result.qber)
        ok = bool(gaps) and max(gaps) <= 1e-9
        assert _verdict(
            "generalized-dominance", ok,
            f"max QBER(gen) - QBER(restr) = {max(gaps):.3e} over {len(gaps)} "
            f"feasible points; tolerance 1e-9",
        )

    def test_six_db_strategy_matrices(self, generalized_sweep):
        points, _ = generalized_sweep
        point = next(p for p in points if p.loss_db == 6.0)
        strat = point.result.strategy
        shape_ok = (
            isinstance(strat, GeneralizedStrategy)
            and strat.mu.shape == (4, 4)
            and strat.f.shape == (4, 4)
        )
        row_err = float(np.abs(strat.f.sum(axis=1) - 1.0).max()) if shape_ok else np.inf
        diag_sum = float(np.trace(strat.f)) if shape_ok else 0.0
        off = strat.f + np.diag(np.full(4, -np.inf)) if shape_ok else None
        off_sum = float(off.max(axis=1).sum()) if shape_ok else np.inf
        ok = shape_ok and row_err <= 1e-9 and diag_sum > off_sum
        assert _verdict(
            "six-db-matrices", ok,
            f"4x4 tables={shape_ok}, max |row sum - 1| = {row_err:.3e} (bound 1e-9), "
            f"diag mass {diag_sum:.4f} vs off-diag row maxima {off_sum:.4f}",
        )


class TestMonteCarloSuite:
    def test_analytic_model_matches_simulation(self, validation_report):
        report, elapsed = validation_report
        ok = bool(report["passed"])
        failing = [r["scenario"] for r in report["rows"] if not r["passed"]]
        assert _verdict(
            "monte-carlo-suite", ok,
            f"{report['scenarios']} scenarios x {report['trials']} trials, "
            f"retried={report['retried']}, failing={failing}; z threshold 4; "
            f"{elapsed:.0f}s (budget 1200s)",
        )


class TestByteDeterminism:
    def test_cli_reruns_are_byte_identical(self, tmp_path, monkeypatch):
        monkeypatch.delenv("BB84_MISMATCH_CONFIG", raising=False)
        cfg = tmp_path / "tiny.yaml"
        cfg.write_text(TINY_CONFIG)
        pairs = []
        for rep in ("a", "b"):
            opt_dir = tmp_path / f"opt_{rep}"
            assert cli_main(["optimize", "--config", str(cfg), "--out", str(opt_dir)]) == 0
            sweep_dir = tmp_path / f"sweep_{rep}"
            assert cli_main([
                "sweep", "--config", str(cfg), "--losses", "5,6", "--out", str(sweep_dir),
            ]) == 0
            val_file = tmp_path / f"val_{rep}.yaml"
            assert cli_main([
                "validate", "--config", str(cfg), "--scenarios", "2",
                "--trials", "30000", "--out", str(val_file),
            ]) == 0
            pairs.append((
                (opt_dir / "result.yaml").read_bytes(),
                (opt_dir / "strategy.yaml").read_bytes(),
                (sweep_dir / "sweep.csv").read_bytes(),
                (sweep_dir / "strategy_loss_5.0.yaml").read_bytes(),
                val_file.read_bytes(),
            ))
        labels = ("optimize/result", "optimize/strategy", "sweep/csv", "sweep/strategy", "validate")
        differing = [lab for lab, x, y in zip(labels, pairs[0], pairs[1]) if x != y]
        ok = not differing
        assert _verdict(
            "byte-determinism", ok,
            f"optimize+sweep+validate rerun, differing outputs: {differing or 'none'}",
        )
