from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats as sps

from cleanuplab.errors import DegenerateDataError
from cleanuplab.stats import (
    LongObservation,
    fisher_combine,
    max_p_combine,
    mediation,
    ols_regression,
    paired_t,
    rm_anova_oneway,
    rm_anova_twoway,
    welch_t,
)


# ---------------------------------------------------------------------------
# Independent textbook oracles


def _anova_oneway_oracle(data):
    """Nested-OLS F test: y ~ 1 + group  vs  y ~ 1 + group + condition."""
    groups = sorted({d.group_id for d in data})
    conds = sorted({d.condition for d in data})
    y = np.array([d.value for d in data])
    n = len(y)
    g_idx = {g: i for i, g in enumerate(groups)}
    x_null = np.zeros((n, 1 + len(groups) - 1))
    x_full = np.zeros((n, 2 + len(groups) - 1))
    for i, d in enumerate(data):
        x_null[i, 0] = 1.0
        x_full[i, 0] = 1.0
        if g_idx[d.group_id] > 0:
            x_null[i, g_idx[d.group_id]] = 1.0
            x_full[i, g_idx[d.group_id]] = 1.0
        x_full[i, -1] = 1.0 if d.condition == conds[1] else 0.0
    sse_null = np.sum((y - x_null @ np.linalg.lstsq(x_null, y, rcond=None)[0]) ** 2)
    sse_full = np.sum((y - x_full @ np.linalg.lstsq(x_full, y, rcond=None)[0]) ** 2)
    df2 = n - x_full.shape[1]
    f = (sse_null - sse_full) / 1.0 / (sse_full / df2)
    return f, df2, float(sps.f.sf(f, 1, df2))


def _make_oneway(rng, n_groups=12, reps=4, effect=0.0):
    data = []
    for g in range(n_groups):
        mu = rng.normal(0, 2)
        for c, cond in enumerate(["anonymous", "identifiable"]):
            for e in range(reps):
                data.append(
                    LongObservation(
                        group_id=f"g{g}",
                        condition=cond,
                        value=mu + effect * c + rng.normal(),
                        episode=e,
                    )
                )
    return data


def test_rm_anova_oneway_matches_oracle():
    rng = np.random.default_rng(0)
    for trial in range(10):
        data = _make_oneway(rng, effect=rng.normal(0, 1))
        res = rm_anova_oneway(data)
        f, df2, p = _anova_oneway_oracle(data)
        assert res.statistic == pytest.approx(f, abs=1e-8, rel=1e-8)
        assert res.df == (1.0, float(df2))
        assert res.p_value == pytest.approx(p, abs=1e-8)


def test_rm_anova_identical_conditions_f_zero():
    data = []
    rng = np.random.default_rng(1)
    for g in range(6):
        vals = rng.normal(size=3)
        for cond in ("identifiable", "anonymous"):
            for e, v in enumerate(vals):
                data.append(LongObservation(f"g{g}", cond, float(v), episode=e))
    res = rm_anova_oneway(data)
    assert res.statistic == pytest.approx(0.0, abs=1e-12)
    assert res.p_value == pytest.approx(1.0)


def test_rm_anova_perfect_separation():
    data = []
    for g in range(3):
        base = float(g)
        for e in range(2):
            data.append(LongObservation(f"g{g}", "anonymous", base, episode=e))
            data.append(LongObservation(f"g{g}", "identifiable", base + 2.0, episode=e))
    res = rm_anova_oneway(data)
    assert math.isinf(res.statistic)
    assert res.p_value <= 1e-12


def test_rm_anova_unbalanced_group_named():
    data = _make_oneway(np.random.default_rng(2), n_groups=4)
    data.append(LongObservation("g1", "identifiable", 1.0, episode=99))
    with pytest.raises(DegenerateDataError, match="g1"):
        rm_anova_oneway(data)


def test_rm_anova_label_swap_flips_estimate():
    rng = np.random.default_rng(3)
    data = _make_oneway(rng, effect=1.0)
    swapped = [
        LongObservation(
            d.group_id,
            "identifiable" if d.condition == "anonymous" else "anonymous",
            d.value,
            episode=d.episode,
        )
        for d in data
    ]
    a = rm_anova_oneway(data)
    b = rm_anova_oneway(swapped)
    assert a.statistic == pytest.approx(b.statistic, rel=1e-12)
    assert a.estimate == pytest.approx(-b.estimate, rel=1e-12)


def _make_twoway(rng, n_groups=24, reps=7, cond_effect=0.0, task_effect=0.0):
    data = []
    for g in range(n_groups):
        mu = rng.normal(0, 2)
        first = "identifiable" if g % 2 == 0 else "anonymous"
        second = "anonymous" if first == "identifiable" else "identifiable"
        for task, cond in (("first", first), ("second", second)):
            for e in range(reps):
                value = (
                    mu
                    + (cond_effect if cond == "identifiable" else 0.0)
                    + (task_effect if task == "second" else 0.0)
                    + rng.normal()
                )
                data.append(
                    LongObservation(f"g{g:02d}", cond, value, task=task, episode=e)
                )
    return data


def test_rm_anova_twoway_df_structure():
    # 24 groups x 7 episodes x 2 conditions: mains F(1, 310), interaction F(1, 22)
    data = _make_twoway(np.random.default_rng(4), cond_effect=1.0)
    res = rm_anova_twoway(data)
    assert res["condition"].df == (1.0, 310.0)
    assert res["task"].df == (1.0, 310.0)
    assert res["interaction"].df == (1.0, 22.0)
    assert res["condition"].p_value < 1e-6


def test_rm_anova_twoway_mains_match_nested_ols():
    rng = np.random.default_rng(5)
    data = _make_twoway(rng, n_groups=8, reps=3, cond_effect=0.7, task_effect=-0.4)
    res = rm_anova_twoway(data)

    # Oracle: nested OLS with group dummies + the other main effect.
    y = np.array([d.value for d in data])
    groups = sorted({d.group_id for d in data})
    g_idx = {g: i for i, g in enumerate(groups)}
    n = len(y)

    def design(include_cond, include_task):
        cols = [np.ones(n)]
        for g in groups[1:]:
            cols.append(np.array([1.0 if d.group_id == g else 0.0 for d in data]))
        if include_cond:
            cols.append(np.array([1.0 if d.condition == "identifiable" else 0.0 for d in data]))
        if include_task:
            cols.append(np.array([1.0 if d.task == "second" else 0.0 for d in data]))
        return np.column_stack(cols)

    def sse(x):
        beta, *_ = np.linalg.lstsq(x, y, rcond=None)
        return float(np.sum((y - x @ beta) ** 2))

    full = design(True, True)
    df2 = n - full.shape[1]
    f_cond = (sse(design(False, True)) - sse(full)) / (sse(full) / df2)
    f_task = (sse(design(True, False)) - sse(full)) / (sse(full) / df2)
    assert res["condition"].statistic == pytest.approx(f_cond, rel=1e-8)
    assert res["task"].statistic == pytest.approx(f_task, rel=1e-8)
    assert res["condition"].df[1] == df2


def test_rm_anova_twoway_interaction_is_order_contrast():
    rng = np.random.default_rng(6)
    data = _make_twoway(rng, n_groups=10, reps=4)
    res = rm_anova_twoway(data)
    # Oracle: one-way ANOVA of group means by order (between-groups test).
    per_group: dict[str, list[float]] = {}
    order: dict[str, str] = {}
    for d in data:
        per_group.setdefault(d.group_id, []).append(d.value)
        if d.task == "first":
            order[d.group_id] = d.condition
    means = {g: np.mean(v) for g, v in per_group.items()}
    m = len(next(iter(per_group.values())))
    a = [means[g] for g in means if order[g] == "identifiable"]
    b = [means[g] for g in means if order[g] == "anonymous"]
    grand = np.mean(list(means.values()))
    ss_order = m * (len(a) * (np.mean(a) - grand) ** 2 + len(b) * (np.mean(b) - grand) ** 2)
    ss_within = m * (
        np.sum((np.array(a) - np.mean(a)) ** 2) + np.sum((np.array(b) - np.mean(b)) ** 2)
    )
    f = ss_order / (ss_within / (len(means) - 2))
    assert res["interaction"].statistic == pytest.approx(f, rel=1e-8)


def test_rm_anova_twoway_missing_cells_error():
    data = _make_twoway(np.random.default_rng(7), n_groups=4, reps=2)
    dropped = [d for d in data if not (d.group_id == "g00" and d.task == "second")]
    with pytest.raises(DegenerateDataError):
        rm_anova_twoway(dropped)


# ---------------------------------------------------------------------------
# t tests


def test_welch_matches_scipy():
    rng = np.random.default_rng(8)
    for _ in range(20):
        a = rng.normal(0, 1, size=rng.integers(5, 30))
        b = rng.normal(0.3, 2, size=rng.integers(5, 30))
        mine = welch_t(a, b)
        ref = sps.ttest_ind(a, b, equal_var=False)
        assert mine.statistic == pytest.approx(ref.statistic, rel=1e-10)
        assert mine.p_value == pytest.approx(ref.pvalue, rel=1e-8)


def test_welch_hand_case():
    res = welch_t([10, 11, 12], [0, 1, 2], one_sided=True)
    # means differ by 10, each var 1, se = sqrt(2/3), df = 4 by hand
    assert res.statistic == pytest.approx(10 / math.sqrt(2 / 3), rel=1e-12)
    assert res.df[0] == pytest.approx(4.0, rel=1e-12)
    assert res.p_value < 0.01


def test_welch_identical_samples():
    a = [1.0, 2.0, 3.0]
    res = welch_t(a, list(a), one_sided=True)
    assert res.statistic == 0.0
    assert res.p_value == pytest.approx(0.5)


def test_welch_swap_negates_t():
    rng = np.random.default_rng(9)
    a = rng.normal(size=10)
    b = rng.normal(1, 1, size=12)
    assert welch_t(a, b).statistic == pytest.approx(-welch_t(b, a).statistic, rel=1e-12)


def test_paired_t_hand_case():
    res = paired_t([2.0, 3.0, 4.0], [1.0, 1.0, 1.0])
    assert res.statistic == pytest.approx(2 * math.sqrt(3), rel=1e-12)
    assert res.df[0] == 2.0
    ref = sps.ttest_rel([2.0, 3.0, 4.0], [1.0, 1.0, 1.0])
    assert res.p_value == pytest.approx(ref.pvalue, rel=1e-10)


def test_paired_t_equal_samples():
    res = paired_t([1.0, 2.0], [1.0, 2.0])
    assert res.statistic == 0.0
    assert res.p_value == 1.0
    assert "zero-variance-differences" in res.flags


def test_paired_t_permutation_invariance():
    a = [3.0, 5.0, 9.0, 2.0]
    b = [1.0, 4.0, 11.0, 0.5]
    r1 = paired_t(a, b)
    order = [2, 0, 3, 1]
    r2 = paired_t([a[i] for i in order], [b[i] for i in order])
    assert r1.statistic == pytest.approx(r2.statistic, rel=1e-12)


# ---------------------------------------------------------------------------
# OLS


def test_ols_exact_line():
    x = np.array([0.0, 1.0, 2.0, 3.0])
    res = ols_regression(3.0 * x + 1.0, x)
    assert res.estimate == pytest.approx(3.0, abs=1e-12)
    assert res.ci_low == res.ci_high == res.estimate
    assert "exact-fit" in res.flags


def test_ols_matches_normal_equations_and_scipy():
    rng = np.random.default_rng(10)
    x = rng.normal(size=50)
    y = 2.0 * x + rng.normal(size=50)
    res = ols_regression(y, x)
    # hand normal equations
    sxy = np.sum((x - x.mean()) * (y - y.mean()))
    sxx = np.sum((x - x.mean()) ** 2)
    slope = sxy / sxx
    assert res.estimate == pytest.approx(slope, rel=1e-10)
    ref = sps.linregress(x, y)
    assert res.estimate == pytest.approx(ref.slope, rel=1e-10)
    assert res.p_value == pytest.approx(ref.pvalue, rel=1e-8)


def test_ols_singular_design():
    with pytest.raises(DegenerateDataError):
        ols_regression([1.0, 2.0, 3.0], [5.0, 5.0, 5.0])


# ---------------------------------------------------------------------------
# Combination


def test_fisher_trivial_and_hand_values():
    res = fisher_combine([1.0, 1.0])
    assert res.statistic == pytest.approx(0.0)
    assert res.p_value == pytest.approx(1.0)

    res = fisher_combine([0.05, 0.05])
    assert res.statistic == pytest.approx(-4 * math.log(0.05), rel=1e-12)
    assert res.df[0] == 4.0
    assert res.p_value == pytest.approx(sps.chi2.sf(res.statistic, 4), rel=1e-12)
    assert res.p_value == pytest.approx(0.0175, abs=5e-4)

    single = fisher_combine([0.2])
    assert single.statistic == pytest.approx(-2 * math.log(0.2), rel=1e-12)
    assert single.df[0] == 2.0


def test_fisher_zero_p_floored():
    res = fisher_combine([0.0, 0.5])
    assert "p-floored" in res.flags
    assert math.isfinite(res.statistic)


def test_max_p_combine():
    assert max_p_combine([0.01, 0.02, 0.03]) == 0.03
    assert max_p_combine([1.0, 0.0001]) == 1.0
    assert max_p_combine([0.2]) == 0.2


def test_tail_functions_against_tabulated_values():
    # Standard table constants: t(10) upper 2.5% point, chi2(4) and F(1, 10)
    # upper 5% points.
    assert sps.t.sf(2.2281, 10) == pytest.approx(0.025, abs=5e-5)
    assert sps.chi2.sf(9.4877, 4) == pytest.approx(0.05, abs=5e-5)
    assert sps.f.sf(4.9646, 1, 10) == pytest.approx(0.05, abs=5e-5)


# ---------------------------------------------------------------------------
# Mediation


def test_mediation_planted_chain():
    rng = np.random.default_rng(11)
    n = 400
    x = rng.integers(0, 2, size=n).astype(float)
    m = 2.0 * x + rng.normal(0, 0.1, size=n)
    y = 3.0 * m + rng.normal(0, 0.1, size=n)
    res = mediation(x, m, y, resamples=2000, seed=0)
    assert res.indirect.estimate == pytest.approx(6.0, abs=0.1)
    assert abs(res.direct.estimate) < 0.2
    assert res.indirect.p_value < 0.01


def test_mediation_null_b_path_ci_contains_zero():
    rng = np.random.default_rng(12)
    n = 300
    x = rng.integers(0, 2, size=n).astype(float)
    m = 2.0 * x + rng.normal(0, 1, size=n)
    y = 1.5 * x + rng.normal(0, 1, size=n)  # y independent of m given x
    res = mediation(x, m, y, resamples=2000, seed=1)
    assert res.indirect.ci_low <= 0.0 <= res.indirect.ci_high


def test_mediation_identity_c_equals_cprime_plus_ab():
    rng = np.random.default_rng(13)
    n = 50
    x = rng.normal(size=n)
    m = 1.3 * x + rng.normal(size=n)
    y = 0.7 * x + 2.1 * m + rng.normal(size=n)
    res = mediation(x, m, y, resamples=100, seed=2)
    ab = res.a_path * res.b_path
    assert res.total.estimate == pytest.approx(res.direct.estimate + ab, abs=1e-8)


def test_mediation_reproducible_under_seed():
    rng = np.random.default_rng(14)
    x = rng.integers(0, 2, size=100).astype(float)
    m = x + rng.normal(size=100)
    y = m + rng.normal(size=100)
    a = mediation(x, m, y, resamples=500, seed=7)
    b = mediation(x, m, y, resamples=500, seed=7)
    assert a.indirect.ci_low == b.indirect.ci_low
    assert a.indirect.p_value == b.indirect.p_value


# ---------------------------------------------------------------------------
# Null-calibration (KS) checks


def test_null_calibration_ks():
    rng = np.random.default_rng(15)
    welch_ps, ols_ps, anova_ps = [], [], []
    x_fixed = rng.normal(size=20)
    for _ in range(500):
        welch_ps.append(welch_t(rng.normal(size=12), rng.normal(size=15)).p_value)
        ols_ps.append(ols_regression(rng.normal(size=20), x_fixed).p_value)
        data = _make_oneway(rng, n_groups=8, reps=3, effect=0.0)
        anova_ps.append(rm_anova_oneway(data).p_value)
    for name, ps in [("welch", welch_ps), ("ols", ols_ps), ("anova", anova_ps)]:
        ks = sps.kstest(ps, "uniform")
        assert ks.pvalue > 0.01, f"{name} p-values not uniform under null: KS {ks}"


def test_ordering_invariance():
    rng = np.random.default_rng(16)
    data = _make_oneway(rng, n_groups=6, reps=3, effect=0.5)
    shuffled = list(data)
    rng.shuffle(shuffled)
    a = rm_anova_oneway(data)
    b = rm_anova_oneway(shuffled)
    assert a.statistic == pytest.approx(b.statistic, rel=1e-12)


def test_result_serialization_12_digits():
    res = welch_t([1.0, 2.0, 3.5], [0.1, 0.4, 0.9])
    d = res.to_dict()
    assert isinstance(d["statistic"], float)
    assert d["df"][0] == float(f"{res.df[0]:.12g}")
    assert d["ci"][0] is not None
