"""Statistical tests for condition comparisons and dilemma analyses.

Test statistics, degrees of freedom, and effect estimates are computed from
first principles (sums of squares, normal equations, Welch-Satterthwaite);
only tail probabilities come from scipy's special-function implementations.
Repeated-measures ANOVAs use the classical error-strata decomposition: within
effects are tested against the within-group residual, and in the
counterbalanced two-way design the condition-by-task interaction is
equivalent to the between-group order contrast, tested against groups within
order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats as _sps

from cleanuplab.errors import DegenerateDataError

P_FLOOR = 1e-300


@dataclass(frozen=True)
class LongObservation:
    """One outcome value in long format."""

    group_id: str
    condition: str
    value: float
    task: str | None = None  # "first" | "second"
    episode: int = 0


@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: tuple[float, ...]
    p_value: float
    estimate: float | None = None
    ci_low: float | None = None
    ci_high: float | None = None
    name: str = ""
    flags: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        def sig(x):
            if x is None:
                return None
            if math.isinf(x):
                return "inf" if x > 0 else "-inf"
            return float(f"{x:.12g}")

        return {
            "name": self.name,
            "statistic": sig(self.statistic),
            "df": [sig(d) for d in self.df],
            "p_value": sig(self.p_value),
            "estimate": sig(self.estimate),
            "ci": [sig(self.ci_low), sig(self.ci_high)],
            "flags": list(self.flags),
        }


def _t_sf(t: float, df: float) -> float:
    return float(_sps.t.sf(t, df))


def _f_sf(f: float, df1: float, df2: float) -> float:
    return float(_sps.f.sf(f, df1, df2))


def _chi2_sf(x: float, df: float) -> float:
    return float(_sps.chi2.sf(x, df))


# ---------------------------------------------------------------------------
# Ordinary least squares


def ols_regression(y: Sequence[float], x: Sequence[float], name: str = "ols") -> TestResult:
    """Simple linear regression with slope inference."""
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    n = len(y)
    if n < 3:
        raise DegenerateDataError(f"need >= 3 points, got {n}")
    sxx = float(np.sum((x - x.mean()) ** 2))
    if sxx == 0.0:
        raise DegenerateDataError("zero variance in x: singular design")
    slope = float(np.sum((x - x.mean()) * (y - y.mean())) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    sse = float(np.sum(resid**2))
    df = n - 2
    if sse <= 0.0:
        return TestResult(
            statistic=math.inf,
            df=(float(df),),
            p_value=0.0,
            estimate=slope,
            ci_low=slope,
            ci_high=slope,
            name=name,
            flags=("exact-fit",),
        )
    se = math.sqrt(sse / df / sxx)
    t = slope / se
    p = 2.0 * _t_sf(abs(t), df)
    tcrit = float(_sps.t.ppf(0.975, df))
    return TestResult(
        statistic=t,
        df=(float(df),),
        p_value=p,
        estimate=slope,
        ci_low=slope - tcrit * se,
        ci_high=slope + tcrit * se,
        name=name,
    )


def ols_intercept(y: Sequence[float], x: Sequence[float]) -> float:
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    sxx = float(np.sum((x - x.mean()) ** 2))
    slope = float(np.sum((x - x.mean()) * (y - y.mean())) / sxx)
    return float(y.mean() - slope * x.mean())


# ---------------------------------------------------------------------------
# t tests


def welch_t(
    sample_a: Sequence[float],
    sample_b: Sequence[float],
    one_sided: bool = False,
    name: str = "welch-t",
) -> TestResult:
    """Unequal-variance two-sample t test with Welch-Satterthwaite df.

    The one-sided alternative is ``mean(a) > mean(b)``.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise DegenerateDataError("each sample needs n >= 2")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == 0.0 and vb == 0.0:
        if a.mean() == b.mean():
            raise DegenerateDataError("zero variance in both samples")
        return TestResult(
            statistic=math.copysign(math.inf, a.mean() - b.mean()),
            df=(float(len(a) + len(b) - 2),),
            p_value=0.0 if (not one_sided or a.mean() > b.mean()) else 1.0,
            estimate=float(a.mean() - b.mean()),
            ci_low=float(a.mean() - b.mean()),
            ci_high=float(a.mean() - b.mean()),
            name=name,
            flags=("zero-variance",),
        )
    sa, sb = va / len(a), vb / len(b)
    se = math.sqrt(sa + sb)
    t = float((a.mean() - b.mean()) / se)
    df = (sa + sb) ** 2 / (
        (sa**2 / (len(a) - 1) if len(a) > 1 else 0.0)
        + (sb**2 / (len(b) - 1) if len(b) > 1 else 0.0)
    )
    p = _t_sf(t, df) if one_sided else 2.0 * _t_sf(abs(t), df)
    tcrit = float(_sps.t.ppf(0.975, df))
    diff = float(a.mean() - b.mean())
    return TestResult(
        statistic=t,
        df=(float(df),),
        p_value=p,
        estimate=diff,
        ci_low=diff - tcrit * se,
        ci_high=diff + tcrit * se,
        name=name,
    )


def paired_t(
    sample_a: Sequence[float], sample_b: Sequence[float], name: str = "paired-t"
) -> TestResult:
    """t test on paired differences ``a - b``."""
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if len(a) != len(b):
        raise DegenerateDataError("paired samples must have equal length")
    n = len(a)
    if n < 2:
        raise DegenerateDataError("need n >= 2 pairs")
    d = a - b
    sd = d.std(ddof=1)
    mean = float(d.mean())
    if sd == 0.0:
        stat = 0.0 if mean == 0.0 else math.copysign(math.inf, mean)
        return TestResult(
            statistic=stat,
            df=(float(n - 1),),
            p_value=1.0 if mean == 0.0 else 0.0,
            estimate=mean,
            ci_low=mean,
            ci_high=mean,
            name=name,
            flags=("zero-variance-differences",),
        )
    se = float(sd / math.sqrt(n))
    t = mean / se
    p = 2.0 * _t_sf(abs(t), n - 1)
    tcrit = float(_sps.t.ppf(0.975, n - 1))
    return TestResult(
        statistic=t,
        df=(float(n - 1),),
        p_value=p,
        estimate=mean,
        ci_low=mean - tcrit * se,
        ci_high=mean + tcrit * se,
        name=name,
    )


# ---------------------------------------------------------------------------
# Repeated-measures ANOVA


def _check_two_levels(values: set, what: str) -> tuple:
    levels = tuple(sorted(values))
    if len(levels) != 2:
        raise DegenerateDataError(f"need exactly 2 {what} levels, got {levels}")
    return levels


def rm_anova_oneway(data: Sequence[LongObservation], name: str = "rm-anova") -> TestResult:
    """Condition effect with a per-group intercept stratum.

    The condition mean square is tested against the within-group residual
    (observations beyond group and condition effects).
    """
    groups = sorted({d.group_id for d in data})
    conditions = _check_two_levels({d.condition for d in data}, "condition")
    per = {}
    for d in data:
        per.setdefault((d.group_id, d.condition), []).append(d.value)
    for g in groups:
        counts = [len(per.get((g, c), [])) for c in conditions]
        if counts[0] == 0 or counts[1] == 0 or counts[0] != counts[1]:
            raise DegenerateDataError(
                f"group {g!r} unbalanced across conditions (counts {counts})"
            )

    y = np.array([d.value for d in data], dtype=np.float64)
    n = len(y)
    grand = y.mean()
    ss_total = float(np.sum((y - grand) ** 2))

    group_vals = {g: [] for g in groups}
    cond_vals = {c: [] for c in conditions}
    for d in data:
        group_vals[d.group_id].append(d.value)
        cond_vals[d.condition].append(d.value)
    ss_groups = sum(len(v) * (np.mean(v) - grand) ** 2 for v in group_vals.values())
    ss_cond = sum(len(v) * (np.mean(v) - grand) ** 2 for v in cond_vals.values())
    ss_resid = ss_total - ss_groups - ss_cond
    df_resid = n - len(groups) - 1
    if df_resid <= 0:
        raise DegenerateDataError("not enough replicates for a residual stratum")
    ms_cond = ss_cond / 1.0
    ms_resid = max(ss_resid, 0.0) / df_resid
    diff = float(np.mean(cond_vals[conditions[1]]) - np.mean(cond_vals[conditions[0]]))
    if ms_resid == 0.0:
        f = 0.0 if ms_cond == 0.0 else math.inf
        p = 1.0 if ms_cond == 0.0 else 0.0
        return TestResult(
            statistic=f,
            df=(1.0, float(df_resid)),
            p_value=p,
            estimate=diff,
            name=name,
            flags=("zero-residual",),
        )
    f = ms_cond / ms_resid
    return TestResult(
        statistic=float(f),
        df=(1.0, float(df_resid)),
        p_value=_f_sf(f, 1, df_resid),
        estimate=diff,
        name=name,
    )


def rm_anova_twoway(
    data: Sequence[LongObservation], name: str = "rm-anova-2way"
) -> dict[str, TestResult]:
    """Counterbalanced condition x task design (split-plot decomposition).

    Returns main effects for condition and task (tested against the within
    residual) and their interaction, which in this design is the group-order
    contrast tested against groups within order.
    """
    groups = sorted({d.group_id for d in data})
    conditions = _check_two_levels({d.condition for d in data}, "condition")
    tasks = _check_two_levels({d.task for d in data if d.task is not None}, "task")

    per_cell: dict[tuple[str, str, str], list[float]] = {}
    order: dict[str, str] = {}
    for d in data:
        if d.task is None:
            raise DegenerateDataError("two-way ANOVA needs task labels on every observation")
        per_cell.setdefault((d.group_id, d.condition, d.task), []).append(d.value)
        if d.task == tasks[0]:
            if order.setdefault(d.group_id, d.condition) != d.condition:
                raise DegenerateDataError(f"group {d.group_id!r} has inconsistent ordering")
    cell_n = None
    for g in groups:
        seen = [(c, t) for c in conditions for t in tasks if (g, c, t) in per_cell]
        if len(seen) != 2:
            raise DegenerateDataError(f"group {g!r} missing condition/task cells")
        for key in seen:
            k = len(per_cell[(g, *key)])
            if cell_n is None:
                cell_n = k
            elif k != cell_n:
                raise DegenerateDataError(f"group {g!r} has unbalanced cell sizes")
    orders = {order[g] for g in groups}
    if len(orders) != 2:
        raise DegenerateDataError("need both condition orders for a counterbalanced design")
    n_per_order = {o: sum(1 for g in groups if order[g] == o) for o in orders}
    if len(set(n_per_order.values())) != 1:
        raise DegenerateDataError(f"orders not counterbalanced: {n_per_order}")

    y = np.array([d.value for d in data], dtype=np.float64)
    n = len(y)
    grand = y.mean()
    ss_total = float(np.sum((y - grand) ** 2))

    def level_ss(key_fn) -> float:
        vals: dict = {}
        for d in data:
            vals.setdefault(key_fn(d), []).append(d.value)
        return sum(len(v) * (np.mean(v) - grand) ** 2 for v in vals.values())

    ss_groups = level_ss(lambda d: d.group_id)
    ss_cond = level_ss(lambda d: d.condition)
    ss_task = level_ss(lambda d: d.task)
    ss_order = level_ss(lambda d: order[d.group_id])
    ss_subj_within_order = ss_groups - ss_order
    ss_resid = ss_total - ss_groups - ss_cond - ss_task
    df_resid = n - len(groups) - 2
    df_subj = len(groups) - 2
    if df_resid <= 0 or df_subj <= 0:
        raise DegenerateDataError("not enough groups/replicates for the error strata")

    ms_resid = max(ss_resid, 0.0) / df_resid
    ms_subj = max(ss_subj_within_order, 0.0) / df_subj

    def result(ss_effect: float, ms_err: float, df_err: int, label: str, diff: float):
        if ms_err == 0.0:
            f = 0.0 if ss_effect == 0.0 else math.inf
            p = 1.0 if ss_effect == 0.0 else 0.0
            return TestResult(f, (1.0, float(df_err)), p, estimate=diff, name=label,
                              flags=("zero-residual",))
        f = ss_effect / ms_err
        return TestResult(
            float(f), (1.0, float(df_err)), _f_sf(f, 1, df_err), estimate=diff, name=label
        )

    def level_diff(key_fn, levels) -> float:
        vals: dict = {lv: [] for lv in levels}
        for d in data:
            vals[key_fn(d)].append(d.value)
        return float(np.mean(vals[levels[1]]) - np.mean(vals[levels[0]]))

    return {
        "condition": result(
            ss_cond, ms_resid, df_resid, f"{name}:condition",
            level_diff(lambda d: d.condition, conditions),
        ),
        "task": result(
            ss_task, ms_resid, df_resid, f"{name}:task",
            level_diff(lambda d: d.task, tasks),
        ),
        "interaction": result(
            ss_order, ms_subj, df_subj, f"{name}:interaction",
            level_diff(lambda d: order[d.group_id], tuple(sorted(orders))),
        ),
    }


# ---------------------------------------------------------------------------
# p-value combination


def fisher_combine(p_values: Sequence[float], name: str = "fisher") -> TestResult:
    """Fisher's method: chi-square with 2k degrees of freedom."""
    if len(p_values) == 0:
        raise DegenerateDataError("no p-values to combine")
    flags = []
    ps = []
    for p in p_values:
        if not 0.0 <= p <= 1.0:
            raise DegenerateDataError(f"p-value {p} outside [0, 1]")
        if p < P_FLOOR:
            flags.append("p-floored")
            p = P_FLOOR
        ps.append(p)
    chi2 = -2.0 * sum(math.log(p) for p in ps)
    df = 2 * len(ps)
    return TestResult(
        statistic=float(chi2),
        df=(float(df),),
        p_value=_chi2_sf(chi2, df),
        name=name,
        flags=tuple(flags),
    )


def max_p_combine(p_values: Sequence[float]) -> float:
    if len(p_values) == 0:
        raise DegenerateDataError("no p-values to combine")
    return float(max(p_values))


# ---------------------------------------------------------------------------
# Mediation


@dataclass(frozen=True)
class MediationResult:
    indirect: TestResult  # AB with bootstrap CI/p
    total: TestResult  # C
    direct: TestResult  # C'
    a_path: float
    b_path: float

    def to_dict(self) -> dict:
        return {
            "indirect": self.indirect.to_dict(),
            "total": self.total.to_dict(),
            "direct": self.direct.to_dict(),
            "a_path": float(f"{self.a_path:.12g}"),
            "b_path": float(f"{self.b_path:.12g}"),
        }


def _two_predictor_coefs(y: np.ndarray, x: np.ndarray, m: np.ndarray) -> tuple[float, float]:
    """Coefficients (b_x, b_m) of y ~ 1 + x + m via normal equations."""
    design = np.column_stack([np.ones(len(y)), x, m])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return float(coef[1]), float(coef[2])


def _ols_coef_inference(y: np.ndarray, design: np.ndarray, k: int, name: str) -> TestResult:
    """t inference for coefficient ``k`` of an OLS fit with the given design."""
    n, p = design.shape
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    df = n - p
    sse = float(resid @ resid)
    xtx_inv = np.linalg.inv(design.T @ design)
    est = float(coef[k])
    if df <= 0 or sse <= 0.0:
        return TestResult(math.inf if est != 0 else 0.0, (float(max(df, 0)),),
                          0.0 if est != 0 else 1.0, estimate=est, ci_low=est, ci_high=est,
                          name=name, flags=("exact-fit",))
    se = math.sqrt(sse / df * xtx_inv[k, k])
    t = est / se
    tcrit = float(_sps.t.ppf(0.975, df))
    return TestResult(
        statistic=float(t),
        df=(float(df),),
        p_value=2.0 * _t_sf(abs(t), df),
        estimate=est,
        ci_low=est - tcrit * se,
        ci_high=est + tcrit * se,
        name=name,
    )


def mediation(
    x: Sequence[float],
    m: Sequence[float],
    y: Sequence[float],
    resamples: int = 10_000,
    seed: int = 0,
) -> MediationResult:
    """Indirect-effect estimate AB with percentile-bootstrap inference.

    A is the slope of m ~ x; B and C' come from y ~ x + m; C from y ~ x.
    """
    x = np.asarray(x, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not (len(x) == len(m) == len(y)):
        raise DegenerateDataError("x, m, y must be aligned")
    if np.var(x) == 0.0 or np.var(m) == 0.0:
        raise DegenerateDataError("degenerate variance in x or m")

    a = ols_regression(m, x, name="a-path").estimate
    c_prime, b = _two_predictor_coefs(y, x, m)
    total = ols_regression(y, x, name="total-effect")
    ab = a * b

    rng = np.random.default_rng(seed)
    n = len(x)
    draws = np.empty(resamples, dtype=np.float64)
    for i in range(resamples):
        idx = rng.integers(0, n, size=n)
        xb, mb, yb = x[idx], m[idx], y[idx]
        if np.var(xb) == 0.0 or np.var(mb) == 0.0:
            draws[i] = np.nan
            continue
        sxx = float(np.sum((xb - xb.mean()) ** 2))
        a_b = float(np.sum((xb - xb.mean()) * (mb - mb.mean())) / sxx)
        _, b_b = _two_predictor_coefs(yb, xb, mb)
        draws[i] = a_b * b_b
    valid = draws[~np.isnan(draws)]
    lo, hi = np.percentile(valid, [2.5, 97.5])
    frac_le = float(np.mean(valid <= 0.0))
    frac_ge = float(np.mean(valid >= 0.0))
    p = min(1.0, 2.0 * min(frac_le, frac_ge))
    p = max(p, 1.0 / len(valid))

    indirect = TestResult(
        statistic=float(ab),
        df=(float(len(valid)),),
        p_value=p,
        estimate=float(ab),
        ci_low=float(lo),
        ci_high=float(hi),
        name="indirect-effect",
    )
    design = np.column_stack([np.ones(n), x, m])
    direct = _ols_coef_inference(y, design, k=1, name="direct-effect")
    return MediationResult(indirect=indirect, total=total, direct=direct, a_path=a, b_path=b)
