"""Spatial and temporal coordination metrics plus social-dilemma machinery.

All functions are pure computations over immutable episode records (or plain
arrays), embarrassingly parallel across episodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from cleanuplab.env.grid import CellClass, GridMap
from cleanuplab.errors import DegenerateDataError
from cleanuplab.records import EpisodeRecord
from cleanuplab.stats import TestResult, fisher_combine, max_p_combine, ols_regression, welch_t

RECENCY_VALUES = (1.0, 0.75, 0.5, 0.25)  # turns-since-last 0,1,2,3; >=4 -> 0


# ---------------------------------------------------------------------------
# Episode summaries


def collective_return(record: EpisodeRecord) -> float:
    """Sum of all members' extrinsic points over the episode."""
    return float(record.rewards_e.sum())


def contribution_level(record: EpisodeRecord) -> float:
    """Total contribution steps (member-steps that cleaned >= 1 cell)."""
    return float(record.q.sum())


def member_contributions(record: EpisodeRecord) -> np.ndarray:
    return record.q.sum(axis=0).astype(np.float64)


def member_apple_consumption(record: EpisodeRecord) -> np.ndarray:
    return record.apples.sum(axis=0).astype(np.float64)


# ---------------------------------------------------------------------------
# Territoriality (presence-based diversity over the river region)


@dataclass(frozen=True)
class Territoriality:
    alpha: float
    gamma: float
    beta: float
    normalized: float
    n_locations: int
    degenerate: bool = False


def presence_sets(record: EpisodeRecord, grid: GridMap) -> dict[tuple[int, int], set[int]]:
    """River cells visited at least once, with the members who visited them."""
    visited: dict[tuple[int, int], set[int]] = {}
    positions = np.concatenate([record.initial_positions[None], record.positions], axis=0)
    for t in range(positions.shape[0]):
        for p in range(positions.shape[1]):
            r, c = int(positions[t, p, 0]), int(positions[t, p, 1])
            if grid.cells[r, c] == CellClass.RIVER:
                visited.setdefault((r, c), set()).add(p)
    return visited


def territoriality(record: EpisodeRecord, grid: GridMap | None = None) -> Territoriality | None:
    """Alpha/gamma/beta diversity of member presence over visited river cells.

    Returns None when no river cell was visited (metric missing).
    """
    grid = grid or record.grid()
    visited = presence_sets(record, grid)
    if not visited:
        return None
    counts = [len(m) for m in visited.values()]
    n_loc = len(visited)
    alpha = float(np.mean(counts))
    union: set[int] = set()
    for m in visited.values():
        union |= m
    gamma = float(len(union))
    beta = gamma / alpha
    bound = min(gamma, float(n_loc))
    normalized = beta / bound
    # A single shared location (or single visitor) collapses the bound; the
    # formula then pins the score to 1 even though territories coincide.
    degenerate = bound <= 1.0
    return Territoriality(alpha, gamma, beta, normalized, n_loc, degenerate)


# ---------------------------------------------------------------------------
# Turn taking


def river_entry_sequence(record: EpisodeRecord, grid: GridMap | None = None) -> list[int]:
    """Member identities of river-entry events, in order.

    An entry is a transition from a non-river cell to a river cell;
    simultaneous entries are ordered by member index.
    """
    grid = grid or record.grid()
    positions = np.concatenate([record.initial_positions[None], record.positions], axis=0)
    in_river = np.zeros(positions.shape[:2], dtype=bool)
    for t in range(positions.shape[0]):
        for p in range(positions.shape[1]):
            in_river[t, p] = (
                grid.cells[positions[t, p, 0], positions[t, p, 1]] == CellClass.RIVER
            )
    seq: list[int] = []
    for t in range(1, positions.shape[0]):
        for p in range(positions.shape[1]):
            if in_river[t, p] and not in_river[t - 1, p]:
                seq.append(p)
    return seq


def turn_taking_score(
    sequence: Sequence[int], first_appearance_counts: bool = False
) -> float | None:
    """1 minus the mean recency of repeat turns; higher = stronger rotation.

    Recency per turn: 0 intervening turns since the member's last turn -> 1,
    1 -> 0.75, 2 -> 0.5, 3 -> 0.25, >= 4 -> 0. First appearances are excluded
    unless ``first_appearance_counts`` (then they score recency 0). Returns
    None when no member ever repeats (score undefined).
    """
    last_seen: dict[int, int] = {}
    recencies: list[float] = []
    for i, member in enumerate(sequence):
        if member in last_seen:
            gap = i - last_seen[member] - 1  # turns between this and the last
            recencies.append(RECENCY_VALUES[gap] if gap < len(RECENCY_VALUES) else 0.0)
        elif first_appearance_counts:
            recencies.append(0.0)
        last_seen[member] = i
    if not recencies:
        return None
    return 1.0 - float(np.mean(recencies))


# ---------------------------------------------------------------------------
# Temporal consistency


def gini(values: Sequence[float]) -> float:
    """Gini coefficient by the pairwise double-sum formula; 0 for all-zero."""
    v = np.asarray(values, dtype=np.float64)
    if np.any(v < 0):
        raise ValueError("Gini requires nonnegative values")
    total = v.sum()
    if total == 0.0:
        return 0.0
    n = len(v)
    diff_sum = float(np.abs(v[:, None] - v[None, :]).sum())
    return diff_sum / (2.0 * n * n * v.mean())


def bin_contributions(flags_per_step: Sequence[float], bins: int = 10) -> np.ndarray:
    """Sum per-step group contributions into equal periods.

    Bin boundaries use floor division; remainder steps go to the last bin.
    """
    flags = np.asarray(flags_per_step, dtype=np.float64)
    t = len(flags)
    if t < bins:
        raise ValueError(f"episode length {t} shorter than {bins} bins")
    width = t // bins
    binned = np.empty(bins, dtype=np.float64)
    for b in range(bins):
        start = b * width
        end = (b + 1) * width if b < bins - 1 else t
        binned[b] = flags[start:end].sum()
    return binned


class ConsistencyResult(NamedTuple):
    score: float
    degenerate: bool


def consistency(flags_per_step: Sequence[float], bins: int = 10) -> ConsistencyResult:
    """1 minus the Gini coefficient of contributions binned into periods."""
    binned = bin_contributions(flags_per_step, bins)
    degenerate = bool(binned.sum() == 0.0)
    return ConsistencyResult(score=float(1.0 - gini(binned)), degenerate=degenerate)


def consistency_for_record(record: EpisodeRecord, bins: int = 10) -> ConsistencyResult:
    return consistency(record.q.sum(axis=1), bins=bins)


# ---------------------------------------------------------------------------
# Jenks two-class natural break


def jenks_two_class(values: Sequence[float]) -> float:
    """Two-class break minimizing total within-class sum of squared deviations.

    Returns the smallest value of the optimal upper class; classify
    ``value >= threshold`` as cooperate.
    """
    v = np.sort(np.asarray(values, dtype=np.float64))
    n = len(v)
    if n < 2 or v[0] == v[-1]:
        raise DegenerateDataError("need at least 2 distinct values for a break")

    def ssd(chunk: np.ndarray) -> float:
        return float(np.sum((chunk - chunk.mean()) ** 2)) if len(chunk) else 0.0

    best_cost = math.inf
    best_threshold = None
    # Scanning ascending and keeping strict improvements returns the smallest
    # optimal boundary on ties.
    for k in range(1, n):  # lower class = v[:k], upper = v[k:]
        if v[k - 1] == v[k]:
            continue  # identical values cannot straddle a break
        cost = ssd(v[:k]) + ssd(v[k:])
        if cost < best_cost:
            best_cost = cost
            best_threshold = float(v[k])
    if best_threshold is None:
        raise DegenerateDataError("no valid break found")
    return best_threshold


# ---------------------------------------------------------------------------
# Schelling diagram and dilemma conditions


@dataclass(frozen=True)
class ClassifiedEpisode:
    """Cooperate/defect labels for one episode under a single threshold."""

    cooperator: np.ndarray  # (5,) bool
    contributions: np.ndarray  # (5,)
    payoffs: np.ndarray  # (5,) apple consumption

    @property
    def n_cooperators(self) -> int:
        return int(self.cooperator.sum())


def classify_episodes(
    records: Sequence[EpisodeRecord], threshold: float | None = None
) -> tuple[list[ClassifiedEpisode], float]:
    """Label members cooperate/defect by contribution level.

    The threshold defaults to the Jenks two-class break over all
    member-episode contribution levels in the corpus.
    """
    contribs = [member_contributions(r) for r in records]
    if threshold is None:
        threshold = jenks_two_class(np.concatenate(contribs))
    episodes = []
    for r, c in zip(records, contribs):
        episodes.append(
            ClassifiedEpisode(
                cooperator=c >= threshold,
                contributions=c,
                payoffs=member_apple_consumption(r),
            )
        )
    return episodes, float(threshold)


@dataclass
class SchellingTable:
    """Mean payoffs for cooperators and defectors by total cooperator count."""

    n_players: int = 5
    coop_payoffs: dict[int, list[float]] = field(default_factory=dict)
    defect_payoffs: dict[int, list[float]] = field(default_factory=dict)

    def add(self, episode: ClassifiedEpisode) -> None:
        i = episode.n_cooperators
        for p in range(len(episode.cooperator)):
            cell = self.coop_payoffs if episode.cooperator[p] else self.defect_payoffs
            cell.setdefault(i, []).append(float(episode.payoffs[p]))

    def mean(self, kind: str, i: int) -> float | None:
        cell = (self.coop_payoffs if kind == "coop" else self.defect_payoffs).get(i)
        return float(np.mean(cell)) if cell else None

    def count(self, kind: str, i: int) -> int:
        cell = (self.coop_payoffs if kind == "coop" else self.defect_payoffs).get(i)
        return len(cell) if cell else 0

    def rows(self) -> list[dict]:
        out = []
        for i in range(self.n_players + 1):
            out.append(
                {
                    "cooperators": i,
                    "coop_mean": self.mean("coop", i),
                    "coop_n": self.count("coop", i),
                    "defect_mean": self.mean("defect", i),
                    "defect_n": self.count("defect", i),
                }
            )
        return out


def schelling_table(episodes: Sequence[ClassifiedEpisode], n_players: int = 5) -> SchellingTable:
    table = SchellingTable(n_players=n_players)
    for ep in episodes:
        table.add(ep)
    return table


@dataclass(frozen=True)
class DilemmaConditions:
    p1: float | None
    p2: float | None
    p3a: float | None
    p3b: float | None
    p3: float | None
    p_overall: float | None
    tests: dict
    untestable: tuple[str, ...]


def dilemma_conditions(
    table: SchellingTable,
    mutual_coop: int | None = None,
    lone_coop: int = 1,
    exploited_defect: int | None = None,
) -> DilemmaConditions:
    """One-sided Welch tests for the binary social-dilemma conditions.

    Cells are indexed by total cooperator count: mutual cooperation is
    ``i = n``, mutual defection ``i = 0``, a lone cooperator ``i = 1``, and a
    lone defector among cooperators ``i = n - 1``; all are overridable.
    Condition 3 combines fear (3a) and greed (3b) via Fisher's method, and
    the overall p is the maximum of conditions 1, 2, and 3.
    """
    n = table.n_players
    mc = n if mutual_coop is None else mutual_coop
    ed = n - 1 if exploited_defect is None else exploited_defect

    cells = {
        "Rc_mutual": table.coop_payoffs.get(mc, []),
        "Rd_mutual_defect": table.defect_payoffs.get(0, []),
        "Rc_lone": table.coop_payoffs.get(lone_coop, []),
        "Rd_exploiting": table.defect_payoffs.get(ed, []),
    }
    tests: dict[str, TestResult | None] = {}
    untestable: list[str] = []

    def one_sided(name: str, a_key: str, b_key: str) -> float | None:
        a, b = cells[a_key], cells[b_key]
        if len(a) < 2 or len(b) < 2:
            untestable.append(name)
            tests[name] = None
            return None
        try:
            res = welch_t(a, b, one_sided=True, name=name)
        except DegenerateDataError:
            untestable.append(name)
            tests[name] = None
            return None
        tests[name] = res
        return res.p_value

    p1 = one_sided("condition1", "Rc_mutual", "Rd_mutual_defect")
    p2 = one_sided("condition2", "Rc_mutual", "Rc_lone")
    p3a = one_sided("condition3a", "Rd_mutual_defect", "Rc_lone")
    p3b = one_sided("condition3b", "Rd_exploiting", "Rc_mutual")

    p3 = None
    if p3a is not None and p3b is not None:
        fisher = fisher_combine([p3a, p3b], name="condition3")
        tests["condition3"] = fisher
        p3 = fisher.p_value
    p_overall = None
    if p1 is not None and p2 is not None and p3 is not None:
        p_overall = max_p_combine([p1, p2, p3])
    return DilemmaConditions(p1, p2, p3a, p3b, p3, p_overall, tests, tuple(untestable))


# ---------------------------------------------------------------------------
# Canonical public-goods task (synthetic statistics oracle)


def canonical_payoffs(
    contributions: Sequence[float], n: int = 4, endowment: float = 20.0, multiplier: float = 1.6
) -> tuple[np.ndarray, float]:
    """Payoffs of the canonical linear public-goods task.

    Each of ``n`` players keeps unspent endowment and receives an equal share
    of the multiplied pool; also returns the collective group payoff.
    """
    c = np.asarray(contributions, dtype=np.float64)
    if len(c) != n:
        raise ValueError(f"need {n} contributions, got {len(c)}")
    if np.any(c < 0) or np.any(c > endowment):
        raise ValueError("contributions must lie in [0, endowment]")
    pool = c.sum()
    payoffs = endowment - c + (multiplier / n) * pool
    total = n * endowment + (multiplier - 1.0) * pool
    return payoffs, float(total)


@dataclass(frozen=True)
class DilemmaRegressions:
    individual: TestResult  # within-group-centered payoff ~ contribution
    group: TestResult  # group mean payoff ~ group mean contribution


def dilemma_regressions(
    contributions: Sequence[Sequence[float]], payoffs: Sequence[Sequence[float]]
) -> DilemmaRegressions:
    """The two linear-dilemma regressions over per-group member data.

    Individual level: payoff deviation from the group mean on contribution
    deviation from the group mean, pooled over all members. Group level:
    group mean payoff on group mean contribution.
    """
    if len(contributions) < 2:
        raise DegenerateDataError("need >= 2 groups")
    ind_x: list[float] = []
    ind_y: list[float] = []
    grp_x: list[float] = []
    grp_y: list[float] = []
    for c_g, u_g in zip(contributions, payoffs):
        c = np.asarray(c_g, dtype=np.float64)
        u = np.asarray(u_g, dtype=np.float64)
        if len(c) < 2:
            raise DegenerateDataError("need >= 2 members per group")
        ind_x.extend(c - c.mean())
        ind_y.extend(u - u.mean())
        grp_x.append(float(c.mean()))
        grp_y.append(float(u.mean()))
    individual = ols_regression(ind_y, ind_x, name="individual-dilemma")
    group = ols_regression(grp_y, grp_x, name="group-dilemma")
    return DilemmaRegressions(individual=individual, group=group)


def dilemma_regressions_from_records(records: Sequence[EpisodeRecord]) -> DilemmaRegressions:
    """Linear-dilemma regressions with apple consumption as payoff."""
    contribs = [member_contributions(r) for r in records]
    payoffs = [member_apple_consumption(r) for r in records]
    return dilemma_regressions(contribs, payoffs)
