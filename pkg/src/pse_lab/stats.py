"""The inferential chain for PSE session data.

Summaries, one-way repeated-measures ANOVA with subjects as the blocking
factor, pairwise and one-sample t-tests with step-down correction, eye-blink
rate ingestion, within-participant ranking, and the pooled-rank Spearman
correlation between PSE and blink rate. p-values come from the package's own
distribution CDFs (see `distributions`).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, asdict
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .curves import CurveId, NON_CONSTANT_CURVES
from .distributions import f_sf, student_t_sf_two_sided


class TooFewRowsError(ValueError):
    """Fewer participants than the statistic needs."""


class ZeroVarianceError(ValueError):
    """Sample variance of zero where a t statistic is required."""


class DegenerateAnovaError(ValueError):
    """RM-ANOVA error term is zero."""


class ShapeMismatchError(ValueError):
    """Two tables do not share participants and curves."""


@dataclass(frozen=True)
class PseTable:
    """participants x curves matrix of per-cell values (seconds for PSEs)."""

    participants: tuple[str, ...]
    curves: tuple[CurveId, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape != (len(self.participants), len(self.curves)):
            raise ShapeMismatchError(
                f"values shape {values.shape} != ({len(self.participants)}, {len(self.curves)})"
            )
        if len(set(self.participants)) != len(self.participants):
            raise ShapeMismatchError("duplicate participant ids")
        if len(set(self.curves)) != len(self.curves):
            raise ShapeMismatchError("duplicate curves")
        if not np.all(np.isfinite(values)):
            raise ShapeMismatchError("missing or non-finite cells")
        if not np.all(values > 0.0):
            raise ShapeMismatchError("all cell values must be > 0")
        object.__setattr__(self, "participants", tuple(self.participants))
        object.__setattr__(self, "curves", tuple(CurveId(c) for c in self.curves))
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return len(self.participants)

    @property
    def k(self) -> int:
        return len(self.curves)

    def column(self, curve: CurveId) -> np.ndarray:
        return self.values[:, self.curves.index(CurveId(curve))]


@dataclass(frozen=True)
class RateTable(PseTable):
    """PseTable-shaped matrix of rates; zero cells are legal (a blink-free
    phase is valid data, a zero-second PSE is not)."""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape != (len(self.participants), len(self.curves)):
            raise ShapeMismatchError(
                f"values shape {values.shape} != ({len(self.participants)}, {len(self.curves)})"
            )
        if len(set(self.participants)) != len(self.participants):
            raise ShapeMismatchError("duplicate participant ids")
        if len(set(self.curves)) != len(self.curves):
            raise ShapeMismatchError("duplicate curves")
        if not np.all(np.isfinite(values)):
            raise ShapeMismatchError("missing or non-finite cells")
        if not np.all(values >= 0.0):
            raise ShapeMismatchError("rates must be >= 0")
        object.__setattr__(self, "participants", tuple(self.participants))
        object.__setattr__(self, "curves", tuple(CurveId(c) for c in self.curves))
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class BlinkRecord:
    """Blink count over one experimental phase for one participant and curve."""

    participant_id: str
    curve: CurveId
    blink_count: int
    phase_duration_s: float

    def __post_init__(self):
        if self.blink_count < 0 or self.blink_count != int(self.blink_count):
            raise ValueError(f"blink_count must be a nonnegative integer, got {self.blink_count}")
        if not self.phase_duration_s > 0.0:
            raise ValueError(f"phase_duration_s must be > 0, got {self.phase_duration_s}")


def compute_ebr(record: BlinkRecord) -> float:
    """Eye blink rate in blinks per second."""
    return record.blink_count / record.phase_duration_s


def summarize(table: PseTable) -> dict[CurveId, tuple[float, float]]:
    """Per-curve (sample mean, sample sd with n-1 divisor)."""
    if table.n < 2:
        raise TooFewRowsError(f"need >= 2 participants, got {table.n}")
    out = {}
    for j, curve in enumerate(table.curves):
        col = table.values[:, j]
        out[curve] = (float(col.mean()), float(col.std(ddof=1)))
    return out


def one_sample_t(values: Sequence[float], mu0: float) -> dict[str, float]:
    """Two-sided one-sample t-test of mean(values) against mu0."""
    x = np.asarray(values, dtype=float)
    n = len(x)
    if n < 2:
        raise TooFewRowsError(f"need >= 2 values, got {n}")
    sd = float(x.std(ddof=1))
    if sd == 0.0:
        raise ZeroVarianceError("zero variance: t statistic undefined")
    t = (float(x.mean()) - mu0) / (sd / math.sqrt(n))
    df = n - 1
    return {"t": t, "df": df, "p": student_t_sf_two_sided(t, df)}


def paired_t(a: Sequence[float], b: Sequence[float]) -> dict[str, float]:
    """Two-sided paired t-test on the difference a - b."""
    return one_sample_t(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), 0.0)


def greenhouse_geisser_epsilon(values: np.ndarray) -> float:
    """Sphericity index from the double-centered condition covariance matrix."""
    k = values.shape[1]
    cov = np.cov(values, rowvar=False, ddof=1)
    centered = cov - cov.mean(axis=0, keepdims=True) - cov.mean(axis=1, keepdims=True) + cov.mean()
    trace = float(np.trace(centered))
    denom = (k - 1) * float(np.sum(centered * centered))
    if denom <= 0.0:
        return 1.0
    return trace * trace / denom


def rm_anova(table: PseTable) -> dict[str, float]:
    """One-way repeated-measures ANOVA with subject as blocking factor.

    F = MS_condition / MS_error with df (k-1, (n-1)(k-1)). The
    Greenhouse-Geisser epsilon is reported as a sphericity diagnostic; the
    F test itself is uncorrected.
    """
    if table.n < 2 or table.k < 2:
        raise TooFewRowsError(f"need n >= 2 and k >= 2, got ({table.n}, {table.k})")
    y = table.values
    n, k = y.shape
    grand = y.mean()
    ss_subject = k * float(((y.mean(axis=1) - grand) ** 2).sum())
    ss_condition = n * float(((y.mean(axis=0) - grand) ** 2).sum())
    ss_total = float(((y - grand) ** 2).sum())
    ss_error = ss_total - ss_subject - ss_condition
    df1 = k - 1
    df2 = (n - 1) * (k - 1)
    ms_error = ss_error / df2
    if ms_error <= 0.0:
        raise DegenerateAnovaError("zero error variance: F undefined")
    f_stat = (ss_condition / df1) / ms_error
    return {
        "F": f_stat,
        "df1": df1,
        "df2": df2,
        "p": f_sf(f_stat, df1, df2),
        "gg_epsilon": greenhouse_geisser_epsilon(y),
    }


def holm_adjust(raw_p: Sequence[float]) -> list[float]:
    """Holm step-down adjusted p-values (monotone, capped at 1)."""
    m = len(raw_p)
    order = sorted(range(m), key=lambda i: raw_p[i])
    adjusted = [0.0] * m
    running = 0.0
    for rank, idx in enumerate(order):
        running = max(running, (m - rank) * raw_p[idx])
        adjusted[idx] = min(running, 1.0)
    return adjusted


def bonferroni_adjust(raw_p: Sequence[float]) -> list[float]:
    m = len(raw_p)
    return [min(m * p, 1.0) for p in raw_p]


CORRECTIONS = ("holm", "bonferroni", "none")


def pairwise_compare(table: PseTable, correction: str = "holm") -> list[dict]:
    """All paired t-tests between curve columns with multiplicity correction."""
    if correction not in CORRECTIONS:
        raise ValueError(f"correction must be one of {CORRECTIONS}, got {correction!r}")
    if table.n < 2:
        raise TooFewRowsError(f"need >= 2 participants, got {table.n}")
    results = []
    for i, j in combinations(range(table.k), 2):
        pair = (table.curves[i], table.curves[j])
        diff = table.values[:, i] - table.values[:, j]
        md = float(diff.mean())
        if float(diff.std(ddof=1)) == 0.0:
            if md == 0.0:
                # identical columns: no difference, maximally non-significant
                results.append({"pair": pair, "mean_difference": 0.0, "t": 0.0,
                                "df": table.n - 1, "raw_p": 1.0})
            else:
                raise ZeroVarianceError(f"constant nonzero difference for pair {pair}")
        else:
            test = one_sample_t(diff, 0.0)
            results.append({"pair": pair, "mean_difference": md, "t": test["t"],
                            "df": test["df"], "raw_p": test["p"]})
    raw = [r["raw_p"] for r in results]
    if correction == "holm":
        adjusted = holm_adjust(raw)
    elif correction == "bonferroni":
        adjusted = bonferroni_adjust(raw)
    else:
        adjusted = list(raw)
    for r, adj in zip(results, adjusted):
        r["adjusted_p"] = adj
    return results


def average_ranks(values: Sequence[float]) -> np.ndarray:
    """Ascending ranks 1..n with ties receiving the average of their positions."""
    x = np.asarray(values, dtype=float)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=float)
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def rank_within_participant(values: Sequence[float]) -> np.ndarray:
    """Ranks of one participant's per-curve values (1..k, average ties)."""
    return average_ranks(values)


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman correlation with average-rank tie handling."""
    rx = average_ranks(x)
    ry = average_ranks(y)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    denom = math.sqrt(float((rx * rx).sum()) * float((ry * ry).sum()))
    if denom == 0.0:
        raise ZeroVarianceError("constant ranks: correlation undefined")
    return float((rx * ry).sum()) / denom


# Exact permutation is enumerable only while the number of distinct
# arrangements of the pooled rank vector stays small.
_EXACT_PERMUTATION_MAX_PAIRS = 12
_EXACT_PERMUTATION_MAX_ARRANGEMENTS = 500_000


def _distinct_permutation_count(values: np.ndarray) -> int:
    total = math.factorial(len(values))
    for count in np.unique(values, return_counts=True)[1]:
        total //= math.factorial(int(count))
    return total


def _multiset_permutations(values: list[float]):
    """Yield each distinct arrangement of `values` once (lexicographic)."""
    pool = sorted(values)
    n = len(pool)
    out: list[float] = []

    def walk(remaining: list[float]):
        if len(out) == n:
            yield tuple(out)
            return
        prev = None
        for idx, v in enumerate(remaining):
            if v == prev:
                continue
            prev = v
            out.append(v)
            yield from walk(remaining[:idx] + remaining[idx + 1:])
            out.pop()

    yield from walk(pool)


def _exact_spearman_p(x_ranks: np.ndarray, y_ranks: np.ndarray, rho_obs: float) -> float:
    """Two-sided permutation p over all distinct arrangements of y_ranks.

    Every distinct arrangement of the multiset has equal probability under
    uniform permutation of the underlying items, so counting distinct
    arrangements is exact.
    """
    rx = x_ranks - x_ranks.mean()
    sy = float(((y_ranks - y_ranks.mean()) ** 2).sum())
    denom = math.sqrt(float((rx * rx).sum()) * sy)
    threshold = abs(rho_obs) - 1e-12
    hits = 0
    total = 0
    y_mean = y_ranks.mean()
    for perm in _multiset_permutations(list(y_ranks)):
        total += 1
        s = 0.0
        for a, b in zip(rx, perm):
            s += a * (b - y_mean)
        if abs(s / denom) >= threshold:
            hits += 1
    return hits / total


def pse_ebr_correlation(pse: PseTable, ebr: PseTable, pooled: bool = True) -> dict:
    """Correlation between within-participant PSE ranks and EBR ranks.

    Both tables are ranked within participant, the (participant, curve) rank
    pairs are pooled (n_pairs = k*n), and Spearman rho is computed on the
    pooled ranks. p-value: exact permutation for small pools, otherwise the
    t approximation t = rho*sqrt((n_pairs-2)/(1-rho^2)).

    pooled=False instead computes one rho per participant and returns their
    mean (no p-value; alternative summary only).
    """
    if pse.participants != ebr.participants or pse.curves != ebr.curves:
        raise ShapeMismatchError("PSE and EBR tables must share participants and curves")
    pse_ranks = np.vstack([rank_within_participant(row) for row in pse.values])
    ebr_ranks = np.vstack([rank_within_participant(row) for row in ebr.values])
    if not pooled:
        per = [spearman_rho(pr, er) for pr, er in zip(pse_ranks, ebr_ranks)]
        return {"rho": float(np.mean(per)), "p": None,
                "n_pairs": pse.k * pse.n, "method": "per-participant-mean"}
    x = pse_ranks.ravel()
    y = ebr_ranks.ravel()
    n_pairs = len(x)
    rho = spearman_rho(x, y)
    if (n_pairs <= _EXACT_PERMUTATION_MAX_PAIRS
            and _distinct_permutation_count(average_ranks(y)) <= _EXACT_PERMUTATION_MAX_ARRANGEMENTS):
        p = _exact_spearman_p(average_ranks(x), average_ranks(y), rho)
        method = "exact-permutation"
    else:
        if abs(rho) >= 1.0:
            p = 0.0
        else:
            t = rho * math.sqrt((n_pairs - 2) / (1.0 - rho * rho))
            p = student_t_sf_two_sided(t, n_pairs - 2)
        method = "t-approximation"
    return {"rho": rho, "p": p, "n_pairs": n_pairs, "method": method}


@dataclass
class StatsReport:
    """Full analysis output: summaries, ANOVA, pairwise, one-sample, Spearman."""

    n_participants: int
    curve_summary: dict[str, dict[str, float]]
    anova: dict
    pairwise: list[dict]
    one_sample: dict[str, dict]
    mu0_s: float
    correction: str
    spearman: dict | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def analyze_tables(
    pse: PseTable,
    ebr: PseTable | None = None,
    mu0_s: float = 5.0,
    correction: str = "holm",
) -> StatsReport:
    """Run the whole chain; per-test failures are recorded, not raised."""
    summary = summarize(pse)
    curve_summary = {c.value: {"mean": m, "sd": s} for c, (m, s) in summary.items()}
    notes: list[str] = []

    try:
        anova: dict = rm_anova(pse)
    except (DegenerateAnovaError, TooFewRowsError) as exc:
        anova = {"error": str(exc)}

    try:
        pairwise = [
            {**r, "pair": [r["pair"][0].value, r["pair"][1].value]}
            for r in pairwise_compare(pse, correction)
        ]
    except ZeroVarianceError as exc:
        pairwise = [{"error": str(exc)}]

    one_sample: dict[str, dict] = {}
    for curve in pse.curves:
        try:
            one_sample[curve.value] = one_sample_t(pse.column(curve), mu0_s)
        except (ZeroVarianceError, TooFewRowsError) as exc:
            one_sample[curve.value] = {"error": str(exc)}

    spearman = None
    if ebr is not None:
        spearman = pse_ebr_correlation(pse, ebr)

    return StatsReport(
        n_participants=pse.n,
        curve_summary=curve_summary,
        anova=anova,
        pairwise=pairwise,
        one_sample=one_sample,
        mu0_s=mu0_s,
        correction=correction,
        spearman=spearman,
        notes=notes,
    )


def render_report_text(report: StatsReport) -> str:
    """Human-readable report: summary table plus the inferential results."""
    lines = []
    lines.append(f"PSE summary ({report.n_participants} participants)")
    lines.append(f"{'curve':<12}{'mean (s)':>10}{'sd (s)':>10}")
    for curve, ms in report.curve_summary.items():
        lines.append(f"{curve:<12}{ms['mean']:>10.3f}{ms['sd']:>10.3f}")
    lines.append("")

    if "error" in report.anova:
        lines.append(f"Repeated-measures ANOVA: unavailable ({report.anova['error']})")
    else:
        a = report.anova
        lines.append(
            f"Repeated-measures ANOVA (within-subject factor curve): "
            f"F({a['df1']},{a['df2']}) = {a['F']:.4f}, p = {a['p']:.4g} "
            f"(Greenhouse-Geisser epsilon = {a['gg_epsilon']:.3f}, uncorrected)"
        )
    lines.append("")

    lines.append(f"Pairwise comparisons (correction: {report.correction})")
    for r in report.pairwise:
        if "error" in r:
            lines.append(f"  unavailable ({r['error']})")
        else:
            lines.append(
                f"  {r['pair'][0]} vs {r['pair'][1]}: MD = {r['mean_difference']:+.3f}, "
                f"t({r['df']}) = {r['t']:.3f}, raw p = {r['raw_p']:.4g}, "
                f"adjusted p = {r['adjusted_p']:.4g}"
            )
    lines.append("")

    lines.append(f"One-sample t-tests against the {report.mu0_s:g} s standard")
    for curve, r in report.one_sample.items():
        if "error" in r:
            lines.append(f"  {curve}: unavailable ({r['error']})")
        else:
            lines.append(
                f"  {curve}: t({r['df']}) = {r['t']:.3f}, p = {r['p']:.4g}"
            )
    lines.append("")

    if report.spearman is not None:
        s = report.spearman
        p_text = "n/a" if s["p"] is None else f"{s['p']:.4g}"
        lines.append(
            f"PSE/EBR pooled-rank Spearman correlation: rho = {s['rho']:.3f}, "
            f"p = {p_text} ({s['n_pairs']} pairs, {s['method']})"
        )
    else:
        lines.append("PSE/EBR correlation: no blink data supplied")
    for note in report.notes:
        lines.append(f"note: {note}")
    return "\n".join(lines) + "\n"


def make_coupled_blink_records(
    pse: PseTable,
    seed: int = 0,
    slope: float = 1.0,
    noise_sd: float = 2.8,
    base_rate_range: tuple[float, float] = (0.15, 0.45),
    phase_duration_s: float = 380.0,
) -> list[BlinkRecord]:
    """Synthetic blink counts negatively rank-coupled to a PSE table.

    Each participant's latent blink rate falls with their standardized PSE
    (slope) under heavy noise (noise_sd), then counts are Poisson over the
    phase duration. Defaults are calibrated by simulation: across seeds the
    pooled-rank correlation against 20-participant reference tables averages
    about -0.27 (200-seed mean -0.2728 at noise_sd=2.8). Fixture constructor
    for exercising the correlation pipeline; blink data from real sessions is
    ingested, never simulated.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))
    records = []
    for i, pid in enumerate(pse.participants):
        row = pse.values[i]
        sd = row.std(ddof=1) if pse.k > 1 else 1.0
        z = (row - row.mean()) / sd if sd > 0 else np.zeros_like(row)
        base = rng.uniform(*base_rate_range)
        for j, curve in enumerate(pse.curves):
            log_rate = math.log(base) - slope * z[j] + noise_sd * rng.standard_normal()
            rate = math.exp(float(np.clip(log_rate, math.log(1e-3), math.log(3.0))))
            records.append(BlinkRecord(
                participant_id=pid,
                curve=curve,
                blink_count=int(rng.poisson(rate * phase_duration_s)),
                phase_duration_s=phase_duration_s,
            ))
    return records


def make_table_with_moments(
    participants: Sequence[str],
    curves: Sequence[CurveId],
    means: Sequence[float],
    sds: Sequence[float],
    seed: int = 0,
) -> PseTable:
    """Synthetic table whose column sample means/sds match the targets exactly.

    Standardizes a Gaussian draw per column (n-1 sd) then rescales, so
    `summarize` round-trips the requested moments to float precision.
    """
    n, k = len(participants), len(curves)
    if n < 2:
        raise TooFewRowsError("need >= 2 participants to fix a sample sd")
    if len(means) != k or len(sds) != k:
        raise ShapeMismatchError("means/sds must match the number of curves")
    rng = np.random.default_rng(seed)
    values = np.empty((n, k))
    for j in range(k):
        z = rng.standard_normal(n)
        z -= z.mean()
        sd = z.std(ddof=1)
        if sd == 0.0:
            raise ZeroVarianceError("degenerate standardization draw")
        values[:, j] = means[j] + sds[j] * z / sd
    return PseTable(tuple(participants), tuple(curves), values)


# ---------------------------------------------------------------------------
# CSV ingestion / export
# ---------------------------------------------------------------------------

def pse_table_to_csv(table: PseTable, path: str | Path) -> None:
    """Wide CSV: participant_id column then one column per curve."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["participant_id"] + [c.value for c in table.curves])
        for pid, row in zip(table.participants, table.values):
            writer.writerow([pid] + [repr(float(v)) for v in row])


def pse_table_from_csv(path: str | Path) -> PseTable:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "participant_id":
            raise ValueError(f"{path}: first column must be participant_id")
        curves = tuple(CurveId(name) for name in header[1:])
        participants = []
        rows = []
        for row in reader:
            participants.append(row[0])
            rows.append([float(v) for v in row[1:]])
    return PseTable(tuple(participants), curves, np.asarray(rows))


BLINK_CSV_FIELDS = ("participant_id", "curve", "blink_count", "phase_duration_s")


def read_blink_csv(path: str | Path) -> list[BlinkRecord]:
    """Blink records from a CSV with header participant_id,curve,blink_count,phase_duration_s."""
    path = Path(path)
    records = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(BLINK_CSV_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            records.append(BlinkRecord(
                participant_id=row["participant_id"],
                curve=CurveId(row["curve"]),
                blink_count=int(row["blink_count"]),
                phase_duration_s=float(row["phase_duration_s"]),
            ))
    return records


def write_blink_csv(records: Iterable[BlinkRecord], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BLINK_CSV_FIELDS)
        for r in records:
            writer.writerow([r.participant_id, r.curve.value, r.blink_count,
                             repr(float(r.phase_duration_s))])


def ebr_table(records: Sequence[BlinkRecord], like: PseTable) -> RateTable:
    """EBR matrix aligned to `like`'s participants and curves."""
    by_cell = {(r.participant_id, r.curve): compute_ebr(r) for r in records}
    values = np.empty((like.n, like.k))
    for i, pid in enumerate(like.participants):
        for j, curve in enumerate(like.curves):
            key = (pid, curve)
            if key not in by_cell:
                raise ShapeMismatchError(f"blink data missing cell {key}")
            values[i, j] = by_cell[key]
    return RateTable(like.participants, like.curves, values)
