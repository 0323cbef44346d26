"""Statistical ranking of loss functions.

Bootstrap resampling stabilizes each (program, loss) score sample; a
Kruskal-Wallis omnibus test checks for any separation; the non-parametric
Scott-Knott procedure clusters losses into statistically distinct ranks; and
Spearman correlation measures rater agreement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

ALPHA = 0.05
#: Cliff's delta below this is a negligible effect; a candidate Scott-Knott
#: split must be both significant and non-negligible to be accepted.
CLIFFS_DELTA_NEGLIGIBLE = 0.147

BOOTSTRAP_K = 1000


@dataclass(frozen=True)
class BootstrapDistribution:
    means: np.ndarray
    source_size: int
    seed: int


def bootstrap(values, k: int = BOOTSTRAP_K, seed: int = 0) -> BootstrapDistribution:
    """k means of with-replacement resamples, each the size of the input."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("bootstrap requires a non-empty sample")
    if k <= 0:
        raise ValueError("bootstrap k must be positive")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, values.size, size=(k, values.size))
    return BootstrapDistribution(values[idx].mean(axis=1), values.size, seed)


@dataclass(frozen=True)
class KruskalResult:
    h_statistic: float
    p_value: float
    reject: bool


def kruskal_wallis(groups) -> KruskalResult:
    """Kruskal-Wallis H with midrank ties and tie correction; p from the
    chi-square survival function with (groups - 1) degrees of freedom."""
    groups = [np.asarray(g, dtype=np.float64) for g in groups]
    if len(groups) < 2:
        raise ValueError("kruskal_wallis needs at least two groups")
    if any(g.size == 0 for g in groups):
        raise ValueError("kruskal_wallis groups must be non-empty")
    pooled = np.concatenate(groups)
    n_total = pooled.size
    ranks = sps.rankdata(pooled)
    h = 0.0
    pos = 0
    for g in groups:
        r = ranks[pos : pos + g.size]
        h += r.sum() ** 2 / g.size
        pos += g.size
    h = 12.0 / (n_total * (n_total + 1)) * h - 3.0 * (n_total + 1)
    # tie correction
    _, counts = np.unique(pooled, return_counts=True)
    correction = 1.0 - np.sum(counts**3 - counts) / (n_total**3 - n_total)
    if correction == 0.0:
        # every value identical: no separation by construction
        return KruskalResult(0.0, 1.0, False)
    h /= correction
    p = float(sps.chi2.sf(h, df=len(groups) - 1))
    return KruskalResult(float(h), p, p < ALPHA)


def cliffs_delta(a, b) -> float:
    """P(a > b) - P(a < b) over all cross pairs."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.asarray(b, dtype=np.float64)
    greater = a.size - np.searchsorted(a, b, side="right")  # per b: count a > b
    less = np.searchsorted(a, b, side="left")  # per b: count a < b
    return float((greater.sum() - less.sum()) / (a.size * b.size))


def spearman(x, y) -> tuple[float, float]:
    """Spearman rho via Pearson correlation of midranks; two-sided p from the
    t approximation."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size != y.size or x.size < 3:
        raise ValueError("spearman needs equal-length vectors of size >= 3")
    rx = sps.rankdata(x)
    ry = sps.rankdata(y)
    sx = rx - rx.mean()
    sy = ry - ry.mean()
    denom = np.sqrt(np.sum(sx * sx) * np.sum(sy * sy))
    if denom == 0.0:
        raise ValueError("spearman undefined: zero variance in ranks")
    rho = float(np.sum(sx * sy) / denom)
    n = x.size
    if abs(rho) >= 1.0:
        return (float(np.sign(rho)), 0.0)
    t = rho * np.sqrt((n - 2) / (1.0 - rho * rho))
    p = float(2.0 * sps.t.sf(abs(t), df=n - 2))
    return rho, p


# ---------------------------------------------------------------------------
# non-parametric Scott-Knott
# ---------------------------------------------------------------------------


def _split_score(blocks: list[np.ndarray], split: int) -> float:
    """Between-group sum of squared deviations of block means around the
    grand mean, for the partition [0:split) / [split:)."""
    left = np.concatenate(blocks[:split])
    right = np.concatenate(blocks[split:])
    allv = np.concatenate((left, right))
    mu = allv.mean()
    return left.size * (left.mean() - mu) ** 2 + right.size * (right.mean() - mu) ** 2


def _split_accepted(left: np.ndarray, right: np.ndarray) -> bool:
    kw = kruskal_wallis([left, right])
    if not kw.reject:
        return False
    return abs(cliffs_delta(left, right)) >= CLIFFS_DELTA_NEGLIGIBLE


def _recurse(names: list, blocks: list[np.ndarray], ranks: dict, next_rank: int) -> int:
    if len(blocks) == 1:
        ranks[names[0]] = next_rank
        return next_rank + 1
    best_split, best_score = None, -np.inf
    for s in range(1, len(blocks)):
        score = _split_score(blocks, s)
        if score > best_score:
            best_split, best_score = s, score
    left = np.concatenate(blocks[:best_split])
    right = np.concatenate(blocks[best_split:])
    if _split_accepted(left, right):
        next_rank = _recurse(names[:best_split], blocks[:best_split], ranks, next_rank)
        return _recurse(names[best_split:], blocks[best_split:], ranks, next_rank)
    for name in names:
        ranks[name] = next_rank
    return next_rank + 1


def npsk_rank(groups: dict, direction: str = "lower_better") -> dict:
    """Cluster groups into contiguous ranks, 1 = best.

    Groups are sorted by median (best first per ``direction``); the sorted
    sequence is recursively split at the point maximizing the between-group
    sum of squares, and a split is accepted only when Kruskal-Wallis rejects
    at 0.05 and |Cliff's delta| is non-negligible (>= 0.147).
    """
    if direction not in ("lower_better", "higher_better"):
        raise ValueError(f"unknown direction {direction!r}")
    if len(groups) < 2:
        raise ValueError("npsk_rank needs at least two groups")
    items = []
    for name, values in groups.items():
        arr = values.means if isinstance(values, BootstrapDistribution) else values
        arr = np.asarray(arr, dtype=np.float64)
        if direction == "higher_better":
            arr = -arr  # monotone flip; rank-based statistics are unaffected
        items.append((name, arr))
    items.sort(key=lambda kv: (np.median(kv[1]), str(kv[0])))
    names = [kv[0] for kv in items]
    blocks = [kv[1] for kv in items]
    ranks: dict = {}
    _recurse(names, blocks, ranks, 1)
    return ranks


# ---------------------------------------------------------------------------
# ranking report
# ---------------------------------------------------------------------------


@dataclass
class MethodRanking:
    h_statistic: float
    p_value: float
    reject: bool
    ranks: dict
    medians: dict


@dataclass
class RankingReport:
    """Per program, per evaluation method: omnibus test plus rank clusters."""

    per_program: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            prog: {
                method: {
                    "h_statistic": mr.h_statistic,
                    "p_value": mr.p_value,
                    "reject": mr.reject,
                    "ranks": mr.ranks,
                    "medians": mr.medians,
                }
                for method, mr in methods.items()
            }
            for prog, methods in self.per_program.items()
        }


#: Orientation per evaluation method: the report stores ranks with 1 = best.
METHOD_DIRECTIONS = {
    "MSS": "lower_better",
    "P-Loss": "lower_better",
    "Likert": "higher_better",
}


def rank_methods(
    samples: dict,
    direction: str,
    bootstrap_k: int = BOOTSTRAP_K,
    seed: int = 0,
) -> MethodRanking:
    """Bootstrap each group's sample, test separation, and assign ranks."""
    kw = kruskal_wallis(list(samples.values()))
    boots = {
        name: bootstrap(values, k=bootstrap_k, seed=seed + i)
        for i, (name, values) in enumerate(sorted(samples.items()))
    }
    ranks = npsk_rank(boots, direction)
    medians = {name: float(np.median(np.asarray(v, dtype=np.float64))) for name, v in samples.items()}
    return MethodRanking(kw.h_statistic, kw.p_value, kw.reject, ranks, medians)


def build_ranking_report(
    method_samples: dict,
    bootstrap_k: int = BOOTSTRAP_K,
    seed: int = 0,
) -> RankingReport:
    """``method_samples``: {program: {method: {loss_id: [scores...]}}}."""
    report = RankingReport()
    for prog, methods in sorted(method_samples.items()):
        report.per_program[prog] = {}
        for method, samples in sorted(methods.items()):
            direction = METHOD_DIRECTIONS[method]
            report.per_program[prog][method] = rank_methods(
                samples, direction, bootstrap_k=bootstrap_k, seed=seed
            )
    return report


def render_table(report: RankingReport, losses=None) -> str:
    """Aligned text table: rows are losses, column blocks are programs with
    one sub-column per evaluation method."""
    programs = list(report.per_program.keys())
    if losses is None:
        losses = sorted(
            {
                loss
                for methods in report.per_program.values()
                for mr in methods.values()
                for loss in mr.ranks
            }
        )
    methods = []
    for prog in programs:
        for m in report.per_program[prog]:
            if m not in methods:
                methods.append(m)

    header1 = ["Loss"] + [prog.center(len(methods) * 8 - 1) for prog in programs]
    header2 = [" " * 12] + [" ".join(f"{m:>7}" for m in methods) for prog in programs]
    lines = [" | ".join([header1[0].ljust(12)] + header1[1:]), " | ".join(header2)]
    lines.insert(1, "-" * len(lines[0]))
    for loss in losses:
        cells = [loss.ljust(12)]
        for prog in programs:
            vals = []
            for m in methods:
                mr = report.per_program[prog].get(m)
                rank = mr.ranks.get(loss, "-") if mr else "-"
                vals.append(f"{rank:>7}")
            cells.append(" ".join(vals))
        lines.append(" | ".join(cells))
    return "\n".join(lines)
