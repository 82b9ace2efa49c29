"""pass@k estimation, repair-aware variants, aggregation and reporting."""

from __future__ import annotations

import json
import math
import statistics
from dataclasses import dataclass, field


class MetricDomainError(ValueError):
    """Arguments outside the valid (n, c, k) domain."""


def pass_at_k_estimated(n: int, c: int, k: int) -> float:
    """Unbiased estimator: probability that at least one of k draws (without
    replacement) from n samples with c successes is a success.

    Computed as ``1 - prod_{i=n-c+1}^{n} (1 - k/i)`` to stay stable for
    large n; exactly ``1 - C(n-c, k)/C(n, k)``.
    """
    if not (isinstance(n, int) and isinstance(c, int) and isinstance(k, int)):
        raise MetricDomainError("n, c, k must be integers")
    if n < 1 or not (0 <= c <= n) or not (1 <= k <= n):
        raise MetricDomainError(f"invalid domain: n={n}, c={c}, k={k}")
    if c == 0:
        return 0.0
    if n - c < k:
        return 1.0
    prod = 1.0
    for i in range(n - c + 1, n + 1):
        prod *= 1.0 - k / i
    return 1.0 - prod


def pass_at_k_sampled(verdicts: list[bool] | tuple[bool, ...], k: int) -> bool:
    """Empirical variant: did any of the FIRST k samples pass."""
    if k < 1 or k > len(verdicts):
        raise MetricDomainError(f"k={k} out of range for {len(verdicts)} verdicts")
    return any(verdicts[:k])


@dataclass(frozen=True)
class SampleResult:
    """One generated sample's fate on a task."""

    first_verdict: bool
    repair_attempted: bool = False
    repair_verdict: bool | None = None
    error_kind: str | None = None  # kind that triggered the repair, if any

    @property
    def effective_verdict(self) -> bool:
        """Pass after at most one repair."""
        if self.first_verdict:
            return True
        return bool(self.repair_attempted and self.repair_verdict)


@dataclass(frozen=True)
class SampleSet:
    """Verdicts for n samples per task, in generation order."""

    samples: dict[str, tuple[SampleResult, ...]]
    n: int
    metadata: dict = field(default_factory=dict)
    skipped: tuple[str, ...] = ()  # tasks with no example tests under gating

    def __post_init__(self):
        for task_id, results in self.samples.items():
            if len(results) != self.n:
                raise MetricDomainError(
                    f"task {task_id} has {len(results)} samples, expected {self.n}")

    def first_verdicts(self, task_id: str) -> list[bool]:
        return [r.first_verdict for r in self.samples[task_id]]

    def effective_verdicts(self, task_id: str) -> list[bool]:
        return [r.effective_verdict for r in self.samples[task_id]]

    @property
    def any_repairs(self) -> bool:
        return any(r.repair_attempted for rs in self.samples.values() for r in rs)


def _mean_over_tasks(sample_set: SampleSet, k: int, verdict_fn, mode: str) -> float:
    if not sample_set.samples:
        raise MetricDomainError("empty sample set")
    values = []
    for task_id in sample_set.samples:
        verdicts = verdict_fn(task_id)
        if mode == "estimated":
            values.append(pass_at_k_estimated(sample_set.n, sum(verdicts), k))
        else:
            values.append(1.0 if pass_at_k_sampled(verdicts, k) else 0.0)
    return sum(values) / len(values)


def dataset_pass_at_k(sample_set: SampleSet, k: int, mode: str = "estimated") -> float:
    """Mean pass@k over tasks using first-attempt verdicts only."""
    return _mean_over_tasks(sample_set, k, sample_set.first_verdicts, mode)


def edit_pass_at_k(sample_set: SampleSet, k: int, mode: str = "estimated") -> float:
    """pass@k where a sample counts as passing if either its first attempt or
    its single repair passes. Comparable to plain pass@2k on the same set."""
    return _mean_over_tasks(sample_set, k, sample_set.effective_verdicts, mode)


@dataclass(frozen=True)
class AggregateReport:
    """Mean / sample std / normal-approximation 95% CI over repeated runs."""

    mean: float
    std: float | None
    ci_half_width: float | None
    m: int


def aggregate_runs(values: list[float]) -> AggregateReport:
    if not values:
        raise MetricDomainError("no runs to aggregate")
    m = len(values)
    if m == 1:
        return AggregateReport(mean=values[0], std=None, ci_half_width=None, m=1)
    std = statistics.stdev(values)  # m-1 denominator
    return AggregateReport(mean=statistics.mean(values), std=std,
                           ci_half_width=1.96 * std / math.sqrt(m), m=m)


@dataclass(frozen=True)
class TransitionReport:
    """Per-error-kind repair outcomes: how many failures of each kind were
    given a repair attempt and how many of those repairs passed."""

    transitions: dict[str, tuple[int, int]]  # kind -> (attempted, repaired)

    def to_sankey_json(self) -> str:
        kinds = sorted(self.transitions)
        nodes = [{"name": k} for k in kinds] + [{"name": "Repaired"}, {"name": "Still failing"}]
        index = {node["name"]: i for i, node in enumerate(nodes)}
        links = []
        for kind in kinds:
            attempted, repaired = self.transitions[kind]
            if repaired:
                links.append({"source": index[kind], "target": index["Repaired"],
                              "value": repaired})
            if attempted - repaired:
                links.append({"source": index[kind], "target": index["Still failing"],
                              "value": attempted - repaired})
        return json.dumps({"nodes": nodes, "links": links}, indent=2, sort_keys=True)


def repair_transitions(sample_set: SampleSet) -> TransitionReport:
    counts: dict[str, list[int]] = {}
    for results in sample_set.samples.values():
        for r in results:
            if not r.repair_attempted:
                continue
            kind = r.error_kind or "Unknown"
            slot = counts.setdefault(kind, [0, 0])
            slot[0] += 1
            if r.repair_verdict:
                slot[1] += 1
    return TransitionReport(transitions={k: (a, b) for k, (a, b) in counts.items()})


@dataclass(frozen=True)
class PassAtKReport:
    ks: tuple[int, ...]
    estimated: dict[int, float]
    sampled: dict[int, float]
    edit_estimated: dict[int, float]  # empty when no repairs happened
    edit_sampled: dict[int, float]
    n: int
    task_count: int
    skipped: int = 0

    def to_json(self) -> str:
        return json.dumps({
            "ks": list(self.ks),
            "estimated": {str(k): v for k, v in self.estimated.items()},
            "sampled": {str(k): v for k, v in self.sampled.items()},
            "edit_estimated": {str(k): v for k, v in self.edit_estimated.items()},
            "edit_sampled": {str(k): v for k, v in self.edit_sampled.items()},
            "n": self.n,
            "task_count": self.task_count,
            "skipped": self.skipped,
        }, indent=2, sort_keys=True)

    def to_table(self) -> str:
        """Aligned text table; edit pass@k rows show plain pass@2k alongside
        when it is available, since one repair doubles the sample budget."""
        rows = [("metric", "value", "pass@2k")]
        for k in self.ks:
            rows.append((f"pass@{k} (est)", f"{self.estimated[k]:.4f}", ""))
            rows.append((f"pass@{k} (sampled)", f"{self.sampled[k]:.4f}", ""))
        for k in self.ks:
            if k not in self.edit_estimated:
                continue
            paired = f"{self.estimated[2 * k]:.4f}" if 2 * k in self.estimated else "-"
            rows.append((f"edit pass@{k} (est)", f"{self.edit_estimated[k]:.4f}", paired))
            paired_s = f"{self.sampled[2 * k]:.4f}" if 2 * k in self.sampled else "-"
            rows.append((f"edit pass@{k} (sampled)", f"{self.edit_sampled[k]:.4f}", paired_s))
        widths = [max(len(r[i]) for r in rows) for i in range(3)]
        lines = []
        for i, row in enumerate(rows):
            lines.append("  ".join(cell.ljust(widths[j]) for j, cell in enumerate(row)).rstrip())
            if i == 0:
                lines.append("  ".join("-" * w for w in widths).rstrip())
        return "\n".join(lines)


def build_report(sample_set: SampleSet, ks: tuple[int, ...] = (1,)) -> PassAtKReport:
    ks = tuple(sorted(set(ks)))
    estimated = {k: dataset_pass_at_k(sample_set, k, "estimated") for k in ks}
    sampled = {k: dataset_pass_at_k(sample_set, k, "sampled") for k in ks}
    # also compute pass@2k when in range, for the edit-vs-2k comparison column
    for k in ks:
        if 2 * k <= sample_set.n and 2 * k not in estimated:
            estimated[2 * k] = dataset_pass_at_k(sample_set, 2 * k, "estimated")
            sampled[2 * k] = dataset_pass_at_k(sample_set, 2 * k, "sampled")
    edit_est: dict[int, float] = {}
    edit_smp: dict[int, float] = {}
    if sample_set.any_repairs:
        for k in ks:
            edit_est[k] = edit_pass_at_k(sample_set, k, "estimated")
            edit_smp[k] = edit_pass_at_k(sample_set, k, "sampled")
    return PassAtKReport(ks=ks, estimated=estimated, sampled=sampled,
                         edit_estimated=edit_est, edit_sampled=edit_smp,
                         n=sample_set.n, task_count=len(sample_set.samples),
                         skipped=len(sample_set.skipped))
