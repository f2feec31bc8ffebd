"""Evaluation metrics: SPL, human contribution, and grouped report rows."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence


class ZeroSteps(ValueError):
    """Metric asked for with zero executed steps."""


class NonPositiveShortestPath(ValueError):
    """SPL needs a positive shortest-path length."""


class EmptyResults(ValueError):
    """Aggregation over an empty result list."""


@dataclass
class EpisodeResult:
    success: int
    shortest_path_length: float   # l, meters
    actual_path_length: float     # p, meters
    C_h: int
    C_a: int
    C_r: int
    spl: float
    human_contribution: float
    tags: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "success": self.success,
            "shortest_path_length": self.shortest_path_length,
            "actual_path_length": self.actual_path_length,
            "C_h": self.C_h,
            "C_a": self.C_a,
            "C_r": self.C_r,
            "spl": self.spl,
            "human_contribution": self.human_contribution,
        }

    @staticmethod
    def from_dict(d: dict, tags: dict[str, str] | None = None) -> "EpisodeResult":
        return EpisodeResult(
            success=int(d["success"]),
            shortest_path_length=float(d["shortest_path_length"]),
            actual_path_length=float(d["actual_path_length"]),
            C_h=int(d["C_h"]), C_a=int(d["C_a"]), C_r=int(d["C_r"]),
            spl=float(d["spl"]),
            human_contribution=float(d["human_contribution"]),
            tags=dict(tags or {}),
        )


def spl(success: int, l: float, p: float) -> float:
    """Success weighted by path length: success * l / max(p, l)."""
    if l <= 0:
        raise NonPositiveShortestPath(f"shortest path length must be positive, got {l}")
    if p < 0:
        raise ValueError("actual path length must be nonnegative")
    return success * l / max(p, l)


def human_contribution(C_h: int, C_a: int) -> float:
    """Fraction of executed steps taken by a non-agent actor."""
    if C_h + C_a == 0:
        raise ZeroSteps("no steps executed")
    return C_h / (C_h + C_a)


def make_result(success: bool, l: float, p: float, C_h: int, C_a: int, C_r: int,
                tags: dict[str, str] | None = None) -> EpisodeResult:
    s = int(bool(success))
    return EpisodeResult(
        success=s,
        shortest_path_length=l,
        actual_path_length=p,
        C_h=C_h, C_a=C_a, C_r=C_r,
        spl=spl(s, l, p),
        human_contribution=human_contribution(C_h, C_a),
        tags=dict(tags or {}),
    )


@dataclass(frozen=True)
class ReportRow:
    group: str
    n: int
    spl: float
    success: float
    human_contribution: float


def aggregate(results: Sequence[EpisodeResult],
              group_keys: Sequence[str] = ()) -> list[ReportRow]:
    """Mean SPL / success / contribution per group, rows in first-appearance
    order of the group values."""
    if not results:
        raise EmptyResults("no episode results to aggregate")
    groups: dict[str, list[EpisodeResult]] = {}
    for r in results:
        label = "/".join(str(r.tags.get(k, "-")) for k in group_keys) if group_keys else "all"
        groups.setdefault(label, []).append(r)
    rows = []
    for label, rs in groups.items():
        n = len(rs)
        rows.append(ReportRow(
            group=label,
            n=n,
            spl=sum(r.spl for r in rs) / n,
            success=sum(r.success for r in rs) / n,
            human_contribution=sum(r.human_contribution for r in rs) / n,
        ))
    return rows


def write_report_csv(rows: Iterable[ReportRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["group", "n", "spl", "success", "human_contribution"])
        for r in rows:
            w.writerow([r.group, r.n, repr(r.spl), repr(r.success), repr(r.human_contribution)])


def format_report(rows: Sequence[ReportRow]) -> str:
    """Aligned text table for standard output."""
    header = ("group", "n", "spl", "success", "contribution")
    body = [(r.group, str(r.n), f"{r.spl:.3f}", f"{r.success:.3f}",
             f"{r.human_contribution:.3f}") for r in rows]
    widths = [max(len(h), *(len(b[i]) for b in body)) if body else len(h)
              for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for b in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(b, widths)))
    return "\n".join(lines)
