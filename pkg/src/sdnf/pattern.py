"""Bump (active zone) detection and truth-vs-reconstruction mismatch tables."""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class BumpPattern:
    count: int
    intervals: list[tuple[int, int]]
    threshold_used: float
    min_width_nodes: int

    @property
    def wraps(self) -> bool:
        return any(s > e for s, e in self.intervals)


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    padded = np.concatenate(([False], mask, [False])).astype(np.int8)
    d = np.diff(padded)
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1) - 1
    return list(zip(starts.tolist(), ends.tolist()))


def count_bumps(field, theta: float = 0.0, min_width: int = 3, periodic: bool = True) -> BumpPattern:
    """Count maximal runs of nodes with ``field >= theta``.

    Runs narrower than ``min_width`` nodes are dropped.  With ``periodic`` the
    first and last node are the same physical point (x = -L and x = +L), so
    runs touching both ends are merged into one interval ``(start, end)`` with
    ``start > end``.
    """
    f = np.asarray(field, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValueError("field contains non-finite values")
    n = len(f)
    runs = _runs(f >= theta)
    widths = [e - s + 1 for s, e in runs]
    if periodic and len(runs) > 1 and runs[0][0] == 0 and runs[-1][1] == n - 1:
        head, tail = runs.pop(0), runs.pop()
        widths = widths[1:-1]
        runs.append((tail[0], head[1]))
        # node n-1 and node 0 coincide
        widths.append((tail[1] - tail[0] + 1) + (head[1] - head[0] + 1) - 1)
    kept = [r for r, w in zip(runs, widths) if w >= min_width]
    kept.sort(key=lambda r: r[0] if r[0] <= r[1] else -1)
    return BumpPattern(len(kept), kept, float(theta), int(min_width))


@dataclass(frozen=True)
class MismatchRow:
    n_bumps: int
    exact_count: int
    recovered_count: int

    @property
    def mismatch(self) -> int:
        return abs(self.exact_count - self.recovered_count)


@dataclass(frozen=True)
class MismatchTable:
    rows: list[MismatchRow]
    per_run_disagreement: int = 0

    @property
    def total_mismatch(self) -> int:
        return sum(r.mismatch for r in self.rows)

    @property
    def total_exact(self) -> int:
        return sum(r.exact_count for r in self.rows)

    @property
    def total_recovered(self) -> int:
        return sum(r.recovered_count for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n_bumps", "exact", "recovered", "mismatch"])
        for r in self.rows:
            w.writerow([r.n_bumps, r.exact_count, r.recovered_count, r.mismatch])
        w.writerow(["total", self.total_exact, self.total_recovered, self.total_mismatch])
        return buf.getvalue()


def mismatch_table(truth_counts: Sequence[int], recovered_counts: Sequence[int]) -> MismatchTable:
    """Histogram both count lists and compare them per bump count.

    Rows run over 1..max observed count; a row for 0 bumps is added only when
    some run has no bump at all.  ``per_run_disagreement`` counts runs whose
    two labels differ, which can exceed the histogram total.
    """
    if len(truth_counts) != len(recovered_counts):
        raise ValueError(f"length mismatch: {len(truth_counts)} truth vs "
                         f"{len(recovered_counts)} recovered counts")
    ht, hr = Counter(int(c) for c in truth_counts), Counter(int(c) for c in recovered_counts)
    top = max([1, *ht, *hr])
    low = 0 if (ht[0] or hr[0]) else 1
    rows = [MismatchRow(k, ht[k], hr[k]) for k in range(low, top + 1)]
    disagree = sum(int(a) != int(b) for a, b in zip(truth_counts, recovered_counts))
    return MismatchTable(rows, disagree)


def expand_histogram(hist: Mapping[int, int] | Sequence[int], start: int = 1) -> list[int]:
    """Turn a histogram (by bump count, starting at ``start``) into a list of labels."""
    items = hist.items() if isinstance(hist, Mapping) else enumerate(hist, start)
    return [k for k, n in items for _ in range(n)]


def format_tables(truth_counts: Sequence[int], recovered: Mapping[str, Sequence[int]],
                  title: str = "") -> str:
    """Aligned text table: Bumps | Exact | (Recovered, Mismatch) per method."""
    tables = {name: mismatch_table(truth_counts, c) for name, c in recovered.items()}
    ns = sorted({r.n_bumps for t in tables.values() for r in t.rows}) or [1]
    ht = Counter(int(c) for c in truth_counts)
    header = ["Bumps", "Exact"]
    for name in tables:
        header += [f"{name} Recovered", "Mismatch"]
    lines = [header]
    for k in ns:
        line = [str(k), str(ht[k])]
        for t in tables.values():
            row = next((r for r in t.rows if r.n_bumps == k), MismatchRow(k, ht[k], 0))
            line += [str(row.recovered_count), str(row.mismatch)]
        lines.append(line)
    total = ["Total", str(len(truth_counts))]
    for t in tables.values():
        total += [str(t.total_recovered), str(t.total_mismatch)]
    lines.append(total)
    widths = [max(len(l[i]) for l in lines) for i in range(len(header))]
    fmt = lambda l: " | ".join(c.rjust(w) for c, w in zip(l, widths))
    rule = "-+-".join("-" * w for w in widths)
    out = [title] if title else []
    out += [fmt(lines[0]), rule, *[fmt(l) for l in lines[1:-1]], rule, fmt(lines[-1])]
    return "\n".join(out) + "\n"
