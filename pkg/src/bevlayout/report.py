"""Benchmark aggregation: accuracy by task and by number of input frames."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable

from .tasks import FRAME_COUNTS, TaskType


@dataclass(frozen=True)
class BenchReport:
    # (task, n_frames) -> (sum of scores, count)
    cells: dict[tuple[TaskType, int], tuple[float, int]]

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[TaskType, int, float]]) -> BenchReport:
        acc: dict[tuple[TaskType, int], list] = defaultdict(lambda: [0.0, 0])
        for task, n, score in rows:
            if not 0.0 <= score <= 1.0:
                raise ValueError(f"score out of range: {score}")
            cell = acc[(task, n)]
            cell[0] += score
            cell[1] += 1
        return cls({k: (s, c) for k, (s, c) in acc.items()})

    @property
    def tasks(self) -> list[TaskType]:
        present = {t for t, _ in self.cells}
        return [t for t in TaskType if t in present]

    @property
    def lengths(self) -> list[int]:
        present = {n for _, n in self.cells}
        return [n for n in FRAME_COUNTS if n in present] + sorted(present - set(FRAME_COUNTS))

    def _agg(self, task: TaskType | None = None, n: int | None = None) -> tuple[float, int]:
        s = c = 0
        for (t, k), (cs, cc) in self.cells.items():
            if (task is None or t == task) and (n is None or k == n):
                s += cs
                c += cc
        return s, c

    def accuracy(self, task: TaskType | None = None, n: int | None = None) -> float | None:
        """Mean score over items matching the filters; None for an empty cell."""
        s, c = self._agg(task, n)
        return s / c if c else None

    def count(self, task: TaskType | None = None, n: int | None = None) -> int:
        return self._agg(task, n)[1]

    def _rows(self) -> list[tuple[str, list[float | None], int]]:
        rows = []
        for t in self.tasks:
            rows.append((t.value, [self.accuracy(t, n) for n in self.lengths] + [self.accuracy(t)], self.count(t)))
        rows.append(("Overall", [self.accuracy(None, n) for n in self.lengths] + [self.accuracy()], self.count()))
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["task", *map(str, self.lengths), "Overall", "n"])
        for name, vals, n in self._rows():
            w.writerow([name, *("" if v is None else f"{v:.6f}" for v in vals), n])
        return buf.getvalue()

    def to_text(self) -> str:
        """Aligned table of percentages, frame counts across, tasks down."""
        header = ["task", *map(str, self.lengths), "Overall", "n"]
        body = [
            [name, *("-" if v is None else f"{100 * v:.2f}" for v in vals), str(n)] for name, vals, n in self._rows()
        ]
        widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
        fmt = lambda r: "  ".join(c.ljust(widths[0]) if i == 0 else c.rjust(widths[i]) for i, c in enumerate(r))  # noqa: E731
        rule = "-" * len(fmt(header))
        return "\n".join([fmt(header), rule, *map(fmt, body[:-1]), rule, fmt(body[-1])]) + "\n"

    def to_svg(self, width: int = 640, bar_height: int = 18) -> str:
        """Horizontal bar chart of per-task and per-frame-count accuracy."""
        items = [(t.value, self.accuracy(t)) for t in self.tasks]
        items += [(f"{n} frames", self.accuracy(None, n)) for n in self.lengths]
        items.append(("overall", self.accuracy()))
        label_w, pad = 170, 4
        plot_w = width - label_w - 60
        height = len(items) * (bar_height + pad) + 2 * pad
        parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            'font-family="sans-serif" font-size="12">'
        ]
        for i, (name, v) in enumerate(items):
            y = pad + i * (bar_height + pad)
            v = v or 0.0
            parts.append(f'<text x="{label_w - 6}" y="{y + bar_height - 5}" text-anchor="end">{name}</text>')
            parts.append(
                f'<rect x="{label_w}" y="{y}" width="{plot_w * v:.1f}" height="{bar_height}" fill="#4a7ab5"/>'
            )
            parts.append(f'<text x="{label_w + plot_w * v + 4:.1f}" y="{y + bar_height - 5}">{100 * v:.1f}%</text>')
        parts.append("</svg>")
        return "\n".join(parts) + "\n"
