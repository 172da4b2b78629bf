"""Minimal self-contained SVG line and step plots."""

from __future__ import annotations

from html import escape
from typing import Sequence

import numpy as np

WIDTH, HEIGHT = 720, 360
MARGIN = 50
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


class _Frame:
    def __init__(self, xlim, ylim):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 <= self.y0:
            self.y0, self.y1 = self.y0 - 0.5, self.y0 + 0.5

    def px(self, x):
        return MARGIN + (np.asarray(x) - self.x0) / (self.x1 - self.x0) * (WIDTH - 2 * MARGIN)

    def py(self, y):
        return HEIGHT - MARGIN - (np.asarray(y) - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2 * MARGIN)


def _points(xs, ys) -> str:
    return " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))


def _axes(frame: _Frame, title: str, xlabel: str, ylabel: str) -> list[str]:
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="14" y="{HEIGHT / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {HEIGHT / 2})">{escape(ylabel)}</text>',
    ]
    for v in np.linspace(frame.y0, frame.y1, 5):
        y = float(frame.py(v))
        out.append(f'<text x="{MARGIN - 6}" y="{y + 4:.2f}" text-anchor="end" font-size="10">{v:.2g}</text>')
    for v in np.linspace(frame.x0, frame.x1, 5):
        x = float(frame.px(v))
        out.append(f'<text x="{x:.2f}" y="{HEIGHT - MARGIN + 14}" text-anchor="middle" font-size="10">{v:.3g}</text>')
    return out


def trajectories_svg(times: np.ndarray, paths: Sequence[np.ndarray], title: str = "Simulated state trajectories") -> str:
    allv = np.concatenate([np.asarray(p) for p in paths]) if len(paths) else np.zeros(1)
    lim = max(0.5, float(np.abs(allv).max()) * 1.1)
    frame = _Frame((float(times[0]), float(times[-1])), (-lim, lim))
    out = _axes(frame, title, "time (min)", "state")
    zero = float(frame.py(0.0))
    out.append(f'<line x1="{MARGIN}" y1="{zero:.2f}" x2="{WIDTH - MARGIN}" y2="{zero:.2f}" stroke="red" stroke-dasharray="6,4"/>')
    # thin long paths so files stay small
    stride = max(1, len(times) // 1200)
    for i, p in enumerate(paths):
        xs = frame.px(times[::stride])
        ys = frame.py(np.asarray(p)[::stride])
        out.append(f'<polyline fill="none" stroke="{PALETTE[i % len(PALETTE)]}" stroke-width="1" points="{_points(xs, ys)}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def decoded_svg(t: np.ndarray, states: np.ndarray, made: np.ndarray, title: str, ylim: tuple[float, float]) -> str:
    """Step plot of decoded states; made throws in yellow, misses in black."""
    frame = _Frame((float(t[0]) - 1.0, float(t[-1]) + 1.0), ylim)
    out = _axes(frame, title, "time (min)", "decoded state")
    zero = float(frame.py(0.0))
    out.append(f'<line x1="{MARGIN}" y1="{zero:.2f}" x2="{WIDTH - MARGIN}" y2="{zero:.2f}" stroke="gray" stroke-dasharray="4,4"/>')
    xs, ys = [], []
    for k in range(len(t)):
        if k:
            xs.append(t[k])
            ys.append(states[k - 1])
        xs.append(t[k])
        ys.append(states[k])
    out.append(f'<polyline fill="none" stroke="#333" stroke-width="1.5" points="{_points(frame.px(xs), frame.py(ys))}"/>')
    for k, (tk, sk, yk) in enumerate(zip(t, states, made)):
        # throws sharing a timestamp are nudged apart so both markers show
        dx = 6.0 * (k - np.searchsorted(t, tk))
        colour = "#f2c500" if yk else "black"
        out.append(
            f'<circle cx="{float(frame.px(tk)) + dx:.2f}" cy="{float(frame.py(sk)):.2f}" r="5" '
            f'fill="{colour}" stroke="black"/>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
