"""Static SVG renderings of reliability diagrams and unseen-score histograms.

Bars are drawn inside a group whose transform maps data units to pixels, so
each bar's ``height`` attribute is the plotted value itself and can be read
back exactly.
"""
from __future__ import annotations

import xml.etree.ElementTree as ET
from typing import Sequence

from .metrics import ReliabilityReport

SIZE = 320
MARGIN = 40
SVG_NS = "http://www.w3.org/2000/svg"


def _fmt(x: float) -> str:
    return repr(float(x))


def _frame(title: str) -> tuple[list[str], str]:
    w = SIZE + 2 * MARGIN
    head = [
        f'<svg xmlns="{SVG_NS}" width="{w}" height="{w}" viewBox="0 0 {w} {w}">',
        f'<text x="{MARGIN}" y="{MARGIN - 12}" font-family="sans-serif" font-size="13">{title}</text>',
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>',
    ]
    # unit square with y pointing up
    plot = f'<g transform="translate({MARGIN},{MARGIN + SIZE}) scale({SIZE},-{SIZE})">'
    return head, plot


def reliability_svg(report: ReliabilityReport, title: str = "") -> str:
    head, plot = _frame(title or f"ECE={report.ece:.4f} MCE={report.mce:.4f}")
    lines = head + [plot]
    width = 1.0 / report.bin_count
    for m, b in enumerate(report.bins):
        x = _fmt(m * width)
        lines.append(
            f'<rect class="accuracy" data-bin="{m}" x="{x}" y="0" width="{_fmt(width)}" '
            f'height="{_fmt(b.accuracy)}" fill="#3b6fb6" stroke="black" stroke-width="0.002"/>'
        )
        low = min(b.accuracy, b.avg_confidence)
        lines.append(
            f'<rect class="gap" data-bin="{m}" x="{x}" y="{_fmt(low)}" width="{_fmt(width)}" '
            f'height="{_fmt(abs(b.gap))}" fill="#e05050" fill-opacity="0.5"/>'
        )
    lines.append('<line class="identity" x1="0" y1="0" x2="1" y2="1" stroke="gray" '
                 'stroke-dasharray="0.02,0.02" stroke-width="0.004"/>')
    lines += ["</g>", "</svg>"]
    return "\n".join(lines) + "\n"


def histogram_svg(counts: Sequence[int], title: str = "") -> str:
    """Normalized histogram of confidences over equal-width bins on [0, 1]."""
    head, plot = _frame(title)
    lines = head + [plot]
    total = sum(counts)
    width = 1.0 / len(counts)
    for m, c in enumerate(counts):
        freq = c / total if total else 0.0
        lines.append(
            f'<rect class="frequency" data-bin="{m}" x="{_fmt(m * width)}" y="0" '
            f'width="{_fmt(width)}" height="{_fmt(freq)}" fill="#6a9f58" stroke="black" stroke-width="0.002"/>'
        )
    lines += ["</g>", "</svg>"]
    return "\n".join(lines) + "\n"


def read_bar_heights(svg_text: str, css_class: str) -> list[float]:
    root = ET.fromstring(svg_text)
    bars = [el for el in root.iter(f"{{{SVG_NS}}}rect") if el.get("class") == css_class]
    bars.sort(key=lambda el: int(el.get("data-bin")))
    return [float(el.get("height")) for el in bars]
