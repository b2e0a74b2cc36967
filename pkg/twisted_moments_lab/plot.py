"""
Static SVG of the moment growth against loglog q

The y axis is log(S_k / (phi(q) x^k)); the reference line has slope (k-1)^2
and passes through the centroid of the points. Output depends only on the
CSV text, so identical input gives identical bytes.
"""
import csv
import io
import logging
import math
from dataclasses import dataclass

from .errors import DomainError

logger = logging.getLogger(__name__)

WIDTH, HEIGHT, MARGIN = 640, 420, 56
REQUIRED_COLUMNS = ("q", "x", "k", "S_k")


@dataclass(slots=True, frozen=True)
class PlotPoint:
    loglog_q: float
    log_growth: float


def read_points(text: str) -> tuple[list[PlotPoint], float | None]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        return [], None
    missing = [c for c in REQUIRED_COLUMNS if c not in reader.fieldnames]
    if missing:
        raise DomainError(f"moment CSV lacks columns {missing}")

    points, k = [], None
    for line, row in enumerate(reader, start=2):
        try:
            q, x, k, s_k = int(row["q"]), float(row["x"]), float(row["k"]), float(row["S_k"])
        except (TypeError, ValueError) as err:
            raise DomainError(f"malformed moment CSV at line {line}: {err}") from err
        if s_k <= 0 or q < 3:
            continue
        points.append(PlotPoint(math.log(math.log(q)), math.log(s_k) - math.log(q - 1) - k * math.log(x)))
    return points, k


def _fmt(value: float) -> str:
    return f"{value:.3f}"


def _scale(low: float, high: float, start: float, stop: float):
    span = high - low or 1.0
    return lambda v: start + (v - low) / span * (stop - start)


def render_svg(points: list[PlotPoint], k: float | None) -> str:
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
        f'<text x="{WIDTH // 2}" y="{HEIGHT - 16}" text-anchor="middle" font-size="12">loglog q</text>',
        f'<text x="16" y="{HEIGHT // 2}" font-size="12" transform="rotate(-90 16 {HEIGHT // 2})" '
        'text-anchor="middle">log S_k / (phi(q) x^k)</text>',
    ]
    if points:
        xs = [p.loglog_q for p in points]
        ys = [p.log_growth for p in points]
        to_x = _scale(min(xs), max(xs), MARGIN, WIDTH - MARGIN)
        slope = (k - 1.0) ** 2 if k is not None else 0.0
        cx, cy = sum(xs) / len(xs), sum(ys) / len(ys)
        ends = [cy + slope * (min(xs) - cx), cy + slope * (max(xs) - cx)]
        to_y = _scale(min(ys + ends), max(ys + ends), HEIGHT - MARGIN, MARGIN)

        parts.append(
            f'<line class="reference" x1="{_fmt(to_x(min(xs)))}" y1="{_fmt(to_y(ends[0]))}" '
            f'x2="{_fmt(to_x(max(xs)))}" y2="{_fmt(to_y(ends[1]))}" stroke="gray" '
            f'stroke-dasharray="4 3" data-slope="{slope:.17g}"/>'
        )
        for point in points:
            parts.append(
                f'<circle class="point" cx="{_fmt(to_x(point.loglog_q))}" '
                f'cy="{_fmt(to_y(point.log_growth))}" r="3" fill="steelblue"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_plot(csv_text: str) -> str:
    points, k = read_points(csv_text)
    logger.debug(f"plotting {len(points)} points")
    return render_svg(points, k)
