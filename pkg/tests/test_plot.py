import pytest

from twisted_moments_lab.errors import DomainError
from twisted_moments_lab.plot import emit_plot, read_points

HEADER = "q,x,k,S_k,normalized,second_moment_check,runtime_ms\n"
ROWS = [
    "101,10,2,1500.5,0.3,1e-15,\n",
    "211,14,2,7000.25,0.31,1e-15,\n",
    "307,17,2,16000,0.33,1e-15,\n",
]


def test_empty_csv_gives_empty_axes():
    svg = emit_plot("")
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert 'class="point"' not in svg
    assert emit_plot(HEADER).count('class="point"') == 0


def test_three_points_and_reference_slope():
    svg = emit_plot(HEADER + "".join(ROWS))
    assert svg.count('class="point"') == 3
    assert 'data-slope="1"' in svg


def test_reference_slope_follows_k():
    rows = [r.replace(",2,", ",3,") for r in ROWS]
    assert 'data-slope="4"' in emit_plot(HEADER + "".join(rows))


def test_byte_deterministic():
    text = HEADER + "".join(ROWS)
    assert emit_plot(text) == emit_plot(text)


@pytest.mark.parametrize(
    "text",
    [
        "q,x\n101,10\n",
        HEADER + "101,ten,2,5,0,0,\n",
    ],
)
def test_malformed(text: str):
    with pytest.raises(DomainError):
        read_points(text)
