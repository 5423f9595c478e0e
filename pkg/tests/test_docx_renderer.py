"""Tests for docx_renderer.

Verifies that:
  * the output is a valid .docx (bytes parseable by python-docx)
  * the compare table has two header rows and one row per strategy
  * excluded fits, the reference line and the notes are rendered
"""
from io import BytesIO

from docx import Document

from estimators.compare import CompareReport, CompareRow
from estimators.models import Diagnostics, EstimateResult
from services.docx_renderer import render_compare_docx


# --- Fixtures ---


def _result(strategy: str, model: str, estimate: float, se: float, p_value: float) -> EstimateResult:
    return EstimateResult(
        strategy=strategy,
        model=model,
        estimate=estimate,
        se=se,
        ci=(estimate - 1.96 * se, estimate + 1.96 * se),
        p_value=p_value,
        ci_level=0.95,
        diagnostics=Diagnostics(n=100, n_treated=50, n_control=50, n_complete_cases=80),
    )


def _sample_report() -> CompareReport:
    return CompareReport(
        reference=_result("neyman", "-", 1.2341, 0.5, 0.0137),
        rows=[
            CompareRow(strategy="mim", fits={
                "F": _result("mim", "F", 1.1, 0.31, 0.0004),
                "L": _result("mim", "L", 1.05, 0.3, 0.00047),
            }),
            CompareRow(strategy="mp", fits={
                "F": _result("mp", "F", 0.9876, 0.35, 0.0048),
                "L": None,
            }),
        ],
        notes=["mp/L excluded: pattern 011 needs each arm >= 2"],
    )


def _text(doc) -> str:
    return "\n".join(p.text for p in doc.paragraphs)


# --- Compare table ---


def test_compare_docx_returns_bytes():
    out = render_compare_docx(_sample_report())
    assert isinstance(out, (bytes, bytearray))
    assert len(out) > 0


def test_compare_docx_is_parseable_with_title():
    doc = Document(BytesIO(render_compare_docx(_sample_report(), title="Trial 7")))
    assert doc.paragraphs[0].text == "Trial 7"


def test_compare_docx_default_title():
    doc = Document(BytesIO(render_compare_docx(_sample_report())))
    assert "missing-covariate strategy" in doc.paragraphs[0].text


def test_compare_docx_table_layout():
    doc = Document(BytesIO(render_compare_docx(_sample_report())))
    assert len(doc.tables) == 1
    table = doc.tables[0]
    # 2 header rows + 2 strategy rows
    assert len(table.rows) == 4
    assert len(table.columns) == 7
    sub = [c.text for c in table.rows[1].cells]
    assert sub == ["strategy", "estimate", "robust s.e.", "p-value", "estimate", "robust s.e.", "p-value"]
    top = [c.text for c in table.rows[0].cells]
    assert top[1] == "F"
    assert top[4] == "L"


def test_compare_docx_rows_use_three_decimals():
    doc = Document(BytesIO(render_compare_docx(_sample_report())))
    row = [c.text for c in doc.tables[0].rows[2].cells]
    assert row == ["mim", "1.100", "0.310", "0.000", "1.050", "0.300", "0.000"]


def test_compare_docx_excluded_fit_shows_dash():
    doc = Document(BytesIO(render_compare_docx(_sample_report())))
    row = [c.text for c in doc.tables[0].rows[3].cells]
    assert row == ["mp", "0.988", "0.350", "0.005", "-", "-", "-"]


def test_compare_docx_reference_and_notes():
    doc = Document(BytesIO(render_compare_docx(_sample_report())))
    text = _text(doc)
    assert "For comparison, difference in means: estimate 1.234, robust s.e. 0.500, p-value 0.014" in text
    assert "Notes" in text
    assert "mp/L excluded: pattern 011 needs each arm >= 2" in text


def test_compare_docx_without_notes():
    report = _sample_report()
    report.notes = []
    doc = Document(BytesIO(render_compare_docx(report)))
    assert "Notes" not in _text(doc)
