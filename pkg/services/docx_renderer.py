"""DOCX renderer for the compare table.

`render_compare_docx(report)` lays out the same numbers as the text table:
a title, a 7-column table (strategy, then estimate / s.e. / p-value for F and
for L), the difference-in-means reference row and the exclusion notes.

Returns raw bytes (no temp file is written) so the caller decides where the
document goes.
"""
from io import BytesIO
from typing import Optional

from docx import Document
from docx.enum.text import WD_ALIGN_PARAGRAPH
from docx.shared import Pt

from estimators.compare import MODEL_FORMS, CompareReport
from services.table_renderer import fmt

_SUBHEADERS = ("estimate", "robust s.e.", "p-value")


def _bold_row(cells) -> None:
    for cell in cells:
        for p in cell.paragraphs:
            for r in p.runs:
                r.bold = True


def render_compare_docx(report: CompareReport, title: Optional[str] = None) -> bytes:
    """Render a CompareReport as a .docx and return the bytes."""
    doc = Document()

    heading = doc.add_paragraph()
    heading.alignment = WD_ALIGN_PARAGRAPH.CENTER
    run = heading.add_run(title or "Average treatment effect by missing-covariate strategy")
    run.bold = True
    run.font.size = Pt(14)

    table = doc.add_table(rows=2, cols=1 + 3 * len(MODEL_FORMS))
    table.style = "Light Grid Accent 1"
    top, sub = table.rows[0].cells, table.rows[1].cells
    top[0].text = ""
    sub[0].text = "strategy"
    for m, model in enumerate(MODEL_FORMS):
        first = 1 + 3 * m
        merged = top[first].merge(top[first + 2])
        merged.text = model
        for k, name in enumerate(_SUBHEADERS):
            sub[first + k].text = name
    _bold_row(table.rows[0].cells)
    _bold_row(table.rows[1].cells)

    for row in report.rows:
        cells = table.add_row().cells
        cells[0].text = row.strategy
        for m, model in enumerate(MODEL_FORMS):
            result = row.fits.get(model)
            first = 1 + 3 * m
            values = ["-"] * 3 if result is None else [fmt(result.estimate), fmt(result.se), fmt(result.p_value)]
            for k, value in enumerate(values):
                cells[first + k].text = value

    p = doc.add_paragraph()
    p.add_run("For comparison, difference in means: ").bold = True
    ref = report.reference
    p.add_run(f"estimate {fmt(ref.estimate)}, robust s.e. {fmt(ref.se)}, p-value {fmt(ref.p_value)}")

    if report.notes:
        notes = doc.add_paragraph()
        notes.add_run("Notes").bold = True
        for note in report.notes:
            doc.add_paragraph(note, style="List Bullet")

    buffer = BytesIO()
    doc.save(buffer)
    return buffer.getvalue()
