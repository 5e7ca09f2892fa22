# app/pdf_generator.py
import logging
from datetime import datetime
from typing import Any, Dict, List
from xml.sax.saxutils import escape

from reportlab.lib import colors
from reportlab.lib.pagesizes import A4
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.lib.units import mm
from reportlab.pdfbase import pdfmetrics
from reportlab.pdfbase.ttfonts import TTFont
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from app.config import HC_PDF_FONT, HC_PDF_FONT_BOLD

logger = logging.getLogger(__name__)

_VERDICT_COLORS = {
    "Met": colors.HexColor("#d9f2d9"),
    "Partial": colors.HexColor("#fff2cc"),
    "Unmet": colors.HexColor("#f8d7da"),
}
# Длинные списки в PDF обрезаем; полный отчёт лежит в JSON
MAX_ROWS = 200


def _font(bold: bool = False) -> str:
    name = "DejaVuSans-Bold" if bold else "DejaVuSans"
    if name in pdfmetrics.getRegisteredFontNames():
        return name
    return "Helvetica-Bold" if bold else "Helvetica"


def _cell(value: Any) -> str:
    if value is None:
        return "—"
    if isinstance(value, (list, tuple)):
        return ", ".join(str(v) for v in value) or "—"
    return str(value)


class PDFGenerator:
    """Человекочитаемая версия отчёта прогона: карта требований, предложения, фонд."""

    def __init__(self):
        self.styles = getSampleStyleSheet()
        self._setup_fonts()

    def _setup_fonts(self):
        # Пытаемся использовать DejaVu Sans; если не найден, останемся на встроенных
        try:
            pdfmetrics.registerFont(TTFont("DejaVuSans", HC_PDF_FONT))
            pdfmetrics.registerFont(TTFont("DejaVuSans-Bold", HC_PDF_FONT_BOLD))
            self.styles["Normal"].fontName = "DejaVuSans"
            self.styles["Title"].fontName = "DejaVuSans-Bold"
            self.styles["Heading2"].fontName = "DejaVuSans-Bold"
        except Exception as e:
            logger.warning("Не удалось настроить шрифты DejaVuSans: %s", e)

    @staticmethod
    def _footer(canvas, doc):
        canvas.saveState()
        w, h = A4
        canvas.setFont(_font(), 9)
        canvas.setFillColor(colors.grey)
        canvas.drawString(15 * mm, 10 * mm, "HC governance simulator • report")
        canvas.drawRightString(w - 15 * mm, 10 * mm, f"Стр. {doc.page}")
        canvas.restoreState()

    def _table(self, header: List[str], rows: List[List[Any]], extra: List = None) -> Table:
        data = [header] + [[_cell(v) for v in r] for r in rows[:MAX_ROWS]]
        table = Table(data, repeatRows=1)
        style = [
            ("FONTNAME", (0, 0), (-1, 0), _font(bold=True)),
            ("FONTNAME", (0, 1), (-1, -1), _font()),
            ("FONTSIZE", (0, 0), (-1, -1), 8),
            ("BACKGROUND", (0, 0), (-1, 0), colors.HexColor("#eeeeee")),
            ("GRID", (0, 0), (-1, -1), 0.25, colors.grey),
            ("VALIGN", (0, 0), (-1, -1), "TOP"),
        ]
        table.setStyle(TableStyle(style + (extra or [])))
        return table

    def _scorecard(self, card: Dict[str, Any]) -> Table:
        rows, extra = [], []
        for i, req in enumerate(("R1", "R2", "R3", "R4", "R5"), start=1):
            score = card.get(req.lower()) or {}
            verdict = score.get("verdict")
            metrics = "; ".join(f"{k}={_cell(v)}" for k, v in sorted((score.get("metrics") or {}).items())
                                if not isinstance(v, dict))
            rows.append([req, verdict, Paragraph(escape(metrics), self.styles["Normal"])])
            if verdict in _VERDICT_COLORS:
                extra.append(("BACKGROUND", (1, i), (1, i), _VERDICT_COLORS[verdict]))
        return self._table(["Требование", "Вердикт", "Показатели"], rows, extra)

    def generate_report_pdf(self, report: Dict[str, Any], output_path: str, title: str = "") -> bool:
        scenario = (report.get("scenario") or {}).get("name") or "scenario"
        title = title or f"Отчёт прогона: {scenario}"
        try:
            doc = SimpleDocTemplate(
                output_path,
                pagesize=A4,
                rightMargin=15 * mm,
                leftMargin=15 * mm,
                topMargin=18 * mm,
                bottomMargin=18 * mm,
                title=title,
                author="HC governance simulator",
                subject="Governance scenario report",
                creator="HC governance simulator",
            )

            story: List = []
            title_style = self.styles["Title"]
            title_style.fontSize = 18
            title_style.leading = 22
            story.append(Paragraph(escape(title), title_style))
            story.append(Spacer(1, 8))

            meta_style = ParagraphStyle(
                "Meta",
                parent=self.styles["Normal"],
                fontSize=9,
                textColor=colors.HexColor("#666666"),
            )
            log = report.get("log") or {}
            date_str = datetime.now().strftime("%d.%m.%Y %H:%M")
            for line in (
                f"Сгенерировано: {date_str}",
                f"Записей в журнале: {log.get('records')}, проверка: {log.get('verify')}",
                f"Голова журнала: {log.get('head')}",
                f"Digest состояния: {report.get('state_digest')}",
                f"Финальный тик: {report.get('final_tick')}",
            ):
                story.append(Paragraph(escape(line), meta_style))
            story.append(Spacer(1, 12))

            h2 = self.styles["Heading2"]
            story.append(Paragraph("Карта требований", h2))
            card = report.get("scorecard")
            if card:
                story.append(self._scorecard(card))
                story.append(Spacer(1, 4))
                story.append(Paragraph(escape(report.get("verdict_scale") or ""), meta_style))
            else:
                story.append(Paragraph("Сценарий не завершён: оценка недоступна", self.styles["Normal"]))
            story.append(Spacer(1, 10))

            capture = (report.get("metrics") or {}).get("capture") or {}
            story.append(Paragraph("Децентрализация", h2))
            story.append(self._table(
                ["Коалиция захвата", "Режим", "Сила (всего)", "Джини"],
                [[capture.get("size"), capture.get("mode"), capture.get("eligible_power"),
                  (report.get("metrics") or {}).get("gini")]],
            ))
            story.append(Spacer(1, 10))

            story.append(Paragraph("Предложения", h2))
            story.append(self._table(
                ["ID", "Вид", "Действие", "Состояние", "За", "Против", "Исход"],
                [[p["id"], p["kind"], p["action"], p["state"], p["tally"]["for"], p["tally"]["against"],
                  p.get("outcome") or p.get("resolution")] for p in report.get("proposals") or []],
            ))
            story.append(Spacer(1, 10))

            f = report.get("foundation") or {}
            story.append(Paragraph("Фонд", h2))
            if f.get("configured"):
                story.append(self._table(
                    ["Резолюция", "Действие", "Состояние", "Директор", "Ограничение"],
                    [[r["id"], r["action"], r["state"], r["assigned_director"], r["cited_constraint"]]
                     for r in f.get("resolutions") or []],
                ))
                if f.get("breaches"):
                    story.append(Spacer(1, 6))
                    story.append(self._table(
                        ["Нарушение", "Тип", "Ссылка", "Директор", "Предложение"],
                        [[b["id"], b["kind"], b["ref"], b["director"], b["removal_proposal"]]
                         for b in f["breaches"]],
                    ))
            else:
                story.append(Paragraph("Фонд не сконфигурирован", self.styles["Normal"]))
            story.append(Spacer(1, 10))

            findings = (report.get("jurisdiction") or {}).get("findings") or []
            overrides = (report.get("oracle") or {}).get("overrides") or []
            if findings or overrides:
                story.append(Paragraph("Юрисдикции и оракул", h2))
                rows = [["finding", c["id"], c["module"], c["tick"], c["resolved_at"]] for c in findings]
                rows += [["override", o["proposal"], o["topic"], o["tick"], o["value"]] for o in overrides]
                story.append(self._table(["Запись", "ID", "Объект", "Тик", "Итог"], rows))
                story.append(Spacer(1, 10))

            expectations = report.get("expectations") or []
            if expectations:
                story.append(Paragraph("Ожидания сценария", h2))
                story.append(self._table(
                    ["Проверка", "Факт", "OK"],
                    [[Paragraph(escape(str(e["expectation"])), self.styles["Normal"]), e["actual"],
                      "да" if e["ok"] else "нет"] for e in expectations],
                ))

            doc.build(story, onFirstPage=self._footer, onLaterPages=self._footer)
            logger.info("PDF-отчёт записан: %s", output_path)
            return True
        except Exception as e:
            logger.error("Ошибка генерации PDF: %s", e, exc_info=True)
            return False


pdf_generator = PDFGenerator()
