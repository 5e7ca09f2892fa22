# app/config.py
"""
Настройки симулятора из окружения (.env подхватывается python-dotenv).

Ни одна настройка не меняет семантику движка: журнал и digest прогона
зависят только от сценария. Здесь живут параметры харнесса (каталог
вывода, предел досрочного прогона), метрик (порог точного перебора
коалиций, Prometheus textfile), PDF-отчёта и логирования.
"""
import os

from dotenv import load_dotenv

load_dotenv()


def _env_str(key: str, default: str = "") -> str:
    return os.getenv(key, default).strip() or default


def _env_int(key: str, default: int, minimum: int = 0) -> int:
    """Некорректное или меньшее `minimum` значение заменяется на default."""
    try:
        value = int(os.getenv(key, str(default)).strip())
    except ValueError:
        return default
    return value if value >= minimum else default


def _env_bool(key: str, default: bool) -> bool:
    val = os.getenv(key, "").strip().lower()
    if val in ("1", "true", "yes", "on"):
        return True
    if val in ("0", "false", "no", "off"):
        return False
    return default


# === Случайные сценарии ===
# Сид генераторов в стресс-тестах; на семантику движка не влияет
HC_SEED = _env_int("HC_SEED", 0)

# === Харнесс ===
HC_OUT_DIR = _env_str("HC_OUT_DIR", "out")
# Сколько тиков drain может прокрутить после скрипта, пока есть незавершённые предложения
HC_DRAIN_MAX_TICKS = _env_int("HC_DRAIN_MAX_TICKS", 1000)
# Исполнять ли очередь фонда в drain от имени директора-исполнителя
HC_DRAIN_EXECUTE_QUEUE = _env_bool("HC_DRAIN_EXECUTE_QUEUE", True)

# === Метрики ===
# До этого числа участников коалиция захвата ищется перебором, дальше жадной оценкой
HC_EXACT_COALITION_MAX = _env_int("HC_EXACT_COALITION_MAX", 20, minimum=1)
# Prometheus textfile со счётчиками прогона; пусто: не пишем
HC_METRICS_FILE = _env_str("HC_METRICS_FILE", "")

# === PDF-отчёт ===
HC_PDF_FONT = _env_str("HC_PDF_FONT", "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf")
HC_PDF_FONT_BOLD = _env_str("HC_PDF_FONT_BOLD", "/usr/share/fonts/truetype/dejavu/DejaVuSans-Bold.ttf")

LOG_LEVEL = _env_str("LOG_LEVEL", "INFO")
