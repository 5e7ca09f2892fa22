# app/__init__.py
"""
Движок управления гибридным кооперативом и симулятор сценариев.

Пакет пишет логи через стандартные логгеры модулей (`app.engine`,
`app.governance`, ...). Уровень берётся из LOG_LEVEL; если корневой логгер
уже настроен (pytest, внешний вызывающий код), обработчики не трогаем.
"""

import logging

from app.config import LOG_LEVEL

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"


def configure_logging(level: str = LOG_LEVEL) -> None:
    root = logging.getLogger()
    if not root.handlers:
        logging.basicConfig(format=LOG_FORMAT, level=logging.INFO)
    value = getattr(logging, str(level).upper(), None)
    root.setLevel(value if isinstance(value, int) else logging.INFO)


configure_logging()

__all__ = ["Engine", "configure_logging", "replay", "verify_log"]


def __getattr__(name):
    # `import app.config` не должен тянуть движок
    if name == "Engine":
        from app.engine import Engine
        return Engine
    if name == "replay":
        from app.engine import replay
        return replay
    if name == "verify_log":
        from app.audit_log import verify_log
        return verify_log
    raise AttributeError(name)
