# Регистрация генераторов атак в ScenarioRegistry
from app.synth import scenarios  # noqa: F401
