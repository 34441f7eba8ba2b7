from typing import Dict, List, Optional, Type, Union

from app.core.config import AnomalyCategory
from app.core.exceptions import DataError
from app.schemas import AttackScenario, BenignProfile
from app.synth.base import ScenarioGeneratorBase


class ScenarioRegistry:
    """Реестр генераторов атак"""

    SCENARIO_MAPPING: Dict[AnomalyCategory, Type[ScenarioGeneratorBase]] = {}

    @classmethod
    def register_scenario(cls):
        """Декоратор для регистрации генераторов"""
        def decorator(scenario_class: Type[ScenarioGeneratorBase]):
            cls.SCENARIO_MAPPING[scenario_class.NAME] = scenario_class
            return scenario_class
        return decorator

    @classmethod
    def get_class(cls, category: Union[AnomalyCategory, str]) -> Type[ScenarioGeneratorBase]:
        try:
            key = AnomalyCategory(category)
        except ValueError as e:
            raise DataError(f'Неизвестная категория атаки "{category}"') from e
        scenario_class = cls.SCENARIO_MAPPING.get(key)
        if scenario_class is None:
            raise DataError(f'Генератор для категории "{key.value}" не зарегистрирован')
        return scenario_class

    @classmethod
    def get_scenario(
        cls,
        scenario: Union[AttackScenario, AnomalyCategory, str],
        profile: BenignProfile,
    ) -> ScenarioGeneratorBase:
        """Получает генератор по сценарию или имени категории"""
        if isinstance(scenario, AttackScenario):
            return cls.get_class(scenario.category)(profile, scenario)
        return cls.get_class(scenario)(profile)

    @classmethod
    def categories(cls) -> List[AnomalyCategory]:
        return [category for category in AnomalyCategory if category in cls.SCENARIO_MAPPING]

    @classmethod
    def main_features(cls) -> Dict[str, tuple]:
        return {category.value: cls.SCENARIO_MAPPING[category].MAIN_FEATURES for category in cls.categories()}

    @classmethod
    def default_scenarios(cls, categories: Optional[List[str]] = None) -> List[AttackScenario]:
        names = categories or [category.value for category in cls.categories()]
        return [AttackScenario(category=cls.get_class(name).NAME) for name in names]


registry = ScenarioRegistry()
