from abc import ABC, abstractmethod
from typing import Dict, Optional, Tuple

import numpy as np

from app.core.config import AnomalyCategory
from app.schemas import AttackScenario, BenignProfile


Columns = Dict[str, np.ndarray]


class ScenarioGeneratorBase(ABC):
    """Базовый класс генератора атаки: изменяет признаки нормальных потоков"""
    NAME: Optional[AnomalyCategory] = None
    # Признаки, по которым считается "аномалия только по основным признакам"
    MAIN_FEATURES: Tuple[str, ...] = ()
    # Признаки, которые могут выйти за пределы профиля
    DEVIATING_FEATURES: Tuple[str, ...] = ()

    def __init__(self, profile: BenignProfile, scenario: Optional[AttackScenario] = None):
        self.profile = profile
        self.scenario = scenario or AttackScenario(category=self.name)

    @property
    def name(self) -> AnomalyCategory:
        if not self.NAME:
            raise ValueError(f'Не задано "NAME" для {self.__class__.__name__}')
        return self.NAME

    @abstractmethod
    def apply(self, columns: Columns, rng: np.random.Generator) -> None:
        """Изменить колонки сгенерированных нормальных потоков на месте"""
