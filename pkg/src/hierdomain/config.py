import logging
import os
from dataclasses import dataclass, field


log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Budgets:
    """Per-task limits on skill executions and replanning iterations"""
    interactions: int = 10
    replans: int = 20

    def __post_init__(self):
        if self.interactions < 0 or self.replans < 0:
            raise ValueError("Budgets must not be negative")


@dataclass(frozen=True)
class SearchConfig:
    """Random search over classifier hyperparameters.

    Bounds default to [default / bound_factor, default * bound_factor], sampled
    log-uniformly. `bounds` overrides them per hyperparameter name.
    """
    samples: int = 200
    seed: int = 0
    bound_factor: float = 100.0
    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("SearchConfig.samples must be at least 1")
        if self.bound_factor <= 1:
            raise ValueError("SearchConfig.bound_factor must exceed 1")


@dataclass(frozen=True)
class LearnerConfig:
    max_depth: int = 4
    node_budget: int = 100_000
    tau_hp: float = 0.9
    tau_llm: float = 0.6
    refine_rounds: int = 5
    search_samples: int = 200
    seed: int = 0
    tau_sim: float = 0.01
    fallback_on_unsolvable: bool = True
    bound_factor: float = 100.0

    def __post_init__(self):
        if not 0 <= self.tau_llm <= self.tau_hp <= 1:
            raise ValueError("Thresholds must satisfy 0 <= tau_llm <= tau_hp <= 1")
        if self.tau_sim <= 0:
            raise ValueError("tau_sim must be positive")
        if self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")

    @property
    def search(self) -> SearchConfig:
        return SearchConfig(self.search_samples, self.seed, self.bound_factor)


@dataclass(frozen=True)
class LiveEndpoint:
    """Chat-completion endpoint of the live oracle backend"""
    url: str
    api_key: str
    model: str = "gpt-4.1-mini"
    temperature: float = 0.0
    timeout: float = 120.0
    # earlier request/answer pairs sent ahead of each request
    history_turns: int = 2

    def __post_init__(self):
        if self.history_turns < 0:
            raise ValueError("LiveEndpoint.history_turns must not be negative")

    @classmethod
    def from_environ(cls, environ: dict[str, str] | None = None) -> "LiveEndpoint":
        env = os.environ if environ is None else environ
        url = env.get("HIERDOMAIN_ENDPOINT")
        if not url:
            raise ValueError("HIERDOMAIN_ENDPOINT environment variable not set")
        api_key = env.get("HIERDOMAIN_API_KEY")
        if not api_key:
            raise ValueError("HIERDOMAIN_API_KEY environment variable not set")
        try:
            temperature = float(env.get("HIERDOMAIN_TEMPERATURE", "0"))
        except ValueError:
            raise ValueError("HIERDOMAIN_TEMPERATURE must be a number") from None
        try:
            turns = int(env.get("HIERDOMAIN_HISTORY_TURNS", str(cls.history_turns)))
        except ValueError:
            raise ValueError("HIERDOMAIN_HISTORY_TURNS must be an integer") from None
        return cls(url, api_key, env.get("HIERDOMAIN_MODEL", cls.model), temperature, history_turns=turns)
