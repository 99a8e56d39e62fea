from .base import (
    ContinuousWorld,
    DiscreteWorld,
    Environment,
    Episode,
    PartPose,
    WorldState,
    world_distance,
)
from .discrete import (
    DiscreteEnvironment,
    HouseholdEnvironment,
    LogisticsEnvironment,
    fixture_path,
    skills_of,
)
from .tabletop import (
    TABLETOP_SKILLS,
    NoiseConfig,
    TabletopEnvironment,
)
