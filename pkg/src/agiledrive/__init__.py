"""Reset-free agile driving: simulator, planner, learner, protocol."""

from .dynamics import (ControlCommand, CorruptedStateError, VehicleParams,
                       VehicleState, dynamic_step, kbm_step)
from .env import (EnvConfig, Observation, ResetFreeEnv, ResetTimeoutError,
                  RewardConfig, StepOutcome, compose_action, compute_reward)
from .mppi import MppiConfig, MppiPlan, RolloutScorer, init_plan, plan, \
    sample_action, shift_prior
from .track import (FootprintConfig, LidarConfig, LidarScan, TrackGeometry,
                    annular_track, collision_indicator, load_track, raycast,
                    save_track)

__version__ = "0.1.0"
