from crashsurrogate.rollout.integrate import euler_step
from crashsurrogate.rollout.rollout import RolloutResult, rollout, rollout_reference, predict_step, differentiable_rollout
