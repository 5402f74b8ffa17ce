"""hexsim: deterministic hexapod locomotion environment engine.

Terrain generators with curricula, a quasi-static hexapod contact model,
privileged height-map and depth-camera sensors, the full reward suite for
stair climbing / obstacle avoidance / squeezing / joist climbing, a
vectorized episode engine, scripted gait policies with an evolution-
strategy optimizer, and a TCP wire protocol for external trainers.
"""

__version__ = "0.1.0"
