"""Predictive-display vehicle teleoperation toolkit.

Compensates network delay in camera-based remote driving: the delayed
RGB+depth frame is warped into the pose the vehicle is forecast to occupy
once the operator's command takes effect, closing an apparently delay-free
loop. Includes the depth codec, delay statistics, pose forecasting, the
image warp (compiled kernel with a pure-Python fallback), a deterministic
simulator, and a live websocket service for the browser console.
"""

__version__ = "0.1.0"
