"""Policy observation, shared verbatim by training and the deployed runtime.

Layout (15 values)::

    [0:3]   setpoint - position, world NED, each component clamped to +-5 m
    [3:9]   first two columns of the body->world rotation matrix
    [9:12]  velocity, world NED
    [12:15] angular velocity, body FRD
"""

import numpy as np

OBS_DIM = 15
POS_ERROR_CLAMP = 5.0


def build_observation(position, velocity, attitude, angular_velocity, setpoint, out=None):
    """Assemble observations; broadcasts over leading batch axes.

    If ``out`` is given the result is written there (and cast to its dtype).
    """
    position = np.asarray(position)
    attitude = np.asarray(attitude)
    if out is None:
        out = np.empty(np.shape(position)[:-1] + (OBS_DIM,), dtype=np.result_type(position, attitude))
    np.clip(np.subtract(setpoint, position), -POS_ERROR_CLAMP, POS_ERROR_CLAMP, out=out[..., 0:3])
    w, x, y, z = attitude[..., 0], attitude[..., 1], attitude[..., 2], attitude[..., 3]
    out[..., 3] = 1 - 2 * (y * y + z * z)
    out[..., 4] = 2 * (x * y + w * z)
    out[..., 5] = 2 * (x * z - w * y)
    out[..., 6] = 2 * (x * y - w * z)
    out[..., 7] = 1 - 2 * (x * x + z * z)
    out[..., 8] = 2 * (y * z + w * x)
    out[..., 9:12] = velocity
    out[..., 12:15] = angular_velocity
    return out


def observation_from_state(state, setpoint, out=None):
    return build_observation(
        state.position, state.velocity, state.attitude, state.angular_velocity, setpoint, out=out
    )


def up_alignment(attitude):
    """Element [2][2] of the body->world rotation: 1 level, -1 inverted."""
    attitude = np.asarray(attitude)
    x, y = attitude[..., 1], attitude[..., 2]
    return 1 - 2 * (x * x + y * y)
