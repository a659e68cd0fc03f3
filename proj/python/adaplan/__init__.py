"""Uncertainty-gated adaptive replanning with a diffusion planner.

Configs are dicts with the same sections as the CLI's --config file
(env, behavior, diffuser, invdyn, planner, eval).
"""

import json

from . import _adaplan
from ._adaplan import (
    CapacityError,
    FormatError,
    NumericError,
    ShapeError,
    combine_members,
    cosine_schedule,
    entropy,
    softmax,
)

__all__ = [
    "CapacityError",
    "Env",
    "FormatError",
    "NumericError",
    "Planner",
    "ShapeError",
    "combine_members",
    "cosine_schedule",
    "entropy",
    "generate_dataset",
    "softmax",
    "train_diffuser",
    "train_invdyn",
]


def _dump(config):
    return json.dumps(config or {})


def Env(config=None):
    return _adaplan.Env(_dump(config))


def Planner(diffuser, ensemble, config=None):
    return _adaplan.Planner(str(diffuser), str(ensemble), _dump(config))


def generate_dataset(path, steps, seed, config=None, behavior_epsilon=None):
    return _adaplan.generate_dataset(str(path), steps, seed, _dump(config), behavior_epsilon)


def train_diffuser(data, out, steps, seed, config=None):
    return _adaplan.train_diffuser(str(data), str(out), steps, seed, _dump(config))


def train_invdyn(data, out, seed, config=None, members=None):
    return _adaplan.train_invdyn(str(data), str(out), seed, _dump(config), members)
