"""Bundled example models used by tests, the CLI, and documentation.

Two models ship with the package:

* :func:`bsc_target` / (see :mod:`coordsim.construction` for the source-model
  form) -- uniform binary signal over a BSC(0.1) with a constant auxiliary
  variable and an action that is a noisy copy of the channel output.
* :func:`planted_target` -- a target built from a known binary-auxiliary
  witness, used to exercise witness recovery.
"""

from __future__ import annotations

import numpy as np

from .construction import SourceModel
from .probability import Alphabet, ConditionalPMF, JointPMF
from .region import AuxiliaryDecomposition, CoordinationTarget, induced_joint
from .probability import condition, marginalize

__all__ = [
    "binary_symmetric_channel",
    "bsc_target",
    "bsc_model",
    "chained_model",
    "planted_witness",
    "planted_target",
]

U = Alphabet("U", 2)
X = Alphabet("X", 2)
Y = Alphabet("Y", 2)
V = Alphabet("V", 2)
W = Alphabet("W", 2)


def binary_symmetric_channel(p: float, in_axis: Alphabet = X, out_axis: Alphabet = Y) -> ConditionalPMF:
    t = np.array([[1.0 - p, p], [p, 1.0 - p]])
    return ConditionalPMF((in_axis,), (out_axis,), t)


def bsc_target(crossover: float = 0.1, action_noise: float = 0.1) -> CoordinationTarget:
    """Uniform X over BSC(crossover); V is a BSC(action_noise) copy of Y,
    ignoring U and X.  The natural witness is a constant W."""
    flip = np.array([[1.0 - action_noise, action_noise], [action_noise, 1.0 - action_noise]])
    act = np.broadcast_to(flip[None, None, :, :], (2, 2, 2, 2))
    return CoordinationTarget(
        p_u=JointPMF.uniform((U,)),
        p_x=JointPMF.uniform((X,)),
        channel=binary_symmetric_channel(crossover),
        action_rule=ConditionalPMF((U, X, Y), (V,), np.array(act)),
    )


def bsc_model(crossover: float = 0.1, action_noise: float = 0.1) -> SourceModel:
    """Source-model form of :func:`bsc_target`: constant auxiliary W = 0,
    the action a noisy copy of the channel output."""
    w_rule = np.zeros((2, 2, 2))
    w_rule[..., 0] = 1.0
    flip = np.array([[1.0 - action_noise, action_noise], [action_noise, 1.0 - action_noise]])
    v_rule = np.broadcast_to(flip[None, :, :], (2, 2, 2))
    return SourceModel(
        u_prior=JointPMF.uniform((U,)),
        x_prior=JointPMF.uniform((X,)),
        channel=binary_symmetric_channel(crossover),
        w_rule=ConditionalPMF((X, Alphabet("U", 2)), (W,), w_rule),
        v_rule=ConditionalPMF((W, Y), (V,), np.array(v_rule)),
    )


def chained_model(crossover: float = 0.05, w_noise: float = 0.35) -> SourceModel:
    """A model whose auxiliary genuinely depends on the source: W is a
    noisy copy of U, so the chained positions (a3 empty only for uniform X,
    b3 nonempty) and the one-time pads are exercised end to end."""
    w_rule = np.empty((2, 2, 2))  # [x, u, w]
    w_rule[:, 0] = [1.0 - w_noise, w_noise]
    w_rule[:, 1] = [w_noise, 1.0 - w_noise]
    v_rule = np.empty((2, 2, 2))  # [w, y, v]
    v_rule[0, 0] = [0.9, 0.1]
    v_rule[0, 1] = [0.6, 0.4]
    v_rule[1, 0] = [0.4, 0.6]
    v_rule[1, 1] = [0.1, 0.9]
    return SourceModel(
        u_prior=JointPMF.uniform((U,)),
        x_prior=JointPMF((X,), np.array([0.7, 0.3])),
        channel=binary_symmetric_channel(crossover),
        w_rule=ConditionalPMF((X, Alphabet("U", 2)), (W,), w_rule),
        v_rule=ConditionalPMF((W, Y), (V,), v_rule),
    )


def planted_witness() -> AuxiliaryDecomposition:
    """The binary-auxiliary witness behind :func:`planted_target`."""
    w_given_ux = np.empty((2, 2, 2))
    w_given_ux[0, 0] = [0.9, 0.1]
    w_given_ux[0, 1] = [0.8, 0.2]
    w_given_ux[1, 0] = [0.2, 0.8]
    w_given_ux[1, 1] = [0.1, 0.9]
    v_given_wy = np.empty((2, 2, 2))
    v_given_wy[0, 0] = [0.95, 0.05]
    v_given_wy[0, 1] = [0.70, 0.30]
    v_given_wy[1, 0] = [0.30, 0.70]
    v_given_wy[1, 1] = [0.05, 0.95]
    return AuxiliaryDecomposition(
        2,
        ConditionalPMF((U, X), (W,), w_given_ux),
        ConditionalPMF((W, Y), (V,), v_given_wy),
    )


def planted_target(crossover: float = 0.05) -> CoordinationTarget:
    """A target whose action rule is induced by :func:`planted_witness`
    through a BSC(crossover); the witness is feasible by construction."""
    base = CoordinationTarget(
        p_u=JointPMF.uniform((U,)),
        p_x=JointPMF.uniform((X,)),
        channel=binary_symmetric_channel(crossover),
        # placeholder rule; replaced below by the induced one
        action_rule=ConditionalPMF((U, X, Y), (V,), np.full((2, 2, 2, 2), 0.5)),
    )
    ind = induced_joint(base, planted_witness())
    return CoordinationTarget(
        p_u=base.p_u,
        p_x=base.p_x,
        channel=base.channel,
        action_rule=condition(marginalize(ind, ("U", "X", "Y", "V")), ["V"], ["U", "X", "Y"]),
    )
