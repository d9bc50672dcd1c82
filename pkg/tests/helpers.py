# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

"""Small deterministic models shared by the test modules."""

import numpy as np

from loylab.model import ContinuumGrid, build_model, build_two_level_model, uniform_grid


def single_level_q_model(m0=2.0, energy=3.0, g=0.3):
    """Two levels and one continuum point at ``energy`` coupled to level 1 only."""
    grid = ContinuumGrid([energy], [1.0])

    return build_two_level_model(m0, np.zeros((2, 2)), [(grid, [[g, 0.0]])])


def flat_two_level_model(g1=0.06, g2=0.04j, h1=None, points=800, m0=2.0):
    """Both levels coupled to one flat band on [0, 4]."""
    if h1 is None:
        h1 = [[0.005, 0.003], [0.003, -0.005]]
    grid = uniform_grid(0.0, 4.0, points)
    couplings = np.column_stack([np.full(points, g1), np.full(points, g2)])

    return build_two_level_model(m0, h1, [(grid, couplings)])


def two_channel_model(g1=0.06, g2=0.05, h1=None, points=800, m0=2.0):
    """Level k decays into its own flat channel Jk on [0, 4]."""
    if h1 is None:
        h1 = [[0.005, 0.003], [0.003, -0.005]]
    grid = uniform_grid(0.0, 4.0, points)
    zeros = np.zeros(points)
    first = np.column_stack([np.full(points, g1), zeros])
    second = np.column_stack([zeros, np.full(points, g2)])

    return build_two_level_model(m0, h1, [(grid, first), (grid, second)])


def three_level_model(rng, points=60, m0=2.0):
    grid = uniform_grid(0.0, 4.0, points)
    h1 = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    h1 = 0.05 * (h1 + h1.conj().T)
    couplings = 0.05 * (rng.normal(size=(points, 3)) + 1j * rng.normal(size=(points, 3)))

    return build_model(m0, h1, [("J1", grid, couplings)])
