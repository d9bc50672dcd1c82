# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

"""The antiunitary CPT operator and CPT-invariant two-level models.

Phase convention on the parallel subspace: Theta|1> = -|2>, Theta|2> = -|1>.
Continuum states map as Theta|e,J> = -|e,Jbar> under a channel pairing;
channels are self-paired unless told otherwise.
"""

import numpy as np

from .effective import EffectiveHamiltonian
from .model import ContinuumGrid, FullModel, ModelError, build_model
from .utils import frobenius

UNITARY_TOLERANCE = 1e-12


class AntiUnitaryOp(object):
    """Theta = U K, with K complex conjugation in the defining basis."""

    def __init__(self, unitary_part, basis: str = "model"):
        u = np.array(unitary_part, dtype=complex)
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise ModelError("unitary part must be square, got %s" % (u.shape,))
        residual = frobenius(u.conj().T @ u - np.eye(u.shape[0]))
        if residual > UNITARY_TOLERANCE * max(1.0, np.sqrt(u.shape[0])):
            raise ModelError("unitary part is not unitary (residual %g)" % residual)

        u.setflags(write=False)
        self.unitary_part = u
        self.basis = basis

    def apply(self, vector):
        return self.unitary_part @ np.conj(np.asarray(vector, dtype=complex))

    def squared(self):
        """Unitary matrix of Theta^2 = U U*."""
        return self.unitary_part @ self.unitary_part.conj()


def is_antiunitary(theta: AntiUnitaryOp, rng, samples: int = 8) -> float:
    """Largest |<Theta a|Theta b> - <b|a>| over random vector pairs."""
    n = theta.unitary_part.shape[0]
    worst = 0.0
    for _ in range(samples):
        a = rng.normal(size=n) + 1j * rng.normal(size=n)
        b = rng.normal(size=n) + 1j * rng.normal(size=n)
        lhs = np.vdot(theta.apply(a), theta.apply(b))
        worst = max(worst, float(abs(lhs - np.vdot(b, a))))

    return worst


def build_cpt(model: FullModel, channel_pairing=None) -> AntiUnitaryOp:
    """Theta for a two-level model; ``channel_pairing`` maps J to Jbar."""
    if model.dimension != 2:
        raise ModelError(
            "CPT operator is defined for two unstable levels, got %d" % model.dimension
        )

    labels = [c.label for c in model.channels]
    pairing = dict((label, label) for label in labels)
    pairing.update(channel_pairing or {})

    for label, partner in pairing.items():
        if label not in labels or partner not in labels:
            raise ModelError("channel pairing names unknown channel %r -> %r" % (label, partner))
        if pairing[partner] != label:
            raise ModelError("channel pairing is not an involution at %r" % label)
        if not model.channel(label).grid.same_as(model.channel(partner).grid):
            raise ModelError("paired channels %r and %r have different grids" % (label, partner))

    size = model.partition.size
    u = np.zeros((size, size), dtype=complex)

    p = model.partition.parallel
    u[p[1], p[0]] = -1.0
    u[p[0], p[1]] = -1.0

    for channel in model.channels:
        partner = model.channel(pairing[channel.label])
        u[partner.indices, channel.indices] = -1.0

    assigned = np.concatenate([p] + [c.indices for c in model.channels])
    if len(assigned) != size:
        raise ModelError("CPT operator needs every basis state in a level or a channel")

    return AntiUnitaryOp(u, basis="model")


def cpt_residual(theta: AntiUnitaryOp, h) -> float:
    """||U H* - H U||, zero exactly when Theta H Theta^-1 = H."""
    h = np.asarray(h, dtype=complex)
    u = theta.unitary_part
    if h.shape != u.shape:
        raise ModelError("operator shape %s does not match Theta %s" % (h.shape, u.shape))

    return frobenius(u @ h.conj() - h @ u)


def make_cpt_invariant(model_spec) -> FullModel:
    """Build a CPT-invariant two-level model.

    ``model_spec`` holds ``m0``, complex ``m12`` and ``channels``, a list of
    dicts with ``label``, ``grid`` and ``coupling`` (the level-1 couplings).
    Level 2 couples through the complex conjugate, H22 = H11 = m0 and
    H21 = m12*.
    """
    try:
        m0 = model_spec["m0"]
        m12 = complex(model_spec["m12"])
        channels = model_spec["channels"]
    except (KeyError, TypeError) as e:
        raise ModelError("CPT model spec is incomplete: %s" % e) from e

    if np.iscomplexobj(m0) and np.imag(m0) != 0.0:
        raise ModelError("m0 must be real, got %r" % m0)

    h1_parallel = np.array([[0.0, m12], [m12.conjugate(), 0.0]])

    built = []
    for channel in channels:
        grid = channel["grid"]
        if not isinstance(grid, ContinuumGrid):
            raise ModelError("channel %r needs a ContinuumGrid" % channel.get("label"))
        g1 = np.asarray(channel["coupling"], dtype=complex)
        if g1.shape != (len(grid),):
            raise ModelError(
                "channel %r has %d couplings for a %d point grid"
                % (channel.get("label"), g1.size, len(grid))
            )
        built.append((channel["label"], grid, np.column_stack([g1, g1.conj()])))

    model = build_model(float(np.real(m0)), h1_parallel, built)
    model.metadata["cpt_invariant"] = True

    return model


def diag_difference(heff: EffectiveHamiltonian) -> complex:
    """h11 - h22 of a two-level effective Hamiltonian."""
    if heff.dimension != 2:
        raise ModelError("diagonal difference needs a 2x2 Hamiltonian, got %d" % heff.dimension)

    return complex(heff.matrix[0, 0] - heff.matrix[1, 1])
