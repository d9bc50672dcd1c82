# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

"""Resolvent sandwiches PHQ (QHQ - z)^-1 QHP on the parallel subspace.

The -i0 boundary prescription is replaced by a finite ``eta``: a real
argument x is evaluated at z = x + i eta.
"""

import numpy as np
import scipy.linalg

from .logging import log
from .model import FullModel, ModelError, split_blocks
from .utils import NumericalError

# Multiple of the median grid spacing used when no eta is given.
DEFAULT_ETA_SPACINGS = 3.0


def grid_spacing(model: FullModel) -> float:
    """Median level spacing of the perpendicular sector."""
    spacings = [c.grid.spacing for c in model.channels if len(c.grid) > 1]
    if spacings:
        return float(np.median(spacings))

    q = model.partition.perpendicular
    if len(q) > 1:
        levels = np.sort(np.linalg.eigvalsh(model.h[np.ix_(q, q)]))
        gaps = np.diff(levels)
        gaps = gaps[gaps > 0.0]
        if len(gaps):
            return float(np.median(gaps))

    return 0.0


def default_eta(model: FullModel) -> float:
    spacing = grid_spacing(model)
    if spacing > 0.0:
        return DEFAULT_ETA_SPACINGS * spacing

    # A single perpendicular level carries no spacing to resolve.
    return 1e-3 * max(abs(model.m0), 1.0)


def _is_diagonal(a) -> bool:
    return not np.count_nonzero(a - np.diag(np.diagonal(a)))


def resolvent_sandwich(phq, qhq, qhp, z, diagonal=None):
    """Compute phq @ (qhq - z)^-1 @ qhp without forming the inverse."""
    if phq.shape[1] == 0:
        return np.zeros((phq.shape[0], qhp.shape[1]), dtype=complex)

    if diagonal is None:
        diagonal = _is_diagonal(qhq)

    if diagonal:
        denominator = np.diagonal(qhq) - z
        if not np.all(denominator):
            raise NumericalError(
                "resolvent is singular at z=%r" % complex(z), method="sigma"
            )
        return (phq / denominator) @ qhp

    shifted = qhq - z * np.eye(qhq.shape[0])
    try:
        solved = scipy.linalg.solve(shifted, qhp)
    except scipy.linalg.LinAlgError as e:
        raise NumericalError(
            "resolvent is singular at z=%r: %s" % (complex(z), e), method="sigma"
        ) from e
    if not np.all(np.isfinite(solved)):
        raise NumericalError(
            "resolvent is not finite at z=%r" % complex(z), method="sigma"
        )

    return phq @ solved


class SelfEnergyEvaluator(object):
    """Evaluates Sigma(x) and Sigma0(x) for one model at a fixed eta.

    Sigma uses the interacting QHQ; Sigma0 uses the free QH0Q. Both share
    PHQ and QHP.
    """

    def __init__(self, phq, qhq, qhp, eta: float, qh0q=None, spacing: float = 0.0):
        if not eta > 0.0:
            raise ModelError("eta must be positive, got %r" % eta)

        self.phq = np.asarray(phq, dtype=complex)
        self.qhq = np.asarray(qhq, dtype=complex)
        self.qhp = np.asarray(qhp, dtype=complex)
        self.qh0q = self.qhq if qh0q is None else np.asarray(qh0q, dtype=complex)
        self.eta = float(eta)
        self.spacing = float(spacing)

        self._diagonal = _is_diagonal(self.qhq)
        self._diagonal0 = _is_diagonal(self.qh0q)

    @classmethod
    def for_model(cls, model: FullModel, eta=None):
        _, phq, qhp, qhq = split_blocks(model)
        q = model.partition.perpendicular

        return cls(
            phq,
            qhq,
            qhp,
            default_eta(model) if eta is None else eta,
            qh0q=model.h0[np.ix_(q, q)],
            spacing=grid_spacing(model),
        )

    @property
    def dimension(self) -> int:
        return self.phq.shape[0]

    @property
    def metadata(self):
        return {"eta": self.eta, "grid_spacing": self.spacing}

    def sigma(self, x: float):
        return resolvent_sandwich(
            self.phq, self.qhq, self.qhp, float(x) + 1j * self.eta, self._diagonal
        )

    def sigma0(self, x: float):
        return resolvent_sandwich(
            self.phq, self.qh0q, self.qhp, float(x) + 1j * self.eta, self._diagonal0
        )

    def sigma_at_complex(self, z: complex):
        """Continue Sigma to a complex argument, shifted by +i eta."""
        z = complex(z)
        if z.imag + self.eta <= 0.0:
            log(
                "self-energy argument %r leaves the upper half plane (eta=%g)",
                z,
                self.eta,
            )

        return resolvent_sandwich(self.phq, self.qhq, self.qhp, z + 1j * self.eta, self._diagonal)

    def spectral_density(self, x: float):
        """Decay matrix Gamma(x) = -i (Sigma(x) - Sigma(x)^dagger)."""
        s = self.sigma(x)

        return -1j * (s - s.conj().T)
