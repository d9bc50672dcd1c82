# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

"""Two-level Friedrichs-Lee sector and its analytic diagonal-difference estimates.

The lowest nontrivial charge sector has basis |V1>, |V2> and |n, w>
(channel n, kinetic energy w >= 0), with
<n,w|H|n,w> = mu_n + w and <Vj|H|n,w> = g_jn(w). V1 is identified with the
neutral kaon K0 and V2 with its antiparticle.
"""

import numpy as np
import scipy.constants

from .effective import h_loy_imp
from .model import ModelError, build_model, sqrt_grid, uniform_grid
from .symmetry import diag_difference
from .utils import NumericalError, hermiticity_residual

# Reduced Planck constant in MeV s.
HBAR_MEV_S = scipy.constants.physical_constants["reduced Planck constant in eV s"][0] * 1e-6

# K_S mean life in seconds.
KAON_TAU_S = 0.89e-10

# m_K - 2 m_pi in MeV.
KAON_MASS_GAP = 200.0

# Weight f in Gamma f = pi sum g g* that matches the LOY decay matrix
# Gamma = 2 pi sum g g*.
LOY_WEIGHT = 0.5

# Cutoff in units of m0 - mu used by the ratio-preserving parameter sets.
CUTOFF_GAPS = 16.0


class FLParams(object):
    """Mass matrix, channel masses and coupling functions of the sector.

    ``couplings[n]`` is a callable mapping an array of kinetic energies w to
    an array of shape (len(w), 2) holding g_1n(w) and g_2n(w).
    """

    def __init__(self, m, mu, couplings, cutoff: float, points: int, grid: str = "sqrt"):
        m = np.asarray(m, dtype=complex)
        mu = [float(x) for x in np.atleast_1d(mu)]

        if m.shape != (2, 2):
            raise ModelError("mass matrix must be 2x2, got %s" % (m.shape,))
        if hermiticity_residual(m) > 1e-12:
            raise ModelError("mass matrix is not Hermitian")
        if not mu or len(mu) != len(couplings):
            raise ModelError(
                "need one coupling per channel mass: %d masses, %d couplings"
                % (len(mu), len(couplings))
            )
        if not cutoff > 0.0:
            raise ModelError("cutoff must be positive, got %r" % cutoff)
        if points < 1:
            raise ModelError("grid needs at least one point, got %r" % points)
        if grid not in ("sqrt", "uniform"):
            raise ModelError("unknown grid kind %r" % grid)

        self.m = m
        self.mu = mu
        self.couplings = list(couplings)
        self.cutoff = float(cutoff)
        self.points = int(points)
        self.grid = grid

    @property
    def m0(self) -> float:
        return float((self.m[0, 0].real + self.m[1, 1].real) / 2.0)

    @property
    def m12(self) -> complex:
        return complex(self.m[0, 1])

    def channel_grid(self, n: int):
        if self.grid == "sqrt":
            return sqrt_grid(self.mu[n], self.cutoff, self.points)

        return uniform_grid(self.mu[n], self.mu[n] + self.cutoff, self.points)

    def coupling_at(self, n: int, omega):
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        values = np.asarray(self.couplings[n](omega), dtype=complex)
        if values.shape != (len(omega), 2):
            raise ModelError(
                "coupling of channel %d returned shape %s, expected (%d, 2)"
                % (n, values.shape, len(omega))
            )

        return values


def threshold_couplings(strength, gap: float, phase: float = 0.0):
    """Couplings g_1 = g e^{i phase} (gap/w)^(1/4) and g_2 = g_1*.

    |g_j(w)|^2 falls off as w^(-1/2) above threshold; the second level
    couples through the complex conjugate, as CPT invariance requires.
    """
    g = complex(strength) * np.exp(1j * phase)

    def coupling(omega):
        g1 = g * (gap / omega) ** 0.25
        return np.column_stack([g1, np.conj(g1)])

    return coupling


def constant_couplings(strength, cutoff: float, phase: float = 0.0):
    """Flat window couplings on [0, cutoff] with g_2 = g_1*."""
    g = complex(strength) * np.exp(1j * phase)

    def coupling(omega):
        g1 = np.where((omega >= 0.0) & (omega <= cutoff), g, 0.0)
        return np.column_stack([g1, np.conj(g1)])

    return coupling


def build_fl_sector(params: FLParams):
    m0 = params.m0

    channels = []
    for n in range(len(params.mu)):
        grid = params.channel_grid(n)
        omega = grid.energies - params.mu[n]
        channels.append(("n%d" % (n + 1), grid, params.coupling_at(n, omega)))

    model = build_model(
        m0,
        params.m - m0 * np.eye(2),
        channels,
        metadata={"V1": "K0", "V2": "K0bar", "sector": "q1=1 q2=0"},
    )

    return model


def fl_gamma(params: FLParams, lam: float, f_weight=None):
    """Gamma_jk = pi sum_n g*_nj(lam) g_nk(lam) / f(lam), with g_nj = g*_jn.

    ``f_weight`` is a number or a callable of lam; the default is 1.
    Channels closed at ``lam`` contribute nothing.
    """
    if f_weight is None:
        f = 1.0
    elif callable(f_weight):
        f = float(f_weight(lam))
    else:
        f = float(f_weight)
    if f == 0.0:
        raise ModelError("weight function vanishes at lambda=%r" % lam)

    gamma = np.zeros((2, 2), dtype=complex)
    open_channels = 0
    for n, mu in enumerate(params.mu):
        omega = lam - mu
        if omega <= 0.0 or omega > params.cutoff:
            continue
        open_channels += 1
        g = params.coupling_at(n, [omega])[0]
        gamma += np.outer(g, g.conj())

    if not open_channels:
        raise ModelError("lambda=%r lies outside the support of every coupling" % lam)

    return np.pi * gamma / f


def _common_threshold(params: FLParams) -> float:
    mu = params.mu[0]
    if any(x != mu for x in params.mu):
        raise ModelError("analytic estimate needs equal channel masses, got %s" % params.mu)

    return float(mu)


def fl_diag_difference_analytic(params: FLParams, f_weight=LOY_WEIGHT):
    """Closed-form and approximate h11 - h22 of the improved Hamiltonian.

    Returns a dict with the exact square-root expression (``exact``), its
    small-|m12| limit (``approx2``), the equivalent real form (``approx3``)
    and the form using the K_S and K_L widths (``approx4``).
    """
    mu = _common_threshold(params)
    m = params.m
    if abs(m[0, 0] - m[1, 1]) > 1e-12 * max(1.0, abs(m[0, 0])):
        raise ModelError("analytic estimate needs m11 = m22")

    m0 = params.m0
    m12 = complex(m[0, 1])
    m21 = complex(m[1, 0])
    gap = m0 - mu
    kappa = abs(m12)

    if not gap > kappa:
        raise NumericalError(
            "m0 - mu = %r must exceed |m12| = %r" % (gap, kappa), method="fl_analytic"
        )

    gamma = fl_gamma(params, m0, f_weight)
    widths = np.linalg.eigvalsh(gamma)
    gamma_s, gamma_l = widths[1], widths[0]

    cross = m21 * gamma[0, 1] - m12 * gamma[1, 0]

    if kappa == 0.0:
        exact = 0j
    else:
        bracket = np.sqrt(gap) / np.sqrt(gap - kappa) - np.sqrt(gap) / np.sqrt(gap + kappa)
        exact = 0.25j * cross / kappa * bracket

    return {
        "exact": complex(exact),
        "approx2": complex(1j * cross / (4.0 * gap)),
        "approx3": float(
            (-m12.real * gamma[0, 1].imag + m12.imag * gamma[0, 1].real) / (2.0 * gap)
        ),
        "approx4": float(m12.imag * (gamma_s - gamma_l) / (4.0 * gap)),
    }


def fl_estimate_kaon(im_m12: float) -> float:
    """Im(m12) gamma_s / (4 (m_K - 2 m_pi)) in MeV, gamma_s = hbar / tau_s."""
    gamma_s = HBAR_MEV_S / KAON_TAU_S

    return float(im_m12) * gamma_s / (4.0 * KAON_MASS_GAP)


def fl_cross_validate(params: FLParams, eta=None):
    """Compare the numeric improved-LOY h11 - h22 with the closed form."""
    model = build_fl_sector(params)
    heff = h_loy_imp(model, eta)
    numeric = diag_difference(heff)
    analytic = fl_diag_difference_analytic(params)["exact"]

    if analytic != 0.0:
        gap = abs(numeric - analytic) / abs(analytic)
    elif abs(numeric) < 1e-12 * max(np.linalg.norm(params.m), 1.0):
        gap = 0.0
    else:
        gap = float("inf")

    return {
        "numeric": numeric,
        "analytic": analytic,
        "relative_gap": float(gap),
        "eta": heff.eta,
    }


def _ratio_params(m0, mu, gamma_s, m12, points, phase, coupling):
    gap = m0 - mu
    cutoff = CUTOFF_GAPS * gap
    # Each level decays with gamma_s / 2, so |g|^2 = gamma_s / (4 pi) at w = gap.
    strength = np.sqrt(gamma_s / (4.0 * np.pi))

    if coupling == "threshold":
        couplings = [threshold_couplings(strength, gap, phase)]
    elif coupling == "constant":
        couplings = [constant_couplings(strength, cutoff, phase)]
    else:
        raise ModelError("unknown coupling family %r" % coupling)

    m = np.array([[m0, m12], [np.conj(m12), m0]], dtype=complex)

    return FLParams(m, [mu], couplings, cutoff, points, grid="sqrt")


def desk_scale_params(
    gap: float = 2.0,
    gamma_s: float = 0.02,
    m12=1e-3j,
    points: int = 4000,
    phase: float = 0.0,
    mu: float = 0.0,
    coupling: str = "threshold",
):
    """CPT-invariant parameters with gamma_s and |m12| comparable to the gap."""
    return _ratio_params(mu + gap, mu, gamma_s, complex(m12), points, phase, coupling)


def paper_scale_params(
    im_m12_ratio: float = 1e-3,
    points: int = 4000,
    phase: float = 0.0,
    coupling: str = "threshold",
):
    """Kaon ratios gamma_s / (m0 - mu) and Im(m12) / (m0 - mu) at unit gap.

    m0 sits at the energy origin so that differences of order 1e-17 between
    diagonal elements are not lost against m0 in float64.
    """
    ratio = HBAR_MEV_S / KAON_TAU_S / KAON_MASS_GAP

    return _ratio_params(0.0, -1.0, ratio, 1j * im_m12_ratio, points, phase, coupling)
