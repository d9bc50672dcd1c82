# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

import csv
import io
import pathlib

import numpy as np
import scipy.linalg

# Below this |x| the kernel (1 - e^{-x}) / x is evaluated by its series.
SERIES_THRESHOLD = 1e-8


class NumericalError(Exception):
    """Represents a numerical failure attributable to a computation method."""

    def __init__(self, *args, method: str):
        self.method = method
        super().__init__(*args)


def frobenius(a) -> float:
    return float(np.linalg.norm(a))


def hermiticity_residual(a) -> float:
    """Relative distance of ``a`` from its adjoint."""
    a = np.asarray(a)
    scale = frobenius(a)
    if scale == 0.0:
        return 0.0

    return frobenius(a - a.conj().T) / scale


def relaxation_kernel(x):
    """Evaluate (1 - e^{-x}) / x elementwise, finite at x = 0."""
    x = np.asarray(x, dtype=complex)
    small = np.abs(x) < SERIES_THRESHOLD
    safe = np.where(small, 1.0, x)
    out = -np.expm1(-safe) / safe

    return np.where(small, 1.0 - x / 2.0 + x * x / 6.0, out)


def propagate_hermitian(h, psi0, times):
    """Return e^{-itH} psi0 for each t as rows of an array.

    Uses one Hermitian eigendecomposition; negative times are allowed.
    """
    try:
        energies, vectors = scipy.linalg.eigh(h)
    except np.linalg.LinAlgError as e:
        raise NumericalError("eigendecomposition of H failed: %s" % e, method="exact") from e

    psi0 = np.asarray(psi0, dtype=complex)
    times = np.asarray(times, dtype=float).ravel()
    coefficients = vectors.conj().T @ psi0
    phases = np.exp(-1j * np.outer(times, energies))
    states = (phases * coefficients) @ vectors.T

    # t = 0 returns psi0 exactly.
    states[times == 0.0] = psi0

    return states


def format_real(value) -> str:
    """Full round-trip representation for CSV output."""
    return "%.17g" % float(value)


def complex_columns(name: str):
    return ["%s_re" % name, "%s_im" % name]


def complex_cells(value):
    value = complex(value)
    return [format_real(value.real), format_real(value.imag)]


def write_if_different(p: pathlib.Path, data: bytes):
    """Write a file if it is missing or its content is different."""
    if p.exists():
        with p.open("rb") as fh:
            existing = fh.read()
        write = existing != data
    else:
        write = True

    if write:
        with p.open("wb") as fh:
            fh.write(data)


def write_csv(p: pathlib.Path, header: dict, columns, rows):
    """Write a table preceded by ``# key=value`` lines describing it.

    Header keys are emitted in sorted order so identical inputs produce
    identical bytes.
    """
    buf = io.StringIO()

    for key in sorted(header):
        buf.write("# %s=%s\n" % (key, header[key]))

    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow(row)

    p.parent.mkdir(parents=True, exist_ok=True)
    write_if_different(p, buf.getvalue().encode("utf-8"))
