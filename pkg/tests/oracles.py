"""Dense reference implementations used as independent test oracles.

Everything here is built from explicit DFT matrices and explicit Fourier-mode
sums.  None of it calls into the FFT-based code under test.
"""

import numpy as np


def freqs(m):
    return np.fft.fftfreq(m, 1.0 / m)


def dft_matrix(m, d):
    """Unnormalized DFT over ``d`` axes as an ``m**d x m**d`` matrix (C-order flatten)."""
    j = np.arange(m)
    f1 = np.exp(-2j * np.pi * np.outer(freqs(m), j) / m)
    out = np.ones((1, 1), dtype=complex)
    for _ in range(d):
        out = np.kron(out, f1)
    return out


def lattice(m, d):
    """Frequency vectors of the full lattice, shape ``(m**d, d)`` in C order."""
    ks = np.meshgrid(*([freqs(m)] * d), indexing="ij")
    return np.stack([k.ravel() for k in ks], axis=-1)


def multiplier_matrix(m, d, sigma_values):
    """Dense matrix of ``F^{-1} diag(sigma) F`` for lattice values ``sigma_values``."""
    F = dft_matrix(m, d)
    Finv = F.conj().T / m**d
    return Finv @ (np.asarray(sigma_values, dtype=complex)[:, None] * F)


def derivative_matrix(m, d, orders):
    k = lattice(m, d)
    sym = np.ones(k.shape[0], dtype=complex)
    for a, o in enumerate(orders):
        fac = (1j * k[:, a]) ** o
        if o % 2:
            fac[k[:, a] == -m // 2] = 0.0
        sym *= fac
    return multiplier_matrix(m, d, sym).real


def smoother_matrix(m, d, expo):
    k = lattice(m, d)
    return multiplier_matrix(m, d, (1.0 + (k**2).sum(axis=1)) ** expo).real


def _basis_1d(m, k, y):
    """1D Fourier basis of the real interpolant; Nyquist mode uses the cosine."""
    if k == -m // 2:
        return np.cos(0.5 * m * (y + np.pi)) + 0j
    return np.exp(1j * k * (y + np.pi))


def interpolation_matrix(m, d, points):
    """Rows evaluate the trigonometric interpolant at ``points`` by mode summation."""
    points = np.atleast_2d(points)
    F = dft_matrix(m, d)
    klat = lattice(m, d)
    E = np.ones((points.shape[0], klat.shape[0]), dtype=complex)
    for a in range(d):
        cols = np.stack([_basis_1d(m, k, points[:, a]) for k in klat[:, a]], axis=1)
        E *= cols
    return (E @ F).real / m**d


def grid_points(m, d):
    x = -np.pi + 2 * np.pi * np.arange(m) / m
    xs = np.meshgrid(*([x] * d), indexing="ij")
    return np.stack([c.ravel() for c in xs], axis=-1)
