"""Periodic spectral differentiation and trigonometric interpolation.

Everything here works on uniform periodic grids x_j = j*T/N, j = 0..N-1.
Derivatives are computed through the FFT; dense differentiation matrices
are provided for operator assembly.
"""

import numpy as np


def wavenumbers(n: int, period: float) -> np.ndarray:
    """FFT wavenumbers k such that d/dx e^{ikx} = ik e^{ikx}."""
    return 2.0 * np.pi * np.fft.fftfreq(n, d=period / n)


def diff(values: np.ndarray, period: float, order: int = 1, axis: int = 0) -> np.ndarray:
    """Spectral derivative of periodic samples along `axis`.

    For odd derivative orders on even grids the Nyquist mode is zeroed,
    which is the standard real-valued convention.
    """
    values = np.asarray(values)
    n = values.shape[axis]
    k = wavenumbers(n, period)
    sym = (1j * k) ** order
    if order % 2 == 1 and n % 2 == 0:
        sym[n // 2] = 0.0
    shape = [1] * values.ndim
    shape[axis] = n
    out = np.fft.ifft(np.fft.fft(values, axis=axis) * sym.reshape(shape), axis=axis)
    if np.isrealobj(values):
        return out.real
    return out


def diff_matrix(n: int, period: float, order: int = 1) -> np.ndarray:
    """Dense Fourier differentiation matrix of the given derivative order.

    Column j holds the derivative of the j-th delta basis vector, so the
    matrix product reproduces `diff` exactly.
    """
    return diff(np.eye(n), period, order=order, axis=0).copy()


def antiderivative(values: np.ndarray, period: float) -> np.ndarray:
    """Antiderivative F with F(0) = 0 of periodic samples f.

    F(x) = mean(f) * x + periodic part; F is periodic iff mean(f) = 0.
    """
    values = np.asarray(values, dtype=float)
    n = values.size
    k = wavenumbers(n, period)
    fhat = np.fft.fft(values)
    mean = fhat[0].real / n
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(k != 0.0, 1.0 / (1j * np.where(k != 0.0, k, 1.0)), 0.0)
    per = np.fft.ifft(fhat * inv).real
    x = period * np.arange(n) / n
    return mean * x + per - per[0]


def trig_interp_matrixfree(samples: np.ndarray, period: float):
    """Return a callable evaluating the trig interpolant (and derivatives).

    `samples` has shape (N, ...); the interpolant is vectorized over query
    points and trailing axes.
    """
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    fhat = np.fft.fft(samples, axis=0)
    k = wavenumbers(n, period)

    def evaluate(x, order: int = 0):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        sym = (1j * k) ** order if order > 0 else np.ones_like(k, dtype=complex)
        if order % 2 == 1 and n % 2 == 0:
            sym = sym.copy()
            sym[n // 2] = 0.0
        phase = np.exp(1j * np.outer(x, k))  # (M, N)
        coeff = fhat * sym.reshape((n,) + (1,) * (samples.ndim - 1))
        out = np.tensordot(phase, coeff, axes=(1, 0)).real / n
        return out

    return evaluate


def mean_integral(values: np.ndarray, period: float, axis: int = 0) -> float | np.ndarray:
    """Integral over one period by the trapezoid rule (spectrally accurate)."""
    return np.mean(np.asarray(values), axis=axis) * period
