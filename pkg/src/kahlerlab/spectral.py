"""Fourier-spectral calculus on the flat torus C^n / (Z^n + i Z^n).

Real coordinates are ordered ``(x_1, y_1, ..., x_n, y_n)`` with
``z_j = x_j + i y_j``; array axis ``2j`` is ``x_{j+1}`` and axis ``2j+1`` is
``y_{j+1}``.  A scalar field is a plain real ndarray of shape ``grid.shape``.
A Hermitian field is a complex ndarray of shape ``grid.shape + (n, n)``.

The background metric is ``g0_{jk} = delta_jk / 2``, hence the background
volume is 1 and ``Delta_0 = (1/2) * (real Laplacian)``.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np

BACKGROUND_VOLUME = 1.0

DEFAULT_POINTS = {1: 32, 2: 16}


class Grid:
    """Uniform periodic grid with unit period on each of the ``2n`` real axes.

    Parameters
    ----------
    n_complex : int
        Complex dimension, 1 or 2.
    points_per_axis : int, optional
        Power of two, at least 8.  Defaults to 32 for n=1 and 16 for n=2.
    dealias : bool
        When true, nonlinear products formed through :meth:`product` are
        truncated with the 2/3 rule.
    """

    def __init__(self, n_complex: int = 1, points_per_axis: int | None = None,
                 dealias: bool = False):
        if n_complex not in (1, 2):
            raise ValueError("n_complex must be 1 or 2")
        if points_per_axis is None:
            points_per_axis = DEFAULT_POINTS[n_complex]
        N = int(points_per_axis)
        if N < 8 or N & (N - 1):
            raise ValueError("points_per_axis must be a power of two >= 8")
        self.n_complex = n_complex
        self.points_per_axis = N
        self.dealias = bool(dealias)
        self.ndim = 2 * n_complex
        self.shape = (N,) * self.ndim
        self.size = N ** self.ndim
        self.spacing = 1.0 / N
        self.volume = BACKGROUND_VOLUME

    def __repr__(self):
        return (f"Grid(n_complex={self.n_complex}, points_per_axis={self.points_per_axis}, "
                f"dealias={self.dealias})")

    def __eq__(self, other):
        return (isinstance(other, Grid) and other.n_complex == self.n_complex
                and other.points_per_axis == self.points_per_axis
                and other.dealias == self.dealias)

    def __hash__(self):
        return hash((self.n_complex, self.points_per_axis, self.dealias))

    def x_axis(self, j: int) -> int:
        return 2 * j

    def y_axis(self, j: int) -> int:
        return 2 * j + 1

    # ---- lattices -------------------------------------------------------
    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Broadcastable coordinate arrays, one per real axis."""
        x = np.arange(self.points_per_axis) / self.points_per_axis
        out = []
        for a in range(self.ndim):
            shp = [1] * self.ndim
            shp[a] = -1
            out.append(np.broadcast_to(x.reshape(shp), self.shape))
        return tuple(out)

    @cached_property
    def frequencies(self) -> tuple[np.ndarray, ...]:
        """Integer frequency lattice (full FFT layout), broadcastable per axis."""
        N = self.points_per_axis
        f = np.fft.fftfreq(N, 1.0 / N).round().astype(int)
        out = []
        for a in range(self.ndim):
            shp = [1] * self.ndim
            shp[a] = -1
            out.append(f.reshape(shp))
        return tuple(out)

    @cached_property
    def _rfreq(self) -> tuple[np.ndarray, ...]:
        # frequency layout used by rfftn: last axis is half length
        N = self.points_per_axis
        full = np.fft.fftfreq(N, 1.0 / N)
        half = np.fft.rfftfreq(N, 1.0 / N)
        out = []
        for a in range(self.ndim):
            shp = [1] * self.ndim
            shp[a] = -1
            out.append((half if a == self.ndim - 1 else full).reshape(shp))
        return tuple(out)

    @cached_property
    def _k_even(self) -> tuple[np.ndarray, ...]:
        return tuple(2 * np.pi * f for f in self._rfreq)

    @cached_property
    def _k_odd(self) -> tuple[np.ndarray, ...]:
        # the unpaired Nyquist mode has no real odd derivative; zero it
        N = self.points_per_axis
        return tuple(np.where(np.abs(f) == N // 2, 0.0, 2 * np.pi * f) for f in self._rfreq)

    @cached_property
    def flat_laplacian_symbol(self) -> np.ndarray:
        """Symbol of Delta_0 in the rfft layout: -|k|^2 / 2."""
        s = sum(k ** 2 for k in self._k_even)
        return -0.5 * np.broadcast_to(s, self.spectral_shape)

    @cached_property
    def spectral_shape(self) -> tuple[int, ...]:
        return self.shape[:-1] + (self.points_per_axis // 2 + 1,)

    @cached_property
    def _dealias_mask(self) -> np.ndarray:
        N = self.points_per_axis
        m = np.ones(self.spectral_shape, dtype=bool)
        for f in self._rfreq:
            m = m & (np.abs(f) < N / 3.0)
        return m

    # ---- transforms -----------------------------------------------------
    def forward(self, f: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(f)

    def inverse(self, F: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(F, s=self.shape, axes=tuple(range(self.ndim)))

    def truncate(self, f: np.ndarray) -> np.ndarray:
        """2/3-rule low-pass filter."""
        return self.inverse(self.forward(f) * self._dealias_mask)

    def product(self, *fields: np.ndarray) -> np.ndarray:
        """Pointwise product, truncated when the grid has dealiasing on."""
        out = fields[0]
        for g in fields[1:]:
            out = out * g
        return self.truncate(out) if self.dealias else out

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def ones(self) -> np.ndarray:
        return np.ones(self.shape)


def partial_derivative(grid: Grid, f: np.ndarray, axis: int, order: int = 1) -> np.ndarray:
    """Spectral derivative of the trigonometric interpolant of ``f``."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    F = grid.forward(f)
    if order == 1:
        return grid.inverse(1j * grid._k_odd[axis] * F)
    return grid.inverse(-(grid._k_even[axis] ** 2) * F)


def gradient(grid: Grid, f: np.ndarray) -> list[np.ndarray]:
    """All first partials from a single forward transform."""
    F = grid.forward(f)
    return [grid.inverse(1j * k * F) for k in grid._k_odd]


def second_derivatives(grid: Grid, f: np.ndarray) -> dict[tuple[int, int], np.ndarray]:
    """Map ``(a, b)`` with ``a <= b`` to the real second partial along axes a, b."""
    F = grid.forward(f)
    out = {}
    for a in range(grid.ndim):
        out[a, a] = grid.inverse(-(grid._k_even[a] ** 2) * F)
        for b in range(a + 1, grid.ndim):
            out[a, b] = grid.inverse(-(grid._k_odd[a] * grid._k_odd[b]) * F)
    return out


def complex_gradient(grid: Grid, f: np.ndarray) -> np.ndarray:
    """``df/dz_j = (f_{x_j} - i f_{y_j}) / 2`` stacked on a trailing axis."""
    d = gradient(grid, f)
    n = grid.n_complex
    out = np.empty(grid.shape + (n,), dtype=complex)
    for j in range(n):
        out[..., j] = 0.5 * (d[2 * j] - 1j * d[2 * j + 1])
    return out


def complex_hessian(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Hermitian field ``f_{j kbar} = d^2 f / dz_j dzbar_k``."""
    n = grid.n_complex
    d2 = second_derivatives(grid, f)

    def D(a, b):
        return d2[(a, b) if a <= b else (b, a)]

    H = np.empty(grid.shape + (n, n), dtype=complex)
    for j in range(n):
        xj, yj = 2 * j, 2 * j + 1
        H[..., j, j] = 0.25 * (D(xj, xj) + D(yj, yj))
        for k in range(j + 1, n):
            xk, yk = 2 * k, 2 * k + 1
            val = 0.25 * ((D(xj, xk) + D(yj, yk)) + 1j * (D(xj, yk) - D(yj, xk)))
            H[..., j, k] = val
            H[..., k, j] = np.conj(val)
    return H


def integrate(grid: Grid, f: np.ndarray, weight: np.ndarray | None = None) -> float:
    """Periodic trapezoid rule; ``weight`` multiplies the integrand."""
    if weight is not None:
        if np.shape(weight) != grid.shape:
            raise ValueError("weight must share the grid")
        return float(np.mean(f * weight)) * grid.volume
    return float(np.mean(f)) * grid.volume


def spectral_energy(grid: Grid, f: np.ndarray) -> float:
    """Sum of squared Fourier coefficients, equal to the integral of f^2."""
    F = np.fft.fftn(f) / grid.size
    return float(np.sum(np.abs(F) ** 2)) * grid.volume


def flat_laplacian(grid: Grid, f: np.ndarray) -> np.ndarray:
    return grid.inverse(grid.flat_laplacian_symbol * grid.forward(f))


def flat_inverse_laplacian(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Zero-mean ``u`` with ``Delta_0 u = f - mean(f)``."""
    return flat_shifted_inverse(grid, f, 0.0)


def flat_shifted_inverse(grid: Grid, f: np.ndarray, shift: complex = 0.0) -> np.ndarray:
    """Apply ``(Delta_0 - shift)^{-1}``; for ``shift == 0`` the mean is dropped.

    Complex ``shift`` gives a complex result.
    """
    sym = grid.flat_laplacian_symbol - shift
    if shift == 0:
        sym = sym.copy()
        sym.flat[0] = np.inf
    F = np.fft.fftn(f) if np.iscomplexobj(f) or np.iscomplexobj(sym) else None
    if F is None:
        return grid.inverse(grid.forward(f) / sym)
    # complex path uses the full transform
    full = -0.5 * sum((2 * np.pi * q) ** 2 for q in grid.frequencies) - shift
    full = np.broadcast_to(full, grid.shape).astype(complex)
    if shift == 0:
        full = full.copy()
        full.flat[0] = np.inf
    return np.fft.ifftn(F / full)
