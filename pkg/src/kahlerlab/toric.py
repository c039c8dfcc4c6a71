"""Torus-invariant reduction in one complex dimension.

Potentials are stored as ``F(xi) = xi^2 / 2 + p(xi)`` with ``p`` periodic of
period 1, sampled on a uniform grid and evaluated through its trigonometric
interpolant.  The Legendre dual of such a function has the same form.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConvexityLoss

CONVEXITY_MARGIN = 1e-8


class ConvexPotential:
    """``F(s) = s^2/2 + p(s)`` with ``p`` given by samples on ``s_i = i / M``."""

    def __init__(self, periodic: np.ndarray, check: bool = True):
        p = np.asarray(periodic, dtype=float)
        if p.ndim != 1 or len(p) < 4:
            raise ValueError("periodic samples must be a 1-D array")
        self.periodic = p
        self.M = len(p)
        self._coef = np.fft.fft(p) / self.M
        self._freq = np.fft.fftfreq(self.M, 1.0 / self.M)
        if check:
            margin = self.min_second_derivative()
            if margin < CONVEXITY_MARGIN:
                raise ConvexityLoss(f"second derivative {margin:.3e} below margin")

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.M) / self.M

    @classmethod
    def quadratic(cls, M: int = 64) -> "ConvexPotential":
        return cls(np.zeros(M))

    @classmethod
    def from_function(cls, func, M: int = 64) -> "ConvexPotential":
        return cls(func(np.arange(M) / M))

    def _periodic_derivative(self, s, order: int) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        c = self._coef
        m = self._freq
        N = self.M
        phase = np.exp(2j * np.pi * np.multiply.outer(s, m))
        factor = (2j * np.pi * m) ** order
        if N % 2 == 0:
            # Nyquist term: use the real cosine interpolant
            ny = N // 2
            idx = np.where(np.abs(m) == ny)[0][0]
            keep = np.ones(N, dtype=bool)
            keep[idx] = False
            main = np.real(phase[..., keep] @ (factor[keep] * c[keep]))
            cny = np.real(c[idx])
            w = np.pi * N
            nyq = cny * [np.cos, lambda z: -w * np.sin(z), lambda z: -w * w * np.cos(z),
                         lambda z: w ** 3 * np.sin(z)][order](w * s)
            return main + nyq
        return np.real(phase @ (factor * c))

    def periodic_part(self, s, order: int = 0) -> np.ndarray:
        return self._periodic_derivative(s, order)

    def value(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return 0.5 * s * s + self._periodic_derivative(s, 0)

    def d1(self, s) -> np.ndarray:
        return np.asarray(s, dtype=float) + self._periodic_derivative(s, 1)

    def d2(self, s) -> np.ndarray:
        return 1.0 + self._periodic_derivative(s, 2)

    def d3(self, s) -> np.ndarray:
        return self._periodic_derivative(s, 3)

    def min_second_derivative(self, oversample: int = 8) -> float:
        s = np.arange(self.M * oversample) / (self.M * oversample)
        return float(np.min(self.d2(s)))

    def slope_bound(self) -> float:
        s = np.arange(self.M * 8) / (self.M * 8)
        return float(np.max(np.abs(self._periodic_derivative(s, 1))))


def solve_gradient_map(F: ConvexPotential, x: np.ndarray, tol: float = 1e-14,
                       max_iter: int = 200) -> np.ndarray:
    """Solve ``F'(xi) = x`` by bracketed Newton; ``F'`` is strictly increasing."""
    x = np.asarray(x, dtype=float)
    # sampled slope bound can undershoot the true max slightly: pad the bracket
    B = 1.1 * F.slope_bound() + 1e-6
    lo, hi = x - B, x + B
    xi = np.clip(x - F.periodic_part(x, 1), lo, hi)
    scale = max(1.0, float(np.max(np.abs(x))))
    for _ in range(max_iter):
        r = F.d1(xi) - x
        if np.max(np.abs(r)) <= tol * scale:
            break
        lo = np.where(r < 0, xi, lo)
        hi = np.where(r > 0, xi, hi)
        cand = xi - r / F.d2(xi)
        bad = (cand <= lo) | (cand >= hi)
        xi = np.where(bad, 0.5 * (lo + hi), cand)
    return xi


def legendre(F: ConvexPotential, M: int | None = None) -> ConvexPotential:
    """Dual potential ``u(x) = x xi - F(xi)`` at ``F'(xi) = x``, on an ``M``-point grid."""
    M = M or F.M
    x = np.arange(M) / M
    xi = solve_gradient_map(F, x)
    u = x * xi - F.value(xi)
    return ConvexPotential(u - 0.5 * x * x)


def brute_force_legendre(F: ConvexPotential, x: np.ndarray, dense: int = 4001) -> np.ndarray:
    """``sup_xi (x xi - F(xi))`` by dense search and bounded scalar refinement."""
    from scipy.optimize import minimize_scalar

    B = F.slope_bound() + 1e-9
    out = np.empty(len(x))
    for i, xv in enumerate(np.asarray(x, dtype=float)):
        grid = np.linspace(xv - B - 0.01, xv + B + 0.01, dense)
        vals = xv * grid - F.value(grid)
        j = int(np.argmax(vals))
        lo, hi = grid[max(j - 1, 0)], grid[min(j + 1, dense - 1)]
        r = minimize_scalar(lambda s: -(xv * s - float(F.value(s))), bounds=(lo, hi),
                            method="bounded", options={"xatol": 1e-14})
        out[i] = max(-r.fun, vals[j])
    return out


@dataclass(frozen=True)
class LegendreResiduals:
    slope: float          # max |u'(x) - xi(x)|
    inverse_slope: float  # max |F'(xi(x)) - x|
    reciprocity: float    # max |u''(x) F''(xi(x)) - 1|

    def max(self) -> float:
        return max(self.slope, self.inverse_slope, self.reciprocity)


def legendre_identity_residuals(F: ConvexPotential, u: ConvexPotential,
                                samples: int | None = None) -> LegendreResiduals:
    M = samples or u.M
    x = np.arange(M) / M
    xi = solve_gradient_map(F, x)
    return LegendreResiduals(
        float(np.max(np.abs(u.d1(x) - xi))),
        float(np.max(np.abs(F.d1(xi) - x))),
        float(np.max(np.abs(u.d2(x) * F.d2(xi) - 1.0))),
    )


# ---- paths of symplectic potentials ---------------------------------------------------------------
_D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


@dataclass
class ToricPath:
    """Samples ``u(t_k, x_i) = x_i^2/2 + q[k, i]`` at uniformly spaced times."""

    times: np.ndarray
    periodic: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.periodic = np.asarray(self.periodic, dtype=float)
        if len(self.times) < 5:
            raise ValueError("a path needs at least five time samples")
        dt = np.diff(self.times)
        if np.max(np.abs(dt - dt[0])) > 1e-9 * abs(dt[0]):
            raise ValueError("times must be uniformly spaced")
        self.dt = float(dt[0])

    @property
    def M(self) -> int:
        return self.periodic.shape[1]

    def potential(self, k: int) -> ConvexPotential:
        try:
            return ConvexPotential(self.periodic[k])
        except ConvexityLoss as exc:
            raise ConvexityLoss(f"at t={self.times[k]:.6g}: {exc}") from exc

    def time_derivatives(self, k: int):
        """Five-point first and second time derivatives of the periodic part at step k."""
        win = self.periodic[k - 2:k + 3]
        return _D1 @ win / self.dt, _D2 @ win / self.dt ** 2

    def interior(self):
        return range(2, len(self.times) - 2)

    @classmethod
    def from_potentials(cls, times, potentials):
        return cls(np.asarray(times), np.array([p.periodic for p in potentials]))


def _spectral_dx(f: np.ndarray, order: int = 1) -> np.ndarray:
    M = len(f)
    k = 2j * np.pi * np.fft.fftfreq(M, 1.0 / M)
    if order % 2 == 1 and M % 2 == 0:
        k[M // 2] = 0.0
    return np.real(np.fft.ifft(k ** order * np.fft.fft(f)))


RESIDUAL_COLUMNS = ("t", "max_abs_udd", "max_abs_transported", "max_abs_mismatch")


def l2_toric_residual(path: ToricPath):
    """Per interior time: ``max|u_tt|``, ``max|F_tt - F_t'^2/F''|`` at ``xi(x)`` and their mismatch.

    Along an L2 geodesic both vanish; in general ``-u_tt`` equals the transported expression.
    """
    duals = [legendre(path.potential(k)) for k in range(len(path.times))]
    Fq = np.array([d.periodic for d in duals])
    x = np.arange(path.M) / path.M
    rows = []
    for k in path.interior():
        _, udd = path.time_derivatives(k)
        F = duals[k]
        win = Fq[k - 2:k + 3]
        Ft = ConvexPotential(_D1 @ win / path.dt, check=False)
        Ftt = ConvexPotential(_D2 @ win / path.dt ** 2, check=False)
        xi = solve_gradient_map(F, x)
        transported = Ftt.periodic_part(xi) - Ft.periodic_part(xi, 1) ** 2 / F.d2(xi)
        rows.append({
            "t": float(path.times[k]),
            "max_abs_udd": float(np.max(np.abs(udd))),
            "max_abs_transported": float(np.max(np.abs(transported))),
            "max_abs_mismatch": float(np.max(np.abs(transported + udd))),
        })
    return rows


def gradient_toric_residual(path: ToricPath):
    """Per interior time, the field ``2 L(-u_tt + |d u_t|^2) - |Hess u_t|^2 + (L u_t)^2``.

    ``L f = d/dx (f_x / u'')``.  In one dimension the Hessian norm of ``u_t``
    measured by the Kahler metric equals ``(L u_t)^2``.
    """
    out = []
    for k in path.interior():
        path.potential(k)  # convexity check
        q = path.periodic[k]
        ud, udd = path.time_derivatives(k)
        upp = 1.0 + _spectral_dx(q, 2)
        inv = 1.0 / upp
        ud_x = _spectral_dx(ud)

        def lap(f):
            return _spectral_dx(inv * _spectral_dx(f))

        grad_sq = inv * ud_x ** 2
        lap_ud = lap(ud)
        hess_sq = lap_ud ** 2
        res = 2.0 * lap(-udd + grad_sq) - hess_sq + lap_ud ** 2
        out.append((float(path.times[k]), res))
    return out


def literal_hessian_norm(path: ToricPath, k: int) -> np.ndarray:
    """``(u_t'' / u'')^2``: the Hessian norm read with plain index contractions."""
    q = path.periodic[k]
    ud, _ = path.time_derivatives(k)
    upp = 1.0 + _spectral_dx(q, 2)
    return (_spectral_dx(ud, 2) / upp) ** 2


def max_residual(series) -> float:
    return max(float(np.max(np.abs(r))) for _, r in series) if series else 0.0


def complex_to_toric(phi_slice: np.ndarray) -> ConvexPotential:
    """Kahler potential ``F(xi) = xi^2/2 + phi(xi)/2`` for a y-independent torus potential."""
    return ConvexPotential(0.5 * np.asarray(phi_slice, dtype=float))


def write_rows(rows, path, columns=RESIDUAL_COLUMNS):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(float(r[c])) for c in columns])
