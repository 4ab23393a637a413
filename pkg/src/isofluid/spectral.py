"""Periodic-box field algebra: FFT transforms, spectral derivatives, dealiasing,
quadrature and pointwise operations on the torus [-ell, ell]^d.

Conventions
-----------
* samples live on the uniform grid y_i = -ell + i * (2 ell / n), i = 0..n-1,
  per axis (row-major, axis 0 varies slowest);
* wavenumbers are k_j = pi * m_j / ell for integer modes m_j in [-n/2, n/2);
* spectral coefficients are those of the trigonometric interpolant,
  c_k = fftn(values) / n^d, so that  quad(f^2) = (2 ell)^d * sum |c_k|^2
  (Parseval with the uniform quadrature weight (2 ell / n)^d).
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Grid",
    "ScalarField",
    "VectorField",
    "transform_forward",
    "transform_inverse",
    "derivative",
    "gradient",
    "divergence",
    "laplacian",
    "bilaplacian",
    "laplacian_power",
    "dealias",
    "integrate",
    "moment",
]


class Grid:
    """Periodic box [-ell, ell]^d with n (power of two, >= 8) points per axis."""

    def __init__(self, d: int, ell: float, n: int):
        if d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {d}")
        if ell <= 0:
            raise ValueError(f"half-width must be positive, got {ell}")
        if n < 8 or n % 2 != 0 or (n & (n - 1)) != 0:
            raise ValueError(f"n must be a power of two >= 8, got {n}")
        self.d = int(d)
        self.ell = float(ell)
        self.n = int(n)
        self.shape = (self.n,) * self.d
        self.dy = 2.0 * self.ell / self.n
        self.weight = self.dy**self.d  # uniform quadrature weight
        self.volume = (2.0 * self.ell) ** self.d

        axis_y = -self.ell + self.dy * np.arange(self.n)
        axis_k = 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.dy)  # = pi*m/ell
        # broadcastable per-axis coordinate / wavenumber arrays
        self.y = tuple(
            axis_y.reshape((1,) * i + (self.n,) + (1,) * (self.d - 1 - i))
            for i in range(self.d)
        )
        self.k = tuple(
            axis_k.reshape((1,) * i + (self.n,) + (1,) * (self.d - 1 - i))
            for i in range(self.d)
        )
        self.k2 = sum(ki**2 for ki in self.k)  # |k|^2, broadcast to full shape
        self.k2 = np.broadcast_to(self.k2, self.shape).copy()
        self.r2 = np.broadcast_to(
            sum(yi**2 for yi in self.y), self.shape
        ).copy()  # |y|^2 samples

        # 2/3-rule mask: keep modes with |m_j| <= n/3 on every axis
        m = np.fft.fftfreq(self.n, d=1.0 / self.n)  # integer modes
        keep1d = np.abs(m) <= self.n / 3.0
        mask = np.ones(self.shape, dtype=bool)
        for i in range(self.d):
            mask &= keep1d.reshape(
                (1,) * i + (self.n,) + (1,) * (self.d - 1 - i)
            )
        self.dealias_mask = mask

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Grid)
            and self.d == other.d
            and self.n == other.n
            and self.ell == other.ell
        )

    def __hash__(self):
        return hash((self.d, self.ell, self.n))

    def __repr__(self):
        return f"Grid(d={self.d}, ell={self.ell}, n={self.n})"


class ScalarField:
    """Real samples of a scalar on a Grid (value-like, do not mutate)."""

    def __init__(self, grid: Grid, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise ValueError(f"values shape {values.shape} != grid shape {grid.shape}")
        self.grid = grid
        self.values = values

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "ScalarField":
        return cls(grid, np.asarray(fn(*grid.y), dtype=float) + np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(c)))

    def check_finite(self) -> "ScalarField":
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError("non-finite entries in field")
        return self

    def __add__(self, other):
        return ScalarField(self.grid, self.values + _vals(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - _vals(other))

    def __rsub__(self, other):
        return ScalarField(self.grid, _vals(other) - self.values)

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * _vals(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return ScalarField(self.grid, self.values / _vals(other))

    def __neg__(self):
        return ScalarField(self.grid, -self.values)


def _vals(x):
    return x.values if isinstance(x, ScalarField) else x


class VectorField:
    """d scalar components on a shared Grid."""

    def __init__(self, grid: Grid, components):
        comps = tuple(components)
        if len(comps) != grid.d:
            raise ValueError(f"expected {grid.d} components, got {len(comps)}")
        for c in comps:
            if c.grid != grid:
                raise ValueError("component grids differ")
        self.grid = grid
        self.components = comps

    @classmethod
    def from_arrays(cls, grid: Grid, arrays) -> "VectorField":
        return cls(grid, tuple(ScalarField(grid, a) for a in arrays))

    @classmethod
    def zero(cls, grid: Grid) -> "VectorField":
        return cls.from_arrays(grid, [np.zeros(grid.shape)] * grid.d)

    def __getitem__(self, i: int) -> ScalarField:
        return self.components[i]

    def arrays(self):
        return tuple(c.values for c in self.components)


# ---------------------------------------------------------------------------
# transforms


def transform_forward(f: ScalarField) -> np.ndarray:
    """Coefficients of the trigonometric interpolant (complex array)."""
    return np.fft.fftn(f.values) / f.grid.n**f.grid.d


def transform_inverse(grid: Grid, coeffs: np.ndarray) -> ScalarField:
    vals = np.fft.ifftn(coeffs * grid.n**grid.d)
    return ScalarField(grid, vals.real)


# array-level helpers used by the solvers (no wrapper overhead)


def fwd(grid: Grid, values: np.ndarray) -> np.ndarray:
    return np.fft.fftn(values)


def inv(grid: Grid, hat: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(hat).real


def deriv_hat(grid: Grid, hat: np.ndarray, axis: int) -> np.ndarray:
    return (1j * grid.k[axis]) * hat


def grad_arrays(grid: Grid, values: np.ndarray):
    hat = np.fft.fftn(values)
    return tuple(np.fft.ifftn((1j * grid.k[i]) * hat).real for i in range(grid.d))


def div_arrays(grid: Grid, arrays) -> np.ndarray:
    out = np.zeros(grid.shape, dtype=complex)
    for i, a in enumerate(arrays):
        out += (1j * grid.k[i]) * np.fft.fftn(a)
    return np.fft.ifftn(out).real


def lap_arrays(grid: Grid, values: np.ndarray, power: int = 1) -> np.ndarray:
    hat = np.fft.fftn(values)
    return np.fft.ifftn((-grid.k2) ** power * hat).real


def dealias_arrays(grid: Grid, values: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(np.fft.fftn(values) * grid.dealias_mask).real


# ---------------------------------------------------------------------------
# field-level operations


def derivative(f: ScalarField, axis: int) -> ScalarField:
    if not 0 <= axis < f.grid.d:
        raise ValueError(f"axis {axis} out of range for d={f.grid.d}")
    hat = np.fft.fftn(f.values)
    return ScalarField(f.grid, np.fft.ifftn((1j * f.grid.k[axis]) * hat).real)


def gradient(f: ScalarField) -> VectorField:
    return VectorField.from_arrays(f.grid, grad_arrays(f.grid, f.values))


def divergence(v: VectorField) -> ScalarField:
    return ScalarField(v.grid, div_arrays(v.grid, v.arrays()))


def laplacian(f: ScalarField) -> ScalarField:
    return ScalarField(f.grid, lap_arrays(f.grid, f.values, 1))


def bilaplacian(f: ScalarField) -> ScalarField:
    return ScalarField(f.grid, lap_arrays(f.grid, f.values, 2))


def laplacian_power(f: ScalarField, p: int) -> ScalarField:
    if p < 1:
        raise ValueError(f"power must be >= 1, got {p}")
    return ScalarField(f.grid, lap_arrays(f.grid, f.values, p))


def dealias(f: ScalarField) -> ScalarField:
    """Zero every coefficient with an axis mode |m_j| > n/3 (2/3 rule)."""
    return ScalarField(f.grid, dealias_arrays(f.grid, f.values))


def integrate(f: ScalarField) -> float:
    return float(f.grid.weight * f.values.sum())


def moment(f: ScalarField, weight: str = "1") -> float:
    """Quadrature of f against a weight in {1, y_i, |y|^2}.

    weight: "1", "y0"/"y1"/"y2" (coordinate), or "r2" (= |y|^2).
    """
    g = f.grid
    if weight == "1":
        w = 1.0
    elif weight == "r2":
        w = g.r2
    elif weight.startswith("y"):
        i = int(weight[1:])
        if not 0 <= i < g.d:
            raise ValueError(f"coordinate {weight} out of range for d={g.d}")
        w = np.broadcast_to(g.y[i], g.shape)
    else:
        raise ValueError(f"unknown moment weight {weight!r}")
    return float(g.weight * (f.values * w).sum())
