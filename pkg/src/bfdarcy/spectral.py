"""Periodic grids, transforms, spectral calculus and initial-condition builders.

Arrays are laid out as ``[..., i1, i2, i3]`` with ``x3`` the vertical axis.
Spectral coefficients use the real-to-complex layout along ``x3`` and are
normalised so that ``f(x) = sum_k c_k exp(i k.x)``; a single ``cos(x1)``
therefore has coefficient 1/2 on the modes ``(+-1, 0, 0)`` and Parseval
reads ``||f||_2^2 = vol * sum_k |c_k|^2`` over the full (Hermitian) spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

__all__ = [
    "GridSpec",
    "SpectralField",
    "SpectralVelocityField",
    "PhysicalField",
    "make_grid",
    "forward_transform",
    "inverse_transform",
    "derivative",
    "divergence",
    "leray_project",
    "dealias",
    "parseval_sum",
    "velocity_from_physical",
    "taylor_green",
    "vertical_shear",
    "uniform_field",
    "random_divergence_free",
    "random_scalar_field",
]

TWO_PI = 2.0 * np.pi
MIN_POINTS = 8


@dataclass(frozen=True)
class GridSpec:
    """Periodic box ``[0, L1) x [0, L2) x [0, L3)`` with ``n_h x n_h x n_v`` points."""

    n_h: int
    n_v: int
    box_lengths: tuple[float, float, float] = (TWO_PI, TWO_PI, TWO_PI)

    wavenumbers_h: tuple[np.ndarray, np.ndarray] = field(init=False, repr=False, compare=False)
    wavenumbers_v: np.ndarray = field(init=False, repr=False, compare=False)
    dealias_mask: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name, n in (("n_h", self.n_h), ("n_v", self.n_v)):
            if int(n) != n or n % 2 or n < MIN_POINTS:
                raise ValueError(f"{name} must be an even integer >= {MIN_POINTS}, got {n!r}")
        lengths = tuple(float(v) for v in self.box_lengths)
        if len(lengths) != 3 or not all(np.isfinite(v) and v > 0 for v in lengths):
            raise ValueError(f"box_lengths must be three positive reals, got {self.box_lengths!r}")
        object.__setattr__(self, "n_h", int(self.n_h))
        object.__setattr__(self, "n_v", int(self.n_v))
        object.__setattr__(self, "box_lengths", lengths)

        j_h = np.fft.fftfreq(self.n_h, 1.0 / self.n_h)
        j_v = np.fft.fftfreq(self.n_v, 1.0 / self.n_v)
        k1 = TWO_PI * j_h / lengths[0]
        k2 = TWO_PI * j_h / lengths[1]
        object.__setattr__(self, "wavenumbers_h", (k1, k2))
        object.__setattr__(self, "wavenumbers_v", TWO_PI * j_v / lengths[2])

        # rfft index along x3 runs 0..n_v/2; the last entry is the Nyquist mode
        j_half = np.arange(self.n_v // 2 + 1)
        keep_h = np.abs(j_h) <= self.n_h / 3.0
        keep_v = j_half <= self.n_v / 3.0
        mask = keep_h[:, None, None] & keep_h[None, :, None] & keep_v[None, None, :]
        mask.setflags(write=False)
        object.__setattr__(self, "dealias_mask", mask)

        object.__setattr__(self, "_cache", {})

    # -- shapes and measures --------------------------------------------------
    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_h, self.n_h, self.n_v)

    @property
    def spectral_shape(self) -> tuple[int, int, int]:
        return (self.n_h, self.n_h, self.n_v // 2 + 1)

    @property
    def volume(self) -> float:
        L1, L2, L3 = self.box_lengths
        return L1 * L2 * L3

    @property
    def spacing(self) -> tuple[float, float, float]:
        L1, L2, L3 = self.box_lengths
        return (L1 / self.n_h, L2 / self.n_h, L3 / self.n_v)

    @property
    def cell_volume(self) -> float:
        d1, d2, d3 = self.spacing
        return d1 * d2 * d3

    def coordinates(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable collocation coordinates ``(x1, x2, x3)``."""
        d1, d2, d3 = self.spacing
        x1 = (np.arange(self.n_h) * d1)[:, None, None]
        x2 = (np.arange(self.n_h) * d2)[None, :, None]
        x3 = (np.arange(self.n_v) * d3)[None, None, :]
        return x1, x2, x3

    # -- cached spectral multipliers -------------------------------------------
    def _cached(self, key, build):
        if key not in self._cache:
            arr = build()
            arr.setflags(write=False)
            self._cache[key] = arr
        return self._cache[key]

    @property
    def k1(self) -> np.ndarray:
        return self._cached("k1", lambda: self.wavenumbers_h[0][:, None, None].copy())

    @property
    def k2(self) -> np.ndarray:
        return self._cached("k2", lambda: self.wavenumbers_h[1][None, :, None].copy())

    @property
    def k3(self) -> np.ndarray:
        # positive rfft half; Nyquist stored as +n_v/2
        return self._cached(
            "k3",
            lambda: (TWO_PI * np.arange(self.n_v // 2 + 1) / self.box_lengths[2])[None, None, :],
        )

    @property
    def kh2(self) -> np.ndarray:
        """``xi1^2 + xi2^2`` on the spectral lattice."""
        return self._cached("kh2", lambda: self.k1**2 + self.k2**2 + 0.0 * self.k3)

    @property
    def ksq(self) -> np.ndarray:
        return self._cached("ksq", lambda: self.kh2 + self.k3**2)

    @property
    def inverse_ksq(self) -> np.ndarray:
        """``1 / |xi|^2`` over the derivative wavenumbers, 0 where they all vanish.

        Nyquist entries are zeroed as in :meth:`derivative_symbol`, so the
        projection and the spectral divergence agree on every mode; the mean
        (and any pure-Nyquist mode) passes through projections unchanged.
        """

        def build():
            ksq = sum(k * k for k in self.projection_wavenumbers)
            zero = ksq == 0.0
            inv = 1.0 / np.where(zero, 1.0, ksq)
            inv[zero] = 0.0
            return inv

        return self._cached("iksq", build)

    @property
    def projection_wavenumbers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Real wavenumbers of the derivative symbols (Nyquist entries zeroed)."""
        return tuple(self._cached(("kp", a), lambda a=a: self.derivative_symbol(a).imag.copy()) for a in (1, 2, 3))

    def derivative_symbol(self, axis: int) -> np.ndarray:
        """``i k_axis`` with the Nyquist entry zeroed."""
        if axis not in (1, 2, 3):
            raise ValueError(f"axis must be 1, 2 or 3, got {axis!r}")

        def build():
            if axis == 3:
                k = self.k3.copy()
                k[..., -1] = 0.0
                return 1j * k
            k = (self.k1 if axis == 1 else self.k2).copy()
            nyq = self.n_h // 2
            if axis == 1:
                k[nyq] = 0.0
            else:
                k[:, nyq] = 0.0
            return 1j * k

        return self._cached(("d", axis), build)

    @property
    def parseval_weights(self) -> np.ndarray:
        """Multiplicity of each stored mode in the full spectrum (1 or 2)."""

        def build():
            w = np.full(self.n_v // 2 + 1, 2.0)
            w[0] = 1.0
            w[-1] = 1.0
            return np.broadcast_to(w[None, None, :], self.spectral_shape).copy()

        return self._cached("w", build)


def make_grid(n_h: int, n_v: int, box_lengths=(TWO_PI, TWO_PI, TWO_PI)) -> GridSpec:
    """Build a periodic grid; rejects odd or too small resolutions and non-positive lengths."""
    return GridSpec(n_h, n_v, tuple(box_lengths))


@dataclass(frozen=True, eq=False)
class PhysicalField:
    """Real collocation samples, shape ``grid.shape`` or ``(3,) + grid.shape``."""

    values: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape not in (self.grid.shape, (3,) + self.grid.shape):
            raise ValueError(f"field extents {values.shape} do not match grid {self.grid.shape}")
        object.__setattr__(self, "values", values)

    @property
    def is_vector(self) -> bool:
        return self.values.ndim == 4


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Spectral coefficients with any number of leading component axes."""

    coefficients: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        c = np.asarray(self.coefficients)
        if c.shape[-3:] != self.grid.spectral_shape:
            raise ValueError(
                f"coefficient extents {c.shape[-3:]} do not match grid {self.grid.spectral_shape}"
            )
        object.__setattr__(self, "coefficients", c.astype(np.complex128, copy=False))

    def _like(self, coefficients):
        return type(self)(coefficients, self.grid)

    def _check(self, other):
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")
        return other.coefficients

    def __add__(self, other):
        return self._like(self.coefficients + self._check(other))

    def __sub__(self, other):
        return self._like(self.coefficients - self._check(other))

    def __neg__(self):
        return self._like(-self.coefficients)

    def __mul__(self, scalar):
        return self._like(self.coefficients * scalar)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class SpectralVelocityField(SpectralField):
    """Three-component velocity in spectral space."""

    projected: bool = False

    def __post_init__(self):
        super().__post_init__()
        if self.coefficients.shape[:-3] != (3,):
            raise ValueError("a velocity field needs exactly three components")

    def _like(self, coefficients):
        return SpectralVelocityField(coefficients, self.grid, self.projected)

    def __add__(self, other):
        out = self._like(self.coefficients + self._check(other))
        proj = self.projected and getattr(other, "projected", False)
        return SpectralVelocityField(out.coefficients, self.grid, proj)

    def __sub__(self, other):
        out = self._like(self.coefficients - self._check(other))
        proj = self.projected and getattr(other, "projected", False)
        return SpectralVelocityField(out.coefficients, self.grid, proj)


# -- transforms -----------------------------------------------------------------

def fft_forward(values: np.ndarray) -> np.ndarray:
    return sfft.rfftn(values, axes=(-3, -2, -1), norm="forward")


def fft_inverse(coefficients: np.ndarray, grid: GridSpec) -> np.ndarray:
    return sfft.irfftn(coefficients, s=grid.shape, axes=(-3, -2, -1), norm="forward")


def forward_transform(f: PhysicalField) -> SpectralField:
    return SpectralField(fft_forward(f.values), f.grid)


def inverse_transform(c: SpectralField) -> PhysicalField:
    return PhysicalField(fft_inverse(c.coefficients, c.grid), c.grid)


def parseval_sum(coefficients: np.ndarray, grid: GridSpec, weight=None) -> float:
    """``vol * sum |c|^2 * weight`` over the full spectrum, summed over components."""
    power = np.abs(coefficients) ** 2
    if power.ndim > 3:
        power = power.reshape((-1,) + grid.spectral_shape).sum(axis=0)
    w = grid.parseval_weights if weight is None else grid.parseval_weights * weight
    return float(grid.volume * np.sum(w * power))


# -- calculus -----------------------------------------------------------------

def derivative(c: SpectralField, axis: int) -> SpectralField:
    """Spectral partial derivative along ``axis`` (1, 2 or 3)."""
    coeffs = c.coefficients * c.grid.derivative_symbol(axis)
    return SpectralField(coeffs, c.grid)


def divergence(u: SpectralField) -> SpectralField:
    g = u.grid
    c = u.coefficients
    div = sum(c[i] * g.derivative_symbol(i + 1) for i in range(3))
    return SpectralField(div, g)


def project_coefficients(c: np.ndarray, grid: GridSpec) -> np.ndarray:
    k1, k2, k3 = grid.projection_wavenumbers
    kdotu = (k1 * c[0] + k2 * c[1] + k3 * c[2]) * grid.inverse_ksq
    out = np.empty_like(c)
    np.subtract(c[0], k1 * kdotu, out=out[0])
    np.subtract(c[1], k2 * kdotu, out=out[1])
    np.subtract(c[2], k3 * kdotu, out=out[2])
    return out


def leray_project(c: SpectralField) -> SpectralVelocityField:
    """Apply ``I - xi xi^T / |xi|^2`` mode by mode; the mean flow is left alone."""
    if c.coefficients.shape[:-3] != (3,):
        raise ValueError("projection needs a three-component field")
    return SpectralVelocityField(project_coefficients(c.coefficients, c.grid), c.grid, True)


def dealias(c: SpectralField) -> SpectralField:
    """Zero every mode outside the two-thirds band."""
    return c._like(np.where(c.grid.dealias_mask, c.coefficients, 0.0))


# -- constructors -------------------------------------------------------------

def velocity_from_physical(values, grid: GridSpec, project: bool = True) -> SpectralVelocityField:
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (3,) + grid.shape:
        raise ValueError(f"velocity samples must have shape {(3,) + grid.shape}")
    coeffs = fft_forward(values)
    if project:
        return SpectralVelocityField(project_coefficients(coeffs, grid), grid, True)
    return SpectralVelocityField(coeffs, grid, False)


def taylor_green(grid: GridSpec, amplitude: float = 1.0) -> SpectralVelocityField:
    """``(sin x1 cos x2, -cos x1 sin x2, 0)`` scaled by ``amplitude``."""
    x1, x2, x3 = grid.coordinates()
    L1, L2, _ = grid.box_lengths
    a1 = TWO_PI * x1 / L1
    a2 = TWO_PI * x2 / L2
    shape = grid.shape
    u = np.stack(
        (
            np.broadcast_to(np.sin(a1) * np.cos(a2), shape),
            np.broadcast_to(-np.cos(a1) * np.sin(a2), shape),
            np.zeros(shape),
        )
    )
    return velocity_from_physical(amplitude * u, grid)


def vertical_shear(grid: GridSpec, amplitude: float = 1.0) -> SpectralVelocityField:
    """``(sin x3, 0, 0)``: a horizontal flow varying only in the vertical."""
    _, _, x3 = grid.coordinates()
    u = np.zeros((3,) + grid.shape)
    u[0] = np.sin(TWO_PI * x3 / grid.box_lengths[2])
    return velocity_from_physical(amplitude * u, grid)


def uniform_field(grid: GridSpec, vector) -> SpectralVelocityField:
    vec = np.asarray(vector, dtype=np.float64).reshape(3)
    coeffs = np.zeros((3,) + grid.spectral_shape, dtype=np.complex128)
    coeffs[:, 0, 0, 0] = vec
    return SpectralVelocityField(coeffs, grid, True)


def _support(grid: GridSpec, kmax):
    support = grid.dealias_mask.copy()
    support[0, 0, 0] = False
    if kmax is not None:
        support &= grid.ksq <= kmax * kmax
    return support


def mode_energy_profile(grid: GridSpec, slope: float, energy: float = 1.0, kmax=None):
    """Per-mode target ``|u_k|^2`` on the stored half spectrum.

    Mode energy goes as ``|k|^(slope - 2)`` so that shell-summed spectra scale
    as ``|k|^slope``; the profile is normalised to ``||u||_2^2 == energy``.
    """
    support = _support(grid, kmax)
    kmag = np.sqrt(np.where(support, grid.ksq, 1.0))
    profile = np.where(support, kmag ** (slope - 2.0), 0.0)
    total = grid.volume * np.sum(grid.parseval_weights * profile)
    return profile * (energy / total)


def random_divergence_free(
    grid: GridSpec,
    energy_spectrum_slope: float = -5.0 / 3.0,
    seed: int = 0,
    energy: float = 1.0,
    kmax=None,
) -> SpectralVelocityField:
    """Seeded solenoidal field with a prescribed modal energy profile.

    Directions and phases come from projected Gaussian noise; amplitudes are
    set exactly to :func:`mode_energy_profile`, so ``||u||_2^2 == energy``.
    The mean and all modes outside the two-thirds band are zero.
    """
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((3,) + grid.shape)
    coeffs = project_coefficients(fft_forward(noise), grid)
    target = mode_energy_profile(grid, energy_spectrum_slope, energy, kmax)
    norm = np.sqrt(np.sum(np.abs(coeffs) ** 2, axis=0))
    scale = np.where(norm > 0.0, np.sqrt(target) / np.where(norm > 0.0, norm, 1.0), 0.0)
    coeffs = coeffs * scale
    # one round trip makes the k3 = 0 and Nyquist planes exactly what irfftn sees
    coeffs = project_coefficients(fft_forward(fft_inverse(coeffs, grid)), grid)
    coeffs = np.where(grid.dealias_mask, coeffs, 0.0)
    return SpectralVelocityField(coeffs, grid, True)


def random_scalar_field(
    grid: GridSpec,
    slope: float = -5.0 / 3.0,
    seed: int = 0,
    energy: float = 1.0,
    kmax=None,
    horizontal_mean_zero: bool = False,
) -> SpectralField:
    """Seeded mean-zero scalar trigonometric polynomial with ``||psi||_2^2 == energy``.

    With ``horizontal_mean_zero`` every horizontal slice has zero mean
    (all ``xi' = 0`` modes removed).
    """
    rng = np.random.default_rng(seed)
    coeffs = fft_forward(rng.standard_normal(grid.shape))
    target = mode_energy_profile(grid, slope, 1.0, kmax)
    if horizontal_mean_zero:
        target = np.where(grid.kh2 > 0.0, target, 0.0)
    mag = np.abs(coeffs)
    coeffs = np.where(mag > 0.0, coeffs / np.where(mag > 0.0, mag, 1.0), 0.0) * np.sqrt(target)
    coeffs = fft_forward(fft_inverse(coeffs, grid))
    coeffs = np.where(grid.dealias_mask, coeffs, 0.0)
    if horizontal_mean_zero:
        coeffs = np.where(grid.kh2 > 0.0, coeffs, 0.0)
    coeffs[0, 0, 0] = 0.0
    current = parseval_sum(coeffs, grid)
    if current > 0.0:
        coeffs = coeffs * np.sqrt(energy / current)
    return SpectralField(coeffs, grid)
