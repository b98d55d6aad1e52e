"""Renormalized products M_r: normalization Z_r, subtraction kernels g_r, lattice evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from scipy import integrate

from ..corr_core.structure import ConstantKernel, Kernel, Label, OpeStructure, PowerLawKernel
from ..errors import DegenerateChannel, UnknownLabel
from ..free_field import (
    Grid,
    LatticeField,
    Mollifier,
    TestFunction,
    _axes,
    continuum_mollified_variance,
    kappa_green,
    pair,
)


@dataclass(frozen=True)
class RenormFormat:
    """The data fixing one renormalized product O_A x O_B -> O_{C*}.

    ``sharpness`` selects the mollifier profile and ``shift`` is the scale
    offset (0 or 1) applied to r.
    """

    structure: OpeStructure
    a: str
    b: str
    c_star: str
    sharpness: float = 1.0
    shift: int = 0
    L: float = 2.0

    def __post_init__(self) -> None:
        for name in (self.a, self.b, self.c_star):
            self.structure.label(name)
        if self.shift not in (0, 1):
            raise ValueError("shift must be 0 or 1")

    @property
    def label_a(self) -> Label:
        return self.structure.label(self.a)

    @property
    def label_b(self) -> Label:
        return self.structure.label(self.b)

    @property
    def label_c(self) -> Label:
        return self.structure.label(self.c_star)

    @property
    def delta(self):
        return self.label_c.dim

    @property
    def d(self) -> int:
        return self.structure.d

    def normalizing_kernel(self) -> Kernel:
        return self.structure.coefficient(self.a, self.b, self.c_star)

    def subtraction_channels(self) -> list[tuple[Label, Kernel]]:
        """Labels of A(Delta) other than C*, with their fusion coefficients."""
        return [
            (c, self.structure.coefficient(self.a, self.b, c))
            for c in self.structure.channels(self.delta)
            if c.name != self.c_star
        ]

    def mollifier(self, r: int) -> Mollifier:
        return Mollifier(self.d, r - self.shift, self.L, self.sharpness)

    def with_(self, **changes) -> "RenormFormat":
        data = dict(
            structure=self.structure, a=self.a, b=self.b, c_star=self.c_star, sharpness=self.sharpness, shift=self.shift, L=self.L
        )
        data.update(changes)
        return RenormFormat(**data)


def _pair_integral(kernel: Kernel, mol: Mollifier) -> float:
    """int int rho_r(x-y) rho_r(x-z) K(y, z) dy dz for a translation-invariant kernel."""
    if isinstance(kernel, ConstantKernel):
        return float(kernel.value)
    if isinstance(kernel, PowerLawKernel):
        alpha = float(kernel.exponent)
        if alpha == 0:
            return float(kernel.prefactor)
        if alpha >= mol.d:
            raise DegenerateChannel("kernel is not locally integrable; the normalization diverges")
        if alpha < 0:
            raise DegenerateChannel("growing power-law kernels are not supported as normalizations")
        # the kernel is prefactor / kappa_green times the covariance of a field with [phi] = alpha/2
        s = alpha / 2
        return float(kernel.prefactor) / kappa_green(mol.d, s) * continuum_mollified_variance(mol.d, s, mol)
    if kernel.is_zero:
        return 0.0
    raise DegenerateChannel(f"no normalization rule for kernel {kernel!r}")


def compute_Zr(fmt: RenormFormat, r: int, x=None) -> float:
    """Z_r(x) = (int int rho_r(x-y) rho_r(x-z) C_AB^{C*}(y, z))^{-1}.

    The supported kernels are translation invariant, so the value does not
    depend on ``x``.
    """
    if r > 0:
        raise ValueError("r must be <= 0")
    val = _pair_integral(fmt.normalizing_kernel(), fmt.mollifier(r))
    if not val > 0 or not math.isfinite(val):
        raise DegenerateChannel(f"normalization integral is {val}; the channel {fmt.c_star} is degenerate")
    return 1.0 / val


def _sphere_average(d: int, m: int = 256):
    if d == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if d == 2:
        th = 2 * np.pi * (np.arange(m) + 0.5) / m
        return np.stack([np.cos(th), np.sin(th)], -1), np.full(m, 2 * np.pi / m)
    c, w = np.polynomial.legendre.leggauss(m)
    s = np.sqrt(1 - c**2)
    return np.stack([s, np.zeros_like(s), c], -1), 2 * np.pi * w


@dataclass(frozen=True)
class GrKernel:
    """g_r(x, z) = rho_r(x - z) int dy rho_r(x - y) C(y, z), as a function of u = x - z."""

    mol: Mollifier
    kernel: Kernel

    @property
    def support(self) -> float:
        return self.mol.width

    def smoothed_kernel(self, u: float) -> float:
        """(rho_r * K)(u), integrating in polar coordinates about the singularity of K."""
        k = self.kernel
        if k.is_zero:
            return 0.0
        if isinstance(k, ConstantKernel):
            return float(k.value)
        if not isinstance(k, PowerLawKernel):
            raise DegenerateChannel(f"unsupported kernel {k!r}")
        d, w = self.mol.d, self.mol.width
        uvec = np.zeros(d)
        uvec[-1] = float(np.linalg.norm(np.atleast_1d(u)))
        dirs, dw = _sphere_average(d)
        alpha = float(k.exponent)

        def angular(s):
            return float(np.sum(dw * self.mol(uvec - s * dirs)))

        lo, hi = max(0.0, uvec[-1] - w), uvec[-1] + w
        if lo == 0.0:
            val, _ = integrate.quad(angular, 0.0, hi, weight="alg", wvar=(d - 1 - alpha, 0.0), limit=200, epsrel=1e-11)
        else:
            val, _ = integrate.quad(lambda s: angular(s) * s ** (d - 1 - alpha), lo, hi, limit=200, epsrel=1e-11)
        return float(k.prefactor) * val

    def radial(self, u) -> float:
        rho = float(self.mol(np.atleast_1d(np.asarray(u, dtype=float))[None, :])[0])
        if rho == 0.0:
            return 0.0
        return rho * self.smoothed_kernel(u)

    def __call__(self, x, z) -> float:
        return self.radial(np.atleast_1d(np.asarray(x, dtype=float) - np.asarray(z, dtype=float)))

    def integral(self) -> float:
        """int g_r(x, z) dz."""
        d, w = self.mol.d, self.mol.width
        area = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
        val, _ = integrate.quad(lambda t: t ** (d - 1) * self.radial(np.r_[np.zeros(d - 1), t]), 0.0, w, limit=200, epsrel=1e-10)
        return area * val


def compute_gr(fmt: RenormFormat, r: int, c: str | Label) -> GrKernel:
    """Subtraction kernel of channel ``c`` at scale r."""
    lab = fmt.structure.label(c)
    return GrKernel(fmt.mollifier(r), fmt.structure.coefficient(fmt.a, fmt.b, lab))


# ---------------------------------------------------------------------------
# lattice evaluation


def lattice_kernel(grid: Grid, kernel: Kernel) -> np.ndarray:
    """Lattice realization of a translation-invariant kernel on the periodic grid.

    Power laws with 0 < exponent < d are realized through their Fourier
    multiplier with the zero mode removed, the same convention as the
    sampled field, so the free-field covariance is reproduced exactly.
    """
    if kernel.is_zero:
        return np.zeros(grid.shape)
    if isinstance(kernel, ConstantKernel):
        return np.full(grid.shape, float(kernel.value))
    if isinstance(kernel, PowerLawKernel):
        mult = kernel.fourier_multiplier(np.where(grid.momentum_norm() > 0, grid.momentum_norm(), 1.0), grid.d)
        mult = np.where(grid.momentum_norm() > 0, mult, 0.0)
        return sfft.ifftn(mult, axes=_axes(grid)).real * (grid.sites / grid.box_length**grid.d)
    raise DegenerateChannel(f"no lattice realization for kernel {kernel!r}")


class LatticeRenorm:
    """M_r(x) on a periodic grid for fields whose labels are 1 or phi.

    The mollifier is the bump sampled on the lattice with unit sum; products
    and subtraction kernels use the lattice realization of the kernels.
    """

    def __init__(self, grid: Grid, fmt: RenormFormat, r: int):
        self.grid = grid
        self.fmt = fmt
        self.r = r
        self.mol = fmt.mollifier(r)
        self.weights = self.mol.lattice_weights(grid)
        axes = _axes(grid)
        self.w_half = sfft.rfftn(self.weights, axes=axes)
        for lab in (fmt.label_a, fmt.label_b):
            self._power(lab)
        norm = self._pair_sum(fmt.normalizing_kernel())
        if not norm > 0:
            raise DegenerateChannel(f"lattice normalization is {norm}; the channel {fmt.c_star} is degenerate")
        self.Z = 1.0 / norm
        self.const_sub = 0.0
        self.field_subs: list[np.ndarray] = []
        for c, kern in fmt.subtraction_channels():
            if kern.is_zero:
                continue
            g = self.weights * self._smoothed(kern)
            p = self._power(c)
            if p == 0:
                self.const_sub += float(g.sum())
            else:
                self.field_subs.append(sfft.rfftn(g, axes=axes))

    @staticmethod
    def _power(label: Label) -> int:
        if label.wick_power not in (0, 1):
            raise UnknownLabel(f"label {label.name!r} has no lattice realization; only 1 and phi are sampled")
        return int(label.wick_power)

    def _smoothed(self, kern: Kernel) -> np.ndarray:
        """(w * K_lat)(u) on the grid."""
        axes = _axes(self.grid)
        klat = lattice_kernel(self.grid, kern)
        return sfft.irfftn(self.w_half * sfft.rfftn(klat, axes=axes), s=self.grid.shape, axes=axes)

    def _pair_sum(self, kern: Kernel) -> float:
        return float(np.sum(self.weights * self._smoothed(kern)))

    def _realize(self, label: Label, phi_r: np.ndarray) -> np.ndarray | float:
        return 1.0 if self._power(label) == 0 else phi_r

    def density(self, half_spectra: np.ndarray) -> np.ndarray:
        """M_r(x) for a batch of real-FFT field spectra (leading batch axis)."""
        grid = self.grid
        axes = _axes(grid)
        scale = grid.sites / grid.box_length**grid.d
        phi_r = sfft.irfftn(half_spectra * self.w_half, s=grid.shape, axes=axes) * scale
        prod = self._realize(self.fmt.label_a, phi_r) * self._realize(self.fmt.label_b, phi_r)
        out = prod - self.const_sub
        for g_half in self.field_subs:
            out = out - sfft.irfftn(half_spectra * g_half, s=grid.shape, axes=axes) * scale
        return self.Z * np.broadcast_to(out, half_spectra.shape[:-grid.d] + grid.shape)

    def smeared(self, half_spectra: np.ndarray, f_values: np.ndarray) -> np.ndarray:
        return pair(self.grid, self.density(half_spectra), f_values)


def field_half_spectrum(field: LatticeField) -> np.ndarray:
    grid = field.grid
    return sfft.rfftn(field.real_space, axes=_axes(grid)) * (grid.box_length**grid.d / grid.sites)


def compute_Mr(field: LatticeField, fmt: RenormFormat, r: int, f: TestFunction | np.ndarray) -> float:
    """M_r(f) = int M_r(x) f(x) dx for one lattice sample."""
    ev = LatticeRenorm(field.grid, fmt, r)
    fv = f.on_grid(field.grid) if isinstance(f, TestFunction) else np.asarray(f)
    return float(ev.smeared(field_half_spectrum(field), fv))


__all__ = [
    "GrKernel",
    "LatticeRenorm",
    "RenormFormat",
    "compute_Mr",
    "compute_Zr",
    "compute_gr",
    "field_half_spectrum",
    "lattice_kernel",
]
