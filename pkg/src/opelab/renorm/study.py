"""Convergence experiments: telescoping increments and mollifier independence.

Every scale and every mollifier is evaluated on the same samples, so the
differences are pathwise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.fft as sfft

from ..combinat.power import nu as nu_rate
from ..free_field import Grid, TestFunction, _axes, spectral_density
from .moments import jackknife, run_samples
from .product import LatticeRenorm, RenormFormat


@dataclass
class RateRow:
    r: int
    norm: float
    stderr: float
    exact: float | None = None

    def to_dict(self) -> dict:
        return {"r": self.r, "norm": self.norm, "stderr": self.stderr, "exact": self.exact}


@dataclass
class RateReport:
    """Norms per scale with the fitted exponent of L^r."""

    kind: str
    p: int
    rows: list[RateRow]
    slope: float
    slope_stderr: float
    L: float
    nu: float | None = None
    predicted: float | None = None
    exact_slope: float | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "p": self.p,
            "L": self.L,
            "rows": [row.to_dict() for row in self.rows],
            "slope": self.slope,
            "slope_stderr": self.slope_stderr,
            "exact_slope": self.exact_slope,
            "nu_pred": self.nu,
            "predicted_slope": self.predicted,
            **self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def csv_rows(self) -> list[list]:
        return [[row.r, row.norm, row.stderr, self.slope] for row in self.rows]


def fit_rate(r: np.ndarray, norms: np.ndarray, stderr: np.ndarray | None, L: float) -> tuple[float, float]:
    """Weighted fit of log_L(norm) = slope * r + c; returns (slope, stderr)."""
    r = np.asarray(r, dtype=float)
    y = np.log(np.asarray(norms, dtype=float)) / math.log(L)
    if stderr is None:
        w = np.ones_like(y)
    else:
        sy = np.asarray(stderr, dtype=float) / (np.asarray(norms, dtype=float) * math.log(L))
        w = 1.0 / np.maximum(sy, 1e-300) ** 2
    A = np.stack([r, np.ones_like(r)], -1)
    cov = np.linalg.inv(A.T @ (w[:, None] * A))
    coef = cov @ (A.T @ (w * y))
    if stderr is None:
        resid = y - A @ coef
        dof = max(len(y) - 2, 1)
        cov = cov * float(resid @ resid) / dof
    return float(coef[0]), float(math.sqrt(cov[0, 0]))


def _pnorm(diff: np.ndarray, p: int) -> tuple[float, float]:
    """(E|X|^p)^{1/p} with a delta-method jackknife error."""
    mom, se = jackknife(np.abs(diff) ** p)
    if mom <= 0:
        return 0.0, 0.0
    norm = mom ** (1.0 / p)
    return norm, norm * se / (p * mom)


def _phi_square_only(ev: LatticeRenorm) -> None:
    if ev.fmt.label_a.wick_power != 1 or ev.fmt.label_b.wick_power != 1 or ev.field_subs:
        raise ValueError("the closed form covers phi x phi with constant subtractions only")


def _quadratic_form(grid: Grid, G: np.ndarray, f_values: np.ndarray) -> float:
    """sum_{x,y} f(x) f(y) G(x - y) dx dy on the periodic grid."""
    axes = _axes(grid)
    conv = sfft.irfftn(sfft.rfftn(f_values, axes=axes) * sfft.rfftn(G, axes=axes), s=grid.shape, axes=axes)
    return float(np.sum(f_values * conv) * grid.cell_volume**2)


def _cross_covariance(grid: Grid, dim_phi: float, wa: np.ndarray, wb: np.ndarray) -> np.ndarray:
    """E[phi_a(x) phi_b(x + u)] for two lattice mollifications of the field."""
    spec = spectral_density(grid, dim_phi, half=True)
    scale = grid.sites / grid.box_length**grid.d
    return sfft.irfftn(spec * wa * np.conj(wb), s=grid.shape, axes=_axes(grid)) * scale


def exact_difference_norm2(grid: Grid, dim_phi: float, a: LatticeRenorm, b: LatticeRenorm, f_values: np.ndarray) -> float:
    """E[(M_a(f) - M_b(f))^2] for two products of phi with itself on the lattice.

    With only constant subtractions, Cov(Z phi_a(x)^2, Z' phi_b(y)^2) is
    2 Z Z' C_ab(x - y)^2, and C_ab has spectrum S w_a w_b.
    """
    _phi_square_only(a)
    _phi_square_only(b)

    def cov(wa, wb):
        return _cross_covariance(grid, dim_phi, wa, wb)

    G = a.Z**2 * cov(a.w_half, a.w_half) ** 2 - 2 * a.Z * b.Z * cov(a.w_half, b.w_half) ** 2 + b.Z**2 * cov(b.w_half, b.w_half) ** 2
    return 2 * _quadratic_form(grid, G, f_values)


def exact_variance(grid: Grid, dim_phi: float, ev: LatticeRenorm, f_values: np.ndarray) -> float:
    """Var M_r(f) = 2 Z^2 sum f(x) f(y) C_rr(x - y)^2 on the lattice."""
    _phi_square_only(ev)
    C = _cross_covariance(grid, dim_phi, ev.w_half, ev.w_half)
    return 2 * ev.Z**2 * _quadratic_form(grid, C**2, f_values)


def _dim_phi(fmt: RenormFormat) -> float:
    return float(fmt.structure.label("phi").dim)


def telescoping_study(
    fmt: RenormFormat,
    f: TestFunction,
    grid: Grid,
    r_values,
    n_samples: int,
    p: int = 2,
    seed: int = 0,
    gamma=1,
    epsilon=0,
    workers: int = 1,
    chunk: int = 64,
    exact: bool = True,
) -> RateReport:
    """||M_r(f) - M_{r-1}(f)||_{L^p} for each r, the fitted rate and the prediction nu/p.

    The two terms are the format at shift 0 and shift 1, evaluated on the
    same samples.
    """
    if p < 2 or p % 2:
        raise ValueError("p must be an even integer >= 2")
    r_values = sorted(int(r) for r in r_values)
    fv = f.on_grid(grid)
    scales = sorted(set(r_values) | {r - 1 for r in r_values})
    base = fmt.with_(shift=0)
    evs = {s: LatticeRenorm(grid, base, s) for s in scales}
    dim_phi = _dim_phi(fmt)

    def fn(half):
        return np.stack([evs[s].smeared(half, fv) for s in scales], -1)

    vals = run_samples(grid, dim_phi, seed, n_samples, fn, chunk=chunk, workers=workers)
    col = {s: k for k, s in enumerate(scales)}
    rows = []
    for r in r_values:
        norm, se = _pnorm(vals[:, col[r]] - vals[:, col[r - 1]], p)
        ex = None
        if exact and p == 2:
            try:
                ex = math.sqrt(exact_difference_norm2(grid, dim_phi, evs[r], evs[r - 1], fv))
            except ValueError:
                ex = None
        rows.append(RateRow(r, norm, se, ex))
    return _report("telescoping", p, rows, fmt, gamma, epsilon, {"n_samples": n_samples, "seed": seed})


def mollifier_independence(
    fmt: RenormFormat,
    sharpness: tuple[float, float],
    f: TestFunction,
    grid: Grid,
    r_values,
    n_samples: int,
    p: int = 2,
    seed: int = 0,
    gamma=1,
    epsilon=0,
    workers: int = 1,
    chunk: int = 64,
    exact: bool = True,
) -> RateReport:
    """||M^(1)_r(f) - M^(2)_r(f)||_{L^p} for two bump profiles on common samples."""
    if sharpness[0] == sharpness[1]:
        raise ValueError("the two profiles must differ")
    r_values = sorted(int(r) for r in r_values)
    fv = f.on_grid(grid)
    fmts = [fmt.with_(sharpness=s) for s in sharpness]
    evs = [[LatticeRenorm(grid, fm, r) for r in r_values] for fm in fmts]
    dim_phi = _dim_phi(fmt)

    def fn(half):
        return np.stack([evs[0][k].smeared(half, fv) - evs[1][k].smeared(half, fv) for k in range(len(r_values))], -1)

    vals = run_samples(grid, dim_phi, seed, n_samples, fn, chunk=chunk, workers=workers)
    rows = []
    for k, r in enumerate(r_values):
        norm, se = _pnorm(vals[:, k], p)
        ex = None
        if exact and p == 2:
            try:
                ex = math.sqrt(exact_difference_norm2(grid, dim_phi, evs[0][k], evs[1][k], fv))
            except ValueError:
                ex = None
        rows.append(RateRow(r, norm, se, ex))
    meta = {"n_samples": n_samples, "seed": seed, "sharpness": list(sharpness)}
    return _report("mollifier_independence", p, rows, fmt, gamma, epsilon, meta)


def _report(kind, p, rows, fmt, gamma, epsilon, meta) -> RateReport:
    r = np.array([row.r for row in rows])
    norms = np.array([row.norm for row in rows])
    ses = np.array([row.stderr for row in rows])
    if np.any(norms <= 0):
        slope, sse = float("inf"), 0.0
    else:
        slope, sse = fit_rate(r, norms, ses, fmt.L)
    exact_slope = None
    if all(row.exact for row in rows):
        exact_slope, _ = fit_rate(r, np.array([row.exact for row in rows]), None, fmt.L)
    delta = Fraction(str(fmt.delta)) if not isinstance(fmt.delta, Fraction) else fmt.delta
    rate = nu_rate(fmt.d, Fraction(str(gamma)), Fraction(str(epsilon)), [delta])
    return RateReport(
        kind, p, rows, slope, sse, fmt.L, float(rate.value), float(rate.value) / p, exact_slope, meta
    )


__all__ = [
    "RateReport",
    "RateRow",
    "exact_difference_norm2",
    "exact_variance",
    "fit_rate",
    "mollifier_independence",
    "telescoping_study",
]
