"""Quadrature for power-law singular integrands and the four integration lemmas.

The integrand is split by smooth Shepard weights w_c(y) = |y-c|^{-2p} / sum_c' |y-c'|^{-2p}
into pieces singular at a single centre c. Each piece is integrated in polar
coordinates about its centre: an angular rule on the sphere (graded toward
the directions tangent to a ball boundary) and Gauss-Legendre in log r on dyadic
shells. The shells run from 1e-8 times the
smallest length scale up to the domain boundary (or 2^24 times the largest
scale); the innermost ball and the far tail are integrated in closed form
from the leading power laws.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import IntegrationError, RangeError

SHEPARD_POWER = 4
INNER_RATIO = 1e-8
OUTER_DOUBLINGS = 24


@dataclass(frozen=True)
class PowerLaw:
    """|y - center|^{-alpha}."""

    center: tuple[float, ...]
    alpha: float


@dataclass(frozen=True)
class InhomDecay:
    """<y>^{-beta} with <y> = sqrt(1 + |y|^2)."""

    beta: float


@dataclass(frozen=True)
class IndicatorBall:
    center: tuple[float, ...]
    radius: float


Factor = PowerLaw | InhomDecay | IndicatorBall


@dataclass(frozen=True)
class SingularIntegrand:
    d: int
    factors: tuple[Factor, ...]

    def __post_init__(self) -> None:
        if self.d not in (1, 2, 3):
            raise ValueError("quadrature supports d in {1, 2, 3}")
        for fac in self.factors:
            if isinstance(fac, (PowerLaw, IndicatorBall)) and len(fac.center) != self.d:
                raise ValueError("factor centre has the wrong dimension")

    def __call__(self, y: np.ndarray) -> np.ndarray:
        """Pointwise value at y of shape (..., d); singular centres give inf."""
        y = np.asarray(y, dtype=float)
        out = np.ones(y.shape[:-1])
        for fac in self.factors:
            if isinstance(fac, PowerLaw):
                dist = np.sqrt(np.sum((y - np.asarray(fac.center)) ** 2, axis=-1))
                with np.errstate(divide="ignore"):
                    out = out * dist ** (-fac.alpha)
            elif isinstance(fac, InhomDecay):
                out = out * (1.0 + np.sum(y**2, axis=-1)) ** (-fac.beta / 2)
            else:
                dist = np.sqrt(np.sum((y - np.asarray(fac.center)) ** 2, axis=-1))
                out = out * (dist <= fac.radius)
        return out


@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float


@lru_cache(maxsize=32)
def _gl(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


@lru_cache(maxsize=32)
def _sphere(d: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    if d == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if d == 2:
        th = 2 * np.pi * (np.arange(m) + 0.5) / m
        return np.stack([np.cos(th), np.sin(th)], axis=-1), np.full(m, 2 * np.pi / m)
    ct, wt = _gl(m // 2)
    ph = 2 * np.pi * (np.arange(m) + 0.5) / m
    c, p = np.meshgrid(ct, ph, indexing="ij")
    s = np.sqrt(1 - c**2)
    dirs = np.stack([s * np.cos(p), s * np.sin(p), c], axis=-1).reshape(-1, 3)
    return dirs, np.multiply.outer(wt, np.full(m, 2 * np.pi / m)).reshape(-1)


def _graded_directions(d: int, axis: np.ndarray, grade: float, level: int) -> tuple[np.ndarray, np.ndarray]:
    """Directions whose angle to ``axis`` is graded toward a right angle.

    From a centre at depth delta inside a ball of radius R the ray length
    switches from O(delta) to O(R) across the directions tangent to the
    boundary, over an angular width of about sqrt(delta / R) = ``grade``.
    Panels halve toward that angle from both sides.
    """
    half = [math.pi / 2]
    while half[-1] > 0.25 * grade and len(half) < 60:
        half.append(half[-1] / 2)
    gaps = np.array(half)
    edges = np.concatenate([math.pi / 2 - gaps, [math.pi / 2], (math.pi / 2 + gaps)[::-1]])
    x, w = _gl(6 + 4 * level)
    a, b = edges[:-1, None], edges[1:, None]
    th = (0.5 * (b - a) * x + 0.5 * (a + b)).ravel()
    wt = (0.5 * (b - a) * w).ravel()
    if d == 2:
        perp = np.array([-axis[1], axis[0]])
        c, s = np.cos(th)[:, None], np.sin(th)[:, None]
        dirs = np.concatenate([c * axis + s * perp, c * axis - s * perp])
        return dirs, np.concatenate([wt, wt])
    e1 = np.linalg.svd(axis[None, :])[2][1]
    e2 = np.cross(axis, e1)
    m = 8 + 8 * level
    ph = 2 * np.pi * (np.arange(m) + 0.5) / m
    st, ct = np.sin(th)[:, None, None], np.cos(th)[:, None, None]
    dirs = st * (np.cos(ph)[None, :, None] * e1 + np.sin(ph)[None, :, None] * e2) + ct * axis
    weights = np.multiply.outer(wt * np.sin(th), np.full(m, 2 * np.pi / m))
    return dirs.reshape(-1, 3), weights.reshape(-1)


def sphere_area(d: int) -> float:
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


def _log_shells(lo: float, hi: float, n_gl: int, octaves: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for int_lo^hi g(r) dr using GL in log r on shells of ``octaves`` doublings."""
    n_shell = max(1, int(math.ceil(math.log2(hi / lo) / octaves)))
    edges = np.exp(np.linspace(math.log(lo), math.log(hi), n_shell + 1))
    x, w = _gl(n_gl)
    a, b = np.log(edges[:-1]), np.log(edges[1:])
    t = (0.5 * (b - a))[:, None] * x[None, :] + (0.5 * (a + b))[:, None]
    wt = (0.5 * (b - a))[:, None] * w[None, :]
    r = np.exp(t).ravel()
    return r, (wt.ravel() * r)


def _resolve_domain(intg: SingularIntegrand, domain) -> tuple[Ball | None, list[Factor]]:
    balls = [f for f in intg.factors if isinstance(f, IndicatorBall)]
    rest = [f for f in intg.factors if not isinstance(f, IndicatorBall)]
    if isinstance(domain, str) and domain.lower() in ("r^d", "rd", "whole"):
        domain = None
    cand = [Ball(tuple(map(float, b.center)), float(b.radius)) for b in balls]
    if domain is not None:
        cand.append(domain if isinstance(domain, Ball) else Ball(tuple(domain[0]), float(domain[1])))
    uniq = set(cand)
    if len(uniq) > 1:
        raise ValueError("only a single ball restriction is supported")
    return (cand[0] if cand else None), rest


def _anchors(d: int, factors: list[Factor], ball: Ball | None) -> tuple[np.ndarray, np.ndarray]:
    """Distinct centres with the total power-law exponent sitting at each."""
    centers: list[tuple[float, ...]] = []
    alphas: list[float] = []
    for fac in factors:
        if isinstance(fac, PowerLaw):
            c = tuple(float(v) for v in fac.center)
            if c in centers:
                alphas[centers.index(c)] += fac.alpha
            else:
                centers.append(c)
                alphas.append(fac.alpha)
    if any(isinstance(f, InhomDecay) for f in factors) and (0.0,) * d not in centers:
        centers.append((0.0,) * d)
        alphas.append(0.0)
    if not centers:
        centers.append(ball.center if ball is not None else (0.0,) * d)
        alphas.append(0.0)
    return np.array(centers, dtype=float), np.array(alphas, dtype=float)


def _zone(
    c: np.ndarray,
    dirs: np.ndarray,
    dw: np.ndarray,
    r: np.ndarray,
    wr: np.ndarray,
    ci: int,
    centers: np.ndarray,
    alphas: np.ndarray,
    decay: float,
    d: int,
) -> float:
    """Shepard piece of centre ``ci`` integrated over radial nodes r (n_dir, n_r).

    Squared distances from y = c + r u to any point p come from
    r^2 + 2 r u.(c - p) + |c - p|^2, so no points are built.
    """
    rr = r * r

    def dist2(p):
        off = c - p
        return np.maximum(rr + 2.0 * r * (dirs @ off)[:, None] + float(off @ off), 0.0)

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        log_own = np.log(rr)
        expo = -0.5 * alphas[ci] * log_own
        shepard = np.ones_like(rr)
        for j, (cj, aj) in enumerate(zip(centers, alphas)):
            if j == ci:
                continue
            log_j = np.log(dist2(cj))
            if aj:
                expo -= 0.5 * aj * log_j
            shepard += np.exp(SHEPARD_POWER * (log_own - log_j))
        if decay:
            expo -= 0.5 * decay * np.log1p(dist2(np.zeros(d)))
        vals = np.exp(expo) / shepard
    vals = np.where(np.isfinite(vals), vals, 0.0) * r ** (d - 1)
    return float(np.sum(dw[:, None] * wr * vals))


def _evaluate_pieces(
    d: int,
    decay: float,
    ball: Ball | None,
    centers: np.ndarray,
    alphas: np.ndarray,
    level: int,
    n_gl: int,
) -> float:
    m0 = {1: 2, 2: 16, 3: 12}[d]
    coarse = _sphere(d, m0 + 4 * level)
    fine = _sphere(d, m0 * 2**level)
    if len(centers) > 1:
        sep = np.sqrt(np.sum((centers[:, None] - centers[None, :]) ** 2, axis=-1))
        min_sep = float(np.min(sep[~np.eye(len(centers), dtype=bool)]))
        max_sep = float(np.max(sep))
    else:
        min_sep = max_sep = float("inf")
    total_power = float(np.sum(alphas)) + decay
    total = 0.0
    for ci, (c, a_c) in enumerate(zip(centers, alphas)):
        if a_c >= d:
            raise IntegrationError("power-law exponent is not locally integrable", float("inf"), float("inf"))
        regular = _regular_part(centers, alphas, decay, ci)
        if ball is not None:
            bc = np.asarray(ball.center) - c

            def reach(dirs):
                proj = dirs @ bc
                disc = proj**2 + ball.radius**2 - float(bc @ bc)
                if np.any(disc < -1e-12 * ball.radius**2):
                    raise ValueError("power-law centres must lie in the integration ball")
                return np.maximum(proj + np.sqrt(np.maximum(disc, 0.0)), 0.0)

            scale = 2.0 * ball.radius
            small = min(scale, min_sep)
            lo, mid = INNER_RATIO * small, small / 16
            rule = (coarse, fine)
            off = float(np.linalg.norm(bc))
            if d > 1 and off > 0:
                graded = _graded_directions(d, -bc / off, math.sqrt(2 * max(ball.radius - off, 0.0) / ball.radius), level)
                rule = (graded, graded)
            piece = 0.0
            for (dirs, dw), (t0, t1), octaves in zip(rule, ((lo, mid), (mid, scale)), (4, 1)):
                ext = reach(dirs)
                tu, wu = _log_shells(t0 / scale, t1 / scale, n_gl, octaves)
                r = ext[:, None] * tu[None, :]
                wr = ext[:, None] * wu[None, :]
                piece += _zone(c, dirs, dw, r, wr, ci, centers, alphas, decay, d)
            ext = reach(rule[0][0])
            r_in = lo * ext / scale
        else:
            scale = max(1.0, float(np.max(np.sqrt(np.sum(centers**2, axis=-1)))), max_sep if len(centers) > 1 else 0.0)
            small = min(scale, min_sep)
            lo, hi = INNER_RATIO * small, scale * 2.0**OUTER_DOUBLINGS
            # only the middle band sees the geometry; the outer two are near power laws
            bands = ((coarse, lo, small / 16, 4), (fine, small / 16, 16 * scale, 1), (coarse, 16 * scale, hi, 4))
            piece = 0.0
            for (dirs, dw), t0, t1, octaves in bands:
                r1, w1 = _log_shells(t0, t1, n_gl, octaves)
                r = np.broadcast_to(r1, (len(dirs), len(r1)))
                wr = np.broadcast_to(w1, (len(dirs), len(r1)))
                piece += _zone(c, dirs, dw, r, wr, ci, centers, alphas, decay, d)
            r_in = np.full(len(coarse[0]), lo)
            if total_power <= d:
                raise IntegrationError("integrand does not decay fast enough at infinity", float("inf"), float("inf"))
            piece += sphere_area(d) * hi ** (d - total_power) / (total_power - d) / len(centers)
        # innermost ball: |y-c|^{-a_c} times the regular part frozen at c
        inner_w = rule[0][1] if ball is not None else coarse[1]
        piece += float(np.sum(inner_w * r_in ** (d - a_c))) / (d - a_c) * regular
        total += piece
    return total


def _regular_part(centers: np.ndarray, alphas: np.ndarray, decay: float, ci: int) -> float:
    c = centers[ci]
    out = (1.0 + float(c @ c)) ** (-decay / 2)
    for j, (cj, aj) in enumerate(zip(centers, alphas)):
        if j != ci:
            out *= float(np.linalg.norm(c - cj)) ** (-aj)
    return out


def integrate_singular(
    intg: SingularIntegrand,
    domain=None,
    rel_tol: float = 1e-8,
    max_refine: int = 4,
) -> tuple[float, float]:
    """Integral of ``intg`` over R^d or a ball, with an error estimate.

    The estimate is the change between two successive resolutions; the
    resolution is refined until it falls below ``rel_tol`` times the value.
    """
    ball, factors = _resolve_domain(intg, domain)
    centers, alphas = _anchors(intg.d, factors, ball)
    decay = float(sum(f.beta for f in factors if isinstance(f, InhomDecay)))
    n_gl = 6
    prev = _evaluate_pieces(intg.d, decay, ball, centers, alphas, 0, n_gl)
    for level in range(1, max_refine + 1):
        n_gl += 4
        cur = _evaluate_pieces(intg.d, decay, ball, centers, alphas, level, n_gl)
        err = abs(cur - prev)
        if err <= max(rel_tol, 8 * np.finfo(float).eps) * abs(cur):
            return cur, err
        prev = cur
    raise IntegrationError("refinement stalled", cur, err)


# ---------------------------------------------------------------------------
# lemmas

LEMMAS = ("global_L1", "global_beta", "local_L1", "local_beta")


@dataclass(frozen=True)
class LemmaParams:
    """Exponents of one lemma instance.

    ``global_L1``: alpha and decay ``beta``; ``global_beta``: alpha, beta and
    decay ``gamma``; ``local_L1``: alpha and radius R; ``local_beta``: alpha,
    beta and R. ``x`` and ``z`` are optional fixed anchors.
    """

    lemma: str
    d: int
    alpha: float
    beta: float | None = None
    gamma: float | None = None
    R: float | None = None
    x: tuple[float, ...] | None = None
    z: tuple[float, ...] | None = None

    def check_range(self) -> None:
        d, a, b, g = self.d, self.alpha, self.beta, self.gamma
        if self.lemma not in LEMMAS:
            raise RangeError(f"unknown lemma {self.lemma!r}")
        if d not in (1, 2, 3):
            raise RangeError("lemmas are checked for d in {1, 2, 3}")
        if self.lemma == "global_L1":
            if not (0 <= a < d) or b is None or not b > d:
                raise RangeError("global_L1 needs alpha in [0, d) and decay beta > d")
        elif self.lemma == "global_beta":
            if b is None or g is None or not (0 <= a < d / 2 and 0 <= b < d / 2 and g > d):
                raise RangeError("global_beta needs alpha, beta in [0, d/2) and decay gamma > d")
        elif self.lemma == "local_L1":
            if not a < d:
                raise RangeError("local_L1 needs alpha < d")
        else:
            if b is None or not (a < d / 2 and b < d / 2):
                raise RangeError("local_beta needs alpha, beta < d/2")
        if self.lemma.startswith("local") and (self.R is None or self.R <= 0):
            raise RangeError("local lemmas need a positive radius R")

    def to_dict(self) -> dict:
        out = {"lemma": self.lemma, "d": self.d, "alpha": self.alpha}
        for key in ("beta", "gamma", "R"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        return out


def _decay_integral(d: int, beta: float) -> float:
    """int_0^inf r^{d-1} (1 + r^2)^{-beta/2} dr."""
    return gamma_fn(d / 2) * gamma_fn((beta - d) / 2) / (2 * gamma_fn(beta / 2))


def _global_l1(d: int, alpha: float, beta: float) -> float:
    return sphere_area(d) * (1.0 / (d - alpha) + _decay_integral(d, beta))


def _local_l1(d: int, alpha: float) -> float:
    return 2.0 ** (d - alpha) / (d - alpha) * sphere_area(d)


def local_beta_branches(d: int, alpha: float, beta: float) -> dict[str, float]:
    """Constants from each applicable case of the local beta-integral bound."""
    out = {}
    if alpha < 0:
        out["alpha_negative"] = 2.0 ** (-alpha) * _local_l1(d, beta)
    if beta < 0:
        out["beta_negative"] = 2.0 ** (-beta) * _local_l1(d, alpha)
    if alpha >= 0 and beta >= 0:
        out["both_nonnegative"] = 2.0 * _local_l1(d, alpha + beta)
    return out


def lemma_constant(params: LemmaParams) -> float:
    """The explicit constant K produced by the lemma's proof."""
    params.check_range()
    d, a = params.d, params.alpha
    if params.lemma == "global_L1":
        return _global_l1(d, a, float(params.beta))
    if params.lemma == "global_beta":
        return 2.0 * _global_l1(d, a + float(params.beta), float(params.gamma))
    if params.lemma == "local_L1":
        return _local_l1(d, a)
    return max(local_beta_branches(d, a, float(params.beta)).values())


def lemma_integrand(params: LemmaParams, x: np.ndarray, z: np.ndarray | None) -> tuple[SingularIntegrand, Ball | None]:
    d = params.d
    xs = tuple(float(v) for v in x)
    if params.lemma == "global_L1":
        return SingularIntegrand(d, (PowerLaw(xs, params.alpha), InhomDecay(float(params.beta)))), None
    zs = tuple(float(v) for v in z) if z is not None else xs
    if params.lemma == "global_beta":
        facs = (PowerLaw(xs, params.alpha), PowerLaw(zs, float(params.beta)), InhomDecay(float(params.gamma)))
        return SingularIntegrand(d, facs), None
    ball = Ball((0.0,) * d, float(params.R))
    if params.lemma == "local_L1":
        return SingularIntegrand(d, (PowerLaw(xs, params.alpha),)), ball
    return SingularIntegrand(d, (PowerLaw(xs, params.alpha), PowerLaw(zs, float(params.beta)))), ball


def lemma_scale(params: LemmaParams) -> float:
    if params.lemma == "local_L1":
        return float(params.R) ** (params.d - params.alpha)
    if params.lemma == "local_beta":
        return float(params.R) ** (params.d - params.alpha - float(params.beta))
    return 1.0


@dataclass
class LemmaReport:
    params: LemmaParams
    K: float
    anchors: list[list[list[float]]] = field(default_factory=list)
    values: list[float] = field(default_factory=list)
    errors: list[float] = field(default_factory=list)
    ratios: list[float] = field(default_factory=list)

    @property
    def max_ratio(self) -> float:
        return max(self.ratios, default=0.0)

    @property
    def passed(self) -> bool:
        return all(r <= 1.0 for r in self.ratios)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "K": self.K,
            "anchors": self.anchors,
            "values": self.values,
            "err_estimates": self.errors,
            "ratios": self.ratios,
            "max_ratio": self.max_ratio,
            "pass": self.passed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _ball_sample(rng: np.random.Generator, d: int, radius: float) -> np.ndarray:
    v = rng.standard_normal(d)
    v /= np.linalg.norm(v)
    return v * radius * rng.random() ** (1.0 / d)


def verify_lemma(
    params: LemmaParams,
    n_anchor_samples: int = 100,
    rel_tol: float = 1e-6,
    seed: int = 0,
) -> LemmaReport:
    """Integrate at random anchors and compare with K times the lemma's scale.

    Global lemmas draw anchors uniformly in [-10, 10]^d; local lemmas draw
    them uniformly in the closed ball of radius R.
    """
    params.check_range()
    K = lemma_constant(params)
    rng = np.random.default_rng(seed)
    report = LemmaReport(params, K)
    two = params.lemma.endswith("beta")
    scale = lemma_scale(params)
    for i in range(n_anchor_samples):
        if params.lemma.startswith("global"):
            x = np.asarray(params.x) if params.x is not None else rng.uniform(-10, 10, params.d)
            z = (np.asarray(params.z) if params.z is not None else rng.uniform(-10, 10, params.d)) if two else None
        else:
            x = np.asarray(params.x) if params.x is not None else _ball_sample(rng, params.d, float(params.R))
            z = (np.asarray(params.z) if params.z is not None else _ball_sample(rng, params.d, float(params.R))) if two else None
        intg, ball = lemma_integrand(params, x, z)
        val, err = integrate_singular(intg, ball, rel_tol=rel_tol)
        report.anchors.append([list(map(float, x))] + ([list(map(float, z))] if z is not None else []))
        report.values.append(val)
        report.errors.append(err)
        report.ratios.append(val / (K * scale))
    return report


def draw_lemma_params(lemma: str, rng: np.random.Generator, d: int | None = None) -> LemmaParams:
    """A random in-range parameter set for ``lemma``."""
    d = int(d if d is not None else rng.integers(1, 4))
    if lemma == "global_L1":
        return LemmaParams(lemma, d, float(rng.uniform(0, 0.95 * d)), beta=float(d + rng.uniform(0.05, 3)))
    if lemma == "global_beta":
        a, b = rng.uniform(0, 0.95 * d / 2, 2)
        return LemmaParams(lemma, d, float(a), beta=float(b), gamma=float(d + rng.uniform(0.05, 3)))
    if lemma == "local_L1":
        return LemmaParams(lemma, d, float(rng.uniform(-3, 0.95 * d)), R=float(rng.uniform(0.1, 10)))
    if lemma == "local_beta":
        a, b = rng.uniform(-2, 0.95 * d / 2, 2)
        return LemmaParams(lemma, d, float(a), beta=float(b), R=float(rng.uniform(0.1, 10)))
    raise RangeError(f"unknown lemma {lemma!r}")


__all__ = [
    "LEMMAS",
    "Ball",
    "IndicatorBall",
    "InhomDecay",
    "LemmaParams",
    "LemmaReport",
    "PowerLaw",
    "SingularIntegrand",
    "draw_lemma_params",
    "integrate_singular",
    "lemma_constant",
    "lemma_integrand",
    "lemma_scale",
    "local_beta_branches",
    "sphere_area",
    "verify_lemma",
]
