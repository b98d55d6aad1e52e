"""Field labels, OPE coefficient kernels and the OPE structure container."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Union

import numpy as np
import yaml
from scipy.special import gamma as gamma_fn

from ..errors import ConfigError, DiagonalError, UnknownLabel

Real = Union[float, Fraction]

IDENTITY_NAME = "1"


@dataclass(frozen=True)
class Label:
    """A field label with its scaling dimension.

    ``wick_power`` is set for free-field labels :phi^k: and left as None for
    abstract alphabets.
    """

    name: str
    dim: Real
    parity: str = "even"
    wick_power: int | None = None

    def __post_init__(self) -> None:
        if self.parity not in ("even", "odd"):
            raise ValueError(f"parity must be 'even' or 'odd', got {self.parity!r}")
        if self.dim < 0:
            raise ValueError(f"scaling dimension of {self.name} must be nonnegative")
        if self.name == IDENTITY_NAME and self.dim != 0:
            raise ValueError("the identity label has dimension 0")

    @property
    def is_identity(self) -> bool:
        return self.name == IDENTITY_NAME

    def __str__(self) -> str:
        return self.name


IDENTITY = Label(IDENTITY_NAME, Fraction(0), "even", 0)


def _distance(x, y) -> float:
    diff = np.atleast_1d(np.asarray(x, dtype=float)) - np.atleast_1d(np.asarray(y, dtype=float))
    return float(np.sqrt(np.dot(diff, diff)))


class Kernel:
    """Translation-invariant OPE coefficient kernel C(x, y) = k(|x - y|)."""

    kind: str = "abstract"

    def radial(self, dist):
        raise NotImplementedError

    def __call__(self, x, y) -> float:
        dist = _distance(x, y)
        if dist == 0.0:
            raise DiagonalError("kernel evaluated on the diagonal")
        return float(self.radial(dist))

    @property
    def is_zero(self) -> bool:
        return False

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantKernel(Kernel):
    value: float = 1.0
    kind = "constant"

    def radial(self, dist):
        return np.full_like(np.asarray(dist, dtype=float), self.value)

    @property
    def is_zero(self) -> bool:
        return self.value == 0.0

    def to_dict(self) -> dict:
        return {"kind": "constant", "value": float(self.value)}


@dataclass(frozen=True)
class PowerLawKernel(Kernel):
    """``prefactor * |x - y| ** (-exponent)``."""

    exponent: float
    prefactor: float = 1.0
    kind = "power_law"

    def radial(self, dist):
        return self.prefactor * np.asarray(dist, dtype=float) ** (-self.exponent)

    @property
    def is_zero(self) -> bool:
        return self.prefactor == 0.0

    def fourier_multiplier(self, xi_norm, d: int):
        """Fourier transform of the kernel at frequency modulus ``xi_norm``.

        Uses the convention hat k(xi) = int e^{-i xi x} k(x) dx and requires
        0 < exponent < d, where the transform is again a power law.
        """
        a = float(self.exponent)
        if not 0.0 < a < d:
            raise ValueError("power-law Fourier multiplier needs 0 < exponent < d")
        const = math.pi ** (d / 2) * 2.0 ** (d - a) * gamma_fn((d - a) / 2) / gamma_fn(a / 2)
        with np.errstate(divide="ignore"):
            return self.prefactor * const * np.asarray(xi_norm, dtype=float) ** (a - d)

    def to_dict(self) -> dict:
        return {"kind": "power_law", "exponent": float(self.exponent), "prefactor": float(self.prefactor)}


@dataclass(frozen=True)
class ZeroKernel(Kernel):
    kind = "zero"

    def radial(self, dist):
        return np.zeros_like(np.asarray(dist, dtype=float))

    @property
    def is_zero(self) -> bool:
        return True

    def to_dict(self) -> dict:
        return {"kind": "zero"}


ZERO = ZeroKernel()


@dataclass(frozen=True)
class BoundParams:
    """Constants of the hard bounds, shared by a finite family of formats."""

    eta: float = 1.0
    gamma: float = 1.0
    epsilon: float = 0.0
    k: int = 0
    K: float = 1.0

    def __post_init__(self) -> None:
        if self.eta <= 0 or self.gamma <= 0 or self.K <= 0:
            raise ValueError("eta, gamma and K must be strictly positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.k < 0 or int(self.k) != self.k:
            raise ValueError("k must be a nonnegative integer")

    def replace(self, **changes) -> "BoundParams":
        values = {**self.__dict__, **changes}
        return BoundParams(**values)

    def to_dict(self) -> dict:
        return {"eta": self.eta, "gamma": self.gamma, "epsilon": self.epsilon, "k": self.k, "K": self.K}


@dataclass(frozen=True)
class OpeStructure:
    """Alphabet, dimension d and the coefficient kernels C_AB^C.

    Missing coefficient entries are the zero kernel.
    """

    alphabet: tuple[Label, ...]
    d: int
    coeff: Mapping[tuple[str, str, str], Kernel] = field(default_factory=dict)
    bound_params: BoundParams = field(default_factory=BoundParams)

    def __post_init__(self) -> None:
        names = [lab.name for lab in self.alphabet]
        if len(set(names)) != len(names):
            raise ValueError("duplicate label names in alphabet")
        if IDENTITY_NAME not in names:
            raise ValueError("alphabet must contain the identity label")
        if self.d < 1:
            raise ValueError("dimension must be a positive integer")
        for key in self.coeff:
            for name in key:
                if name not in names:
                    raise UnknownLabel(f"coefficient refers to unknown label {name!r}")

    def label(self, name: str | Label) -> Label:
        if isinstance(name, Label):
            name = name.name
        for lab in self.alphabet:
            if lab.name == name:
                return lab
        raise UnknownLabel(f"label {name!r} is not in the alphabet")

    @property
    def identity(self) -> Label:
        return self.label(IDENTITY_NAME)

    def coefficient(self, a: str | Label, b: str | Label, c: str | Label) -> Kernel:
        key = (self.label(a).name, self.label(b).name, self.label(c).name)
        return self.coeff.get(key, ZERO)

    def channels(self, delta: Real) -> tuple[Label, ...]:
        """The set A(delta) of labels with dimension at most delta, by dimension."""
        chosen = [lab for lab in self.alphabet if lab.dim <= delta]
        return tuple(sorted(chosen, key=lambda lab: (lab.dim, lab.name)))

    # serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "labels": [
                {"name": lab.name, "dim": _dim_out(lab.dim), "parity": lab.parity}
                | ({"wick_power": lab.wick_power} if lab.wick_power is not None else {})
                for lab in self.alphabet
            ],
            "coefficients": [
                {"A": a, "B": b, "C": c, **kern.to_dict()} for (a, b, c), kern in sorted(self.coeff.items())
            ],
            "bound_params": self.bound_params.to_dict(),
        }

    def to_text(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_text(cls, text: str) -> "OpeStructure":
        return structure_from_document(text)


def _dim_out(dim: Real):
    if isinstance(dim, Fraction):
        return str(dim) if dim.denominator != 1 else int(dim)
    return float(dim)


def _dim_in(raw, line: int | None) -> Real:
    if isinstance(raw, str):
        try:
            return Fraction(raw)
        except ValueError as exc:
            raise ConfigError(f"cannot parse dimension {raw!r}", line) from exc
    if isinstance(raw, int):
        return Fraction(raw)
    if isinstance(raw, float):
        return raw
    raise ConfigError(f"dimension must be a number, got {raw!r}", line)


def _kernel_from(entry: dict, line: int | None) -> Kernel:
    kind = entry.get("kind")
    try:
        if kind == "constant":
            return ConstantKernel(float(entry.get("value", 1.0)))
        if kind == "power_law":
            return PowerLawKernel(float(entry["exponent"]), float(entry.get("prefactor", 1.0)))
        if kind == "zero":
            return ZERO
    except KeyError as exc:
        raise ConfigError(f"power_law kernel needs key {exc.args[0]!r}", line) from exc
    raise ConfigError(f"unknown kernel kind {kind!r}", line)


def structure_from_document(text: str) -> OpeStructure:
    """Parse the YAML structure document, reporting errors with line numbers."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"unreadable document: {exc}", mark.line + 1 if mark else None) from exc
    if root is None or not isinstance(root, yaml.MappingNode):
        raise ConfigError("structure document must be a mapping", 1)
    data = yaml.safe_load(text)
    lines = {key.value: key.start_mark.line + 1 for key, _ in root.value}
    for key in ("d", "labels"):
        if key not in data:
            raise ConfigError(f"missing required key {key!r}", 1)
    labels = []
    for idx, entry in enumerate(data["labels"]):
        line = _item_line(root, "labels", idx)
        if not isinstance(entry, dict) or "name" not in entry or "dim" not in entry:
            raise ConfigError("each label needs 'name' and 'dim'", line)
        labels.append(
            Label(
                str(entry["name"]),
                _dim_in(entry["dim"], line),
                entry.get("parity", "even"),
                entry.get("wick_power"),
            )
        )
    coeff: dict[tuple[str, str, str], Kernel] = {}
    for idx, entry in enumerate(data.get("coefficients", []) or []):
        line = _item_line(root, "coefficients", idx)
        try:
            key = (str(entry["A"]), str(entry["B"]), str(entry["C"]))
        except (KeyError, TypeError) as exc:
            raise ConfigError("each coefficient needs 'A', 'B', 'C' and 'kind'", line) from exc
        coeff[key] = _kernel_from(entry, line)
    bp = data.get("bound_params") or {}
    try:
        params = BoundParams(**bp)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad bound_params: {exc}", lines.get("bound_params")) from exc
    try:
        return OpeStructure(tuple(labels), int(data["d"]), coeff, params)
    except (ValueError, UnknownLabel) as exc:
        raise ConfigError(str(exc), lines.get("labels")) from exc


def _item_line(root: yaml.MappingNode, key: str, idx: int) -> int | None:
    for knode, vnode in root.value:
        if knode.value == key and isinstance(vnode, yaml.SequenceNode) and idx < len(vnode.value):
            return vnode.value[idx].start_mark.line + 1
    return None


def wick_label(k: int, dim_phi: Real) -> Label:
    """Label of the Wick power :phi^k: (k = 0 is the identity)."""
    if k == 0:
        return IDENTITY
    name = "phi" if k == 1 else f"phi{k}"
    return Label(name, k * dim_phi, "odd" if k % 2 else "even", k)


def free_field_structure(
    d: int,
    dim_phi: Real,
    kappa_value: float,
    max_power: int = 2,
    bound_params: BoundParams | None = None,
) -> OpeStructure:
    """OPE structure of the massless free field on the Wick powers up to ``max_power``.

    The phi x phi entries are C^1 = kappa |x-y|^{-2[phi]}, C^phi = 0 (stored as
    an explicit zero channel) and C^{phi^2} = 1.  Identity fusion C_{1A}^A = 1
    is recorded for every label.
    """
    labels = tuple(wick_label(k, dim_phi) for k in range(max_power + 1))
    coeff: dict[tuple[str, str, str], Kernel] = {}
    for lab in labels:
        coeff[(IDENTITY_NAME, lab.name, lab.name)] = ConstantKernel(1.0)
        coeff[(lab.name, IDENTITY_NAME, lab.name)] = ConstantKernel(1.0)
    if max_power >= 1:
        coeff[("phi", "phi", IDENTITY_NAME)] = PowerLawKernel(float(2 * dim_phi), kappa_value)
        coeff[("phi", "phi", "phi")] = ZERO
    if max_power >= 2:
        coeff[("phi", "phi", "phi2")] = ConstantKernel(1.0)
    params = bound_params or BoundParams(eta=1.0, gamma=1.0, epsilon=0.0, k=0, K=1.0)
    return OpeStructure(labels, d, coeff, params)
