"""Robot parameters and the flat key-value parameter file format.

The file format is one ``key = value`` pair per line, SI units, ``#`` comments.
Inertia matrices are written as 9 whitespace-separated numbers, row-major.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

_SCALAR_KEYS = (
    "m_A", "m_B", "m_C", "L", "L_G", "H_G", "H", "H_B",
    "g", "beta", "c_r1", "c_r2", "c_f1", "k_m",
)
_MATRIX_KEYS = ("I_1", "I_2", "I_3")

# Layout of the packed parameter vector consumed by the compiled model.
P_MA, P_MB, P_MC = 0, 1, 2
P_I1, P_I2, P_I3 = 3, 12, 21
P_L, P_LG, P_HG, P_H, P_HB = 30, 31, 32, 33, 34
P_G, P_BETA = 35, 36
P_CR1, P_CR2, P_CF1, P_KM = 37, 38, 39, 40
N_PACKED = 41


class ParameterError(ValueError):
    """Raised for parameter sets that violate the physical invariants."""


def _as_inertia(value) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.size != 9:
        raise ParameterError(f"inertia matrix needs 9 entries, got {arr.size}")
    return arr.reshape(3, 3).copy()


@dataclass(frozen=True)
class RobotParams:
    """Physical constants of the biped (SI units, angles in rad).

    ``I_1``, ``I_2``, ``I_3`` are the inertia matrices of Leg-A, Leg-B and the
    shaft body about their own centres of mass, in their body frames.
    """

    m_A: float
    m_B: float
    m_C: float
    I_1: np.ndarray
    I_2: np.ndarray
    I_3: np.ndarray
    L: float
    L_G: float
    H_G: float
    H: float
    H_B: float
    g: float = 9.81
    beta: float = 0.0
    c_r1: float = 0.0
    c_r2: float = 0.0
    c_f1: float = 0.0
    k_m: float = 0.0
    _packed: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for key in _MATRIX_KEYS:
            object.__setattr__(self, key, _as_inertia(getattr(self, key)))
            getattr(self, key).setflags(write=False)
        for key in _SCALAR_KEYS:
            object.__setattr__(self, key, float(getattr(self, key)))
        self.validate()
        object.__setattr__(self, "_packed", self._pack())

    def validate(self) -> None:
        if min(self.m_A, self.m_B, self.m_C) <= 0:
            raise ParameterError("all masses must be positive")
        for key in _MATRIX_KEYS:
            inertia = getattr(self, key)
            if not np.allclose(inertia, inertia.T, rtol=1e-9, atol=0.0):
                raise ParameterError(f"{key} is not symmetric")
            if np.linalg.eigvalsh(inertia).min() <= 0:
                raise ParameterError(f"{key} is not positive definite")
        if not self.H > 0:
            raise ParameterError("H must be positive")
        if self.H_B < self.H:
            raise ParameterError("H_B must be >= H")
        if not self.L > 0:
            raise ParameterError("L must be positive")
        if min(self.c_r1, self.c_r2, self.c_f1) < 0:
            raise ParameterError("friction and damping coefficients must be >= 0")
        if self.g <= 0:
            raise ParameterError("g must be positive")

    def _pack(self) -> np.ndarray:
        p = np.zeros(N_PACKED)
        p[P_MA], p[P_MB], p[P_MC] = self.m_A, self.m_B, self.m_C
        p[P_I1:P_I1 + 9] = self.I_1.ravel()
        p[P_I2:P_I2 + 9] = self.I_2.ravel()
        p[P_I3:P_I3 + 9] = self.I_3.ravel()
        p[P_L], p[P_LG], p[P_HG] = self.L, self.L_G, self.H_G
        p[P_H], p[P_HB] = self.H, self.H_B
        p[P_G], p[P_BETA] = self.g, self.beta
        p[P_CR1], p[P_CR2], p[P_CF1] = self.c_r1, self.c_r2, self.c_f1
        p[P_KM] = self.k_m
        p.setflags(write=False)
        return p

    @property
    def packed(self) -> np.ndarray:
        """Flat float vector in the layout expected by the compiled model."""
        return self._packed

    @property
    def total_mass(self) -> float:
        return self.m_A + self.m_B + self.m_C

    def __eq__(self, other) -> bool:
        if not isinstance(other, RobotParams):
            return NotImplemented
        return bool(np.array_equal(self._packed, other._packed))

    def __hash__(self) -> int:
        return hash(self._packed.tobytes())

    def replace(self, **changes) -> "RobotParams":
        kwargs = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.init}
        kwargs.update(changes)
        return RobotParams(**kwargs)

    def to_dict(self) -> dict:
        out = {}
        for key in _SCALAR_KEYS[:3]:
            out[key] = getattr(self, key)
        for key in _MATRIX_KEYS:
            out[key] = getattr(self, key).ravel().tolist()
        for key in _SCALAR_KEYS[3:]:
            out[key] = getattr(self, key)
        return out


def parse_params(text: str) -> RobotParams:
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"line {lineno}: expected 'key = value'")
        key, _, rhs = line.partition("=")
        key = key.strip()
        if key not in _SCALAR_KEYS and key not in _MATRIX_KEYS:
            raise ParameterError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ParameterError(f"line {lineno}: duplicate key {key!r}")
        try:
            numbers = [float(tok) for tok in rhs.split()]
        except ValueError as exc:
            raise ParameterError(f"line {lineno}: {exc}") from None
        if key in _MATRIX_KEYS:
            values[key] = numbers
        else:
            if len(numbers) != 1:
                raise ParameterError(f"line {lineno}: {key} takes one number")
            values[key] = numbers[0]
    missing = [k for k in ("m_A", "m_B", "m_C", *_MATRIX_KEYS, "L", "L_G", "H_G", "H", "H_B")
               if k not in values]
    if missing:
        raise ParameterError(f"missing keys: {', '.join(missing)}")
    return RobotParams(**values)


def format_params(params: RobotParams) -> str:
    lines = []
    for key, value in params.to_dict().items():
        if isinstance(value, list):
            lines.append(f"{key} = " + " ".join(repr(float(v)) for v in value))
        else:
            lines.append(f"{key} = {float(value)!r}")
    return "\n".join(lines) + "\n"


def load_params(path: str | Path) -> RobotParams:
    return parse_params(Path(path).read_text(encoding="utf-8"))


def save_params(params: RobotParams, path: str | Path) -> None:
    Path(path).write_text(format_params(params), encoding="utf-8")


def default_params(**overrides) -> RobotParams:
    """Shipped parameter set estimated from the prototype's dimensions."""
    text = resources.files("bigfoot.data").joinpath("default_params.txt").read_text(encoding="utf-8")
    params = parse_params(text)
    return params.replace(**overrides) if overrides else params
