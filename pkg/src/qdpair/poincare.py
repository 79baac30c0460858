"""Polarization labels, Poincaré-sphere coordinates and projectors.

Ket convention: ``cos(theta/2)|H> + exp(i phi) sin(theta/2)|V>``. Two-photon
objects are ordered (XX photon, X photon), basis HH, HV, VH, VV.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class PolarizationLabel(str, Enum):
    H = "H"
    V = "V"
    D = "D"
    A = "A"
    R = "R"
    L = "L"

    @property
    def orthogonal(self) -> "PolarizationLabel":
        return _ORTHOGONAL[self]

    @property
    def setting(self) -> "PolarizationLabel":
        """Transmission label of the projection-unit setting measuring this state."""
        return _SETTING[self]

    @classmethod
    def parse(cls, value) -> "PolarizationLabel":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise ValueError(f"unknown polarization label {value!r}") from None


P = PolarizationLabel
LABELS = (P.H, P.V, P.D, P.A, P.R, P.L)
SETTING_LABELS = (P.H, P.D, P.R)

_ORTHOGONAL = {P.H: P.V, P.V: P.H, P.D: P.A, P.A: P.D, P.R: P.L, P.L: P.R}
_SETTING = {P.H: P.H, P.V: P.H, P.D: P.D, P.A: P.D, P.R: P.R, P.L: P.R}


@dataclass(frozen=True)
class PoincareCoord:
    theta: float
    phi: float

    def __post_init__(self):
        if not (0.0 <= self.theta <= np.pi):
            raise ValueError(f"theta={self.theta} outside [0, pi]")
        if not (0.0 <= self.phi < 2 * np.pi):
            raise ValueError(f"phi={self.phi} outside [0, 2pi)")


_COORDS = {
    # phi is irrelevant at the poles and fixed to 0 there
    P.H: PoincareCoord(0.0, 0.0),
    P.V: PoincareCoord(np.pi, 0.0),
    P.D: PoincareCoord(np.pi / 2, 0.0),
    P.A: PoincareCoord(np.pi / 2, np.pi),
    P.R: PoincareCoord(np.pi / 2, 3 * np.pi / 2),
    P.L: PoincareCoord(np.pi / 2, np.pi / 2),
}


def basis_coords(label) -> PoincareCoord:
    return _COORDS[PolarizationLabel.parse(label)]


def _coords(c) -> PoincareCoord:
    return c if isinstance(c, PoincareCoord) else basis_coords(c)


def ket(coords) -> np.ndarray:
    """Single-photon Jones vector (a_H, a_V) for a Poincaré coordinate or label."""
    c = _coords(coords)
    return np.array(
        [np.cos(c.theta / 2), np.exp(1j * c.phi) * np.sin(c.theta / 2)],
        dtype=complex,
    )


def projector(coords) -> np.ndarray:
    k = ket(coords)
    return np.outer(k, k.conj())


def pair_ket(first, second) -> np.ndarray:
    return np.kron(ket(first), ket(second))


def pair_projector(first, second) -> np.ndarray:
    """Rank-1 projector |P_I><P_I| (x) |P_J><P_J|; ``first`` acts on the XX photon."""
    return np.kron(projector(first), projector(second))


def combinations() -> list[tuple[PolarizationLabel, PolarizationLabel]]:
    """The 36 ordered (XX basis, X basis) combinations."""
    return [(i, j) for i in LABELS for j in LABELS]


def settings() -> list[tuple[PolarizationLabel, PolarizationLabel]]:
    """The 9 projection-unit settings; each yields four combinations via both PBS ports."""
    return [(i, j) for i in SETTING_LABELS for j in SETTING_LABELS]


def setting_outcomes(first, second) -> list[tuple[PolarizationLabel, PolarizationLabel]]:
    """Combinations measured by the (T,T), (T,R), (R,T), (R,R) detector pairs of a setting."""
    i, j = PolarizationLabel.parse(first), PolarizationLabel.parse(second)
    return [(i, j), (i, j.orthogonal), (i.orthogonal, j), (i.orthogonal, j.orthogonal)]


def combo_label(first, second) -> str:
    return f"{PolarizationLabel.parse(first).value}-{PolarizationLabel.parse(second).value}"


def parse_combo(text: str) -> tuple[PolarizationLabel, PolarizationLabel]:
    a, b = text.split("-")
    return PolarizationLabel.parse(a), PolarizationLabel.parse(b)
