"""Coordinatewise polynomial dictionaries and their Jacobians.

The dictionary for ambient dimension ``d`` and degree set ``{0, 1, 2, 3}`` is

    [1 | h_1 .. h_d | h_1^2 .. h_d^2 | h_1^3 .. h_d^3]

so a coefficient matrix ``beta`` of shape ``(d, d_n)`` defines the vector
field ``beta @ xi(h)``. Degrees can be any subset of ``{0, 1, 2, 3}``; the
block order is always ascending degree.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .exceptions import InvalidInputError

ALLOWED_DEGREES = (0, 1, 2, 3)


@dataclass(frozen=True)
class DictionarySpec:
    d: int
    degrees: tuple[int, ...] = ALLOWED_DEGREES

    def __post_init__(self):
        degrees = tuple(sorted(set(int(p) for p in self.degrees)))
        if not degrees:
            raise InvalidInputError("dictionary needs at least one degree")
        bad = [p for p in degrees if p not in ALLOWED_DEGREES]
        if bad:
            raise InvalidInputError(f"unsupported degrees {bad}; allowed {ALLOWED_DEGREES}")
        if int(self.d) < 1:
            raise InvalidInputError(f"d must be >= 1, got {self.d}")
        object.__setattr__(self, "degrees", degrees)
        object.__setattr__(self, "d", int(self.d))

    @classmethod
    def from_string(cls, d: int, degrees: str) -> "DictionarySpec":
        """Parse a compact degree string such as ``"0123"`` or ``"1,3"``."""
        digits = [c for c in degrees if not c.isspace() and c != ","]
        if not digits or not all(c.isdigit() for c in digits):
            raise InvalidInputError(f"cannot parse degree set {degrees!r}")
        return cls(d, tuple(int(c) for c in digits))

    @property
    def has_constant(self) -> bool:
        return 0 in self.degrees

    @property
    def d_n(self) -> int:
        return int(self.has_constant) + self.d * sum(1 for p in self.degrees if p > 0)

    @cached_property
    def _blocks(self) -> dict[int, slice]:
        blocks, start = {}, 0
        for p in self.degrees:
            width = 1 if p == 0 else self.d
            blocks[p] = slice(start, start + width)
            start += width
        return blocks

    def block(self, degree: int) -> slice:
        """Column slice of ``beta`` holding the coefficients of one degree."""
        if degree not in self.degrees:
            raise InvalidInputError(f"degree {degree} is not in {self.degrees}")
        return self._blocks[degree]

    def degrees_string(self) -> str:
        return "".join(str(p) for p in self.degrees)

    def to_dict(self) -> dict:
        return {"d": self.d, "degrees": list(self.degrees)}

    @classmethod
    def from_dict(cls, payload: dict) -> "DictionarySpec":
        return cls(int(payload["d"]), tuple(payload["degrees"]))


def _as_batch(spec: DictionarySpec, h) -> tuple[np.ndarray, bool]:
    h = np.asarray(h, dtype=float)
    single = h.ndim == 1
    H = h[None, :] if single else h
    if H.ndim != 2 or H.shape[1] != spec.d:
        raise InvalidInputError(f"expected state of length {spec.d}, got shape {h.shape}")
    return H, single


def evaluate_batch(spec: DictionarySpec, H: np.ndarray) -> np.ndarray:
    """Dictionary values for a batch of states, ``(n, d) -> (n, d_n)``."""
    blocks = []
    for p in spec.degrees:
        if p == 0:
            blocks.append(np.ones((H.shape[0], 1)))
        elif p == 1:
            blocks.append(H)
        else:
            blocks.append(H**p)
    return np.concatenate(blocks, axis=1)


def vjp_batch(spec: DictionarySpec, H: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Row-wise ``jacobian(h_i).T @ v_i`` for ``H`` of shape (n, d), ``V`` of shape (n, d_n).

    Uses the block-diagonal structure of the Jacobian instead of forming it.
    """
    out = np.zeros_like(H)
    for p in spec.degrees:
        if p == 0:
            continue
        cols = V[:, spec.block(p)]
        if p == 1:
            out += cols
        elif p == 2:
            out += 2.0 * H * cols
        else:
            out += 3.0 * H * H * cols
    return out


def eval(spec: DictionarySpec, h) -> np.ndarray:  # noqa: A001 - mirrors the operation name
    """Evaluate the dictionary at one state (length ``d``) or a batch ``(n, d)``."""
    H, single = _as_batch(spec, h)
    values = evaluate_batch(spec, H)
    return values[0] if single else values


def eval_jacobian(spec: DictionarySpec, h) -> np.ndarray:
    """Jacobian of the dictionary, entry ``(l, j) = d xi_l / d h_j``.

    Returns shape ``(d_n, d)`` for a single state, ``(n, d_n, d)`` for a batch.
    """
    H, single = _as_batch(spec, h)
    n, d = H.shape
    jac = np.zeros((n, spec.d_n, d))
    idx = np.arange(d)
    for p in spec.degrees:
        if p == 0:
            continue
        rows = np.arange(spec.d_n)[spec.block(p)]
        jac[:, rows, idx] = p * H ** (p - 1)
    return jac[0] if single else jac
