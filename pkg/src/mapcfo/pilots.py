"""Pilot (training) matrix construction and serialization.

Two structured layouts are supported besides raw custom matrices:

* ``periodic`` -- an l_t x l_t unitary block repeated m times down the
  frame, optionally mixed and scrambled. Every antenna is active every
  symbol period (low peak power), and lagged row correlations appear
  only at multiples of l_t.
* ``td`` -- time division: antenna t transmits alone for m consecutive
  symbols. Row correlations appear at all lags below m, which buys
  acquisition range at the cost of estimation accuracy.

A ``combined`` pilot concatenates a periodic head with a TD tail to get
the accuracy of the former and the range of the latter.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .types import ConfigError, MimoConfig, _readonly

LAYOUTS = ("periodic", "td", "combined", "custom")

POWER_TOL = 1e-12
UNIT_MODULUS_TOL = 1e-12
ORTHOGONALITY_TOL = 1e-10


def zadoff_chu(length: int, root: int = 1) -> np.ndarray:
    """Unit-modulus Zadoff-Chu scrambling sequence of the given length."""
    if length < 1:
        raise ConfigError("sequence length must be positive")
    if root < 1:
        raise ConfigError("root must be >= 1")
    k = np.arange(length)
    if length % 2 == 0:
        return np.exp(-1j * np.pi * root * k * k / length)
    return np.exp(-1j * np.pi * root * k * (k + 1) / length)


@dataclass(frozen=True)
class PilotMatrix:
    """An n x l_t transmit pilot with its structure metadata.

    Attributes
    ----------
    entries : ndarray
        The n x l_t complex matrix S (rows are symbol times).
    power : float
        Average power per symbol, (1/n) * trace(S^H S).
    layout : str
        One of ``periodic``, ``td``, ``combined``, ``custom``.
    scrambling : ndarray, optional
        Length-n unit-modulus code applied row-wise (None means all ones).
    mixing : ndarray, optional
        l_t x l_t unitary mixing matrix (periodic layout only).
    """

    entries: np.ndarray
    power: float
    layout: str
    scrambling: Optional[np.ndarray] = None
    mixing: Optional[np.ndarray] = None

    def __post_init__(self):
        entries = _readonly(np.asarray(self.entries, dtype=complex))
        object.__setattr__(self, "entries", entries)
        if entries.ndim != 2 or entries.size == 0:
            raise ConfigError("pilot entries must form a non-empty 2-D matrix")
        if self.layout not in LAYOUTS:
            raise ConfigError(f"unknown layout {self.layout!r}")
        n = entries.shape[0]
        actual_power = float(np.sum(np.abs(entries) ** 2)) / n
        if abs(actual_power - self.power) > POWER_TOL * max(1.0, actual_power):
            raise ConfigError(
                f"declared power {self.power} != (1/n)*trace(S^H S) = {actual_power}"
            )
        object.__setattr__(self, "power", float(self.power))
        if self.scrambling is not None:
            code = _readonly(np.asarray(self.scrambling, dtype=complex).ravel())
            if code.size != n:
                raise ConfigError("scrambling length must equal the pilot length")
            if np.abs(np.abs(code) - 1.0).max() > UNIT_MODULUS_TOL:
                raise ConfigError("scrambling entries must have unit modulus")
            object.__setattr__(self, "scrambling", code)
        if self.mixing is not None:
            mix = _readonly(np.asarray(self.mixing, dtype=complex))
            l_t = entries.shape[1]
            if mix.shape != (l_t, l_t):
                raise ConfigError("mixing matrix must be l_t x l_t")
            if np.abs(mix.conj().T @ mix - np.eye(l_t)).max() > 1e-10:
                raise ConfigError("mixing matrix must be unitary")
            object.__setattr__(self, "mixing", mix)
        if self.layout in ("periodic", "td") and not self.is_orthogonal:
            raise ConfigError(f"{self.layout} pilot failed the orthogonality check")

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def l_t(self) -> int:
        return self.entries.shape[1]

    def gram(self) -> np.ndarray:
        """Column Gram matrix S^H S (l_t x l_t)."""
        return self.entries.conj().T @ self.entries

    def row_products(self) -> np.ndarray:
        """Row inner products: (S S^H)[k1, k2] = sum_t s[t,k1] s*[t,k2]."""
        return self.entries @ self.entries.conj().T

    @property
    def is_orthogonal(self) -> bool:
        """True when S^H S equals (n*power/l_t) * I within tolerance."""
        target = self.n * self.power / self.l_t
        dev = np.abs(self.gram() - target * np.eye(self.l_t)).max()
        return bool(dev <= ORTHOGONALITY_TOL * max(1.0, target))


def make_periodic_pilot(
    cfg: MimoConfig,
    m: int,
    power: float = 1.0,
    scrambling: Optional[np.ndarray] = None,
    mixing: Optional[np.ndarray] = None,
) -> PilotMatrix:
    """Stack m copies of an l_t x l_t unitary block, scramble, and scale.

    Defaults are the identity block and the all-ones code, which gives
    the plain round-robin pilot: antenna t transmits at symbols
    t, t + l_t, t + 2*l_t, ...
    """
    if m < 1:
        raise ConfigError("m must be a positive integer")
    if cfg.n != m * cfg.l_t:
        raise ConfigError(f"n={cfg.n} must equal m*l_t={m * cfg.l_t} for a periodic pilot")
    if power <= 0:
        raise ConfigError("power must be positive")
    block = np.eye(cfg.l_t, dtype=complex)
    if mixing is not None:
        mix = np.asarray(mixing, dtype=complex)
        if mix.shape != (cfg.l_t, cfg.l_t):
            raise ConfigError("mixing matrix must be l_t x l_t")
        block = block @ mix
    entries = np.tile(block, (m, 1))
    if scrambling is not None:
        code = np.asarray(scrambling, dtype=complex).ravel()
        if code.size != cfg.n:
            raise ConfigError("scrambling length must equal n")
        entries = code[:, None] * entries
    entries = np.sqrt(power) * entries
    return PilotMatrix(entries, power, "periodic", scrambling=scrambling, mixing=mixing)


def make_td_pilot(
    cfg: MimoConfig,
    m: int,
    power: float = 1.0,
    scrambling: Optional[np.ndarray] = None,
) -> PilotMatrix:
    """Time-division pilot: antenna t alone in symbol rows (t-1)m+1 ... tm."""
    if m < 1:
        raise ConfigError("m must be a positive integer")
    if cfg.n != m * cfg.l_t:
        raise ConfigError(f"n={cfg.n} must equal m*l_t={m * cfg.l_t} for a TD pilot")
    if power <= 0:
        raise ConfigError("power must be positive")
    entries = np.kron(np.eye(cfg.l_t, dtype=complex), np.ones((m, 1), dtype=complex))
    if scrambling is not None:
        code = np.asarray(scrambling, dtype=complex).ravel()
        if code.size != cfg.n:
            raise ConfigError("scrambling length must equal n")
        entries = code[:, None] * entries
    entries = np.sqrt(power) * entries
    return PilotMatrix(entries, power, "td", scrambling=scrambling)


def make_combined_pilot(head: PilotMatrix, tail: Optional[PilotMatrix]) -> PilotMatrix:
    """Concatenate a periodic head with a TD tail (head rows on top).

    An empty tail degenerates to the head itself.
    """
    if tail is None:
        return head
    if head.l_t != tail.l_t:
        raise ConfigError(
            f"antenna-count mismatch between segments: {head.l_t} vs {tail.l_t}"
        )
    entries = np.vstack([head.entries, tail.entries])
    n = entries.shape[0]
    power = float(np.sum(np.abs(entries) ** 2)) / n
    scrambling = None
    if head.scrambling is not None or tail.scrambling is not None:
        head_code = head.scrambling if head.scrambling is not None else np.ones(head.n)
        tail_code = tail.scrambling if tail.scrambling is not None else np.ones(tail.n)
        scrambling = np.concatenate([head_code, tail_code])
    return PilotMatrix(entries, power, "combined", scrambling=scrambling)


def custom_pilot(entries: np.ndarray, scrambling: Optional[np.ndarray] = None) -> PilotMatrix:
    """Wrap a raw matrix as a custom-layout pilot (no structure assumed)."""
    entries = np.asarray(entries, dtype=complex)
    power = float(np.sum(np.abs(entries) ** 2)) / entries.shape[0]
    return PilotMatrix(entries, power, "custom", scrambling=scrambling)


def write_complex_csv(matrix: np.ndarray, path) -> None:
    """Write a complex matrix as ``row,col,re,im`` rows (0-based indices)."""
    matrix = np.asarray(matrix)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "col", "re", "im"])
        for k in range(matrix.shape[0]):
            for t in range(matrix.shape[1]):
                v = complex(matrix[k, t])
                writer.writerow([k, t, f"{v.real:.17g}", f"{v.imag:.17g}"])


def read_complex_csv(path) -> np.ndarray:
    """Read a ``row,col,re,im`` CSV back into a dense complex matrix."""
    rows, cols, values = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["row", "col", "re", "im"]:
            raise ConfigError(f"{path}: expected header 'row,col,re,im'")
        for line in reader:
            if not line:
                continue
            rows.append(int(line[0]))
            cols.append(int(line[1]))
            values.append(complex(float(line[2]), float(line[3])))
    if not rows:
        raise ConfigError(f"{path}: no matrix entries found")
    out = np.zeros((max(rows) + 1, max(cols) + 1), dtype=complex)
    out[rows, cols] = values
    return out
