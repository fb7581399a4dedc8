"""Discrete torus, Fourier transforms, frequencies, states and observables.

Conventions used everywhere in the package:

* grid points ``x_m = 2*pi*m/K``,
* mode set ``N_K = [-K/2, K/2)`` intersected with the integers, stored in FFT
  layout (mode ``k`` lives at array position ``k % K``),
* forward transform ``u_k = (1/K) * sum_x u(x) exp(-i k x)``,
* frequencies ``omega_k = sqrt(k**2 + rho)``,
* diagonalizing variables ``u = Lambda^(1/2) q + i Lambda^(-1/2) p``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import ModeIndexError, SizeError

_IMAG_WARN = 1e-10


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TorusGrid:
    """Equispaced periodic grid with K points and mode set [-K/2, K/2)."""

    K: int

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise SizeError(f"K must be a positive integer, got {self.K}")
        object.__setattr__(self, "K", int(self.K))

    @cached_property
    def points(self) -> np.ndarray:
        return _frozen(2.0 * np.pi * np.arange(self.K) / self.K)

    @cached_property
    def modes(self) -> np.ndarray:
        """Integer mode numbers in FFT layout: position p holds mode p or p-K."""
        return _frozen(np.rint(np.fft.fftfreq(self.K, d=1.0 / self.K)).astype(int))

    @cached_property
    def neg_index(self) -> np.ndarray:
        """Permutation sending position of mode k to position of canon(-k)."""
        return _frozen((-self.modes) % self.K)

    def canon(self, m: int) -> int:
        """Reduce an arbitrary integer to its representative in N_K."""
        half = self.K // 2 if self.K % 2 == 0 else (self.K - 1) // 2
        return (m + half) % self.K - half

    def index_of(self, k: int) -> int:
        if not self.contains(k):
            raise ModeIndexError(f"mode {k} is not in N_{self.K}")
        return k % self.K

    def contains(self, k: int) -> bool:
        if self.K % 2 == 0:
            return -self.K // 2 <= k < self.K // 2
        return -(self.K - 1) // 2 <= k <= (self.K - 1) // 2

    def to_coefficients(self, values: np.ndarray) -> np.ndarray:
        """Grid samples -> Fourier coefficients (mode layout above)."""
        values = np.asarray(values)
        if values.shape != (self.K,):
            raise SizeError(f"expected {self.K} grid values, got {values.shape}")
        return np.fft.fft(values) / self.K

    def to_values(self, coeffs: np.ndarray) -> np.ndarray:
        """Fourier coefficients -> grid samples."""
        coeffs = np.asarray(coeffs)
        if coeffs.shape != (self.K,):
            raise SizeError(f"expected {self.K} coefficients, got {coeffs.shape}")
        return np.fft.ifft(coeffs) * self.K


def japanese_bracket(modes: np.ndarray) -> np.ndarray:
    return np.sqrt(1.0 + np.asarray(modes, dtype=float) ** 2)


@dataclass(frozen=True)
class FrequencySpec:
    """Mass rho and the frequency table omega_k = sqrt(k^2 + rho)."""

    grid: TorusGrid
    rho: float

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"mass rho must be positive, got {self.rho}")

    @cached_property
    def omega(self) -> np.ndarray:
        return _frozen(np.sqrt(self.grid.modes.astype(float) ** 2 + self.rho))

    @property
    def omega_nyquist(self) -> float:
        """omega_{K/2} entering the CFL condition (K/2 need not be a mode)."""
        return float(np.sqrt((self.grid.K / 2.0) ** 2 + self.rho))

    def omega_at(self, k: int) -> float:
        return float(self.omega[self.grid.index_of(k)])


@dataclass(frozen=True)
class MollifierSpec:
    """Filter function phi with phi(0) = 1 applied as phi(h*Lambda)."""

    fn: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"

    def __post_init__(self):
        value = float(np.asarray(self.fn(np.zeros(1)))[0])
        if value != 1.0:
            raise ValueError(f"mollifier must satisfy phi(0) = 1, got {value}")

    def weights(self, freq: FrequencySpec, h: float) -> np.ndarray:
        return np.asarray(self.fn(h * freq.omega), dtype=float)


def identity_mollifier() -> MollifierSpec:
    return MollifierSpec(fn=lambda x: np.ones_like(np.asarray(x, dtype=float)),
                         name="identity")


@dataclass(frozen=True)
class RealState:
    """Position/momentum samples (q, p) on the grid."""

    grid: TorusGrid
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if q.shape != (self.grid.K,) or p.shape != (self.grid.K,):
            raise SizeError(
                f"q/p must have {self.grid.K} samples, got {q.shape} and {p.shape}"
            )
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ValueError("q and p must be finite")
        object.__setattr__(self, "q", _frozen(q))
        object.__setattr__(self, "p", _frozen(p))


@dataclass(frozen=True)
class ModeState:
    """Complex mode vector u in the diagonalizing variables."""

    grid: TorusGrid
    u: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=complex)
        if u.shape != (self.grid.K,):
            raise SizeError(f"u must have {self.grid.K} modes, got {u.shape}")
        object.__setattr__(self, "u", _frozen(u))

    def with_u(self, u: np.ndarray) -> "ModeState":
        return ModeState(self.grid, u)


def to_modes(state: RealState, freq: FrequencySpec) -> ModeState:
    """(q, p) -> u with u_k = omega_k^(1/2) q_k + i omega_k^(-1/2) p_k."""
    if state.grid.K != freq.grid.K:
        raise SizeError("state and frequency table use different grids")
    grid = state.grid
    qh = grid.to_coefficients(state.q)
    ph = grid.to_coefficients(state.p)
    root = np.sqrt(freq.omega)
    return ModeState(grid, root * qh + 1j * ph / root)


def from_modes(state: ModeState, freq: FrequencySpec) -> RealState:
    """Invert to_modes; the map is a real-linear bijection on C^{N_K}."""
    if state.grid.K != freq.grid.K:
        raise SizeError("state and frequency table use different grids")
    grid = state.grid
    u = state.u
    uneg = np.conj(u[grid.neg_index])
    root = np.sqrt(freq.omega)
    qh = (u + uneg) / (2.0 * root)
    ph = root * (u - uneg) / 2j
    q = grid.to_values(qh)
    p = grid.to_values(ph)
    scale = max(float(np.max(np.abs(q))), float(np.max(np.abs(p))), 1e-300)
    residue = max(float(np.max(np.abs(q.imag))), float(np.max(np.abs(p.imag))))
    if residue > _IMAG_WARN * scale:
        warnings.warn(
            f"from_modes: imaginary residue {residue:.3e} (relative "
            f"{residue / scale:.3e}) suggests upstream corruption",
            RuntimeWarning,
        )
    return RealState(grid, q.real, p.real)


def real_part_coefficients(state: ModeState) -> np.ndarray:
    """Fourier coefficients of Re u(x), computed without a transform."""
    u = state.u
    return 0.5 * (u + np.conj(u[state.grid.neg_index]))


def super_action(state: ModeState, k: int) -> float:
    """Harmonic action J_k = (|u_k|^2 + |u_-k|^2)/2, J_{-K/2} = |u_{-K/2}|^2."""
    grid = state.grid
    if not grid.contains(k):
        raise ModeIndexError(f"mode {k} is not in N_{grid.K}")
    if grid.K % 2 == 0 and abs(k) == grid.K // 2:
        return float(np.abs(state.u[grid.index_of(-grid.K // 2)]) ** 2)
    k = abs(k)
    a = state.u[grid.index_of(k)]
    b = state.u[grid.index_of(-k)] if k > 0 else a
    return float(0.5 * (np.abs(a) ** 2 + np.abs(b) ** 2))


def canonical_action_modes(grid: TorusGrid) -> list[int]:
    """Representative indices for the distinct super-actions."""
    ks = list(range(0, (grid.K + 1) // 2))
    if grid.K % 2 == 0:
        ks.append(-grid.K // 2)
    return ks


def all_super_actions(state: ModeState) -> dict[int, float]:
    return {k: super_action(state, k) for k in canonical_action_modes(state.grid)}


def sobolev_norm(state: ModeState, s: float) -> float:
    """H^s norm: sqrt(sum <k>^(2s) |u_k|^2)."""
    w = japanese_bracket(state.grid.modes) ** (2.0 * s)
    return float(np.sqrt(np.sum(w * np.abs(state.u) ** 2)))


def grid_sobolev_norm(grid: TorusGrid, values: np.ndarray, s: float) -> float:
    """H^s norm of a (real or complex) grid function."""
    coeffs = grid.to_coefficients(np.asarray(values))
    w = japanese_bracket(grid.modes) ** (2.0 * s)
    return float(np.sqrt(np.sum(w * np.abs(coeffs) ** 2)))


def quadratic_energy(state: ModeState, freq: FrequencySpec) -> float:
    """T(u) = (1/2) sum omega_k |u_k|^2."""
    return float(0.5 * np.sum(freq.omega * np.abs(state.u) ** 2))


def power_law_initial_data(grid: TorusGrid, freq: FrequencySpec,
                           s0: float, eps: float) -> RealState:
    """Power-law data q0 = eps/Z * sum <k>^(-s0-0.525) e^{ikx}, p0 = 0.

    The normalization Z = (sum <k>^(-1.05))^(1/2) makes ||q0||_{H^{s0}} = eps
    exact by construction.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if eps == 0:
        zeros = np.zeros(grid.K)
        return RealState(grid, zeros, zeros)
    jp = japanese_bracket(grid.modes)
    z = np.sqrt(np.sum(jp ** -1.05))
    qh = (eps / z) * jp ** (-s0 - 0.525)
    q = grid.to_values(qh.astype(complex))
    return RealState(grid, q.real, np.zeros(grid.K))
