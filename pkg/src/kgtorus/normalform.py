"""Backward error analysis and Birkhoff normal form.

The cohomological system ``phi(ad_{hT}) dB_n/dt = P_n - K_n`` is solved
triangularly in the grade n; evaluating the solution at t = h and scaling by
1/h yields the modified Hamiltonian whose time-h flow approximates the Lie
step to order eps^(r+2).  The Birkhoff pass removes the non-resonant part of
a perturbation of T by the explicit diagonal division chi = Pi_gamma(F)/(i
Omega).

Sign convention: with ad_X = {X, .} the diagonal operator ad_{hT} acts on an
orbit key as multiplication by EPS_SIGN * i * h * Omega.  The derivation
fixes EPS_SIGN = +1; the order-verification tests (eps-scaling of the
backward-error defect) pin it empirically, and the constant is recorded in
serialized manifests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial
from typing import Sequence

import numpy as np

from .errors import (
    BudgetError,
    ConstructionError,
    ParameterError,
    ResonantStepError,
)
from .hampoly import (
    Key,
    PolyHamiltonian,
    TimePoly,
    ad_quadratic,
    bracket_timepoly,
    canonical_key,
    dumps_poly,
    enumeration_count,
    exp_ad_graded,
    loads_poly,
    omega_combination,
    poisson_bracket,
    poly_flow,
    quadratic_energy_poly,
    sign_count,
    super_action_poly,
    taylor_of_V,
)
from .integrators import MethodSpec, NonlinearitySpec, cfl_check
from .spectral import FrequencySpec, TorusGrid

EPS_SIGN = +1.0
PHI_FLOOR = 1e-8
DIVISOR_BUDGET = 5_000_000


def resonance_modulus(j: Sequence[int], sigma: Sequence[int],
                      freq: FrequencySpec) -> float:
    """Omega = sum sigma_i * omega_{j_i} (exact zero on trivial resonances)."""
    if len(j) != len(sigma):
        raise ParameterError("index and sign tuples differ in length")
    key = canonical_key(tuple(zip(j, sigma)), freq.grid.K)
    return omega_combination(key, freq)


def phi_series(z: complex) -> complex:
    """phi(z) = (e^z - 1)/z with the removable singularity filled in."""
    z = complex(z)
    if abs(z) < 1e-4:
        return 1.0 + z * (0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z / 120.0)))
    # cancellation-free complex expm1
    x, y = z.real, z.imag
    re = np.expm1(x) * np.cos(y) - 2.0 * np.sin(y / 2.0) ** 2
    im = np.exp(x) * np.sin(y)
    return complex(re, im) / z


def _phi_eigenvalue(key: Key, h: float, freq: FrequencySpec) -> complex:
    return phi_series(EPS_SIGN * 1j * h * omega_combination(key, freq))


def apply_phi_ad(Q: PolyHamiltonian, h: float,
                 freq: FrequencySpec) -> PolyHamiltonian:
    """Multiply coefficients by the phi(ad_{hT}) eigenvalue."""
    half = {key: c * _phi_eigenvalue(key, h, freq)
            for key, c in Q.rep_items()}
    return PolyHamiltonian(Q.K, Q.degree, half)


def invert_phi_ad(Q: PolyHamiltonian, h: float,
                  freq: FrequencySpec) -> PolyHamiltonian:
    """Divide coefficients by the phi(ad_{hT}) eigenvalue.

    Raises ResonantStepError when an eigenvalue modulus falls below 1e-8
    (the CFL condition guarantees a uniform lower bound otherwise).
    """
    half = {}
    for key, c in Q.rep_items():
        e = _phi_eigenvalue(key, h, freq)
        if abs(e) < PHI_FLOOR:
            raise ResonantStepError(key, e)
        half[key] = c / e
    return PolyHamiltonian(Q.K, Q.degree, half)


# ------------------------------------------------------------------ cohomology


@dataclass(frozen=True)
class CohomologySolution:
    """B_0 = hT plus the family B_1..B_r of t-polynomials solving the system."""

    h: float
    r: int
    freq: FrequencySpec
    method: MethodSpec
    taylor: tuple[PolyHamiltonian, ...]
    B: tuple[TimePoly, ...]  # B[n-1] has u-degree n+2 and t-degree <= n
    eps_sign: float = EPS_SIGN

    def B_n(self, n: int) -> TimePoly:
        return self.B[n - 1]

    def dB_n(self, n: int) -> TimePoly:
        return self.B[n - 1].t_derivative()


def solve_cohomology(r: int, method: MethodSpec, nl: NonlinearitySpec,
                     grid: TorusGrid, tail_tol: float = 1e-14,
                     delta: float | None = None) -> CohomologySolution:
    """Solve the triangular system phi(ad_{hT}) dB_n/dt = P_n - K_n.

    K_n is the grade-n component of the graded exp-ad series applied to the
    already-known sources dB_1..dB_{n-1}; each t-power of the right-hand
    side is inverted diagonally and the result integrated from B_n(0) = 0.
    """
    freq = method.freq
    if delta is not None:
        report = cfl_check(r, delta, method)
        if not report.passed:
            raise ParameterError(
                f"CFL condition fails: {report.lhs:.4f} > {report.rhs:.4f}"
            )
    h = method.h
    K = grid.K
    taylor = tuple(taylor_of_V(n, nl, method, grid) for n in range(1, r + 1))
    b0_lambda = EPS_SIGN * h * freq.omega / 2.0

    b_list: list[TimePoly] = []
    db_list: list[TimePoly] = []
    for n in range(1, r + 1):
        sources = {m: db_list[m - 1] for m in range(1, n)
                   if not db_list[m - 1].is_zero}
        if sources:
            b_family = {m: b_list[m - 1] for m in range(1, n)}
            series = exp_ad_graded(b0_lambda, b_family, sources,
                                   max_grade=n, tail_tol=tail_tol, K=K)
            K_n = series.get(n, TimePoly.zero(K, n + 2))
        else:
            K_n = TimePoly.zero(K, n + 2)
        rhs = TimePoly.constant(taylor[n - 1]) + (-1.0) * K_n
        dB_n = rhs.map_coefficients(lambda p: invert_phi_ad(p, h, freq))
        B_n = dB_n.t_integral()
        db_list.append(dB_n)
        b_list.append(B_n)
    return CohomologySolution(h=h, r=r, freq=freq, method=method,
                              taylor=taylor, B=tuple(b_list))


@dataclass(frozen=True)
class ModifiedHamiltonian:
    """H_h = T + h^-1 (B_1(h) + ... + B_r(h))."""

    freq: FrequencySpec
    parts: tuple[PolyHamiltonian, ...]  # degrees 3 .. r+2

    def value(self, u: np.ndarray) -> float:
        u = np.asarray(u, dtype=complex)
        total = float(0.5 * np.sum(self.freq.omega * np.abs(u) ** 2))
        for p in self.parts:
            total += p.value(u)
        return total

    def grad(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=complex)
        out = self.freq.omega * u
        for p in self.parts:
            out = out + p.grad(u)
        return out


def modified_hamiltonian(sol: CohomologySolution) -> ModifiedHamiltonian:
    parts = tuple((1.0 / sol.h) * tp.at(sol.h) for tp in sol.B)
    return ModifiedHamiltonian(freq=sol.freq, parts=parts)


def flow_modified(Hh: ModifiedHamiltonian, u: np.ndarray, t: float,
                  tol: float = 1e-12) -> np.ndarray:
    """Flow of i du/dt = grad H_h(u) by the adaptive polynomial flow."""
    return poly_flow(Hh.freq.omega, list(Hh.parts), u, t, tol)


# --------------------------------------------------------------- Birkhoff form


def project_resonant(P: PolyHamiltonian, gamma: float, freq: FrequencySpec
                     ) -> tuple[PolyHamiltonian, PolyHamiltonian]:
    """Split into (kept, removed): kept has |Omega| >= gamma, removed the rest."""
    if not gamma > 0:
        raise ParameterError(f"gamma must be positive, got {gamma}")
    kept = {}
    removed = {}
    for key, c in P.rep_items():
        if abs(omega_combination(key, freq)) >= gamma:
            kept[key] = c
        else:
            removed[key] = c
    return (PolyHamiltonian(P.K, P.degree, kept),
            PolyHamiltonian(P.K, P.degree, removed))


@dataclass(frozen=True)
class BirkhoffOutput:
    gamma: float
    chi: tuple[PolyHamiltonian, ...]   # chi_l in H^(l+2), all |Omega| >= gamma
    Q: tuple[PolyHamiltonian, ...]     # gamma-resonant remainders per grade
    min_modulus: float                 # smallest |Omega| seen on any F_l orbit
    kept_counts: tuple[int, ...]
    removed_counts: tuple[int, ...]


def _compositions(total: int, k: int):
    """Ordered tuples of k positive integers summing to total."""
    if k == 0:
        if total == 0:
            yield ()
        return
    for first in range(1, total - k + 2):
        for rest in _compositions(total - first, k - 1):
            yield (first,) + rest


def birkhoff_normal_form(Y: Sequence[PolyHamiltonian], gamma: float,
                         freq: FrequencySpec, grid: TorusGrid) -> BirkhoffOutput:
    """Remove non-resonant orbits of T + Y_1 + ... + Y_r order by order.

    For each grade l the finite nested-ad sums F_l are assembled from the
    already-solved chi's (ad-with-T terms evaluated diagonally), then split
    by the projection at gamma: chi_l = Pi_gamma(F_l)/(i Omega), Q_l the
    resonant rest.  Borderline |Omega| within rounding of gamma is kept
    (deterministic >= comparison).
    """
    if not (0.0 < gamma < 1.0):
        raise ParameterError(f"gamma must lie in (0, 1), got {gamma}")
    r = len(Y)
    K = grid.K
    for i, y in enumerate(Y, start=1):
        if y.degree != i + 2:
            raise ConstructionError(
                f"Y_{i} has degree {y.degree}, expected {i + 2}"
            )
    half_omega = freq.omega / 2.0

    chis: list[PolyHamiltonian] = []
    qs: list[PolyHamiltonian] = []
    kept_counts: list[int] = []
    removed_counts: list[int] = []
    min_mod = np.inf

    def nest(chain: Sequence[int], seed: PolyHamiltonian) -> PolyHamiltonian:
        out = seed
        for m in reversed(chain):
            out = poisson_bracket(chis[m - 1], out)
        return out

    for ell in range(1, r + 1):
        F = Y[ell - 1]
        # chains ending on T, rewritten through {chi_m, T} = ad_quadratic
        for k in range(2, ell + 1):
            for comp in _compositions(ell, k):
                inner = ad_quadratic(chis[comp[-1] - 1], half_omega, grid)
                F = F + (1.0 / factorial(k)) * nest(comp[:-1], inner)
        # chains acting on the perturbation
        for i in range(1, ell):
            for k in range(1, ell - i + 1):
                for comp in _compositions(ell - i, k):
                    F = F + (1.0 / factorial(k)) * nest(comp, Y[i - 1])
        F = F.pruned()

        for key, _ in F.rep_items():
            mod = abs(omega_combination(key, freq))
            if mod > 0.0:
                min_mod = min(min_mod, mod)
        kept, removed = project_resonant(F, gamma, freq)
        chi_half = {}
        for key, c in kept.rep_items():
            chi_half[key] = c / (1j * omega_combination(key, freq))
        chis.append(PolyHamiltonian(K, ell + 2, chi_half))
        qs.append(removed)
        kept_counts.append(len(kept._half))
        removed_counts.append(len(removed._half))

    return BirkhoffOutput(
        gamma=gamma,
        chi=tuple(chis),
        Q=tuple(qs),
        min_modulus=float(min_mod),
        kept_counts=tuple(kept_counts),
        removed_counts=tuple(removed_counts),
    )


def commutation_check(Q: Sequence[PolyHamiltonian], k: int, r: int,
                      freq: FrequencySpec,
                      kappa_proxy: float | None = None) -> bool:
    """True iff every {J_k, Q_l} coefficient vanishes to 1e-12 absolute.

    Equivalent to m_k(j, sigma) = 0 on every stored orbit; the sign-count
    form is evaluated directly.
    """
    grid = freq.grid
    for q in Q:
        for key, c in q.rep_items():
            if abs(c * sign_count(key, k, grid.K)) > 1e-12:
                return False
    return True


def default_gamma(eps: float, measured_min_divisor: float) -> float:
    """gamma = max(sqrt(eps), measured/2): sqrt(eps) floor from the drift
    argument, measured ceiling so the commutation check can pass at finite K."""
    return max(float(np.sqrt(eps)), measured_min_divisor / 2.0)


def min_small_divisor(freq: FrequencySpec, r: int, grid: TorusGrid,
                      k: int | None = None) -> tuple[float, Key]:
    """Brute-force minimum of |Omega| over sign-index tuples of length <= r+2.

    Tuples with Omega exactly zero are skipped; with ``k`` given only tuples
    with m_k != 0 count.  Refuses when the enumeration exceeds the
    desk-scale budget.
    """
    from itertools import combinations_with_replacement

    K = grid.K
    total = sum(enumeration_count(K, d) for d in range(1, r + 3))
    if total > DIVISOR_BUDGET:
        raise BudgetError(
            f"small-divisor enumeration needs {total} tuples "
            f"(budget {DIVISOR_BUDGET}); reduce K or r"
        )
    symbols = [(int(j), s) for j in sorted(grid.modes) for s in (-1, 1)]
    best = np.inf
    witness: Key = ()
    for d in range(1, r + 3):
        for key in combinations_with_replacement(symbols, d):
            if k is not None and sign_count(key, k, K) == 0:
                continue
            mod = abs(omega_combination(key, freq))
            if mod > 0.0 and mod < best:
                best = mod
                witness = key
    return float(best), witness


# --------------------------------------------------------------- serialization


def dumps_solution(sol: CohomologySolution, mollifier_id: str = "identity",
                   gamma: float | None = None) -> str:
    lines = [
        f"h {sol.h:.17g}",
        f"r {sol.r}",
        f"K {sol.freq.grid.K}",
        f"rho {sol.freq.rho:.17g}",
        f"mollifier {mollifier_id}",
        f"eps_sign {sol.eps_sign:g}",
        f"gamma {'none' if gamma is None else format(gamma, '.17g')}",
    ]
    for n, tp in enumerate(sol.B, start=1):
        for power, poly in enumerate(tp.powers):
            lines.append(f"begin B{n} tpower {power}")
            lines.append(dumps_poly(poly).rstrip("\n"))
            lines.append(f"end B{n}")
    return "\n".join(lines) + "\n"


def dumps_birkhoff(out: BirkhoffOutput, h: float, freq: FrequencySpec,
                   mollifier_id: str = "identity") -> str:
    lines = [
        f"h {h:.17g}",
        f"r {len(out.chi)}",
        f"K {freq.grid.K}",
        f"rho {freq.rho:.17g}",
        f"mollifier {mollifier_id}",
        f"eps_sign {EPS_SIGN:g}",
        f"gamma {out.gamma:.17g}",
    ]
    for label, polys in (("chi", out.chi), ("Q", out.Q)):
        for ell, poly in enumerate(polys, start=1):
            lines.append(f"begin {label}{ell}")
            lines.append(dumps_poly(poly).rstrip("\n"))
            lines.append(f"end {label}{ell}")
    return "\n".join(lines) + "\n"
