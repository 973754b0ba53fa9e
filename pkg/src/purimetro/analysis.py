"""Closed-form bias, variance and cost analysis for purification-based estimators."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import channels as chn
from . import pec as pecmod

DENOMINATOR_FLOOR = 1e-12
DEFAULT_SHOTS = 10**6


def bias_bound(p_ideal_vcp_m: float, o_norm: float) -> float:
    """2(1 - p_ideal)·‖O‖∞, with p_ideal the identity weight after purification."""
    if not 0.0 <= p_ideal_vcp_m <= 1.0 + 1e-12:
        raise ValueError("p_ideal must be a probability")
    if o_norm < 0:
        raise ValueError("operator norm must be nonnegative")
    return 2.0 * (1.0 - min(p_ideal_vcp_m, 1.0)) * o_norm


def ratio_variance(mu_x: float, mu_y: float, var_x: float, var_y: float, cov_xy: float) -> float:
    """Delta-method variance of x̄/ȳ.

    Written without dividing by μ_x so that μ_x = 0 is allowed:
    var_x/μ_y² - 2μ_x cov/μ_y³ + μ_x² var_y/μ_y⁴.
    """
    if abs(mu_y) < DENOMINATOR_FLOOR:
        raise ValueError(f"mu_y {mu_y:.3g} below {DENOMINATOR_FLOOR}")
    return var_x / mu_y**2 - 2 * mu_x * cov_xy / mu_y**3 + mu_x**2 * var_y / mu_y**4


def variance_bound(gamma: float, eta: float, o2_norm: float, o_norm: float, shots: float) -> float:
    """Upper bound [γ²‖O²‖ + (γ²η² + 2η² + 3)‖O‖²] / (ν η²) on the single-layer ratio variance."""
    return (gamma**2 * o2_norm + (gamma**2 * eta**2 + 2 * eta**2 + 3) * o_norm**2) / (
        shots * eta**2
    )


def sampling_cost(gamma: float, eta_m: float, epsilon: float) -> float:
    """ν = γ² / (ε² η_m²), constant factor 1."""
    if gamma <= 0 or eta_m <= 0 or epsilon <= 0:
        raise ValueError("gamma, eta_m and epsilon must be positive")
    return gamma**2 / (epsilon**2 * eta_m**2)


def eta_m(f01: complex, p_hat_m: float) -> float:
    """Re(f01³)·P̂_m."""
    if not 0.0 < p_hat_m <= 1.0 + 1e-12:
        raise ValueError("p_hat_m must lie in (0, 1]")
    return float(np.real(complex(f01) ** 3) * p_hat_m)


def f01_closed_form(family: str, p: float) -> float:
    family = chn.canonical_family(family)
    if family == "dephasing":
        return 1 - 2 * p
    if family == "depolarizing":
        return 1 - p
    if family == "amplitude_damping":
        return float(np.sqrt(1 - p))
    if family == "identity":
        return 1.0
    raise ValueError(f"no closed-form f01 for {family!r}")


@dataclass(frozen=True)
class CostReport:
    family: str
    p: float
    ignore_cost: float
    pec_cost: float
    verdict: str


def cost_comparison(family: str, p: float, tol: float = 1e-12) -> CostReport:
    """Cost of leaving control noise in (Re(f01)^-2) against cancelling it with PEC (γ²)."""
    family = chn.canonical_family(family)
    if family == "dephasing" and p >= pecmod.DEPHASING_LIMIT:
        raise ValueError("dephasing requires p < 1/2")
    ignore = f01_closed_form(family, p) ** -2
    pec_cost = pecmod.gamma_closed_form(family, p) ** 2
    if abs(ignore - pec_cost) <= tol * max(1.0, pec_cost):
        verdict = "equal"
    elif ignore < pec_cost:
        verdict = "ignore-cheaper"
    else:
        verdict = "pec-cheaper"
    return CostReport(family, float(p), float(ignore), float(pec_cost), verdict)


# ---------------------------------------------------------------- scaling scan

@dataclass(frozen=True)
class ScalingPoint:
    N: int
    bias_sq: float
    variance: float
    method: str
    m: int = 1
    L: int = 1


def _power(ch: chn.Channel, k: int) -> chn.Channel:
    """k-fold self composition of a single-qubit Pauli channel via its PTM diagonal."""
    diag = chn.ptm_diagonal(ch) ** k
    return chn.pauli_channel(chn.pauli_probabilities_from_ptm(diag, ch.n_qubits))


def _identity_weight(ch: chn.Channel) -> float:
    return float(ch.pauli.get("I" * ch.n_qubits, 0.0))


def layer_error_channel(gate_p: float, cswap_p: float, gates: int, family: str = "depolarizing") -> chn.Channel:
    """Target error per layer: ``gates`` noisy encodings then the first permutation's noise."""
    gate = chn.make_channel(family, gate_p)
    return chn.compose(chn.make_channel(family, cswap_p), _power(gate, gates))


def pvcp_point(
    N: int, m: int, L: int, gate_p: float, cswap_p: float,
    family: str = "depolarizing", shots: float = DEFAULT_SHOTS,
) -> ScalingPoint:
    """Bias² and variance of the L-layer PVCP estimator (λ̂ ∝ Ô/N, ‖O‖ = 1).

    Post-permutation target noise is cancelled by PEC; control noise enters
    only through η; ancilla noise after the second permutation is erased.
    """
    sizes = [N // L + (1 if i < N % L else 0) for i in range(L)]
    total = None
    eta_total = 1.0
    f = f01_closed_form(family, cswap_p)
    for size in sizes:
        layer = layer_error_channel(gate_p, cswap_p, size, family)
        pur = chn.purified_channel(layer, m)
        eta_total *= eta_m(f, pur.extras["P_m"])
        total = pur if total is None else chn.compose(pur, total)
    total = chn.pauli_channel(dict(total.pauli))
    gamma = pecmod.gamma_closed_form(family, cswap_p) ** L if cswap_p > 0 else 1.0
    bias = bias_bound(_identity_weight(total), 1.0)
    var = variance_bound(gamma, eta_total, 1.0, 1.0, shots)
    return ScalingPoint(N, bias**2 / N**2, var / N**2, "pvcp", m, L)


def baseline_point(N: int, gate_p: float, family: str = "depolarizing", shots: float = DEFAULT_SHOTS) -> ScalingPoint:
    ch = _power(chn.make_channel(family, gate_p), N)
    bias = bias_bound(_identity_weight(ch), 1.0)
    return ScalingPoint(N, bias**2 / N**2, 1.0 / (shots * N**2), "none", 1, 1)


def sql_point(N: int, shots: float = DEFAULT_SHOTS) -> ScalingPoint:
    return ScalingPoint(N, 0.0, 1.0 / (shots * N), "sql", 1, 1)


def scaling_scan(
    gate_p: float = 0.001,
    cswap_p: float = 0.05,
    m_values: Iterable[int] = (2, 3),
    L_values: Iterable[int] = (1, 2),
    N_grid: Sequence[int] | None = None,
    family: str = "depolarizing",
    shots: float = DEFAULT_SHOTS,
) -> list[ScalingPoint]:
    """Single-qubit analytic scan: PVCP per (m, L), the unmitigated baseline and SQL."""
    if N_grid is None:
        N_grid = np.unique(np.round(np.logspace(0, 4, 41)).astype(int))
    out = []
    for N in N_grid:
        N = int(N)
        out.append(baseline_point(N, gate_p, family, shots))
        out.append(sql_point(N, shots))
        for m in m_values:
            for L in L_values:
                if L <= N:
                    out.append(pvcp_point(N, m, L, gate_p, cswap_p, family, shots))
    return out
