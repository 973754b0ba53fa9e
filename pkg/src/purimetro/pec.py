"""Probabilistic error cancellation for single-qubit noise sites.

Decompositions write the identity as Σ_i α_i (E ∘ G_i) for a known noise
channel E, with G_i drawn from {I, X, Y, Z, reset to |0>}.  For every family
here E commutes with its G_i, so the same coefficients also invert noise that
has already happened (Σ_i α_i G_i ∘ E = id), which is how the engine uses them.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Callable, Iterator, Sequence

import numpy as np

from . import channels as chn
from . import linalg as la

BRANCH_CAP = 4096
DEPHASING_LIMIT = 0.5 - 1e-9

TAGS = ("I", "X", "Y", "Z", "reset0")


class BranchCapExceeded(RuntimeError):
    """The branch lattice is too large for exact enumeration."""


def operation(tag: str) -> chn.Channel:
    """The single-qubit operation named by a decomposition tag."""
    if tag in ("I", "X", "Y", "Z"):
        return chn.from_unitary(la.PAULI_1Q[tag], label=tag)
    if tag == "reset0":
        k0 = np.array([[1, 0], [0, 0]], dtype=complex)
        k1 = np.array([[0, 1], [0, 0]], dtype=complex)
        return chn.from_kraus([k0, k1], label="reset0")
    raise ValueError(f"unknown operation tag {tag!r}")


@dataclass(frozen=True)
class PecDecomposition:
    family: str
    p: float
    coefficients: tuple
    tags: tuple

    @property
    def gamma(self) -> float:
        return float(np.sum(np.abs(self.coefficients)))

    @property
    def terms(self) -> list[tuple[float, str]]:
        return list(zip(self.coefficients, self.tags))

    @property
    def probabilities(self) -> np.ndarray:
        a = np.abs(np.asarray(self.coefficients))
        return a / a.sum()

    @property
    def signs(self) -> np.ndarray:
        return np.where(np.asarray(self.coefficients) < 0, -1, 1)

    def quasi_superop(self) -> np.ndarray:
        """Superoperator of Σ_i α_i G_i (not CP in general)."""
        return sum(a * operation(t).superop for a, t in self.terms)

    def signed_superops(self) -> tuple[np.ndarray, np.ndarray]:
        """Positive and negative parts, each normalised by γ.

        ``gamma * (plus - minus)`` equals :meth:`quasi_superop`; ``plus + minus``
        is the CPTP channel obtained by drawing a term with probability |α_i|/γ.
        """
        plus = np.zeros((4, 4), dtype=complex)
        minus = np.zeros((4, 4), dtype=complex)
        for prob, sign, tag in zip(self.probabilities, self.signs, self.tags):
            if sign > 0:
                plus += prob * operation(tag).superop
            else:
                minus += prob * operation(tag).superop
        return plus, minus


def decomposition_for(family: str, p: float) -> PecDecomposition:
    """Optimal quasi-probability decomposition for one noise site.

    Raises:
        ValueError: unknown family, rate outside its valid range.
    """
    family = chn.canonical_family(family)
    if family == "identity" or p == 0:
        return PecDecomposition(family, 0.0, (1.0,), ("I",))
    if not 0 <= p < 1:
        raise ValueError(f"PEC rate {p} outside [0, 1)")
    if family == "depolarizing":
        a = p / (4 * (1 - p))
        return PecDecomposition(family, p, (1 + 3 * a, -a, -a, -a), ("I", "X", "Y", "Z"))
    if family == "dephasing":
        if p >= DEPHASING_LIMIT:
            raise ValueError("dephasing decomposition diverges at p >= 1/2")
        return PecDecomposition(
            family, p, ((1 - p) / (1 - 2 * p), -p / (1 - 2 * p)), ("I", "Z")
        )
    if family == "amplitude_damping":
        s = np.sqrt(1 - p)
        return PecDecomposition(
            family,
            p,
            ((1 + s) / (2 * (1 - p)), (1 - s) / (2 * (1 - p)), -p / (1 - p)),
            ("I", "Z", "reset0"),
        )
    raise ValueError(f"no PEC decomposition for family {family!r}")


def gamma_closed_form(family: str, p: float) -> float:
    family = chn.canonical_family(family)
    if family == "depolarizing":
        return (1 + p / 2) / (1 - p)
    if family == "dephasing":
        return 1 / (1 - 2 * p)
    if family == "amplitude_damping":
        return (1 + p) / (1 - p)
    raise ValueError(f"no closed-form gamma for {family!r}")


def validate_inverse(dec: PecDecomposition, noise: chn.Channel) -> float:
    """Max-abs deviation of Σ α_i (noise ∘ G_i) from the identity superoperator."""
    total = sum(a * (noise.superop @ operation(t).superop) for a, t in dec.terms)
    return float(np.max(np.abs(total - np.eye(noise.dim**2))))


def branch_count(sites: Sequence[PecDecomposition]) -> int:
    return int(np.prod([len(s.coefficients) for s in sites]))


def exact_mitigated_expectation(
    sites: Sequence[PecDecomposition],
    circuit_evaluator: Callable[[tuple], float],
    cap: int = BRANCH_CAP,
) -> tuple[float, float]:
    """Σ over the whole branch lattice of α_branch · evaluator(branch).

    ``circuit_evaluator`` receives a tuple with one term index per site.
    Returns the mitigated value and γ_total = Π_k γ_k.
    """
    count = branch_count(sites)
    if count > cap:
        raise BranchCapExceeded(f"{count} branches exceed the cap of {cap}")
    value = 0.0
    for branch in product(*(range(len(s.coefficients)) for s in sites)):
        alpha = np.prod([s.coefficients[i] for s, i in zip(sites, branch)])
        value += alpha * circuit_evaluator(branch)
    gamma = float(np.prod([s.gamma for s in sites])) if sites else 1.0
    return float(value), gamma


@dataclass(frozen=True)
class BranchSample:
    indices: tuple
    sign: int
    weight: float


def sample_branch_indices(
    sites: Sequence[PecDecomposition], count: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised draw: ``(indices[count, n_sites], signs[count])``."""
    if count < 1:
        raise ValueError("need at least one sample")
    idx = np.empty((count, len(sites)), dtype=np.int64)
    signs = np.ones(count, dtype=np.int64)
    for k, site in enumerate(sites):
        idx[:, k] = rng.choice(len(site.coefficients), size=count, p=site.probabilities)
        signs *= site.signs[idx[:, k]]
    return idx, signs


def sample_branches(
    sites: Sequence[PecDecomposition], count: int, rng: np.random.Generator
) -> Iterator[BranchSample]:
    """Stream of branches, term i of each site drawn with probability |α_i|/γ."""
    gamma = float(np.prod([s.gamma for s in sites])) if sites else 1.0
    idx, signs = sample_branch_indices(sites, count, rng)
    for row, sign in zip(idx, signs):
        yield BranchSample(tuple(int(i) for i in row), int(sign), gamma)


def monte_carlo_expectation(
    sites: Sequence[PecDecomposition],
    circuit_evaluator: Callable[[tuple], float],
    count: int,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Sample mean of sign·γ·evaluator(branch); each distinct branch is evaluated once.

    Returns the estimate and its standard error.
    """
    gamma = float(np.prod([s.gamma for s in sites])) if sites else 1.0
    idx, signs = sample_branch_indices(sites, count, rng)
    rows, inverse = np.unique(idx, axis=0, return_inverse=True)
    values = np.array([circuit_evaluator(tuple(int(i) for i in r)) for r in rows])
    samples = gamma * signs * values[np.ravel(inverse)]
    sem = samples.std(ddof=1) / np.sqrt(count) if count > 1 else float("nan")
    return float(samples.mean()), float(sem)
