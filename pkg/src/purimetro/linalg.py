"""Dense complex-matrix kernel for small qubit systems.

Subsystems are ordered left to right with the leftmost factor carrying the
most significant index (``ctrl ⊗ anc ⊗ tar``).  All helpers return fresh
arrays; nothing is mutated in place.
"""
from __future__ import annotations

from functools import reduce
from typing import Iterable, Sequence

import numpy as np

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = 1e-9

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S = np.diag([1, 1j]).astype(complex)
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)
SWAP = np.array(
    [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
)

PAULI_1Q = {"I": I2, "X": X, "Y": Y, "Z": Z}


class DimensionError(ValueError):
    """Raised when matrix shapes do not match the requested layout."""


def kron(*ops: np.ndarray) -> np.ndarray:
    """Kronecker product of any number of operators, left to right."""
    if not ops:
        return np.ones((1, 1), dtype=complex)
    return reduce(np.kron, ops)


def tensor_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(np.asarray(a), np.asarray(b))


def num_qubits(dim: int) -> int:
    n = int(round(np.log2(dim)))
    if 2**n != dim:
        raise DimensionError(f"dimension {dim} is not a power of 2")
    return n


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.asarray(a)).T


def is_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    a = np.asarray(a)
    return a.shape[0] == a.shape[1] and np.max(np.abs(a - dagger(a))) <= tol


def is_unitary(u: np.ndarray, tol: float = 1e-12) -> bool:
    u = np.asarray(u)
    return np.max(np.abs(dagger(u) @ u - np.eye(u.shape[0]))) <= tol


def validate_density_matrix(rho: np.ndarray) -> np.ndarray:
    """Check that ``rho`` is a valid density matrix and return it as an array.

    Raises:
        DimensionError: non-square or non power-of-2 shape.
        ValueError: not Hermitian, not unit trace, or not PSD.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionError(f"density matrix must be square, got {rho.shape}")
    num_qubits(rho.shape[0])
    if not is_hermitian(rho):
        raise ValueError("density matrix is not Hermitian")
    tr = np.trace(rho)
    if abs(tr - 1) > TRACE_TOL:
        raise ValueError(f"density matrix trace is {tr}, expected 1")
    if np.linalg.eigvalsh((rho + dagger(rho)) / 2).min() < -PSD_TOL:
        raise ValueError("density matrix has negative eigenvalues")
    return rho


def partial_trace(
    rho: np.ndarray, dims: Sequence[int], keep: Iterable[int]
) -> np.ndarray:
    """Reduced operator on the subsystems listed in ``keep``.

    Args:
        rho: operator on the joint space.
        dims: dimension of every subsystem, leftmost first.
        keep: indices of subsystems to keep; order is normalised ascending.
    """
    rho = np.asarray(rho)
    dims = [int(d) for d in dims]
    keep = sorted(set(keep))
    if not keep:
        raise ValueError("keep must be nonempty")
    total = int(np.prod(dims))
    if rho.shape != (total, total):
        raise DimensionError(f"dims {dims} do not match operator shape {rho.shape}")
    if any(k < 0 or k >= len(dims) for k in keep):
        raise DimensionError(f"keep indices {keep} out of range for {len(dims)} subsystems")
    nsys = len(dims)
    t = rho.reshape(dims + dims)
    traced = [i for i in range(nsys) if i not in keep]
    # trace pairs from the highest index down so earlier axis numbers stay valid
    for count, i in enumerate(sorted(traced, reverse=True)):
        remaining = nsys - count
        t = np.trace(t, axis1=i, axis2=i + remaining)
    d = int(np.prod([dims[k] for k in keep]))
    return t.reshape(d, d)


def expectation(obs: np.ndarray, rho: np.ndarray) -> float:
    """Real expectation value ``tr(obs · rho)`` of a Hermitian observable."""
    obs = np.asarray(obs)
    rho = np.asarray(rho)
    if obs.shape != rho.shape:
        raise DimensionError(f"observable {obs.shape} and state {rho.shape} differ")
    if not is_hermitian(obs):
        raise ValueError("observable is not Hermitian")
    val = np.einsum("ij,ji->", obs, rho)
    if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
        raise ValueError(f"expectation has imaginary part {val.imag}")
    return float(val.real)


def ket(bits: str) -> np.ndarray:
    """Computational basis ket from a bit string such as ``"01"``."""
    v = np.zeros(2 ** len(bits), dtype=complex)
    v[int(bits, 2)] = 1
    return v


def projector(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=complex).reshape(-1)
    return np.outer(v, np.conj(v))


def pauli(label: str) -> np.ndarray:
    """Pauli string such as ``"XZ"`` (leftmost letter on the first qubit)."""
    try:
        return kron(*(PAULI_1Q[c] for c in label.upper()))
    except KeyError as exc:
        raise KeyError(f"unknown Pauli label {label!r}") from exc


def pauli_labels(n: int) -> list[str]:
    """All 4^n Pauli labels in lexicographic I, X, Y, Z order."""
    labels = [""]
    for _ in range(n):
        labels = [lab + c for lab in labels for c in "IXYZ"]
    return labels


def controlled_cyclic_shift(m: int) -> np.ndarray:
    """Controlled cyclic shift on ``1 + m`` qubits.

    Conditioned on the first qubit being ``|1>``, qubit ``j`` of the ``m``
    targets receives the state of qubit ``j - 1`` (cyclically).  For ``m = 2``
    this is the Fredkin gate.
    """
    if m < 2:
        raise ValueError("cyclic shift needs m >= 2")
    d = 2**m
    shift = np.zeros((d, d), dtype=complex)
    for idx in range(d):
        bits = format(idx, f"0{m}b")
        shifted = bits[-1] + bits[:-1]
        shift[int(shifted, 2), idx] = 1
    out = np.zeros((2 * d, 2 * d), dtype=complex)
    out[:d, :d] = np.eye(d)
    out[d:, d:] = shift
    return out


CSWAP = controlled_cyclic_shift(2)


def bell_basis() -> list[np.ndarray]:
    """Bell kets |φ1>..|φ4> with |φ1> = (|00>+|11>)/√2."""
    r = 1 / np.sqrt(2)
    return [
        r * (ket("00") + ket("11")),
        r * (ket("00") - ket("11")),
        r * (ket("10") + ket("01")),
        r * (ket("10") - ket("01")),
    ]


def bell_rotation() -> np.ndarray:
    """The local operation exp(iπ/(3√3)(X+Y+Z)) used for the rotated Bell basis."""
    n = np.array([1, 1, 1]) / np.sqrt(3)
    angle = np.pi / 3  # π/(3√3)·|(1,1,1)|
    gen = n[0] * X + n[1] * Y + n[2] * Z
    return np.cos(angle) * I2 + 1j * np.sin(angle) * gen


def rotated_bell_basis() -> list[np.ndarray]:
    r = np.kron(bell_rotation(), I2)
    return [r @ v for v in bell_basis()]


def ghz(n: int) -> np.ndarray:
    return (ket("0" * n) + ket("1" * n)) / np.sqrt(2)


def ghz_y(n: int) -> np.ndarray:
    return (ket("0" * n) - 1j * ket("1" * n)) / np.sqrt(2)


def field_hamiltonian(b: float, theta: float, phi: float) -> np.ndarray:
    """Spin-1/2 in a field: B(sinθcosφ X + sinθsinφ Y + cosθ Z)."""
    return b * (
        np.sin(theta) * np.cos(phi) * X
        + np.sin(theta) * np.sin(phi) * Y
        + np.cos(theta) * Z
    )


def su2_evolution(b: float, theta: float, phi: float, t: float) -> np.ndarray:
    """exp(-i H t) for the field Hamiltonian, in closed form.

    The Hamiltonian is B·(n·σ) with |n| = 1, so the exponential is
    cos(Bt) I - i sin(Bt) n·σ exactly.
    """
    nsig = field_hamiltonian(1.0, theta, phi)
    return np.cos(b * t) * I2 - 1j * np.sin(b * t) * nsig


def encoding_unitary(params: Sequence[float], t: float) -> np.ndarray:
    """U_λ = exp(-iH(λ)t) ⊗ I₂ for λ = (B, θ, φ)."""
    b, theta, phi = params
    return np.kron(su2_evolution(b, theta, phi, t), I2)


def zeeman_unitary(lam: float, t: float = 1.0, n: int = 1) -> np.ndarray:
    """exp(-i t Σ_j λ Z_j / 2) on ``n`` qubits."""
    single = np.diag([np.exp(-0.5j * lam * t), np.exp(0.5j * lam * t)])
    return kron(*([single] * n))


def random_density_matrix(
    dim: int, rng: np.random.Generator, rank: int | None = None
) -> np.ndarray:
    """Random mixed state from the induced (Ginibre) measure."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ dagger(g)
    return rho / np.trace(rho)


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return (g + dagger(g)) / 2


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


_NAMED = {
    "I": I2,
    "X": X,
    "Y": Y,
    "Z": Z,
    "H": H,
    "S": S,
    "CNOT": CNOT,
    "SWAP": SWAP,
    "CSWAP": CSWAP,
}


def named_operator(label: str) -> np.ndarray:
    """Look up a named gate or Pauli string (e.g. ``"CSWAP"``, ``"ZZZ"``)."""
    key = label.upper()
    if key in _NAMED:
        return _NAMED[key].copy()
    if key and set(key) <= set("IXYZ"):
        return pauli(key)
    raise KeyError(f"unknown operator label {label!r}")
