"""CPTP channels, noise families, Pauli twirling and purified channels.

A :class:`Channel` always carries its superoperator in the column-stacking
convention, ``vec(A) = A.T.reshape(-1)``, so composition is a matrix
product.  Kraus operators and Pauli-mixture probabilities are kept alongside
when the channel was built from them.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import linalg as la

FAMILIES = ("depolarizing", "dephasing", "amplitude_damping", "pauli", "identity")

_ALIASES = {
    "depolarizing": "depolarizing",
    "depolarising": "depolarizing",
    "dp": "depolarizing",
    "dephasing": "dephasing",
    "pf": "dephasing",
    "phase_flip": "dephasing",
    "amplitude_damping": "amplitude_damping",
    "amplitude-damping": "amplitude_damping",
    "ad": "amplitude_damping",
    "pauli": "pauli",
    "identity": "identity",
    "none": "identity",
}


def canonical_family(name: str) -> str:
    try:
        return _ALIASES[name.strip().lower().replace(" ", "_")]
    except KeyError as exc:
        raise ValueError(f"unknown noise family {name!r}") from exc


def vec(a: np.ndarray) -> np.ndarray:
    return np.asarray(a).T.reshape(-1)


def unvec(v: np.ndarray, d: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    d = int(round(np.sqrt(v.size))) if d is None else d
    return v.reshape(d, d).T


def kraus_to_superop(kraus: Sequence[np.ndarray]) -> np.ndarray:
    return sum(np.kron(np.conj(k), k) for k in kraus)


@dataclass(frozen=True, eq=False)
class Channel:
    """A linear map on ``dim × dim`` matrices.

    ``pauli`` maps Pauli labels to probabilities when the channel is a Pauli
    mixture; ``kraus`` holds Kraus operators when known.  Quasi-probability
    combinations used by PEC are also represented here; they simply fail
    :meth:`validate`.
    """

    dim: int
    superop: np.ndarray
    kraus: tuple | None = None
    pauli: Mapping[str, float] | None = None
    label: str = ""
    extras: Mapping = field(default_factory=dict)

    @property
    def n_qubits(self) -> int:
        return la.num_qubits(self.dim)

    @property
    def form(self) -> str:
        if self.pauli is not None:
            return "pauli"
        if self.kraus is not None:
            return "kraus"
        return "superop"

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        return unvec(self.superop @ vec(rho), self.dim)

    def choi(self) -> np.ndarray:
        """Choi matrix Σ_ij |i><j| ⊗ E(|i><j|)."""
        d = self.dim
        out = np.zeros((d * d, d * d), dtype=complex)
        for i in range(d):
            for j in range(d):
                e = np.zeros((d, d), dtype=complex)
                e[i, j] = 1
                out[i * d:(i + 1) * d, j * d:(j + 1) * d] = self(e)
        return out

    def kraus_ops(self) -> tuple:
        if self.kraus is not None:
            return self.kraus
        if self.pauli is not None:
            return tuple(
                np.sqrt(p) * la.pauli(lab) for lab, p in self.pauli.items() if p > 0
            )
        d = self.dim
        w, v = np.linalg.eigh(self.choi())
        ops = []
        for val, vecc in zip(w, v.T):
            if val > 1e-14:
                ops.append(np.sqrt(val) * vecc.reshape(d, d).T)
        return tuple(ops)

    def ptm(self) -> np.ndarray:
        """Pauli transfer matrix R_ij = tr(P_i E(P_j)) / d."""
        labels = la.pauli_labels(self.n_qubits)
        paulis = [la.pauli(lab) for lab in labels]
        out = np.empty((len(paulis), len(paulis)))
        for j, pj in enumerate(paulis):
            img = self(pj)
            for i, pi in enumerate(paulis):
                out[i, j] = np.real(np.trace(pi @ img)) / self.dim
        return out

    def is_trace_preserving(self, tol: float = 1e-10) -> bool:
        ident = vec(np.eye(self.dim))
        return np.max(np.abs(ident.conj() @ self.superop - ident.conj())) <= tol

    def validate(self) -> "Channel":
        """Check complete positivity and trace preservation; return self."""
        if self.pauli is not None:
            probs = np.array(list(self.pauli.values()))
            if probs.min() < -1e-12 or abs(probs.sum() - 1) > 1e-12:
                raise ValueError("Pauli mixture probabilities invalid")
            return self
        if self.kraus is not None:
            total = sum(la.dagger(k) @ k for k in self.kraus)
            if np.max(np.abs(total - np.eye(self.dim))) > 1e-10:
                raise ValueError("Kraus operators are not complete")
            return self
        if np.linalg.eigvalsh(self.choi()).min() < -la.PSD_TOL:
            raise ValueError("Choi matrix is not positive semidefinite")
        if not self.is_trace_preserving():
            raise ValueError("channel is not trace preserving")
        return self

    def allclose(self, other: "Channel", atol: float = 1e-10) -> bool:
        return self.dim == other.dim and np.allclose(
            self.superop, other.superop, atol=atol, rtol=0
        )


def from_kraus(kraus: Sequence[np.ndarray], label: str = "") -> Channel:
    kraus = tuple(np.asarray(k, dtype=complex) for k in kraus)
    return Channel(kraus[0].shape[0], kraus_to_superop(kraus), kraus=kraus, label=label)


def from_unitary(u: np.ndarray, label: str = "") -> Channel:
    return from_kraus([u], label=label)


def from_superop(superop: np.ndarray, label: str = "") -> Channel:
    superop = np.asarray(superop, dtype=complex)
    d = int(round(np.sqrt(superop.shape[0])))
    return Channel(d, superop, label=label)


def pauli_channel(probs: Mapping[str, float], label: str = "") -> Channel:
    """Pauli mixture Σ_P p_P [P]; missing labels have probability zero."""
    probs = {k.upper(): float(v) for k, v in probs.items() if v != 0}
    if not probs:
        raise ValueError("empty Pauli table")
    n = len(next(iter(probs)))
    if any(len(k) != n for k in probs):
        raise ValueError("Pauli labels of different lengths")
    superop = sum(
        p * np.kron(np.conj(la.pauli(lab)), la.pauli(lab)) for lab, p in probs.items()
    )
    return Channel(2**n, superop, pauli=probs, label=label)


def identity_channel(n: int = 1) -> Channel:
    return pauli_channel({"I" * n: 1.0}, label="identity")


def depolarizing(p: float, n: int = 1) -> Channel:
    """ρ → (1-p)ρ + p I/2^n as a Pauli mixture."""
    d2 = 4**n
    probs = {lab: p / d2 for lab in la.pauli_labels(n)}
    probs["I" * n] += 1 - p
    return pauli_channel(probs, label=f"depolarizing({p})")


def dephasing(p: float) -> Channel:
    return pauli_channel({"I": 1 - p, "Z": p}, label=f"dephasing({p})")


def amplitude_damping(p: float) -> Channel:
    k0 = np.array([[1, 0], [0, np.sqrt(1 - p)]], dtype=complex)
    k1 = np.array([[0, np.sqrt(p)], [0, 0]], dtype=complex)
    return from_kraus([k0, k1], label=f"amplitude_damping({p})")


def _check_rate(p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"rate {p} outside [0, 1]")


def tensor(a: Channel, b: Channel) -> Channel:
    """Channel a ⊗ b acting on the joint space (a on the left factor)."""
    if a.pauli is not None and b.pauli is not None:
        probs = {}
        for la_, pa in a.pauli.items():
            for lb, pb in b.pauli.items():
                probs[la_ + lb] = pa * pb
        return pauli_channel(probs, label=f"{a.label}⊗{b.label}")
    kraus = [np.kron(ka, kb) for ka in a.kraus_ops() for kb in b.kraus_ops()]
    return from_kraus(kraus, label=f"{a.label}⊗{b.label}")


def tensor_all(chs: Sequence[Channel]) -> Channel:
    out = chs[0]
    for ch in chs[1:]:
        out = tensor(out, ch)
    return out


def make_channel(family: str, p: float = 0.0, n: int = 1, table=None) -> Channel:
    """Standard noise family on ``n`` qubits.

    Depolarizing acts globally on all ``n`` qubits; dephasing and amplitude
    damping act independently on every qubit with the same rate.  ``family =
    "pauli"`` takes an explicit ``table`` of Pauli probabilities instead.
    """
    family = canonical_family(family)
    if family == "pauli":
        if table is None:
            raise ValueError("pauli family needs an explicit table")
        ch = pauli_channel(table)
        if ch.n_qubits != n:
            ch = tensor_all([ch] * n) if ch.n_qubits == 1 else ch
        return ch.validate()
    _check_rate(p)
    if family == "identity":
        return identity_channel(n)
    if family == "depolarizing":
        return depolarizing(p, n)
    single = dephasing(p) if family == "dephasing" else amplitude_damping(p)
    return single if n == 1 else tensor_all([single] * n)


def global_dephasing(p: float, n: int = 3) -> Channel:
    """(1-p) I + p [Z^{⊗n}]."""
    return pauli_channel({"I" * n: 1 - p, "Z" * n: p}, label=f"global_dephasing({p})")


def make_correlated_cswap_noise(family: str, p0: float, p1: float) -> Channel:
    """Local noise at ``p0`` on each of three qubits composed with global noise at ``p1``."""
    family = canonical_family(family)
    _check_rate(p0)
    _check_rate(p1)
    if family == "depolarizing":
        local, glob = depolarizing(p0), depolarizing(p1, 3)
    elif family == "dephasing":
        local, glob = dephasing(p0), global_dephasing(p1)
    else:
        raise ValueError(f"correlated cSWAP noise not defined for {family!r}")
    # Pauli channels commute, so the composition order is immaterial here
    ch = compose(tensor_all([local] * 3), glob)
    return Channel(
        ch.dim, ch.superop, pauli=ch.pauli, label=f"{family}({p0},{p1})",
        extras={"family": family, "p0": p0, "p1": p1},
    )


def _pauli_product_label(a: str, b: str) -> str:
    table = {
        ("I", "I"): "I", ("I", "X"): "X", ("I", "Y"): "Y", ("I", "Z"): "Z",
        ("X", "I"): "X", ("X", "X"): "I", ("X", "Y"): "Z", ("X", "Z"): "Y",
        ("Y", "I"): "Y", ("Y", "X"): "Z", ("Y", "Y"): "I", ("Y", "Z"): "X",
        ("Z", "I"): "Z", ("Z", "X"): "Y", ("Z", "Y"): "X", ("Z", "Z"): "I",
    }
    return "".join(table[(x, y)] for x, y in zip(a, b))


def compose(a: Channel, b: Channel) -> Channel:
    """The channel ``a ∘ b`` (apply ``b`` first)."""
    if a.dim != b.dim:
        raise la.DimensionError(f"cannot compose dims {a.dim} and {b.dim}")
    superop = a.superop @ b.superop
    if a.pauli is not None and b.pauli is not None:
        probs: dict[str, float] = {}
        for la_, pa in a.pauli.items():
            for lb, pb in b.pauli.items():
                lab = _pauli_product_label(la_, lb)
                probs[lab] = probs.get(lab, 0.0) + pa * pb
        return Channel(a.dim, superop, pauli=probs, label=f"{a.label}∘{b.label}")
    return Channel(a.dim, superop, label=f"{a.label}∘{b.label}")


def compose_all(chs: Sequence[Channel]) -> Channel:
    """Compose in application order: ``chs[0]`` acts first."""
    out = chs[0]
    for ch in chs[1:]:
        out = compose(ch, out)
    return out


def to_superoperator(ch: Channel) -> np.ndarray:
    return ch.superop


def apply_superop(
    superop: np.ndarray, rho: np.ndarray, targets: Sequence[int], dims: Sequence[int]
) -> np.ndarray:
    """Apply a (column-stacked) superoperator on ``targets`` of a joint operator.

    No CPTP checks; PEC quasi-maps go through here too.
    """
    dims = list(dims)
    targets = list(targets)
    nsys, nt = len(dims), len(targets)
    tdims = [dims[i] for i in targets]
    dt = int(np.prod(tdims))
    if superop.shape != (dt * dt, dt * dt):
        raise la.DimensionError(
            f"superoperator of shape {superop.shape} does not act on dimension {dt}"
        )
    total = int(np.prod(dims))
    src_axes = targets + [nsys + i for i in targets]
    t = np.moveaxis(np.asarray(rho).reshape(dims + dims), src_axes, range(2 * nt))
    rest_shape = t.shape[2 * nt:]
    # column stacking: the column index of the target block is the slow one
    t = t.reshape(dt, dt, -1).transpose(1, 0, 2).reshape(dt * dt, -1)
    t = (superop @ t).reshape(dt, dt, -1).transpose(1, 0, 2)
    t = t.reshape(tdims + tdims + list(rest_shape))
    return np.moveaxis(t, range(2 * nt), src_axes).reshape(total, total)


def apply_unitary(
    u: np.ndarray, rho: np.ndarray, targets: Sequence[int], dims: Sequence[int]
) -> np.ndarray:
    """U ρ U† with ``u`` acting on ``targets`` (in the listed order)."""
    dims = list(dims)
    targets = list(targets)
    nsys, nt = len(dims), len(targets)
    total = int(np.prod(dims))
    tdims = [dims[i] for i in targets]
    u_t = np.asarray(u).reshape(tdims + tdims)
    t = np.asarray(rho).reshape(dims + dims)
    t = np.tensordot(u_t, t, axes=(list(range(nt, 2 * nt)), targets))
    t = np.moveaxis(t, range(nt), targets)
    col_axes = [nsys + i for i in targets]
    t = np.tensordot(t, np.conj(u_t), axes=(col_axes, list(range(nt, 2 * nt))))
    t = np.moveaxis(t, range(2 * nsys - nt, 2 * nsys), col_axes)
    return t.reshape(total, total)


def apply(
    ch: Channel,
    rho: np.ndarray,
    targets: Sequence[int] | None = None,
    dims: Sequence[int] | None = None,
) -> np.ndarray:
    """Apply ``ch`` on the ``targets`` subsystems, identity elsewhere."""
    rho = np.asarray(rho, dtype=complex)
    if dims is None:
        dims = [2] * la.num_qubits(rho.shape[0])
    if targets is None:
        targets = list(range(len(dims)))
    if int(np.prod(dims)) != rho.shape[0]:
        raise la.DimensionError(f"layout {list(dims)} does not match state {rho.shape}")
    dt = int(np.prod([dims[i] for i in targets]))
    if dt != ch.dim:
        raise la.DimensionError(f"channel dim {ch.dim} does not match targets dim {dt}")
    if ch.kraus is not None and len(ch.kraus) == 1:
        return apply_unitary(ch.kraus[0], rho, targets, dims)
    return apply_superop(ch.superop, rho, targets, dims)


def _commutes(a: str, b: str) -> bool:
    anti = sum(1 for x, y in zip(a, b) if x != "I" and y != "I" and x != y)
    return anti % 2 == 0


def pauli_twirl(ch: Channel) -> Channel:
    """Pauli twirl as a Pauli mixture with the same PTM diagonal."""
    n = ch.n_qubits
    labels = la.pauli_labels(n)
    if ch.pauli is not None:
        return pauli_channel(dict(ch.pauli), label=ch.label)
    diag = np.diag(ch.ptm())
    probs = {}
    for q in labels:
        val = sum(
            (1 if _commutes(p, q) else -1) * lam for p, lam in zip(labels, diag)
        ) / 4**n
        probs[q] = float(np.real(val))
    return pauli_channel(probs, label=f"twirl({ch.label})")


def to_pauli_mixture(ch: Channel, tol: float = 1e-10) -> Channel:
    """Relabel a channel as a Pauli mixture; refuse if its PTM is not diagonal."""
    if ch.pauli is not None:
        return ch
    r = ch.ptm()
    off = r - np.diag(np.diag(r))
    if np.max(np.abs(off)) > tol:
        raise ValueError("channel is not a Pauli channel (PTM not diagonal)")
    return pauli_twirl(ch)


def purified_channel(ch: Channel, m: int) -> Channel:
    """Weights p_i^m / Σ_j p_j^m on the same Pauli errors."""
    if m < 1:
        raise ValueError("order m must be >= 1")
    if ch.pauli is None:
        raise ValueError("purified_channel needs a Pauli mixture")
    powered = {k: v**m for k, v in ch.pauli.items()}
    total = sum(powered.values())
    ch_m = pauli_channel({k: v / total for k, v in powered.items()}, label=f"{ch.label}^({m})")
    return Channel(ch_m.dim, ch_m.superop, pauli=ch_m.pauli, label=ch_m.label,
                   extras={"P_m": total})


def error_components(ch: Channel) -> tuple[list[np.ndarray], np.ndarray, np.ndarray]:
    """Error operators E_i, weights p_i and e_i = tr(E_i E_i†)/2^n.

    Pauli mixtures use the Pauli operators with e_i = 1 exactly; Kraus
    channels use the Kraus operators themselves with unit weights.
    """
    if ch.pauli is not None:
        labels = list(ch.pauli)
        ops = [la.pauli(lab) for lab in labels]
        return ops, np.array([ch.pauli[lab] for lab in labels]), np.ones(len(ops))
    ops = list(ch.kraus_ops())
    e = np.array([np.real(np.trace(k @ la.dagger(k))) / ch.dim for k in ops])
    return ops, np.ones(len(ops)), e


def generalized_purified_channel(
    ch: Channel | None = None,
    m: int = 2,
    *,
    ops: Sequence[np.ndarray] | None = None,
    probs: Sequence[float] | None = None,
) -> tuple[Channel, float]:
    """Ê^(m) with weights p_i^m e_i^{m-1} / P̂_m, and P̂_m itself.

    Either pass a channel, or explicit error ``ops`` with ``probs``.  The
    returned map need not be trace preserving for non-Pauli input.
    """
    if m < 1:
        raise ValueError("order m must be >= 1")
    if ch is not None:
        ops, p, e = error_components(ch)
    else:
        ops = [np.asarray(o, dtype=complex) for o in ops]
        p = np.asarray(probs, dtype=float)
        d = ops[0].shape[0]
        e = np.array([np.real(np.trace(k @ la.dagger(k))) / d for k in ops])
    report = _orthogonality(ops)
    if not report[0]:
        raise ValueError(f"error operators not orthogonal (max overlap {report[1]:.3g})")
    w = p**m * e ** (m - 1)
    p_hat = float(w.sum())
    weights = w / p_hat
    if ch is not None and ch.pauli is not None:
        labels = list(ch.pauli)
        out = pauli_channel(dict(zip(labels, weights)), label=f"Ê^({m})")
    else:
        out = from_kraus([np.sqrt(wi) * op for wi, op in zip(weights, ops)], label=f"Ê^({m})")
    out = Channel(out.dim, out.superop, kraus=out.kraus, pauli=out.pauli, label=out.label,
                  extras={"P_hat": p_hat, "weights": weights})
    return out, p_hat


def _orthogonality(ops: Sequence[np.ndarray], tol: float = 1e-10) -> tuple[bool, float]:
    worst = 0.0
    for i, a in enumerate(ops):
        for b in ops[i + 1:]:
            worst = max(worst, abs(np.trace(a @ la.dagger(b))))
    return worst < tol, worst


@dataclass(frozen=True)
class TheoremOneReport:
    e_values: tuple
    orthogonal: bool
    f01: complex
    f_diag_ok: bool
    max_overlap: float = 0.0
    f_violation: float = 0.0

    @property
    def ok(self) -> bool:
        return self.orthogonal and self.f_diag_ok


def check_theorem1(e_channel: Channel, f_channel: Channel) -> TheoremOneReport:
    """Check the error-orthogonality and control-noise conditions.

    ``f_channel`` must be single-qubit.  The report carries the violation
    magnitudes instead of raising.
    """
    if f_channel.dim != 2:
        raise la.DimensionError("control-noise channel must act on one qubit")
    ops, _, e = error_components(e_channel)
    orthogonal, overlap = _orthogonality(ops)
    e01 = np.array([[0, 1], [0, 0]], dtype=complex)
    img = f_channel(e01)
    f01 = complex(img[0, 1])
    resid = img.copy()
    resid[0, 1] = 0
    violation = float(np.max(np.abs(resid)))
    for i in range(2):
        eii = np.zeros((2, 2), dtype=complex)
        eii[i, i] = 1
        out = f_channel(eii)
        violation = max(violation, float(abs(out[0, 1])), float(abs(out[1, 0])))
    return TheoremOneReport(
        e_values=tuple(float(x) for x in e),
        orthogonal=orthogonal,
        f01=f01,
        f_diag_ok=violation <= 1e-10,
        max_overlap=float(overlap),
        f_violation=violation,
    )


def embed(ch: Channel, qubits: Sequence[int], n: int) -> Channel:
    """Lift a channel on ``qubits`` to an ``n``-qubit register.

    Only contiguous ascending qubit lists are supported, which covers every
    gate used by the task circuits.
    """
    qubits = list(qubits)
    if qubits != list(range(qubits[0], qubits[0] + len(qubits))):
        raise ValueError("embed expects contiguous ascending qubits")
    parts = []
    if qubits[0] > 0:
        parts.append(identity_channel(qubits[0]))
    parts.append(ch)
    tail = n - qubits[-1] - 1
    if tail > 0:
        parts.append(identity_channel(tail))
    return tensor_all(parts)


def pauli_probabilities_from_ptm(diag: Sequence[float], n: int) -> dict[str, float]:
    labels = la.pauli_labels(n)
    return {
        q: float(sum((1 if _commutes(p, q) else -1) * lam for p, lam in zip(labels, diag)) / 4**n)
        for q in labels
    }


def ptm_diagonal(ch: Channel) -> np.ndarray:
    """PTM diagonal; closed form for Pauli mixtures."""
    labels = la.pauli_labels(ch.n_qubits)
    if ch.pauli is not None:
        return np.array([
            sum(prob * (1 if _commutes(p, q) else -1) for q, prob in ch.pauli.items())
            for p in labels
        ])
    return np.diag(ch.ptm())



@dataclass(frozen=True)
class NoiseSpec:
    """One gate class's noise: a family and rate, or a correlated cSWAP spec.

    ``p_global`` set means correlated noise (local rate ``p``, global rate
    ``p_global``); ``table`` holds an explicit Pauli table for family "pauli".
    """

    family: str = "identity"
    p: float = 0.0
    p_global: float | None = None
    table: Mapping[str, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", canonical_family(self.family))
        _check_rate(self.p)
        if self.p_global is not None:
            _check_rate(self.p_global)
            if self.family not in ("depolarizing", "dephasing"):
                raise ValueError(f"correlated noise not defined for {self.family!r}")

    @property
    def is_correlated(self) -> bool:
        return self.p_global is not None

    def channel(self, n: int = 1) -> Channel:
        return make_channel(self.family, self.p, n, self.table)


@dataclass(frozen=True)
class NoiseModel:
    single_qubit: NoiseSpec = field(default_factory=NoiseSpec)
    two_qubit: NoiseSpec = field(default_factory=NoiseSpec)
    cswap: NoiseSpec = field(default_factory=NoiseSpec)

    @classmethod
    def uniform(
        cls, family: str, p1: float, p2: float, pc: float, p_global: float | None = None
    ) -> "NoiseModel":
        """Same family for every class, with rates for 1q, 2q and cSWAP gates."""
        return cls(NoiseSpec(family, p1), NoiseSpec(family, p2), NoiseSpec(family, pc, p_global))

    @classmethod
    def noiseless(cls) -> "NoiseModel":
        return cls()

    def gate_channel(self, kind: str, n: int) -> Channel:
        """Noise after a gate of class ``kind`` acting on ``n`` qubits."""
        spec = {"single_qubit": self.single_qubit, "1q": self.single_qubit,
                "two_qubit": self.two_qubit, "2q": self.two_qubit,
                "cswap": self.cswap}[kind]
        return spec.channel(n)

    def cswap_channel(self) -> Channel:
        """Correlated 3-qubit cSWAP noise; requires ``cswap.p_global``."""
        if not self.cswap.is_correlated:
            raise ValueError("cSWAP noise is not correlated")
        return make_correlated_cswap_noise(self.cswap.family, self.cswap.p, self.cswap.p_global)
