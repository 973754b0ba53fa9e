"""Exact density-matrix simulation of virtual state/channel purification circuits.

Layout of the joint register is ``ctrl ⊗ reg_0 ⊗ ... ⊗ reg_{m-1}``; every
register holds ``n`` qubits and the last register is the target.  For channel
purification the first ``m - 1`` registers are ancillas starting maximally
mixed; for state purification they are further noisy copies of the target.

Controlled permutations are applied per qubit index ``k``: the gate acts on
the control and on qubit ``k`` of every register, and is followed by its own
noise.  Noise after the gates is sorted into regions:

``control``    the control qubit (plus its preparation),
``between``    ancilla and target qubits after the first permutation,
``anc_after``  ancilla qubits after the second permutation,
``tar_after``  target qubits after the second permutation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import channels as chn
from . import linalg as la
from . import pec as pecmod

MAX_QUBITS = 5
DENOMINATOR_FLOOR = 1e-12

METHODS = ("none", "vsp", "vcp", "pvsp", "pvcp")
REFRESH_MODES = ("exact-mixed", "sampled-pauli")
PEC_MODES = ("off", "exact-branch-sum", "monte-carlo")
REGIONS = ("control", "between", "anc_after", "tar_after")

_PLUS = np.full((2, 2), 0.5, dtype=complex)
_XOBS = la.X


class PurificationBreakdown(RuntimeError):
    """Denominator too small to form a ratio."""


@dataclass(frozen=True)
class PurificationConfig:
    method: str = "none"
    m: int = 2
    layers: int = 1
    ancilla_refresh: str = "exact-mixed"
    pec_mode: str = "off"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.method != "none" and self.m < 2:
            raise ValueError("purification order must be >= 2")
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.method in ("vsp", "pvsp") and self.layers != 1:
            raise ValueError("state purification has a single layer")
        if self.ancilla_refresh not in REFRESH_MODES:
            raise ValueError(f"unknown ancilla refresh {self.ancilla_refresh!r}")
        if self.pec_mode not in PEC_MODES:
            raise ValueError(f"unknown PEC mode {self.pec_mode!r}")
        if self.method in ("pvsp", "pvcp") and self.pec_mode == "off":
            raise ValueError(f"{self.method} requires a PEC mode")

    @property
    def uses_pec(self) -> bool:
        return self.method in ("pvsp", "pvcp")

    @property
    def is_channel(self) -> bool:
        return self.method in ("vcp", "pvcp")


@dataclass(frozen=True)
class NoiseLocationMask:
    """Which noise regions are active, with optional per-region channel overrides."""

    control: bool = True
    between: bool = True
    anc_after: bool = True
    tar_after: bool = True
    overrides: Mapping[str, chn.Channel] = field(default_factory=dict)

    @classmethod
    def all_on(cls) -> "NoiseLocationMask":
        return cls()

    @classmethod
    def all_off(cls) -> "NoiseLocationMask":
        return cls(False, False, False, False)

    @classmethod
    def only(cls, region: str, channel: chn.Channel | None = None) -> "NoiseLocationMask":
        if region not in REGIONS:
            raise ValueError(f"unknown region {region!r}")
        flags = {r: r == region for r in REGIONS}
        overrides = {region: channel} if channel is not None else {}
        return cls(**flags, overrides=overrides)

    def active(self, region: str) -> bool:
        return bool(getattr(self, region))


@dataclass(frozen=True)
class CswapNoise:
    """Noise attached to every controlled permutation.

    ``local`` is a single-qubit channel applied to each qubit the gate
    touches; ``correlated`` acts jointly on (ctrl, reg_0[k], reg_1[k]) and is
    only defined for two registers.  ``control_prep`` follows the control
    qubit's preparation.
    """

    local: chn.Channel | None = None
    correlated: chn.Channel | None = None
    control_prep: chn.Channel | None = None

    @classmethod
    def from_model(cls, model: chn.NoiseModel) -> "CswapNoise":
        prep = model.gate_channel("single_qubit", 1)
        if model.cswap.is_correlated:
            return cls(correlated=model.cswap_channel(), control_prep=prep)
        return cls(local=model.gate_channel("cswap", 1), control_prep=prep)


@dataclass(frozen=True)
class Gate:
    """A unitary on the target register followed by its noise channel."""

    unitary: np.ndarray
    noise: chn.Channel | None = None
    kind: str = ""

    def channel(self) -> chn.Channel:
        u = chn.from_unitary(self.unitary)
        return u if self.noise is None else chn.compose(self.noise, u)


@dataclass(frozen=True)
class RatioExpectation:
    numerator: float
    denominator: float
    ratio: float
    gamma: float = 1.0


@dataclass
class CircuitOutput:
    """Reduced ``ctrl ⊗ target`` state at the end of a purification circuit.

    ``parts`` maps a sign to an operator.  Without sign tracking there is a
    single ``+1`` part which already includes any quasi-probability weights.
    With sign tracking the parts sum to a normalised state and the exact
    result is ``scale · (parts[+1] - parts[-1])``.
    """

    parts: dict
    n_target: int
    scale: float = 1.0
    gamma: float = 1.0
    signed: bool = False

    def exact_state(self) -> np.ndarray:
        plus = self.parts.get(1)
        minus = self.parts.get(-1)
        out = plus if minus is None else plus - minus
        return self.scale * out

    def expectations(self, obs: np.ndarray) -> tuple[float, float]:
        """(⟨X ⊗ O⟩, ⟨X ⊗ I⟩) on the exact (branch-summed) state."""
        rho = self.exact_state()
        d = 2**self.n_target
        blocks = rho.reshape(2, d, 2, d)
        # tr((X ⊗ O) ρ) = tr(O ρ_10) + tr(O ρ_01)
        off = blocks[1, :, 0, :] + blocks[0, :, 1, :]
        num = np.einsum("ij,ji->", np.asarray(obs), off)
        den = np.trace(off)
        return float(num.real), float(den.real)

    def ratio(self, obs: np.ndarray) -> RatioExpectation:
        num, den = self.expectations(obs)
        if abs(den) < DENOMINATOR_FLOOR:
            raise PurificationBreakdown(f"denominator {den:.3g} below {DENOMINATOR_FLOOR}")
        return RatioExpectation(num, den, num / den, self.gamma)

    def outcome_ratios(self) -> tuple[np.ndarray, np.ndarray, float]:
        """Numerators for every computational-basis projector, and the denominator."""
        rho = self.exact_state()
        d = 2**self.n_target
        blocks = rho.reshape(2, d, 2, d)
        off = blocks[1, :, 0, :] + blocks[0, :, 1, :]
        nums = np.real(np.diag(off))
        den = float(nums.sum())
        return nums, nums / den if abs(den) >= DENOMINATOR_FLOOR else nums * np.nan, den

    def joint_distribution(self) -> np.ndarray:
        """Probabilities P[s, x, k] of sign s (index 0: +1, 1: -1), control outcome x
        (index 0: +1, 1: -1) and target basis outcome k."""
        if len(self.parts) > 1 and not self.signed:
            raise ValueError("joint distribution needs a sign-tracked output")
        if not self.signed and self.gamma != 1.0:
            raise ValueError("quasi-probability output has no sampling distribution")
        d = 2**self.n_target
        out = np.zeros((2, 2, d))
        minus_ket = np.array([1, -1]) / np.sqrt(2)
        plus_ket = np.array([1, 1]) / np.sqrt(2)
        for s_idx, sign in enumerate((1, -1)):
            part = self.parts.get(sign)
            if part is None:
                continue
            blocks = part.reshape(2, d, 2, d)
            for x_idx, v in enumerate((plus_ket, minus_ket)):
                # <v| ⊗ <k| ρ |v> ⊗ |k>
                red = np.einsum("a,aibj,b->ij", np.conj(v), blocks, v)
                out[s_idx, x_idx] = np.real(np.diag(red))
        out[out < 0] = np.where(out[out < 0] > -1e-12, 0.0, out[out < 0])
        return out


def split_layers(items: Sequence, layers: int) -> list[list]:
    """Contiguous blocks, sizes as equal as possible, remainder to the earliest."""
    q, r = divmod(len(items), layers)
    out, start = [], 0
    for i in range(layers):
        size = q + (1 if i < r else 0)
        out.append(list(items[start:start + size]))
        start += size
    return out


def layer_channel(gates: Sequence[Gate], dim: int) -> chn.Channel:
    """Composition of the gates (first gate acts first) as one channel."""
    sup = np.eye(dim * dim, dtype=complex)
    for g in gates:
        sup = g.channel().superop @ sup
    return chn.from_superop(sup)


def build_noisy_target(
    gate_sequence: Sequence[Gate], probe: np.ndarray, noise_model=None
) -> np.ndarray:
    """Noisy output state: each gate followed by the noise attached to it.

    ``noise_model`` is accepted for call-site symmetry; task builders already
    attach each gate's noise channel.
    """
    probe = np.asarray(probe, dtype=complex)
    rho = probe
    for g in gate_sequence:
        rho = g.unitary @ rho @ la.dagger(g.unitary)
        if g.noise is not None:
            rho = g.noise(rho)
    return rho


def ancilla_refresh(mode: str, n: int, rng: np.random.Generator | None = None):
    """Ancilla refresh between layers.

    ``exact-mixed`` returns the completely depolarising channel on ``n``
    qubits (the Pauli-twirl average); ``sampled-pauli`` returns one uniformly
    drawn Pauli string as ``(label, matrix)``.
    """
    if mode == "exact-mixed":
        return chn.depolarizing(1.0, n)
    if mode == "sampled-pauli":
        if rng is None:
            raise ValueError("sampled-pauli refresh needs an rng")
        label = "".join(rng.choice(list("IXYZ"), size=n))
        return label, la.pauli(label)
    raise ValueError(f"unknown refresh mode {mode!r}")


class _Sim:
    """Holds one or two (sign-tracked) joint operators and applies maps to all."""

    def __init__(self, rho: np.ndarray, dims: list[int], signed: bool):
        self.dims = dims
        self.parts = {1: rho} if not signed else {1: rho, -1: np.zeros_like(rho)}

    def unitary(self, u, targets):
        for s in self.parts:
            self.parts[s] = chn.apply_unitary(u, self.parts[s], targets, self.dims)

    def channel(self, ch: chn.Channel | None, targets):
        if ch is None:
            return
        for s in self.parts:
            self.parts[s] = chn.apply(ch, self.parts[s], targets, self.dims)

    def superop(self, sup, targets):
        for s in self.parts:
            self.parts[s] = chn.apply_superop(sup, self.parts[s], targets, self.dims)

    def signed_site(self, plus, minus, target):
        p = self.parts[1]
        mn = self.parts[-1]
        pp = chn.apply_superop(plus, p, [target], self.dims)
        pm = chn.apply_superop(minus, p, [target], self.dims)
        mp = chn.apply_superop(plus, mn, [target], self.dims)
        mm = chn.apply_superop(minus, mn, [target], self.dims)
        self.parts = {1: pp + mm, -1: pm + mp}

    def reduce(self, keep) -> dict:
        return {s: la.partial_trace(r, self.dims, keep) for s, r in self.parts.items()}


def _region_channel(mask: NoiseLocationMask, region: str, default):
    if not mask.active(region):
        return None
    return mask.overrides.get(region, default)


def _permutation_step(
    sim: _Sim,
    m: int,
    n: int,
    inverse: bool,
    noise: CswapNoise,
    mask: NoiseLocationMask,
    first: bool,
) -> None:
    shift = la.controlled_cyclic_shift(m)
    if inverse:
        shift = la.dagger(shift)
    anc_region = "between" if first else "anc_after"
    tar_region = "between" if first else "tar_after"
    for k in range(n):
        qubits = [0] + [1 + r * n + k for r in range(m)]
        sim.unitary(shift, qubits)
        if noise.correlated is not None:
            if m != 2:
                raise ValueError("correlated permutation noise needs m = 2")
            flags = {mask.active("control"), mask.active(anc_region), mask.active(tar_region)}
            if len(flags) > 1:
                raise ValueError("correlated noise cannot be split across regions")
            if flags == {True}:
                sim.channel(noise.correlated, qubits)
            continue
        ctrl = _region_channel(mask, "control", noise.local)
        anc = _region_channel(mask, anc_region, noise.local)
        tar = _region_channel(mask, tar_region, noise.local)
        sim.channel(ctrl, [0])
        for q in qubits[1:-1]:
            sim.channel(anc, [q])
        sim.channel(tar, [qubits[-1]])


def _pec_step(sim: _Sim, dec, handling: str, tar_qubits, branch_iter) -> None:
    if dec is None or handling is None:
        return
    if handling == "quasi":
        sup = dec.quasi_superop()
        for q in tar_qubits:
            sim.superop(sup, [q])
    elif handling == "signed":
        plus, minus = dec.signed_superops()
        for q in tar_qubits:
            sim.signed_site(plus, minus, q)
    elif handling == "branch":
        for q in tar_qubits:
            idx = next(branch_iter)
            sim.channel(pecmod.operation(dec.tags[idx]), [q])
    else:
        raise ValueError(f"unknown PEC handling {handling!r}")


def _check_size(total_qubits: int) -> None:
    if total_qubits > MAX_QUBITS:
        raise ValueError(
            f"circuit needs {total_qubits} qubits; simulator cap is {MAX_QUBITS}"
        )


def _control_prep(sim: _Sim, noise: CswapNoise, mask: NoiseLocationMask) -> None:
    if mask.active("control"):
        sim.channel(mask.overrides.get("control", noise.control_prep), [0])


def run_vcp_circuit(
    gates: Sequence[Gate],
    probe: np.ndarray,
    m: int = 2,
    layers: int = 1,
    *,
    cswap_noise: CswapNoise | None = None,
    mask: NoiseLocationMask | None = None,
    pec: pecmod.PecDecomposition | None = None,
    pec_handling: str | None = None,
    refresh: str = "exact-mixed",
    rng: np.random.Generator | None = None,
    branch: Sequence[int] | None = None,
) -> CircuitOutput:
    """Simulate L-layer channel purification and return the ctrl ⊗ target state.

    ``pec_handling`` selects how the PEC quasi-inverse after each layer is
    realised: ``"quasi"`` inserts Σα_i G_i (exact branch sum by linearity),
    ``"signed"`` tracks positive/negative branches separately (for sampling),
    ``"branch"`` inserts the fixed operations listed in ``branch``.
    """
    probe = np.asarray(probe, dtype=complex)
    d = probe.shape[0]
    n = la.num_qubits(d)
    _check_size(1 + m * n)
    noise = cswap_noise or CswapNoise()
    mask = mask or NoiseLocationMask()
    dims = [2] * (1 + m * n)
    rho = la.kron(_PLUS, *([np.eye(d) / d] * (m - 1)), probe)
    sim = _Sim(rho, dims, signed=pec_handling == "signed")
    branch_iter = iter(branch) if branch is not None else None
    tar_qubits = [1 + (m - 1) * n + k for k in range(n)]
    anc_qubits = list(range(1, 1 + (m - 1) * n))
    _control_prep(sim, noise, mask)
    blocks = split_layers(gates, layers)
    for li, block in enumerate(blocks):
        _permutation_step(sim, m, n, False, noise, mask, first=True)
        sup = layer_channel(block, d).superop
        for r in range(m):
            sim.superop(sup, [1 + r * n + k for k in range(n)])
        _permutation_step(sim, m, n, True, noise, mask, first=False)
        _pec_step(sim, pec, pec_handling, tar_qubits, branch_iter)
        if li < layers - 1:
            if refresh == "exact-mixed":
                for q in anc_qubits:
                    sim.channel(chn.depolarizing(1.0), [q])
            else:
                _, pmat = ancilla_refresh("sampled-pauli", len(anc_qubits), rng)
                sim.unitary(pmat, anc_qubits)
    parts = sim.reduce([0] + tar_qubits)
    gamma = 1.0
    if pec is not None and pec_handling is not None:
        gamma = pec.gamma ** (len(tar_qubits) * layers)
    signed = pec_handling == "signed"
    return CircuitOutput(parts, n, scale=gamma if signed else 1.0, gamma=gamma, signed=signed)


def run_vsp_circuit(
    noisy_state: np.ndarray,
    m: int = 2,
    *,
    cswap_noise: CswapNoise | None = None,
    mask: NoiseLocationMask | None = None,
    pec: pecmod.PecDecomposition | None = None,
    pec_handling: str | None = None,
    branch: Sequence[int] | None = None,
) -> CircuitOutput:
    """Controlled cyclic permutation over ``m`` copies of ``noisy_state``.

    The last copy is the measured target; the other copies play the
    ``anc_after`` role for noise placement.
    """
    rho_t = np.asarray(noisy_state, dtype=complex)
    d = rho_t.shape[0]
    n = la.num_qubits(d)
    _check_size(1 + m * n)
    noise = cswap_noise or CswapNoise()
    mask = mask or NoiseLocationMask()
    dims = [2] * (1 + m * n)
    sim = _Sim(la.kron(_PLUS, *([rho_t] * m)), dims, signed=pec_handling == "signed")
    tar_qubits = [1 + (m - 1) * n + k for k in range(n)]
    _control_prep(sim, noise, mask)
    _permutation_step(sim, m, n, False, noise, mask, first=False)
    branch_iter = iter(branch) if branch is not None else None
    _pec_step(sim, pec, pec_handling, tar_qubits, branch_iter)
    parts = sim.reduce([0] + tar_qubits)
    gamma = 1.0
    if pec is not None and pec_handling is not None:
        gamma = pec.gamma ** len(tar_qubits)
    signed = pec_handling == "signed"
    return CircuitOutput(parts, n, scale=gamma if signed else 1.0, gamma=gamma, signed=signed)


def noisy_output(gates: Sequence[Gate], probe: np.ndarray) -> CircuitOutput:
    """Unmitigated run packaged like a purification output (control fixed at |+>)."""
    rho = build_noisy_target(gates, probe)
    n = la.num_qubits(rho.shape[0])
    return CircuitOutput({1: np.kron(_PLUS, rho)}, n)


def _pec_handling(config: PurificationConfig) -> str | None:
    if not config.uses_pec:
        return None
    return "quasi"


def _monte_carlo_ratio(runner, obs, sites, samples, rng, exact) -> RatioExpectation:
    def evaluate(branch):
        num, _ = runner(branch).expectations(obs)
        return num

    num, _ = pecmod.monte_carlo_expectation(sites, evaluate, samples, rng)
    den = exact.expectations(obs)[1]
    if abs(den) < DENOMINATOR_FLOOR:
        raise PurificationBreakdown(f"denominator {den:.3g} below {DENOMINATOR_FLOOR}")
    return RatioExpectation(num, den, num / den, exact.gamma)


def simulate_vsp(
    noisy_state_builder: Callable[[], np.ndarray] | np.ndarray,
    obs: np.ndarray,
    m: int = 2,
    control_noise: chn.Channel | None = None,
    *,
    cswap_noise: CswapNoise | None = None,
    mask: NoiseLocationMask | None = None,
    pec: pecmod.PecDecomposition | None = None,
    pec_mode: str = "off",
    samples: int | None = None,
    rng: np.random.Generator | None = None,
) -> RatioExpectation:
    """⟨X⊗O⟩/⟨X⊗I⟩ for state purification of order ``m``.

    ``control_noise`` is applied to the control qubit at its preparation and
    after the permutation.  With ``pec`` and ``pec_mode`` the target copy
    receives the quasi-inverse of its post-permutation noise.
    """
    if m < 2:
        raise ValueError("purification order must be >= 2")
    rho_t = noisy_state_builder() if callable(noisy_state_builder) else noisy_state_builder
    mask = mask or NoiseLocationMask()
    if control_noise is not None:
        mask = NoiseLocationMask(
            True, mask.between, mask.anc_after, mask.tar_after,
            overrides={**mask.overrides, "control": control_noise},
        )
    handling = None if pec is None or pec_mode == "off" else "quasi"
    kw = dict(cswap_noise=cswap_noise, mask=mask, pec=pec)
    exact = run_vsp_circuit(rho_t, m, pec_handling=handling, **kw)
    if pec_mode == "monte-carlo" and pec is not None:
        n = la.num_qubits(np.asarray(rho_t).shape[0])
        sites = [pec] * n
        runner = lambda b: run_vsp_circuit(rho_t, m, pec_handling="branch", branch=b, **kw)  # noqa: E731
        return _monte_carlo_ratio(runner, obs, sites, samples or 1000, rng, exact)
    return exact.ratio(obs)


def simulate_vcp(
    gate_sequence: Sequence[Gate],
    probe: np.ndarray,
    obs: np.ndarray,
    config: PurificationConfig,
    mask: NoiseLocationMask | None = None,
    cswap_noise: CswapNoise | None = None,
    *,
    pec: pecmod.PecDecomposition | None = None,
    samples: int | None = None,
    rng: np.random.Generator | None = None,
) -> RatioExpectation:
    """⟨X⊗O⟩/⟨X⊗I⟩ for (probabilistic) virtual channel purification.

    In ``monte-carlo`` PEC mode the numerator is a sample mean over
    ``samples`` branches drawn from |α|/γ, each branch simulated exactly.

    Raises:
        PurificationBreakdown: denominator magnitude below 1e-12.
    """
    if not config.is_channel:
        raise ValueError("simulate_vcp needs method vcp or pvcp")
    if config.uses_pec and pec is None:
        raise ValueError(f"{config.method} needs a PEC decomposition")
    use_pec = pec if config.uses_pec else None
    kw = dict(
        m=config.m, layers=config.layers, cswap_noise=cswap_noise, mask=mask,
        pec=use_pec, refresh=config.ancilla_refresh, rng=rng,
    )
    exact = run_vcp_circuit(gate_sequence, probe, pec_handling=_pec_handling(config), **kw)
    if config.pec_mode == "monte-carlo" and use_pec is not None:
        n = la.num_qubits(np.asarray(probe).shape[0])
        sites = [use_pec] * (n * config.layers)
        runner = lambda b: run_vcp_circuit(  # noqa: E731
            gate_sequence, probe, pec_handling="branch", branch=b, **kw
        )
        return _monte_carlo_ratio(runner, obs, sites, samples or 1000, rng, exact)
    return exact.ratio(obs)
