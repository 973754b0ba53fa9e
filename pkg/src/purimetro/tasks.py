"""Estimation tasks: Zeeman phase (sequential, parallel GHZ) and the
three-parameter field estimate with Bell-basis readout and feedback."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from . import channels as chn
from . import engine as eng
from . import linalg as la
from . import pec as pecmod
from .stats import EstimateRecord, shot_sample_ratio

KINDS = ("zeeman-sequential", "zeeman-parallel", "multiparam-sequential", "multiparam-feedback")
MEASUREMENTS = ("GHZ-y", "Bell", "rotated-Bell")
PROB_FLOOR = 1e-12
RESTARTS = 8
RESTART_BOX = 0.2

# computational outcome index after the Bell-unrotation (CNOT then H⊗I) -> Bell label
# |00> -> φ1, |10> -> φ2, |01> -> φ3, |11> -> φ4
BELL_FROM_OUTCOME = (0, 2, 1, 3)


@dataclass(frozen=True)
class TaskSpec:
    kind: str
    true_params: tuple
    N: int
    t: float = 1.0
    measurement: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if not self.t > 0:
            raise ValueError("t must be positive")
        params = tuple(float(x) for x in np.atleast_1d(self.true_params))
        object.__setattr__(self, "true_params", params)
        multi = self.kind.startswith("multiparam")
        if multi and len(params) != 3:
            raise ValueError("multi-parameter tasks carry exactly 3 parameters")
        if not multi and len(params) != 1:
            raise ValueError("Zeeman tasks carry one parameter")
        meas = self.measurement or ("Bell" if multi else "GHZ-y")
        if meas not in MEASUREMENTS:
            raise ValueError(f"unknown measurement {meas!r}")
        if multi == (meas == "GHZ-y"):
            raise ValueError(f"measurement {meas!r} does not fit task {self.kind!r}")
        object.__setattr__(self, "measurement", meas)

    @property
    def n_outcomes(self) -> int:
        return 4 if self.kind.startswith("multiparam") else 2


@dataclass(frozen=True)
class OutcomeDistribution:
    probs: tuple
    counts: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))

    def as_array(self) -> np.ndarray:
        return np.array(self.probs)

    def validate(self, tol: float = 1e-10) -> "OutcomeDistribution":
        p = self.as_array()
        if p.min() < -tol or abs(p.sum() - 1) > tol:
            raise ValueError(f"invalid distribution {p}")
        return self


@dataclass
class TaskCircuit:
    """Probe state, noisy gate list, and how to read outcomes."""

    probe: np.ndarray
    gates: list
    n: int
    # diagonal computational-basis readout order -> task outcome labels
    outcome_order: tuple = ()
    # optional non-diagonal projector readout (parallel GHZ); method none only
    projector: np.ndarray | None = None


# ---------------------------------------------------------------- closed forms

def multiparam_probabilities(params: Sequence[float], t: float, N: int) -> OutcomeDistribution:
    b, theta, phi = params
    c2 = np.cos(b * t * N) ** 2
    s2 = 1 - c2
    st2 = np.sin(theta) ** 2
    return OutcomeDistribution((
        c2,
        s2 * np.cos(theta) ** 2,
        s2 * st2 * np.cos(phi) ** 2,
        s2 * st2 * np.sin(phi) ** 2,
    ))


@dataclass(frozen=True)
class Inversion:
    params: tuple
    angles_defined: bool


def invert_multiparam(dist, t: float, N: int) -> Inversion:
    """Principal-branch inversion of the four Bell probabilities.

    Angles are reported as NaN with ``angles_defined = False`` when
    1 - P1 < 1e-12.
    """
    p = np.clip(np.asarray(getattr(dist, "probs", dist), dtype=float), 0.0, 1.0)
    b = np.arccos(np.sqrt(p[0])) / (t * N)
    s = 1.0 - p[0]
    if s < 1e-12:
        return Inversion((float(b), float("nan"), float("nan")), False)
    theta = np.arccos(np.sqrt(np.clip(p[1] / s, 0.0, 1.0)))
    phi = np.arctan2(np.sqrt(p[3]), np.sqrt(p[2]))
    return Inversion((float(b), float(theta), float(phi)), True)


def zeeman_estimator(p_y: float, count: float) -> float:
    """arcsin(1 - 2 p_y) / count with the argument clamped to [-1, 1]."""
    return float(np.arcsin(np.clip(1 - 2 * p_y, -1.0, 1.0)) / count)


def zeeman_probability(lam: float, count: float) -> float:
    return float((1 - np.sin(lam * count)) / 2)


# ---------------------------------------------------------------- circuits

def _gate(u: np.ndarray, noise: chn.NoiseModel | None, kind: str, qubits, n: int) -> eng.Gate:
    if noise is None:
        return eng.Gate(u, None, kind)
    ch = noise.gate_channel(kind, len(qubits))
    if len(qubits) < n:
        ch = chn.embed(ch, qubits, n)
    return eng.Gate(u, ch, kind)


def zeeman_sequential_circuit(spec: TaskSpec, noise: chn.NoiseModel | None = None) -> TaskCircuit:
    """|0>, H, N encodings, then S and H so that P(0) is the |GHZ_y> population."""
    lam = spec.true_params[0]
    u = la.zeeman_unitary(lam, spec.t)
    gates = [_gate(la.H, noise, "1q", [0], 1)]
    gates += [_gate(u, noise, "1q", [0], 1) for _ in range(spec.N)]
    gates += [_gate(la.S, noise, "1q", [0], 1), _gate(la.H, noise, "1q", [0], 1)]
    return TaskCircuit(la.projector(la.ket("0")), gates, 1, outcome_order=(0, 1))


def zeeman_parallel_circuit(spec: TaskSpec, noise: chn.NoiseModel | None = None) -> TaskCircuit:
    """GHZ_N probe (prepared ideally) with one encoding per qubit; readout by P_y."""
    n = spec.N
    if n > eng.MAX_QUBITS:
        raise ValueError(f"parallel scheme limited to {eng.MAX_QUBITS} qubits")
    lam = spec.true_params[0]
    u = la.zeeman_unitary(lam, spec.t, n)
    ch = None
    if noise is not None:
        ch = chn.tensor_all([noise.gate_channel("1q", 1)] * n)
    gates = [eng.Gate(u, ch, "1q")]
    return TaskCircuit(la.projector(la.ghz(n)), gates, n, projector=la.projector(la.ghz_y(n)))


def su2_for(params: Sequence[float], t: float) -> np.ndarray:
    b, theta, phi = params
    return la.su2_evolution(b, theta, phi, t)


def multiparam_circuit(
    spec: TaskSpec,
    noise: chn.NoiseModel | None = None,
    control: Sequence[float] | None = None,
) -> TaskCircuit:
    """Bell probe, N encodings (each optionally followed by V = U_ctrl†), Bell readout."""
    t = spec.t
    u_enc = la.encoding_unitary(spec.true_params, t)
    gates = [_gate(np.kron(la.H, la.I2), noise, "1q", [0], 2), _gate(la.CNOT, noise, "2q", [0, 1], 2)]
    v = None if control is None else la.dagger(la.encoding_unitary(control, t))
    for _ in range(spec.N):
        gates.append(_gate(u_enc, noise, "2q", [0, 1], 2))
        if v is not None:
            gates.append(_gate(v, noise, "2q", [0, 1], 2))
    if spec.measurement == "rotated-Bell":
        r = np.kron(la.dagger(la.bell_rotation()), la.I2)
        gates.append(_gate(r, noise, "1q", [0], 2))
    gates += [_gate(la.CNOT, noise, "2q", [0, 1], 2), _gate(np.kron(la.H, la.I2), noise, "1q", [0], 2)]
    return TaskCircuit(la.projector(la.ket("00")), gates, 2, outcome_order=BELL_FROM_OUTCOME)


def build_circuit(spec: TaskSpec, noise=None, control=None) -> TaskCircuit:
    if spec.kind == "zeeman-sequential":
        return zeeman_sequential_circuit(spec, noise)
    if spec.kind == "zeeman-parallel":
        return zeeman_parallel_circuit(spec, noise)
    return multiparam_circuit(spec, noise, control)


def _quaternion(params, t: float) -> np.ndarray:
    """(a0, a) with exp(-iH t) = a0 I - i a·σ."""
    b, theta, phi = params
    c, s = np.cos(b * t), np.sin(b * t)
    st = np.sin(theta)
    return np.array([c, s * st * np.cos(phi), s * st * np.sin(phi), s * np.cos(theta)])


def _qmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # (a0 - i a·σ)(b0 - i b·σ) = (a0 b0 - a·b) - i (a0 b + b0 a + a×b)·σ
    return np.concatenate((
        [a[0] * b[0] - a[1:] @ b[1:]],
        a[0] * b[1:] + b[0] * a[1:] + np.cross(a[1:], b[1:]),
    ))


_ROTATED_OVERLAP = np.array(
    [[np.vdot(r, b) for b in la.bell_basis()] for r in la.rotated_bell_basis()]
)


def controlled_probabilities(params, control, t: float, N: int, measurement: str = "Bell") -> np.ndarray:
    """Noiseless outcome probabilities of (V U_λ)^N on the Bell probe, V = U_control†.

    Uses the SU(2) closed form W^N = cos(Nα) I - i sin(Nα) m·σ.
    """
    w = _quaternion(params, t)
    if control is not None:
        v = _quaternion(control, t)
        w = _qmul(np.concatenate(([v[0]], -v[1:])), w)
    vec = w[1:]
    norm = np.sqrt(vec @ vec)
    alpha = np.arctan2(norm, w[0])
    m = vec / norm if norm > 0 else np.array([0.0, 0.0, 1.0])
    c, s = np.cos(N * alpha), np.sin(N * alpha)
    # Bell-basis amplitudes of (W^N ⊗ I)|φ1>
    amps = np.array([c, -1j * s * m[2], -1j * s * m[0], s * m[1]])
    if measurement == "rotated-Bell":
        amps = _ROTATED_OVERLAP @ amps
    return np.abs(amps) ** 2


# ---------------------------------------------------------------- method evaluation

def pec_for(noise: chn.NoiseModel, assumed: tuple | None = None) -> pecmod.PecDecomposition:
    """Decomposition targeting the cSWAP local noise (or an assumed (family, rate))."""
    family, p = assumed if assumed is not None else (noise.cswap.family, noise.cswap.p)
    return pecmod.decomposition_for(family, p)


def method_output(
    circuit: TaskCircuit,
    noise: chn.NoiseModel,
    config: eng.PurificationConfig,
    *,
    signed: bool = False,
    pec_assumed: tuple | None = None,
) -> eng.CircuitOutput:
    """Run one mitigation method; ``signed`` keeps PEC signs apart for sampling."""
    if config.method == "none":
        return eng.noisy_output(circuit.gates, circuit.probe)
    if circuit.projector is not None:
        raise ValueError("projector readout supports method none only")
    cswap = eng.CswapNoise.from_model(noise)
    dec = pec_for(noise, pec_assumed) if config.uses_pec else None
    handling = None if dec is None else ("signed" if signed else "quasi")
    if config.method in ("vsp", "pvsp"):
        rho = eng.build_noisy_target(circuit.gates, circuit.probe)
        return eng.run_vsp_circuit(rho, config.m, cswap_noise=cswap, pec=dec, pec_handling=handling)
    return eng.run_vcp_circuit(
        circuit.gates, circuit.probe, config.m, config.layers,
        cswap_noise=cswap, pec=dec, pec_handling=handling,
    )


@dataclass
class MethodEstimate:
    probs: np.ndarray          # task-ordered outcome probabilities (mitigated, normalised)
    numerators: np.ndarray     # task-ordered numerators
    denominator: float
    gamma: float
    eta: float


def _reorder(values: np.ndarray, order: Sequence[int]) -> np.ndarray:
    out = np.empty(len(order))
    for comp_idx, task_idx in enumerate(order):
        out[task_idx] = values[comp_idx]
    return out


def normalise_probs(p: np.ndarray) -> np.ndarray:
    """Clip negatives from mitigation overshoot and renormalise."""
    p = np.clip(np.asarray(p, dtype=float), 0.0, None)
    total = p.sum()
    return p / total if total > 0 else np.full(p.size, 1.0 / p.size)


def estimate_distribution(
    circuit: TaskCircuit,
    noise: chn.NoiseModel,
    config: eng.PurificationConfig,
    shots: int | None = None,
    rng: np.random.Generator | None = None,
    pec_assumed: tuple | None = None,
) -> MethodEstimate:
    """Mitigated outcome probabilities, exact (``shots=None``) or from ν shots."""
    if circuit.projector is not None:
        if config.method != "none":
            raise ValueError("parallel GHZ readout supports method none only")
        rho = eng.build_noisy_target(circuit.gates, circuit.probe)
        p_y = la.expectation(circuit.projector, rho)
        if shots is not None:
            p_y = rng.binomial(shots, np.clip(p_y, 0, 1)) / shots
        probs = np.array([p_y, 1 - p_y])
        return MethodEstimate(probs, probs.copy(), 1.0, 1.0, 1.0)
    out = method_output(circuit, noise, config, signed=shots is not None, pec_assumed=pec_assumed)
    exact_nums, _, exact_den = out.outcome_ratios()
    if shots is None:
        nums, den = exact_nums, exact_den
    else:
        nums, den = shot_sample_ratio(out.joint_distribution(), shots, rng, out.gamma)
    if abs(den) < eng.DENOMINATOR_FLOOR:
        raise eng.PurificationBreakdown(f"denominator {den:.3g} below {eng.DENOMINATOR_FLOOR}")
    nums = _reorder(nums, circuit.outcome_order)
    probs = normalise_probs(nums / den)
    return MethodEstimate(probs, nums, float(den), out.gamma, float(exact_den))


def estimate_params(spec: TaskSpec, probs: np.ndarray) -> tuple:
    if spec.kind.startswith("multiparam"):
        if spec.measurement == "rotated-Bell":
            return mle_fit(
                probs,
                lambda q: controlled_probabilities(q, None, spec.t, spec.N, "rotated-Bell"),
                1,
                spec.true_params,
            ).params
        return invert_multiparam(probs, spec.t, spec.N).params
    return (zeeman_estimator(probs[0], spec.N * spec.t),)


def gap(truth: Sequence[float], est: Sequence[float]) -> float:
    return float(np.sum(np.abs(np.asarray(truth) - np.asarray(est))))


# ---------------------------------------------------------------- MLE

@dataclass(frozen=True)
class MleResult:
    params: tuple
    loss: float
    init_loss: float
    improved: bool


def _loss(empirical: np.ndarray, model, params, shots: float) -> float:
    q = np.clip(np.asarray(model(params), dtype=float), PROB_FLOOR, None)
    mask = empirical > 0
    # cross-entropy minus the empirical entropy: same minimiser, better conditioned near zero
    return float(shots * np.sum(empirical[mask] * (np.log(empirical[mask]) - np.log(q[mask]))))


def mle_fit(
    empirical,
    model: Callable[[np.ndarray], np.ndarray],
    shots: float,
    init: Sequence[float],
    rng: np.random.Generator | None = None,
) -> MleResult:
    """Minimise -ν Σ P̂(x) log Q(x) with Nelder-Mead plus box restarts.

    Restart points are drawn uniformly within ±20% of ``init``; with no rng
    the restarts use a fixed stream so results stay deterministic.
    """
    emp = np.asarray(getattr(empirical, "probs", empirical), dtype=float)
    init = np.asarray(init, dtype=float)
    rng = rng if rng is not None else np.random.default_rng(0)
    f = lambda x: _loss(emp, model, x, shots)  # noqa: E731
    init_loss = f(init)
    starts = [init] + [
        init * (1 + rng.uniform(-RESTART_BOX, RESTART_BOX, size=init.size))
        for _ in range(RESTARTS)
    ]
    best_x, best_f = init, init_loss
    opts = {"xatol": 1e-12, "fatol": 1e-18, "maxiter": 4000, "maxfev": 8000}
    for x0 in starts:
        res = minimize(f, x0, method="Nelder-Mead", options=opts)
        if res.fun < best_f:
            best_x, best_f = res.x, float(res.fun)
    return MleResult(tuple(float(v) for v in best_x), best_f, init_loss, best_f < init_loss)


# ---------------------------------------------------------------- feedback

def run_feedback_loop(
    spec: TaskSpec,
    noise: chn.NoiseModel | None,
    mitigation: eng.PurificationConfig,
    iterations: int,
    shots: int | None,
    rng: np.random.Generator,
    *,
    init: Sequence[float] | None = None,
    pec_assumed: tuple | None = None,
) -> list[EstimateRecord]:
    """Simulate, sample, fit, and set V = U_λ̂† for the next iteration.

    Iteration 1 uses V = I.  ``shots=None`` feeds exact mitigated probabilities.
    Each record carries ``prob_gap`` = ‖P̂_V − P_V‖₁ in ``extra``.
    """
    if spec.kind != "multiparam-feedback":
        raise ValueError("feedback loop needs kind multiparam-feedback")
    noise = noise or chn.NoiseModel.noiseless()
    truth = np.asarray(spec.true_params)
    current = np.asarray(init if init is not None else truth * 1.1, dtype=float)
    records = []
    control = None
    for it in range(iterations):
        circuit = multiparam_circuit(spec, noise, control)
        est = estimate_distribution(circuit, noise, mitigation, shots, rng, pec_assumed)
        ctrl_now = control
        model = lambda q: controlled_probabilities(  # noqa: E731
            q, ctrl_now, spec.t, spec.N, spec.measurement
        )
        fit = mle_fit(est.probs, model, shots or 1, current, rng)
        ideal = controlled_probabilities(truth, ctrl_now, spec.t, spec.N, spec.measurement)
        records.append(EstimateRecord(
            trial=0, method=mitigation.method, N=spec.N, params=fit.params,
            gap=gap(truth, fit.params), layers=mitigation.layers, m=mitigation.m,
            numerators=tuple(est.numerators), denominator=est.denominator,
            gamma=est.gamma, eta=est.eta,
            extra={"iteration": it + 1, "prob_gap": float(np.sum(np.abs(est.probs - ideal)))},
        ))
        current = np.asarray(fit.params)
        control = tuple(current)
    return records
