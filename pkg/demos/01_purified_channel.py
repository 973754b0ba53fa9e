"""Channel purification on one qubit, step by step.

Run: python3 demos/01_purified_channel.py
"""
# %% A noisy gate: a random rotation followed by a Pauli channel.
import numpy as np

from purimetro import channels as chn
from purimetro import engine as eng
from purimetro import linalg as la

rng = np.random.default_rng(7)
u = la.random_unitary(2, rng)
noise = chn.pauli_channel({"I": 0.85, "X": 0.05, "Y": 0.03, "Z": 0.07})
rho = la.random_density_matrix(2, rng)
obs = la.Z

ideal = la.expectation(obs, u @ rho @ u.conj().T)
noisy = la.expectation(obs, noise(u @ rho @ u.conj().T))
print(f"ideal <Z> = {ideal:+.6f}")
print(f"noisy <Z> = {noisy:+.6f}")

# %% Two-register purification keeps the Pauli weights squared.
for m in (2, 3):
    cfg = eng.PurificationConfig("vcp", m=m)
    r = eng.simulate_vcp([eng.Gate(u, noise)], rho, obs, cfg)
    pur = chn.purified_channel(noise, m)
    print(f"m={m}: circuit ratio {r.ratio:+.6f}  closed form {la.expectation(obs, pur(u @ rho @ u.conj().T)):+.6f}"
          f"  denominator {r.denominator:.4f} (P_m = {pur.extras['P_m']:.4f})")

# %% Noise on the control qubit rescales numerator and denominator alike.
for family in ("depolarizing", "dephasing", "amplitude_damping"):
    f = chn.make_channel(family, 0.2)
    out = eng.run_vcp_circuit([eng.Gate(u, noise)], rho, 2, 1,
                              mask=eng.NoiseLocationMask.only("control", f))
    num, den = out.expectations(obs)
    print(f"control {family:<17} ratio {num / den:+.6f}  denominator {den:.4f}")
