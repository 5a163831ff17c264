"""
Mixed-norm scaling on a toy problem.

A "separated source" y is a random spectrogram. The microphone x holds a
scaled copy of y plus a few large, frame-sparse disturbances, which is what
leakage from a second talker looks like. Least squares (MDP) is pulled
towards the disturbances; a mixed norm with small p ignores them.
"""
import numpy as np

from gmdp import MixedNormParams
from gmdp.scaling import gmdp_single, mdp_coefficients

rng = np.random.default_rng(0)
F, N = 64, 200
y = rng.standard_normal((F, N)) + 1j * rng.standard_normal((F, N))
z_true = np.exp(1j * np.linspace(0, 3, F)) * np.linspace(0.5, 2, F)

x = z_true[:, None] * y
loud = rng.choice(N, size=20, replace=False)
x[:, loud] += 5 * (rng.standard_normal((F, 20)) + 1j * rng.standard_normal((F, 20)))


def error(z):
    return np.linalg.norm(z - z_true) / np.linalg.norm(z_true)


print(f"MDP relative error: {error(mdp_coefficients(x, y)):.4f}")
for p, q in [(2.0, 2.0), (1.0, 2.0), (0.5, 2.0), (0.5, 1.0)]:
    z, n_iter, trace = gmdp_single(x, y, MixedNormParams(p, q))
    drop = trace[-1] / trace[0]
    print(f"GMDP p={p} q={q}: error {error(z):.4f}, {n_iter} iterations, "
          f"objective x{drop:.3f}")
