# %% [markdown]
# # Matrix polynomials behind the output derivatives
#
# Along ``w' = (A + u B) w`` the k-th derivative of ``w`` at ``t = 0`` is a
# matrix polynomial in ``u(0), u'(0), ...`` applied to ``w(0)``. The exact
# backend keeps rational coefficients so the structural identities can be
# checked with zero tolerance.

# %%
from fractions import Fraction

import numpy as np

from obsv import BilinearSystem, p_sequence
from obsv.identities import run_suite
from obsv.jets import omega_jet

A = np.array([[0, 1], [0, 0]])
B = np.array([[0, 1], [1, 0]])
seq = p_sequence(A, B, 3, exact=True)
for k, P in enumerate(seq):
    print(f"P_{k} =\n{P.pretty()}\n")

# %% [markdown]
# Evaluating the polynomial on an input jet matches propagating the jet
# directly through the differential equation.

# %%
u_jet = [Fraction(1, 2), Fraction(-1, 3), Fraction(1, 5)]
w0 = np.array([0.6, 0.8])
plant = BilinearSystem(A, B, [[1, 0]], [0, 0])
direct = omega_jet(plant, [float(x) for x in u_jet], w0, 3)[3]
print("P_3(v) w0    =", seq[3]([float(x) for x in u_jet]) @ w0)
print("w'''(0) jets =", direct)

# %%
results, ok = run_suite(systems=5, n_max=3, imax=3, kmax=3, jet_samples=20, seed=1)
for r in results:
    print(f"{r.name:15s} {'pass' if r.passed else 'FAIL'}  {r.detail}")
