# %% [markdown]
# # A constant input that blinds the output
#
# The double integrator with a cross-coupled input matrix is observable for
# almost every constant input. One value is the exception: along it the
# second coordinate never reaches the measured output.

# %%
import numpy as np

from obsv import BilinearSystem, gramian, observability_matrix, singular_input_scan

plant = BilinearSystem(A=[[0, 1], [0, 0]], B=[[0, 1], [1, 0]], C=[[1, 0]], b=[0, 1])

# %% [markdown]
# Both the drift and the input matrix give observable pairs on their own.

# %%
for name, M in (("A", plant.A), ("B", plant.B)):
    om = observability_matrix(plant.C, M)
    print(f"(C, {name}): rank {om.rank}, smallest singular value {om.smallest_singular_value:.3g}")

# %% [markdown]
# The determinant of the stacked output matrix for ``A + uB`` is a polynomial
# in ``u``; its real roots are the singular inputs.

# %%
for s in singular_input_scan(plant):
    print(f"singular input u* = {s.u:+.12f} (certificate {s.sigma_min:.1e})")

# %% [markdown]
# The Gramian tells the same story in the time domain.

# %%
for u in (0.0, -0.5, -1.0):
    rep = gramian(plant, u, 2.0)
    print(f"u = {u:+.1f}: lambda_min(W) = {rep.lambda_min:.3e}, observable = {rep.observable}")
    print(np.array2string(rep.W, precision=4))
