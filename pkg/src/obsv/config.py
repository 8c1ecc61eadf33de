"""Global numerical settings.

Values here are read at call time, so tests may monkeypatch them.
"""

# numerical rank: singular values above max(dim) * sigma_max * RANK_RTOL count
RANK_RTOL = 1e-12

# hard cap on the order of the P_k recurrence
KMAX_LIMIT = 12

# Gramian positive-definiteness threshold, relative to trace(W)/n
OBS_REL_TOL = 1e-8

# "nonzero derivative" threshold for jets, relative to the largest jet entry seen
JET_REL_TOL = 1e-9

# state-norm bound beyond which an integration is declared a blow-up
BLOWUP_BOUND = 1e8

# bump perturbations are rescaled to this fraction of the requested C^k budget
NORM_SAFETY = 0.9

# highest derivative order supported by the bump profile closed forms
BUMP_ORDER_CAP = 16
