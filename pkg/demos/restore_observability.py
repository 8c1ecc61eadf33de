# %% [markdown]
# # Restoring observability with a small bump
#
# The quadratic feedback below equals ``-1`` on the whole line ``x1 = -2``,
# which is the singular input of the plant, and that line is invariant for
# the closed loop. Trajectories started on it never reveal ``x2``. A random
# sum of bumps, kept away from the target and small in ``C^2``, breaks the
# coincidence.

# %%
from pathlib import Path

from obsv.perturb import norm_k_K, search_delta
from obsv.scenario import build, load_scenario
from obsv.simulate import observability_verdict

scenario = load_scenario(Path(__file__).resolve().parents[1] / "scenarios" / "flagship.json")
exp = build(scenario)
sc = exp.scenario

# %%
before = observability_verdict(exp.system, exp.observer, exp.feedback, None, exp.grid, sc.T, with_jets=False)
print("without perturbation")
for p in before.points:
    print(f"  #{p.index}: lambda_min = {p.lambda_min:+.3e}  observable = {p.observable}")

# %%
res = search_delta(exp.system, exp.observer, exp.feedback, exp.grid, sc.T, sc.R, exp.K1, sc.eta, exp.k,
                   budget=sc.search.budget, seed=sc.seed)
print(f"\naccepted = {res.accepted} after {res.tried} candidates, margin {res.margin:.3e}")
print(f"C^{exp.k} size on K1 = {norm_k_K(res.delta, exp.k, exp.K1).value:.3f} (budget {sc.eta})")
print(f"vanishes on B(0, {sc.R}) = {res.delta.vanishes_on_ball(sc.R)}")

# %%
after = observability_verdict(exp.system, exp.observer, exp.feedback, res.delta, exp.grid, sc.T)
print("\nwith perturbation")
for p in after.points:
    print(f"  #{p.index}: lambda_min = {p.lambda_min:+.3e}  first output derivative order = {p.k0}")
