"""
Prox versus plain subgradient
=============================

Replace the prox of the l1 term by a raw subgradient step and the velocity
starts chattering as agents cross the kinks of |x - p|. Count how often each
coordinate of dx changes sign over the first ten seconds.
"""

import ssdn
from ssdn.dynamics import integrate, sign_changes

sc = ssdn.load_scenario("paper_sec6")
params = sc.algorithm_params.replace(t_end=10.0)

for variant in ("smooth", "subgradient"):
    _, states, fields = integrate(sc.problem, sc.initial_state, params, variant,
                                  keep_fields=True)
    flips = sign_changes(fields[:, 0])
    print(f"{variant:12s} sign changes per agent and coordinate:\n{flips}")
    print(f"{'':12s} final x =\n{states[-1, 0].round(4)}")
