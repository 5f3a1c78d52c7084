"""The inherently stable plasticity rule and its closed-form equilibria.

Every normalized trace level owns one equilibrium weight; iterating the
update from any start converges there without clipping.  The two classic
multiplicative rules are shown for contrast: one saturates at {0, 1}, the
other drifts without bound.
"""

import numpy as np

from spikeflow import (RuleKind, StdpParams, comparison_update,
                       equilibrium_weight, stdp_update)

params = StdpParams(eta=1e-2)

print("equilibrium weight vs normalized trace (a = 0, w_init = 0.5):")
for xhat in np.linspace(0, 1, 6):
    print(f"  Xhat={xhat:.1f} -> W_eq={float(equilibrium_weight(xhat)):+.3f}")

print("\nconvergence from both sides toward the Xhat = 0.8 equilibrium:")
target = float(equilibrium_weight(0.8))
for w0 in (1.8, -0.5):
    w = w0
    trail = [w]
    for _ in range(2000):
        w += float(stdp_update(w, 0.8, params))
        if abs(w - target) < 1e-4:
            break
        if len(trail) < 6:
            trail.append(w)
    print(f"  from {w0:+.2f}: " + " -> ".join(f"{v:+.3f}" for v in trail)
          + f" ... settles at {w:+.4f} (closed form {target:+.4f})")

print("\n300 eligibility-consistent updates under each rule "
      "(70% of synapses potentiate):")
rng = np.random.default_rng(0)
eligibility = rng.random(200) < 0.7
for rule in (RuleKind.OURS, RuleKind.KHERADPISHEH, RuleKind.SHRESTHA):
    w = np.full(200, 0.5)
    for _ in range(300):
        w += comparison_update(rule, np.clip(w, 0, 1) if rule is
                               RuleKind.KHERADPISHEH else w, eligibility,
                               StdpParams(eta=2e-2))
    print(f"  {rule.value:13s}: range [{w.min():+.3f}, {w.max():+.3f}], "
          f"mean |W - 0.5| = {np.abs(w - 0.5).mean():.3f}")
print("the stable rule stays inside the equilibrium band; the saturating "
      "rule pins to {0,1}; the unbounded one keeps drifting")
