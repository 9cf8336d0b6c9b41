"""
Loss functions and their gradients
==================================

Each objective returns its value together with analytic gradients. Here we
evaluate a few on toy batches with known answers, then compare every
gradient against central finite differences.
"""

import math

import numpy as np

from trapforge import losszoo as lz

rng = np.random.default_rng(0)

# %%
# With every row identical, each anchor sees three equally similar
# candidates, so NT-Xent is ln 3 whatever the temperature.

z = np.ones((2, 3))
print(f"nt_xent, identical rows: {lz.nt_xent(z, z).value:.6f}  (ln 3 = {math.log(3):.6f})")

# %%
# The decoupled loss drops the positive from the denominator. Its vMF weight
# gives hard positives (low similarity) more pull than easy ones.

zA, zB = rng.standard_normal((2, 8, 16))
pos = np.sum(zA * zB, axis=1) / np.linalg.norm(zA, axis=1) / np.linalg.norm(zB, axis=1)
w = lz.vmf_weights(pos, 0.5)
order = np.argsort(pos)
print("\npositive cosine  vmf weight")
for i in order:
    print(f"{pos[i]:+.3f}          {w[i]:.3f}")
print(f"dcl  {lz.dcl(zA, zB).value:.4f}   dclw {lz.dclw(zA, zB).value:.4f}")

# %%
# BYOL and friends only pull the online prediction toward a target that is
# held fixed, so the target's reported gradient is zero by construction.

p, target = rng.standard_normal((2, 4, 8))
out = lz.negative_cosine(p, target)
print(f"\nnegative cosine {out.value:+.4f}, target gradient all zero: {not out.grads['z_target'].any()}")

# %%
# Finite-difference check for every training objective.

print(f"\n{'method':<14}max rel error")
for method in lz.DEFAULT_METHODS:
    res = lz.check_method(method, trials=5, seed=1)
    print(f"{method:<14}{res.max_rel_error:.2e}")
