"""
Checking the geometry numerically
==================================

Everything the solver relies on can be checked on small random instances:
finite differences for both gradients, the two projectors, invariance under
the rotations that define the quotient, and the order of the retraction.
The same routines back ``tucker-si gradcheck``.
"""

import numpy as np

from tucker_si import checks
from tucker_si.geometry import AmbientVector, project_tangent

for name, err, thr, ok in checks.run_checks(trials=5, seed=1):
    print(f"{name:<26}{err:10.2e}  threshold {thr:.0e}  {'ok' if ok else 'FAIL'}")

# The retraction is first order: the Taylor remainder shrinks like t^2, so the
# remainder divided by t^2 settles to a constant.
rng = np.random.default_rng(0)
inst = checks.random_instance(rng)
eta = project_tangent(inst.ctx, AmbientVector.random(inst.point, rng))
eta = eta * (1 / eta.norm())
ts = (1e-1, 1e-2, 1e-3, 1e-4)
for t, r in zip(ts, checks.taylor_ratios(inst.point, eta, ts)):
    print(f"t={t:.0e}  remainder / t^2 = {r:.4f}")

# A negative control: scaling the cached inverse Gram matrices by 1.01 breaks
# the Riesz map, and the adjoint check notices.
bad = {name: ok for name, _, _, ok in checks.run_checks(trials=1, seed=1, corrupt_metric=True)}
print("corrupted metric, failing checks:", [n for n, ok in bad.items() if not ok])
