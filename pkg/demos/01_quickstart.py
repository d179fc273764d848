"""
Completing a tensor with side information
==========================================

A 60 x 60 x 60 tensor of multilinear rank (5, 5, 5) is observed on fewer
entries than it has degrees of freedom (oversampling 0.5). Each mode comes
with a feature matrix whose columns nearly span the true factor. The
feature regularizer pulls the factors toward those spans, and that is what
makes recovery possible at all.
"""

import numpy as np

from tucker_si import SolverConfig, solve_rcg
from tucker_si.synth import scenario

# Case 1 of the simulation protocol at desk scale. The weight alpha sets both
# the regularizer (alpha |Omega|) and the metric (alpha n1 n2 n3).
data, truth, spec = scenario(1, dims=(60, 60, 60), rank=(5, 5, 5), os=0.5, alpha=20.0, seed=0)
print(f"{len(data.train)} observed entries out of {np.prod(spec.dims)}")

# Every tenth iteration is echoed through the trace sink.
def show(tr):
    if tr.iter % 10 == 0:
        print(f"iter {tr.iter:3d}  cost {tr.cost:10.3e}  |grad|^2 {tr.grad_norm_sq:9.2e}  test rmse {tr.test_rmse:9.2e}")

result = solve_rcg(data, SolverConfig(seed=0), sink=show)
print(f"stopped: {result.reason} after {result.iterations} iterations")

# The same data without side information. With alpha = 0 nothing ties the
# factors to the features and the problem is badly underdetermined.
plain, _, _ = scenario(1, dims=(60, 60, 60), rank=(5, 5, 5), os=0.5, alpha=0.0, seed=0)
baseline = solve_rcg(plain, SolverConfig(seed=0, metric="ls"))

print(f"test RMSE with side information    {result.trace[-1].test_rmse:.2e}")
print(f"test RMSE without side information {baseline.trace[-1].test_rmse:.2e}")

# The recovered factors span nearly the same subspaces as the truth.
for k, (U, B) in enumerate(zip(result.point.factors, truth.factors)):
    Q = np.linalg.qr(B)[0]
    sines = np.sqrt(np.clip(1 - np.linalg.svd(U.T @ Q, compute_uv=False) ** 2, 0, None))
    print(f"mode {k}: largest principal angle sine {sines.max():.1e}")
