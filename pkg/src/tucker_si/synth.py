"""Synthetic completion problems following the simulation protocol (cases 1 to 4)."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geometry import FeatureBasis
from .objective import ProblemData
from .observations import ObservationSet, tucker_entries_at

__all__ = [
    "ScenarioSpec",
    "GroundTruth",
    "CASE_PRESETS",
    "manifold_dimension",
    "sample_omega",
    "gen_lowrank",
    "gen_features",
    "add_obs_noise",
    "build_problem",
    "scenario",
]


@dataclass(frozen=True)
class ScenarioSpec:
    """Recipe for one synthetic instance.

    ``extra_cols`` is the number of irrelevant feature columns appended to each
    true factor; ``test_size`` defaults to ten times the training size.
    """

    dims: tuple = (60, 60, 60)
    rank: tuple = (5, 5, 5)
    os: float = 1.0
    feature_noise: float = 1e-5
    extra_cols: int = 0
    obs_noise: float = 0.0
    alpha: float = 1.0
    seed: int = 0
    test_size: int | None = None

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        rank = tuple(int(r) for r in self.rank)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "rank", rank)
        if len(dims) != 3 or len(rank) != 3:
            raise ValueError("dims and rank need three entries each")
        if any(r < 1 or r > n for r, n in zip(rank, dims)):
            raise ValueError(f"rank {rank} is invalid for dims {dims}")
        if not self.os > 0:
            raise ValueError("oversampling ratio must be positive")
        if self.feature_noise < 0 or self.obs_noise < 0 or self.alpha < 0 or self.extra_cols < 0:
            raise ValueError("noise levels, alpha and extra_cols must be non-negative")


@dataclass(frozen=True)
class GroundTruth:
    core: np.ndarray
    factors: tuple

    def entries(self, indices):
        return tucker_entries_at(self.core, *self.factors, indices)


# alpha is either a number or a callable of |Omega|
CASE_PRESETS = {
    1: dict(grid=dict(os=(0.1, 1.0, 5.0)), feature_noise=1e-5, alpha=lambda m: 10.0 / m),
    2: dict(grid=dict(feature_noise=(1e-4, 1e-3, 1e-2)), os=1.0, alpha=1.0),
    3: dict(grid=dict(extra_cols_multiple=(10, 30, 50)), os=1.0, feature_noise=1e-5, alpha=0.5),
    4: dict(grid=dict(obs_noise=(1e-4, 1e-3, 1e-2)), os=1.0, feature_noise=1e-4, alpha=5.0),
}


def manifold_dimension(dims, rank):
    """``sum_i (n_i r_i - r_i^2) + r1 r2 r3``."""
    return int(sum(n * r - r * r for n, r in zip(dims, rank)) + np.prod(rank))


def _n_obs(dims, rank, os):
    m = int(round(os * manifold_dimension(dims, rank)))
    total = int(np.prod(dims, dtype=np.int64))
    if m > total:
        raise ValueError(f"oversampling {os} asks for {m} entries of {total}")
    return max(m, 1)


def sample_omega(dims, rank, os, seed, extra=0):
    """Uniformly sample ``round(os D)`` distinct index triples.

    With ``extra > 0`` a further ``extra`` distinct triples, disjoint from the
    first set, are returned as a second array (used as a held-out set).
    """
    m = _n_obs(dims, rank, os)
    total = int(np.prod(dims, dtype=np.int64))
    extra = min(int(extra), total - m)
    rng = np.random.default_rng(seed)
    lin = rng.choice(total, size=m + extra, replace=False)
    idx = np.stack(np.unravel_index(lin, dims), axis=1).astype(np.int64)
    if extra:
        return idx[:m], idx[m:]
    return idx[:m]


def gen_lowrank(dims, rank, seed):
    """Gaussian core and Gaussian factors ``B_i``; the tensor is ``A x_i B_i``."""
    rng = np.random.default_rng(seed)
    core = rng.standard_normal(tuple(rank))
    factors = tuple(rng.standard_normal((n, r)) for n, r in zip(dims, rank))
    return GroundTruth(core, factors)


def gen_features(B, s, k_extra, seed):
    """``[B, G] + s ||B||_F E`` with Gaussian ``G`` (``k_extra`` columns) and ``E``."""
    B = np.asarray(B, dtype=float)
    rng = np.random.default_rng(seed)
    n = B.shape[0]
    F = np.hstack([B, rng.standard_normal((n, int(k_extra)))])
    if s:
        F = F + s * np.linalg.norm(B) * rng.standard_normal(F.shape)
    return F


def add_obs_noise(values, eps, seed):
    values = np.asarray(values, dtype=float)
    if eps == 0:
        return values.copy()
    rng = np.random.default_rng(seed)
    return values + eps * rng.standard_normal(values.shape)


def build_problem(spec):
    """Assemble ``(ProblemData, GroundTruth)`` from a :class:`ScenarioSpec`.

    Each random ingredient draws from its own child seed so that changing, for
    instance, the feature noise leaves the tensor and the samples unchanged.
    """
    seeds = np.random.SeedSequence(spec.seed).generate_state(3 + 3 + 1)
    truth = gen_lowrank(spec.dims, spec.rank, int(seeds[0]))
    m = _n_obs(spec.dims, spec.rank, spec.os)
    n_test = 10 * m if spec.test_size is None else int(spec.test_size)
    sampled = sample_omega(spec.dims, spec.rank, spec.os, int(seeds[1]), extra=n_test)
    train_idx, test_idx = sampled if n_test else (sampled, None)
    values = add_obs_noise(truth.entries(train_idx), spec.obs_noise, int(seeds[2]))
    train = ObservationSet(spec.dims, train_idx, values)
    test = None
    if test_idx is not None and len(test_idx):
        test = ObservationSet(spec.dims, test_idx, truth.entries(test_idx))
    feats = [
        gen_features(B, spec.feature_noise, spec.extra_cols, int(seeds[3 + k]))
        for k, B in enumerate(truth.factors)
    ]
    fb = FeatureBasis(feats, (spec.alpha,) * 3, spec.dims, len(train))
    fb.check_rank(spec.rank)
    return ProblemData(train, fb, spec.rank, test), truth


def scenario(case, **overrides):
    """Problem for one of the four simulation cases at desk scale.

    Parameters
    ----------
    case : {1, 2, 3, 4}
        1 varies the oversampling ratio, 2 the feature noise, 3 the number of
        irrelevant feature columns and 4 the observation noise.
    **overrides
        Any :class:`ScenarioSpec` field. For case 3, ``extra_cols_multiple``
        sets ``extra_cols = multiple * r1``. The case's grid variable defaults
        to the first grid value.

    Returns
    -------
    (ProblemData, GroundTruth, ScenarioSpec)
    """
    if case not in CASE_PRESETS:
        raise ValueError(f"case must be 1, 2, 3 or 4, got {case!r}")
    preset = dict(CASE_PRESETS[case])
    grid = preset.pop("grid")
    fields = {k: v for k, v in preset.items()}
    for key, values in grid.items():
        fields.setdefault(key, values[0])
    fields.update(overrides)
    base = ScenarioSpec(
        **{k: v for k, v in fields.items() if k not in ("alpha", "extra_cols_multiple")}
    )
    if "extra_cols_multiple" in fields and "extra_cols" not in overrides:
        base = replace(base, extra_cols=int(fields["extra_cols_multiple"]) * base.rank[0])
    alpha = fields.get("alpha", 1.0)
    if callable(alpha):
        alpha = alpha(_n_obs(base.dims, base.rank, base.os))
    spec = replace(base, alpha=float(alpha))
    data, truth = build_problem(spec)
    return data, truth, spec
