"""Simulated annotators with hidden similarity functions.

Each oracle owns a latent distance over scenes (geometric, archetype-based,
or role-weighted geometric), answers tuple queries through a softmax choice
model, skips when nothing in the body is close enough, and occasionally
skips spuriously. A bisection routine calibrates the softmax temperature so
an oracle's repeat-consistency hits a requested target.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .acquisition import TupleQuery, TupleResponse
from .embed import SceneDataset
from .errors import CalibrationError, InvalidInputError
from .scenes import ROLE_ORDER, hungarian_assign, trajectory_cost_matrix

logger = logging.getLogger(__name__)

LATENT_KINDS = ("euclidean", "archetype", "weighted")


@dataclass(frozen=True)
class OracleProfile:
    annotator_id: str
    latent: str = "euclidean"
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0)  # per role, ROLE_ORDER
    beta: float = 5.0  # softmax temperature on latent distances
    lapse_rate: float = 0.0  # probability of answering uniformly at random
    tau: float = 1.5  # skip when min normalized latent distance exceeds this
    skip_softness: float = 0.0  # sigmoid width of the skip threshold; 0 = hard
    base_skip_rate: float = 0.02  # spurious skips independent of content
    mean_response_s: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.latent not in LATENT_KINDS:
            raise InvalidInputError(f"unknown latent kind {self.latent!r}")
        if self.beta <= 0 or self.tau <= 0:
            raise InvalidInputError("beta and tau must be positive")
        if not 0 <= self.base_skip_rate < 1:
            raise InvalidInputError("base_skip_rate must be in [0, 1)")
        if not 0 <= self.lapse_rate <= 1:
            raise InvalidInputError("lapse_rate must be in [0, 1]")
        if self.skip_softness < 0:
            raise InvalidInputError("skip_softness must be non-negative")


class LatentSpace:
    """Lazy per-role scene distance cache shared by a cohort of oracles.

    Distances are normalized by the mean total distance over a seeded pair
    sample, so tau thresholds are comparable across datasets.
    """

    def __init__(self, dataset: SceneDataset, norm_pairs: int = 200, seed: int = 0):
        self.dataset = dataset
        self._components: dict[tuple[int, int], np.ndarray] = {}
        self._norm = self._calibrate_norm(norm_pairs, seed)

    def role_components(self, i: int, j: int) -> np.ndarray:
        """Per-role optimal-assignment distances between scenes i and j."""
        if i == j:
            return np.zeros(len(ROLE_ORDER))
        key = (min(i, j), max(i, j))
        comp = self._components.get(key)
        if comp is None:
            a, b = self.dataset.scenes[key[0]], self.dataset.scenes[key[1]]
            vals = []
            for role in ROLE_ORDER:
                cost = trajectory_cost_matrix(
                    a.agents[a.role_rows(role)], b.agents[b.role_rows(role)]
                )
                vals.append(hungarian_assign(cost).cost)
            comp = np.array(vals)
            self._components[key] = comp
        return comp

    def _calibrate_norm(self, n_pairs: int, seed: int) -> float:
        n = len(self.dataset)
        if n < 2:
            return 1.0
        rng = np.random.default_rng(seed)
        total = 0.0
        for _ in range(n_pairs):
            i, j = rng.choice(n, size=2, replace=False)
            total += self.role_components(int(i), int(j)).sum()
        mean = total / n_pairs
        return mean if mean > 0 else 1.0

    def distance(self, profile: OracleProfile, id_a: str, id_b: str) -> float:
        i, j = self.dataset.index[id_a], self.dataset.index[id_b]
        comp = self.role_components(i, j)
        if profile.latent == "euclidean":
            return float(comp.sum() / self._norm)
        if profile.latent == "weighted":
            w = np.asarray(profile.weights)
            return float((w * comp).sum() / (self._norm * w.mean()))
        # Archetype latent: category mismatch dominates, geometry tie-breaks.
        arch_a = self.dataset.scenes[i].meta.get("archetype")
        arch_b = self.dataset.scenes[j].meta.get("archetype")
        base = 0.0 if arch_a == arch_b else 1.0
        return float(base + 0.3 * comp.sum() / self._norm)


def _choice_probs(dists: np.ndarray, beta: float, lapse_rate: float = 0.0) -> np.ndarray:
    """Softmax over negative distances mixed with a uniform attention-lapse
    component. The lapse keeps noise independent of how close the body
    samples are, mimicking inattentive rather than merely indifferent
    annotators."""
    logits = -np.asarray(dists) / beta
    logits = logits - logits.max()
    p = np.exp(logits)
    p = p / p.sum()
    return (1.0 - lapse_rate) * p + lapse_rate / len(p)


def _response_stats(profile: OracleProfile, space: LatentSpace, query: TupleQuery):
    """Skip probability and conditional choice distribution for a query.

    The content skip is a (possibly soft) threshold on the best body
    distance: annotators near their indifference point skip inconsistently,
    which is a major source of repeat disagreement in its own right.
    """
    dists = np.array([space.distance(profile, query.head, b) for b in query.body])
    margin = dists.min() - profile.tau
    if profile.skip_softness > 0:
        p_content = float(1.0 / (1.0 + np.exp(-margin / profile.skip_softness)))
    else:
        p_content = 1.0 if margin > 0 else 0.0
    p_skip = profile.base_skip_rate + (1.0 - profile.base_skip_rate) * p_content
    return p_skip, _choice_probs(dists, profile.beta, profile.lapse_rate)


def respond(
    profile: OracleProfile,
    space: LatentSpace,
    query: TupleQuery,
    rng: np.random.Generator,
) -> TupleResponse:
    """Answer one tuple query; log-normal response latency around the
    profile's mean."""
    p_skip, probs = _response_stats(profile, space, query)
    outcome = None
    if rng.uniform() >= p_skip:
        outcome = int(rng.choice(len(query.body), p=probs))
    # sigma=0.4 log-normal; mu set so the mean matches mean_response_s
    sigma = 0.4
    mu = np.log(profile.mean_response_s) - sigma**2 / 2
    response_ms = float(rng.lognormal(mu, sigma) * 1000.0)
    return TupleResponse(
        query_id=query.query_id,
        outcome=outcome,
        response_ms=response_ms,
        annotator_id=profile.annotator_id,
    )


def expected_consistency(
    profile: OracleProfile,
    space: LatentSpace,
    queries: list[TupleQuery],
) -> float:
    """Exact probability of answering a repeated query identically (skip-skip
    counts as agreement), averaged over the given queries."""
    if not queries:
        raise InvalidInputError("need at least one probe query")
    agreements = []
    for q in queries:
        p_skip, probs = _response_stats(profile, space, q)
        agreements.append(p_skip**2 + (1 - p_skip) ** 2 * float((probs**2).sum()))
    return float(np.mean(agreements))


def _probe_queries(space: LatentSpace, k: int, n: int, seed: int) -> list[TupleQuery]:
    from .acquisition import compose_random

    rng = np.random.default_rng(seed)
    return [compose_random(space.dataset, k=k, rng=rng) for _ in range(n)]


def calibrate_consistency(
    profile: OracleProfile,
    space: LatentSpace,
    target: float,
    tol: float = 0.02,
    k: int = 9,
    n_probes: int = 60,
    max_steps: int = 60,
    param: str = "beta",
) -> OracleProfile:
    """Bisection on a noise parameter so expected repeat-consistency hits
    target +- tol.

    param="beta": softmax temperature (geometric bisection over decades).
    param="lapse": uniform-lapse probability (linear bisection on [0, 1]).
    Consistency decreases monotonically in either parameter. Raises
    CalibrationError with the achievable maximum when the target exceeds
    what spurious skips permit.
    """
    if not 0 < target < 1:
        raise InvalidInputError("target consistency must be in (0, 1)")
    if param not in ("beta", "lapse"):
        raise InvalidInputError(f"unknown calibration parameter {param!r}")
    probes = _probe_queries(space, k, n_probes, profile.seed)

    if param == "beta":
        lo, hi = 1e-4, 1e4
        mid = lambda a, b: float(np.sqrt(a * b))
    else:
        lo, hi = 0.0, 1.0
        mid = lambda a, b: (a + b) / 2.0
    at = lambda v: replace(profile, **{("beta" if param == "beta" else "lapse_rate"): v})

    c_max = expected_consistency(at(lo), space, probes)
    c_min = expected_consistency(at(hi), space, probes)
    if target > c_max + tol:
        raise CalibrationError(
            f"target {target} unreachable (max {c_max:.3f})", achievable_max=c_max
        )
    if target < c_min - tol:
        raise CalibrationError(
            f"target {target} below achievable floor {c_min:.3f}",
            achievable_max=c_max,
        )
    value = None
    for _ in range(max_steps):
        value = mid(lo, hi)
        c = expected_consistency(at(value), space, probes)
        if abs(c - target) <= tol:
            return at(value)
        if c > target:
            lo = value
        else:
            hi = value
    logger.warning("calibration hit step limit; returning closest value")
    return at(value)


@dataclass(frozen=True)
class CohortConfig:
    n: int = 18
    consistency_mean: float = 0.498
    consistency_sd: float = 0.11
    consistency_range: tuple[float, float] = (0.25, 0.75)
    seed: int = 0
    # Sharp core choice with calibrated attention lapses: repeat noise is
    # independent of how tightly packed a query's body is.
    choice_beta: float = 0.02
    calibrate_param: str = "lapse"
    tau: float = 0.7
    skip_softness: float = 0.08
    base_skip_rate: float = 0.05


def make_cohort(
    space: LatentSpace, cfg: CohortConfig | None = None, calibrate: bool = True
) -> list[OracleProfile]:
    """A cohort of oracles in three latent clusters (geometric, archetype,
    role-weighted with shared weights), each calibrated to an individual
    consistency drawn from the cohort distribution."""
    cfg = cfg or CohortConfig()
    rng = np.random.default_rng(cfg.seed)
    lo, hi = cfg.consistency_range
    targets = np.clip(
        rng.normal(cfg.consistency_mean, cfg.consistency_sd, size=cfg.n), lo, hi
    )
    cluster_specs = [
        ("euclidean", (1.0, 1.0, 1.0)),
        ("archetype", (1.0, 1.0, 1.0)),
        ("weighted", (3.0, 1.0, 0.5)),  # possession-movement-focused cluster
    ]
    profiles = []
    for i in range(cfg.n):
        latent, weights = cluster_specs[i % len(cluster_specs)]
        p = OracleProfile(
            annotator_id=f"oracle-{i:02d}",
            latent=latent,
            weights=weights,
            beta=cfg.choice_beta,
            tau=cfg.tau,
            skip_softness=cfg.skip_softness,
            base_skip_rate=cfg.base_skip_rate,
            seed=cfg.seed * 1000 + i,
        )
        if calibrate:
            try:
                p = calibrate_consistency(
                    p, space, float(targets[i]), param=cfg.calibrate_param
                )
            except CalibrationError as e:
                # Some latents cap out below the drawn target (genuinely
                # ambiguous queries); calibrate to the achievable ceiling.
                clamped = max(lo, e.achievable_max - 0.03)
                logger.warning(
                    "oracle %s: target %.3f unreachable, using %.3f",
                    p.annotator_id, targets[i], clamped,
                )
                p = calibrate_consistency(
                    p, space, clamped, param=cfg.calibrate_param
                )
        profiles.append(p)
    return profiles
