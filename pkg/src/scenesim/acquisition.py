"""Query composition strategies and response decomposition.

Five ways to build a head-plus-body tuple query: uniform random, nearest
neighbors, their mix, an uncertainty-seeking NN heuristic, and mutual-
information maximization over candidate bodies (Monte Carlo entropy
estimates under the bootstrap distance posterior).
"""

from __future__ import annotations

import time
import uuid
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtri

from .embed import EmbeddingModel, SceneDataset, TripletSet, embed_all, knn
from .errors import InvalidInputError, PosteriorNotReadyError, StaleModelError
from .ordinal import OrdinalPosterior

STRATEGIES = ("random", "nn", "random_nn", "active_nn", "infotuple")

DEFAULT_TUPLE_SIZE = 9  # one head plus eight body samples


@dataclass(frozen=True)
class TupleQuery:
    head: str
    body: tuple[str, ...]
    strategy: str
    model_version: int = 0
    created_at: float = field(default_factory=time.time)
    query_id: str = field(default_factory=lambda: uuid.uuid4().hex)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InvalidInputError(f"unknown strategy {self.strategy!r}")
        if self.head in self.body:
            raise InvalidInputError("head must not appear in its own body")
        if len(set(self.body)) != len(self.body):
            raise InvalidInputError("body ids must be pairwise distinct")
        if len(self.body) < 1:
            raise InvalidInputError("body must be non-empty")


@dataclass(frozen=True)
class TupleResponse:
    query_id: str
    outcome: int | None  # chosen body index, or None for skip
    response_ms: float
    annotator_id: str = ""

    def __post_init__(self):
        if self.response_ms <= 0:
            raise InvalidInputError("response_ms must be positive")

    @property
    def is_skip(self) -> bool:
        return self.outcome is None

    def check_against(self, query: TupleQuery) -> None:
        if self.outcome is not None and not 0 <= self.outcome < len(query.body):
            raise InvalidInputError(
                f"chosen index {self.outcome} out of range for body of {len(query.body)}"
            )


@dataclass(frozen=True)
class AcquisitionConfig:
    n_candidates: int = 100
    n_permutations: int = 10
    mc_passes: int = 10
    ranking_subsample: float = 0.1  # only used by the full-ranking response model
    response_model: str = "top1"


def compose_random(
    dataset: SceneDataset,
    k: int = DEFAULT_TUPLE_SIZE,
    rng: np.random.Generator | None = None,
    head: str | None = None,
    model_version: int = 0,
) -> TupleQuery:
    """Uniform head (if absent) and uniform body without replacement."""
    rng = rng if rng is not None else np.random.default_rng()
    if len(dataset) < k:
        raise InvalidInputError(f"dataset of {len(dataset)} too small for tuple size {k}")
    if head is None:
        head = dataset.ids[int(rng.integers(len(dataset)))]
    others = [i for i in dataset.ids if i != head]
    body = rng.choice(len(others), size=k - 1, replace=False)
    return TupleQuery(
        head=head,
        body=tuple(others[int(i)] for i in body),
        strategy="random",
        model_version=model_version,
    )


def compose_nn(
    model: EmbeddingModel,
    dataset: SceneDataset,
    k: int = DEFAULT_TUPLE_SIZE,
    head: str | None = None,
    rng: np.random.Generator | None = None,
    expected_version: int | None = None,
) -> TupleQuery:
    """Body = the head's k-1 nearest neighbors in the current embedding."""
    if expected_version is not None and expected_version != model.version:
        raise StaleModelError(
            f"embeddings computed for version {expected_version}, model is at {model.version}"
        )
    if len(dataset) < k:
        raise InvalidInputError(f"dataset of {len(dataset)} too small for tuple size {k}")
    if head is None:
        rng = rng if rng is not None else np.random.default_rng()
        head = dataset.ids[int(rng.integers(len(dataset)))]
    body = knn(model, dataset, head, k - 1)
    return TupleQuery(head=head, body=tuple(body), strategy="nn", model_version=model.version)


def compose_mixed(
    model: EmbeddingModel,
    dataset: SceneDataset,
    k: int = DEFAULT_TUPLE_SIZE,
    head: str | None = None,
    rng: np.random.Generator | None = None,
) -> TupleQuery:
    """Half nearest neighbors, half uniform random non-neighbors, shuffled."""
    rng = rng if rng is not None else np.random.default_rng()
    if len(dataset) < k:
        raise InvalidInputError(f"dataset of {len(dataset)} too small for tuple size {k}")
    if head is None:
        head = dataset.ids[int(rng.integers(len(dataset)))]
    n_nn = -(-(k - 1) // 2)  # ceil
    n_rand = (k - 1) // 2
    nn_part = knn(model, dataset, head, n_nn)
    excluded = set(nn_part) | {head}
    pool = [i for i in dataset.ids if i not in excluded]
    if len(pool) < n_rand:
        raise InvalidInputError("dataset too small for the random half")
    rand_part = [pool[int(i)] for i in rng.choice(len(pool), size=n_rand, replace=False)]
    body = list(nn_part) + rand_part
    rng.shuffle(body)
    return TupleQuery(
        head=head, body=tuple(body), strategy="random_nn", model_version=model.version
    )


def _log_kernel(d: np.ndarray, alpha: float) -> np.ndarray:
    return -(alpha + 1.0) / 2.0 * np.log1p(np.square(d) / alpha)


def choice_probabilities(distances: np.ndarray, alpha: float) -> np.ndarray:
    """Top-1 choice model: p(select i) proportional to the Student-t kernel
    of the head-body distance. distances may be (..., k-1)."""
    logits = _log_kernel(np.asarray(distances, dtype=np.float64), alpha)
    logits = logits - logits.max(axis=-1, keepdims=True)
    p = np.exp(logits)
    return p / p.sum(axis=-1, keepdims=True)


def _entropy(p: np.ndarray) -> np.ndarray:
    q = np.where(p > 0, p, 1.0)
    return -(p * np.log(q)).sum(axis=-1)


def response_entropy(distances: np.ndarray, alpha: float) -> float:
    return float(_entropy(choice_probabilities(distances, alpha)))


def active_nn_select(
    model: EmbeddingModel,
    dataset: SceneDataset,
    posterior: OrdinalPosterior,
    k: int = DEFAULT_TUPLE_SIZE,
    exclude_heads: set[str] | None = None,
) -> TupleQuery:
    """Uncertainty-seeking NN heuristic: the head whose NN body has the
    highest response entropy under the posterior's mean distances.

    exclude_heads removes heads already skipped by the annotator, so the
    deterministic selector cannot re-issue an unanswerable query."""
    if len(dataset) < k:
        raise InvalidInputError(f"dataset of {len(dataset)} too small for tuple size {k}")
    if posterior.n_objects != len(dataset):
        raise InvalidInputError("posterior size does not match dataset")
    exclude = exclude_heads or set()
    heads = [h for h in dataset.ids if h not in exclude]
    if not heads:
        heads = dataset.ids  # everything skipped: start over rather than stall
    best = None
    for head in heads:
        body = knn(model, dataset, head, k - 1)
        hi = dataset.index[head]
        dists = np.array([posterior.dist_means[hi, dataset.index[b]] for b in body])
        ent = response_entropy(dists, posterior.alpha)
        if best is None or ent > best[0] + 1e-15:
            best = (ent, head, tuple(body))
    _, head, body = best
    return TupleQuery(
        head=head, body=body, strategy="active_nn", model_version=model.version
    )


def infotuple_mi(
    means: np.ndarray,
    variances: np.ndarray,
    alpha: float,
    mc_passes: int,
    rng: np.random.Generator,
) -> float:
    """Mutual information of the response with the embedding, for one body.

    means/variances: per head-body pair Gaussian distance statistics.
    First term: entropy of the Monte-Carlo-averaged response distribution;
    second: average per-sample response entropy. Distances are normalized
    to unit mean before estimation, so the estimate is invariant to a
    global rescaling of all means and standard deviations.

    Sampling is stratified per pair (Latin hypercube over the Gaussian
    inverse CDF) with draws clamped at zero.
    """
    if mc_passes < 1:
        raise InvalidInputError("mc_passes must be >= 1")
    means = np.asarray(means, dtype=np.float64)
    variances = np.asarray(variances, dtype=np.float64)
    scale = means.mean()
    if scale > 0:
        means = means / scale
        variances = variances / scale**2
    stds = np.sqrt(variances)
    kb = means.shape[0]
    u = (np.stack([rng.permutation(mc_passes) for _ in range(kb)], axis=1)
         + rng.uniform(size=(mc_passes, kb))) / mc_passes
    d = np.maximum(means[None, :] + stds[None, :] * ndtri(u), 0.0)
    p = choice_probabilities(d, alpha)  # (mc_passes, k-1)
    mi = float(_entropy(p.mean(axis=0)) - _entropy(p).mean())
    if mi < -1e-9:
        raise AssertionError(f"MI estimate {mi} below the MC noise bound")
    return max(mi, 0.0)


def infotuple_mi_discrete(
    values: np.ndarray,
    probs: np.ndarray,
    alpha: float,
    mc_passes: int,
) -> float:
    """MI estimate for finite-support distance beliefs, with systematic
    sample allocation over the joint support (largest-remainder counts).

    values/probs have shape (k-1, s): per pair, s support points.
    """
    if mc_passes < 1:
        raise InvalidInputError("mc_passes must be >= 1")
    values = np.asarray(values, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    kb, s = values.shape
    scale = (probs * values).sum(axis=1).mean()
    if scale > 0:
        values = values / scale
    # Joint support: all combinations of per-pair support points.
    grids = np.meshgrid(*[np.arange(s)] * kb, indexing="ij")
    combos = np.stack([g.ravel() for g in grids], axis=1)  # (s^kb, kb)
    joint_p = np.prod(probs[np.arange(kb)[None, :], combos], axis=1)
    raw = joint_p * mc_passes
    counts = np.floor(raw).astype(int)
    remainder = mc_passes - counts.sum()
    if remainder > 0:
        order = np.argsort(-(raw - counts))
        counts[order[:remainder]] += 1
    weights = counts / mc_passes
    d = values[np.arange(kb)[None, :], combos]
    p = choice_probabilities(d, alpha)
    mean_p = (weights[:, None] * p).sum(axis=0)
    mi = float(_entropy(mean_p) - (weights * _entropy(p)).sum())
    return max(mi, 0.0)


def infotuple_select(
    model: EmbeddingModel,
    dataset: SceneDataset,
    posterior: OrdinalPosterior,
    k: int = DEFAULT_TUPLE_SIZE,
    cfg: AcquisitionConfig | None = None,
    cursor: int = 0,
    rng: np.random.Generator | None = None,
) -> TupleQuery:
    """Adapted InfoTuple: round-robin head, candidate pool from the head's
    embedding neighborhood, MI-maximizing body among random permutations."""
    cfg = cfg or AcquisitionConfig()
    rng = rng if rng is not None else np.random.default_rng()
    if cfg.response_model != "top1":
        raise NotImplementedError(
            "only the top-1 response model is implemented; ranking_subsample "
            "applies to the full-ranking model"
        )
    if posterior.dist_means is None or posterior.dist_vars is None:
        raise PosteriorNotReadyError("posterior has no distance statistics")
    if posterior.n_objects != len(dataset):
        raise InvalidInputError("posterior size does not match dataset")
    if len(dataset) < k:
        raise InvalidInputError(f"dataset of {len(dataset)} too small for tuple size {k}")

    head = dataset.ids[cursor % len(dataset)]
    pool = knn(model, dataset, head, min(cfg.n_candidates, len(dataset) - 1))
    if len(pool) < k - 1:
        raise InvalidInputError("candidate pool smaller than body size")
    hi = dataset.index[head]
    best_mi, best_body = -1.0, None
    for _ in range(cfg.n_permutations):
        pick = rng.choice(len(pool), size=k - 1, replace=False)
        body = tuple(pool[int(i)] for i in pick)
        cols = [dataset.index[b] for b in body]
        mi = infotuple_mi(
            posterior.dist_means[hi, cols],
            posterior.dist_vars[hi, cols],
            posterior.alpha,
            cfg.mc_passes,
            rng,
        )
        if mi > best_mi + 1e-12:
            best_mi, best_body = mi, body
    return TupleQuery(
        head=head, body=best_body, strategy="infotuple", model_version=model.version
    )


def decompose_response(query: TupleQuery, response: TupleResponse) -> TripletSet:
    """Chosen body element becomes the positive against every other body
    element; skips decompose to nothing."""
    response.check_against(query)
    if response.is_skip:
        return TripletSet(())
    chosen = query.body[response.outcome]
    triplets = tuple(
        (query.head, chosen, other) for other in query.body if other != chosen
    )
    return TripletSet(triplets)
