"""Study metrics: self-consistency, inter-rater reliability, effectiveness
ratios, held-out triplet accuracy, and annotator clustering."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform

from .acquisition import TupleQuery, TupleResponse, decompose_response
from .embed import EmbeddingModel, SceneDataset, embed_all
from .errors import InvalidInputError, NotReadyError

SKIP = "__skip__"  # sentinel outcome label for agreement counting


def _outcome_label(query: TupleQuery, response: TupleResponse) -> str:
    """Chosen scene id, or the skip sentinel. Comparing ids (not on-screen
    positions) makes agreement invariant to body shuffling."""
    response.check_against(query)
    if response.is_skip:
        return SKIP
    return query.body[response.outcome]


def consistency(pairs: list[tuple[str, str]]) -> float:
    """Self-agreement over repeated queries: fraction of (first, second)
    outcome labels that match; skip-skip counts as agreement."""
    if not pairs:
        raise NotReadyError("no repeated query pairs to compare")
    return sum(a == b for a, b in pairs) / len(pairs)


def reliability(outcomes_i: dict[str, str], outcomes_j: dict[str, str]) -> float:
    """Agreement fraction between two annotators over their shared fixed
    queries, keyed by shared slot. Skips compared as a distinct outcome."""
    shared = sorted(set(outcomes_i) & set(outcomes_j))
    if not shared:
        raise InvalidInputError("annotators share no queries")
    return sum(outcomes_i[s] == outcomes_j[s] for s in shared) / len(shared)


def effectiveness(
    accuracy: float,
    response_time_s: float,
    compute_time_s: float,
    n_skips: int,
) -> tuple[float, float, float]:
    """(accuracy per response second, per response-plus-compute second,
    per skipped annotation with a max(1, skips) guard)."""
    if response_time_s <= 0:
        raise InvalidInputError("response time must be positive")
    if compute_time_s < 0 or n_skips < 0:
        raise InvalidInputError("compute time and skip count must be non-negative")
    e = accuracy / response_time_s
    te = accuracy / (response_time_s + compute_time_s)
    le = accuracy / max(1, n_skips)
    return e, te, le


def triplet_accuracy(
    model: EmbeddingModel,
    dataset: SceneDataset,
    test_pairs: list[tuple[TupleQuery, TupleResponse]],
) -> float:
    """Fraction of held-out triplets whose order the embedding reproduces;
    exact ties count as errors."""
    triplets = []
    for query, response in test_pairs:
        if response.is_skip:
            continue
        triplets.extend(decompose_response(query, response).triplets)
    if not triplets:
        raise NotReadyError("no annotated test triplets")
    emb = embed_all(model, dataset)
    correct = 0
    for a, p, n in triplets:
        fa, fp, fn = (emb[dataset.index[s]] for s in (a, p, n))
        correct += np.linalg.norm(fa - fp) < np.linalg.norm(fa - fn)
    return correct / len(triplets)


def cluster_annotators(R: np.ndarray, threshold: float = 0.37, labels=None):
    """Complete-linkage agglomeration on distance 1 - R, cut at threshold.

    Returns (linkage_matrix, flat_cluster_labels, nested dendrogram dict).
    """
    R = np.asarray(R, dtype=np.float64)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise InvalidInputError("R must be square")
    if not np.allclose(R, R.T, atol=1e-9):
        raise InvalidInputError("R must be symmetric")
    n = R.shape[0]
    labels = list(labels) if labels is not None else [str(i) for i in range(n)]
    if n == 1:
        return np.zeros((0, 4)), np.array([1]), {"name": labels[0]}
    D = 1.0 - R
    np.fill_diagonal(D, 0.0)
    D = np.maximum(D, 0.0)
    Z = linkage(squareform(D, checks=False), method="complete")
    flat = fcluster(Z, t=threshold, criterion="distance")

    nodes = [{"name": labels[i]} for i in range(n)]
    for row in Z:
        left, right = nodes[int(row[0])], nodes[int(row[1])]
        nodes.append({"height": float(row[2]), "children": [left, right]})
    return Z, flat, nodes[-1]


@dataclass
class MetricsReport:
    """Aggregated study outcomes across a cohort of annotators."""

    consistencies: dict[str, float]
    reliability_labels: list[str]
    reliability_matrix: np.ndarray
    final_accuracy: dict[str, dict[str, float]]  # annotator -> strategy -> acc
    accuracy_curves: dict[str, dict[str, list[tuple[int, float]]]]
    effectiveness: dict[str, dict[str, tuple[float, float, float]]]
    skip_rates: dict[str, dict[str, float]]  # annotator -> strategy -> rate
    non_skip_counts: dict[str, dict[str, int]]  # annotator -> phase -> count
    dendrogram: dict = field(default_factory=dict)
    flat_clusters: list[int] = field(default_factory=list)

    def validate(self) -> None:
        for c in self.consistencies.values():
            if not 0 <= c <= 1:
                raise InvalidInputError("consistency out of [0, 1]")
        R = self.reliability_matrix
        if R.size and (np.any(R < 0) or np.any(R > 1)):
            raise InvalidInputError("reliability out of [0, 1]")
        for per in self.skip_rates.values():
            for r in per.values():
                if not 0 <= r <= 1:
                    raise InvalidInputError("skip rate out of [0, 1]")

    def mean_final_accuracy(self, strategy: str) -> float:
        vals = [
            per[strategy] for per in self.final_accuracy.values() if strategy in per
        ]
        if not vals:
            raise NotReadyError(f"no accuracies recorded for strategy {strategy!r}")
        return float(np.mean(vals))

    def to_json(self) -> str:
        return json.dumps(
            {
                "consistencies": self.consistencies,
                "reliability_labels": self.reliability_labels,
                "reliability_matrix": self.reliability_matrix.tolist(),
                "final_accuracy": self.final_accuracy,
                "accuracy_curves": {
                    a: {s: [[int(i), float(v)] for i, v in curve] for s, curve in per.items()}
                    for a, per in self.accuracy_curves.items()
                },
                "effectiveness": {
                    a: {s: list(v) for s, v in per.items()}
                    for a, per in self.effectiveness.items()
                },
                "skip_rates": self.skip_rates,
                "non_skip_counts": self.non_skip_counts,
                "dendrogram": self.dendrogram,
                "flat_clusters": [int(c) for c in self.flat_clusters],
            },
            sort_keys=True,
        )

    def to_csv(self) -> str:
        """Flat long-format table: one row per (annotator, strategy, step)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["annotator", "strategy", "step", "accuracy"])
        for a in sorted(self.accuracy_curves):
            for s in sorted(self.accuracy_curves[a]):
                for step, acc in self.accuracy_curves[a][s]:
                    w.writerow([a, s, step, f"{acc:.6f}"])
        for a in sorted(self.final_accuracy):
            for s in sorted(self.final_accuracy[a]):
                w.writerow([a, s, "final", f"{self.final_accuracy[a][s]:.6f}"])
        return buf.getvalue()
