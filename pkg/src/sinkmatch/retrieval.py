"""Pairwise similarity over batches, recall@K evaluation and the
hardest-negative triplet loss."""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from .baselines import CamConfig, cam_similarity, pem_similarity, vse_similarity
from .exceptions import InvalidGroundTruth, InvalidInput
from .fragments import MarginStrategy
from .ot import SolverConfig, sinkhorn_similarity
from .partial import DEFAULT_TAU, partial_similarity
from .validation import check_matrix

RECALL_KS = (1, 5, 10)


class Method(str, Enum):
    OMIT = "omit"
    OMIT_NAIVE = "omit_naive"
    VSE = "vse"
    CAM = "cam"
    PEM = "pem"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        return cls(str(value).lower().replace("-", "_"))


@dataclass(frozen=True)
class MatchConfig:
    solver: SolverConfig = field(default_factory=SolverConfig)
    tau: float = DEFAULT_TAU
    margins: MarginStrategy = field(default_factory=MarginStrategy)
    cam: CamConfig = field(default_factory=CamConfig)


def pair_similarity(image, caption, method=Method.OMIT, cfg=None):
    method = Method.parse(method)
    cfg = cfg or MatchConfig()
    if method is Method.OMIT:
        return partial_similarity(image, caption, cfg.solver, cfg.tau, cfg.margins)
    if method is Method.OMIT_NAIVE:
        return sinkhorn_similarity(image, caption, cfg.solver, cfg.margins)
    if method is Method.VSE:
        return vse_similarity(image, caption)
    if method is Method.CAM:
        # caption tokens attend over image regions
        return cam_similarity(caption, image, cfg.cam)
    return pem_similarity(image, caption)


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    values: np.ndarray
    method: Method
    row_ids: list
    col_ids: list

    def __post_init__(self):
        if self.values.shape != (len(self.row_ids), len(self.col_ids)):
            raise InvalidInput(
                f"similarity shape {self.values.shape} does not match "
                f"{len(self.row_ids)} row ids and {len(self.col_ids)} column ids")

    @classmethod
    def from_array(cls, values, method=Method.OMIT, row_ids=None, col_ids=None):
        values = check_matrix(values, name="similarity matrix")
        M, N = values.shape
        return cls(values, Method.parse(method),
                   list(range(M)) if row_ids is None else list(row_ids),
                   list(range(N)) if col_ids is None else list(col_ids))


def resolve_threads(n_jobs=None):
    """Worker count: ``SINKMATCH_THREADS`` overrides ``n_jobs``; default 1."""
    env = os.environ.get("SINKMATCH_THREADS")
    if env:
        try:
            n_jobs = int(env)
        except ValueError:
            raise InvalidInput(f"SINKMATCH_THREADS must be an integer, got {env!r}") from None
    n_jobs = 1 if n_jobs is None else int(n_jobs)
    if n_jobs < 1:
        raise InvalidInput(f"thread count must be positive, got {n_jobs}")
    return n_jobs


def batch_similarity(images, captions, method=Method.OMIT, cfg=None, n_jobs=None):
    """Similarity of every (image, caption) pair as an ``M x N`` matrix.

    Rows are computed independently, on ``n_jobs`` threads when more than
    one is requested. A failing pair aborts the batch; the re-raised error
    names both sample ids.
    """
    method = Method.parse(method)
    cfg = cfg or MatchConfig()
    if not images or not captions:
        raise InvalidInput("batch_similarity needs non-empty image and caption lists")
    values = np.empty((len(images), len(captions)))

    def fill_row(m):
        for n, caption in enumerate(captions):
            try:
                values[m, n] = pair_similarity(images[m], caption, method, cfg)
            except Exception as exc:
                raise type(exc)(f"pair (image {images[m].sample_id!r}, "
                                f"caption {caption.sample_id!r}): {exc}") from exc

    n_jobs = resolve_threads(n_jobs)
    if n_jobs == 1:
        for m in range(len(images)):
            fill_row(m)
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            for future in [pool.submit(fill_row, m) for m in range(len(images))]:
                future.result()
    return SimilarityMatrix(values, method,
                            [im.sample_id for im in images], [c.sample_id for c in captions])


@dataclass(frozen=True)
class GroundTruth:
    pairs: list

    @classmethod
    def diagonal(cls, ids):
        return cls([(i, i) for i in ids])


@dataclass(frozen=True)
class RetrievalReport:
    i2t_r1: float
    i2t_r5: float
    i2t_r10: float
    t2i_r1: float
    t2i_r5: float
    t2i_r10: float
    rsum: float

    def to_dict(self):
        return asdict(self)


def _first_relevant_ranks(scores, relevant):
    """1-based rank of the best-ranked relevant item for each query row.

    Items are ordered by descending score; ties go to the lower index.
    """
    ranks = np.empty(scores.shape[0], dtype=int)
    for q, row in enumerate(scores):
        order = np.argsort(-row, kind="stable")
        hits = np.flatnonzero(np.isin(order, relevant[q]))
        ranks[q] = hits[0] + 1
    return ranks


def _recalls(ranks):
    return [100.0 * float(np.mean(ranks <= k)) for k in RECALL_KS]


def recall_report(sims, truth):
    """R@1/5/10 in both directions plus RSUM.

    A query counts as a hit at K when any of its relevant items ranks
    within the top K. Every row and every column must have at least one
    relevant item.
    """
    if not isinstance(sims, SimilarityMatrix):
        sims = SimilarityMatrix.from_array(sims)
    row_index = {rid: i for i, rid in enumerate(sims.row_ids)}
    col_index = {cid: j for j, cid in enumerate(sims.col_ids)}
    by_row = [[] for _ in sims.row_ids]
    by_col = [[] for _ in sims.col_ids]
    for image_id, caption_id in truth.pairs:
        if image_id not in row_index:
            raise InvalidGroundTruth(f"unknown image id {image_id!r}")
        if caption_id not in col_index:
            raise InvalidGroundTruth(f"unknown caption id {caption_id!r}")
        i, j = row_index[image_id], col_index[caption_id]
        by_row[i].append(j)
        by_col[j].append(i)
    for what, groups, ids in (("image", by_row, sims.row_ids), ("caption", by_col, sims.col_ids)):
        for group, qid in zip(groups, ids):
            if not group:
                raise InvalidGroundTruth(f"{what} {qid!r} has no relevant items")

    i2t = _recalls(_first_relevant_ranks(sims.values, by_row))
    t2i = _recalls(_first_relevant_ranks(sims.values.T, by_col))
    recalls = i2t + t2i
    return RetrievalReport(*recalls, rsum=sum(recalls))


@dataclass(frozen=True)
class LossConfig:
    margin: float = 0.05

    def __post_init__(self):
        if not self.margin >= 0:
            raise InvalidInput(f"margin must be non-negative, got {self.margin!r}")


def hardest_negatives(sims):
    """Indices of the hardest negative caption per image and image per caption.

    ``argmax`` returns the first maximum, so ties go to the lowest index.
    """
    S = np.array(sims.values if isinstance(sims, SimilarityMatrix) else sims, dtype=np.float64)
    masked = S.copy()
    np.fill_diagonal(masked, -np.inf)
    return masked.argmax(axis=1), masked.argmax(axis=0)


def triplet_loss(sims, cfg=None):
    """Summed hinge triplet loss against the hardest negative in each direction.

    Diagonal entries are the positive pairs.
    """
    cfg = cfg or LossConfig()
    S = check_matrix(sims.values if isinstance(sims, SimilarityMatrix) else sims,
                     name="similarity matrix")
    if S.shape[0] != S.shape[1]:
        raise InvalidInput(f"triplet loss needs a square matrix, got {S.shape}")
    if S.shape[0] < 2:
        return 0.0
    positives = np.diag(S)
    neg_caption, neg_image = hardest_negatives(S)
    idx = np.arange(S.shape[0])
    i2t = np.maximum(cfg.margin + S[idx, neg_caption] - positives, 0.0)
    t2i = np.maximum(cfg.margin + S[neg_image, idx] - positives, 0.0)
    return float(i2t.sum() + t2i.sum())
