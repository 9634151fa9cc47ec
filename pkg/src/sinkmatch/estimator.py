"""scikit-learn style wrapper around the set-matching similarities.

``fit`` stores a gallery of fragment sets; ``transform`` scores queries
against it, ``predict`` returns the best gallery index per query.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import DimensionMismatch, InvalidInput
from .fragments import FragmentSet, MarginStrategy, ingest_set
from .ot import SolverConfig
from .retrieval import MatchConfig, Method, batch_similarity, triplet_loss, LossConfig


def check_fragment_sets(X, dim=None):
    """Coerce ``X`` to a list of :class:`FragmentSet` with a common dimension.

    Items may already be fragment sets or ``(K, d)`` array-likes, which are
    ingested with their position as sample id.
    """
    if isinstance(X, FragmentSet):
        X = [X]
    sets = [x if isinstance(x, FragmentSet) else ingest_set(x, sample_id=i)
            for i, x in enumerate(X)]
    if not sets:
        raise InvalidInput("expected at least one fragment set")
    dims = {s.dim for s in sets}
    if dim is not None:
        dims.add(dim)
    if len(dims) != 1:
        raise DimensionMismatch(f"fragment sets have inconsistent dimensions {sorted(dims)}")
    return sets


class SinkhornMatcher(BaseEstimator):
    """Rank gallery fragment sets against query sets.

    Parameters
    ----------
    method : {"omit", "omit_naive", "vse", "cam", "pem"}
        Similarity measure; ``omit`` is partial (dustbin) Sinkhorn matching.
    lam, max_iter, tol, log_domain, anneal
        Sinkhorn settings.
    tau : float
        Dustbin cost scale for ``omit``.
    margins, margin_temperature
        Marginal-weight strategy.
    query_role : {"caption", "image"}
        Modality of the queries passed to ``transform``; the gallery holds
        the other one. Matters for the asymmetric measures.
    n_jobs : int or None
        Threads used to fill the similarity matrix.
    """

    def __init__(self, method="omit", lam=0.02, max_iter=3, tol=1e-6, tau=0.1,
                 margins="uni", margin_temperature=1.0, log_domain="auto", anneal=False,
                 query_role="caption", n_jobs=None):
        self.method = method
        self.lam = lam
        self.max_iter = max_iter
        self.tol = tol
        self.tau = tau
        self.margins = margins
        self.margin_temperature = margin_temperature
        self.log_domain = log_domain
        self.anneal = anneal
        self.query_role = query_role
        self.n_jobs = n_jobs

    def _match_config(self):
        solver = SolverConfig(lam=self.lam, max_iterations=self.max_iter,
                              convergence_tol=self.tol, log_domain=self.log_domain,
                              anneal=self.anneal)
        return MatchConfig(solver=solver, tau=self.tau,
                           margins=MarginStrategy(self.margins, self.margin_temperature))

    def fit(self, X, y=None):
        if self.query_role not in ("caption", "image"):
            raise InvalidInput(f"query_role must be 'caption' or 'image', got {self.query_role!r}")
        self.method_ = Method.parse(self.method)
        self.config_ = self._match_config()
        self.gallery_ = check_fragment_sets(X)
        self.n_gallery_ = len(self.gallery_)
        self.dim_ = self.gallery_[0].dim
        return self

    def transform(self, X):
        """Similarity matrix of shape ``(n_queries, n_gallery)``."""
        check_is_fitted(self, "gallery_")
        queries = check_fragment_sets(X, self.dim_)
        if self.query_role == "image":
            sims = batch_similarity(queries, self.gallery_, self.method_, self.config_, self.n_jobs)
            return sims.values
        sims = batch_similarity(self.gallery_, queries, self.method_, self.config_, self.n_jobs)
        return sims.values.T

    def fit_transform(self, X, y=None):
        return self.fit(X, y).transform(X)

    def predict(self, X):
        return np.argmax(self.transform(X), axis=1)

    def score(self, X, y):
        """Fraction of queries whose top-ranked gallery item is ``y``."""
        return float(np.mean(self.predict(X) == np.asarray(y)))

    def loss(self, X, phi=0.05):
        """Hardest-negative triplet loss of queries paired by position with the gallery."""
        return triplet_loss(self.transform(X), LossConfig(phi))
