"""Fragment sets and the marginal-weight strategies built on top of them.

A fragment set is one sample (an image or a caption) described by a bag of
local embeddings. Fragments are kept both raw and unit-normalized, because
the ``norm`` margin strategy needs the raw lengths.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

import numpy as np
from scipy.special import softmax

from .exceptions import DimensionMismatch, InvalidGlobal, InvalidInput
from .validation import check_matrix, check_positive, uniform_weights

_ZERO_NORM = 1e-12


@dataclass(frozen=True, eq=False)
class FragmentSet:
    raw: np.ndarray
    unit: np.ndarray
    norms: np.ndarray
    global_embedding: np.ndarray
    sample_id: Any = None
    stored_global: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n_fragments(self):
        return self.unit.shape[0]

    @property
    def dim(self):
        return self.unit.shape[1]

    def __repr__(self):
        return (f"FragmentSet(sample_id={self.sample_id!r}, "
                f"n_fragments={self.n_fragments}, dim={self.dim})")


def _normalize(vec, what):
    norm = np.linalg.norm(vec)
    if not norm > _ZERO_NORM:
        raise InvalidGlobal(f"{what} has zero norm")
    return vec / norm


def ingest_set(raw_embeddings, stored_global=None, sample_id=None):
    """Build a :class:`FragmentSet` from raw ``(K, d)`` embeddings.

    The global embedding is ``stored_global`` normalized when given,
    otherwise the re-normalized mean of the unit fragments.
    """
    raw = check_matrix(raw_embeddings, name="fragment embeddings")
    norms = np.linalg.norm(raw, axis=1)
    if np.any(norms <= _ZERO_NORM):
        bad = int(np.argmin(norms))
        raise InvalidInput(f"fragment {bad} of sample {sample_id!r} has zero norm")
    unit = raw / norms[:, None]

    if stored_global is not None:
        stored = np.asarray(stored_global, dtype=np.float64)
        if stored.shape != (raw.shape[1],):
            raise DimensionMismatch(
                f"global embedding has shape {stored.shape}, expected ({raw.shape[1]},)")
        if not np.all(np.isfinite(stored)):
            raise InvalidInput("global embedding contains non-finite entries")
        glob = _normalize(stored, f"stored global of sample {sample_id!r}")
    else:
        stored = None
        glob = _normalize(unit.mean(axis=0), f"mean-pooled global of sample {sample_id!r}")

    for arr in (raw, unit, norms, glob):
        arr.flags.writeable = False
    return FragmentSet(raw=raw, unit=unit, norms=norms, global_embedding=glob,
                       sample_id=sample_id, stored_global=stored)


class MarginKind(str, Enum):
    UNI = "uni"
    INTRA = "intra"
    INTER = "inter"
    NORM = "norm"


@dataclass(frozen=True)
class MarginStrategy:
    kind: MarginKind = MarginKind.UNI
    temperature: float = 1.0

    def __post_init__(self):
        kind = self.kind if isinstance(self.kind, MarginKind) else str(self.kind).lower()
        object.__setattr__(self, "kind", MarginKind(kind))
        check_positive(self.temperature, "margin temperature")


def compute_margins(fragments, other_global=None, strategy=None):
    """Marginal weights over the fragments of one set.

    ``uni`` is uniform; ``intra`` and ``inter`` are softmaxes of the cosine
    to this set's own global and to the other modality's global
    respectively; ``norm`` is proportional to the raw fragment lengths.
    """
    strategy = strategy or MarginStrategy()
    kind = strategy.kind
    if kind is MarginKind.UNI:
        return uniform_weights(fragments.n_fragments)
    if kind is MarginKind.NORM:
        return fragments.norms / fragments.norms.sum()
    if kind is MarginKind.INTRA:
        anchor = fragments.global_embedding
    else:
        if other_global is None:
            raise InvalidInput("inter margins need the other modality's global embedding")
        anchor = np.asarray(other_global, dtype=np.float64)
        if anchor.shape != (fragments.dim,):
            raise DimensionMismatch(
                f"other global has shape {anchor.shape}, expected ({fragments.dim},)")
    return softmax(fragments.unit @ anchor / strategy.temperature)
