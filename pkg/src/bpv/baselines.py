"""Classical hashing baselines over real-valued document vectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codes import pack_bits
from .errors import DegenerateData


@dataclass
class RandomHyperplaneHasher:
    """Locality-sensitive hashing with random hyperplanes.

    Column i of ``projection`` is the normal of hyperplane i, drawn
    i.i.d. standard normal. Bit i is 1 when the projection onto that
    normal is >= 0, so two vectors collide on a bit with probability
    1 - angle(u, v) / pi.
    """

    projection: np.ndarray  # (dim, bits) float32

    @classmethod
    def create(cls, dim: int, bits: int, seed: int = 0) -> "RandomHyperplaneHasher":
        rng = np.random.default_rng(seed)
        projection = rng.standard_normal((dim, bits)).astype(np.float32)
        return cls(projection=projection)

    @property
    def code_bits(self) -> int:
        return self.projection.shape[1]

    def hash(self, vectors: np.ndarray) -> np.ndarray:
        """Packed codes for each row of ``vectors``."""
        vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
        if vectors.shape[1] != self.projection.shape[0]:
            raise DegenerateData(
                f"vectors have dim {vectors.shape[1]}, hasher expects "
                f"{self.projection.shape[0]}"
            )
        bits = (vectors @ self.projection.astype(np.float64) >= 0).astype(np.uint8)
        return pack_bits(bits)


def rhp_hash(vectors: np.ndarray, bits: int, seed: int = 0) -> tuple[RandomHyperplaneHasher, np.ndarray]:
    """Draw a fresh hasher and hash the vectors in one call."""
    hasher = RandomHyperplaneHasher.create(np.asarray(vectors).shape[1], bits, seed)
    return hasher, hasher.hash(vectors)


def pca_top_c(centered: np.ndarray, c: int) -> np.ndarray:
    """Top-c principal directions of already-centered data.

    Returns a (dim, c) matrix with orthonormal columns ordered by
    decreasing singular value. Column signs are fixed so each column's
    largest-magnitude entry is positive.

    Raises:
        DegenerateData: if the data rank is below c.
    """
    centered = np.asarray(centered, dtype=np.float64)
    if centered.ndim != 2:
        raise ValueError("expected a 2-D data matrix")
    n, dim = centered.shape
    if c < 1 or c > dim:
        raise DegenerateData(f"cannot extract {c} components from dim {dim}")
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    tol = s[0] * max(n, dim) * np.finfo(np.float64).eps if s.size else 0.0
    rank = int(np.sum(s > tol))
    if rank < c:
        raise DegenerateData(
            f"data rank {rank} is below the requested {c} components; "
            "reduce the code size"
        )
    basis = vt[:c].T.copy()
    flip = basis[np.abs(basis).argmax(axis=0), np.arange(c)] < 0
    basis[:, flip] *= -1.0
    return basis


@dataclass
class ItqModel:
    """Iterative quantization: PCA projection plus a learned rotation."""

    mean: np.ndarray  # (dim,) float64
    basis: np.ndarray  # (dim, c) float64
    rotation: np.ndarray  # (c, c) float64
    quantization_losses: list[float] = field(default_factory=list)

    @property
    def code_bits(self) -> int:
        return self.basis.shape[1]

    def hash(self, vectors: np.ndarray) -> np.ndarray:
        vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
        z = (vectors - self.mean) @ self.basis @ self.rotation
        bits = (z >= 0).astype(np.uint8)
        return pack_bits(bits)


def itq_fit(vectors: np.ndarray, c: int, iterations: int = 50) -> ItqModel:
    """Fit ITQ codes: center, project to the top-c PCA subspace, then
    alternate binarization and orthogonal Procrustes rotation updates.

    The rotation starts at the identity, so ``iterations = 0`` reduces to
    PCA plus sign thresholding, and the whole fit is deterministic. The
    recorded quantization loss ||B - V R||_F is nonincreasing across
    iterations: the Procrustes step is optimal for the previous B, and
    re-binarizing is optimal for the new rotation.
    """
    if iterations < 0:
        raise ValueError(f"iterations must be >= 0, got {iterations}")
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("expected a 2-D data matrix")
    if x.shape[0] <= c:
        raise DegenerateData(
            f"need more than {c} training vectors to fit {c} bits, got {x.shape[0]}"
        )
    mean = x.mean(axis=0)
    centered = x - mean
    basis = pca_top_c(centered, c)
    v = centered @ basis
    rotation = np.eye(c)
    losses: list[float] = []
    for _ in range(iterations):
        z = v @ rotation
        b = np.where(z >= 0, 1.0, -1.0)
        losses.append(float(np.linalg.norm(b - z)))
        u, _, wt = np.linalg.svd(v.T @ b)
        rotation = u @ wt
    return ItqModel(mean=mean, basis=basis, rotation=rotation, quantization_losses=losses)


def save_baseline(path: str, model) -> None:
    """Write a baseline hasher in the shared model container format."""
    from .models import ITQ, KIND_TAGS, RHP, _MAGIC, _write_matrix, _write_u32, _write_vocab_block

    if isinstance(model, RandomHyperplaneHasher):
        kind, dim, bits = RHP, model.projection.shape[0], model.projection.shape[1]
        matrices = [model.projection]
    elif isinstance(model, ItqModel):
        kind, dim, bits = ITQ, model.mean.shape[0], model.code_bits
        matrices = [model.mean.reshape(1, -1), model.basis, model.rotation]
    else:
        raise TypeError(f"not a baseline model: {type(model).__name__}")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(bytes([KIND_TAGS[kind]]))
        for value in (0, dim, bits, 0, 0, 0):
            _write_u32(fh, value)
        _write_vocab_block(fh, None)
        for mat in matrices:
            _write_matrix(fh, mat)
