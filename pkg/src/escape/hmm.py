"""Per-clip Gaussian HMMs and the cross log-likelihood similarity matrix.

One diagonal-covariance Gaussian HMM is trained per clip by Baum-Welch
EM; the N x N matrix of every sequence's forward log-likelihood under
every clip's model is the feature matrix for the speaker classifier.
All recursions run in log space.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dsp import MfccMatrix
from .errors import HmmError

DEFAULT_N_STATES = 5
DEFAULT_MAX_ITER = 50
DEFAULT_TOL = 1e-4
# Additive floor on diagonal emission variances; keeps every log-density
# finite even for constant sequences. Matches the common toolkit default.
DEFAULT_VAR_FLOOR = 1e-3


@dataclass
class HmmModel:
    initial_probs: np.ndarray  # (n,)
    transition_matrix: np.ndarray  # (n, n), row-stochastic
    means: np.ndarray  # (n, d)
    variances: np.ndarray  # (n, d), diagonal covariances
    train_log_likelihoods: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_states(self) -> int:
        return self.means.shape[0]

    @property
    def n_dims(self) -> int:
        return self.means.shape[1]

    def validate(self, var_floor: float = DEFAULT_VAR_FLOOR, atol: float = 1e-9) -> None:
        if not np.isfinite(self.initial_probs).all() or not np.isfinite(self.transition_matrix).all():
            raise HmmError("non-finite probabilities")
        if not np.isfinite(self.means).all() or not np.isfinite(self.variances).all():
            raise HmmError("non-finite emission parameters")
        if abs(self.initial_probs.sum() - 1.0) > atol:
            raise HmmError(f"initial probabilities sum to {self.initial_probs.sum()}")
        row_sums = self.transition_matrix.sum(axis=1)
        if np.abs(row_sums - 1.0).max() > atol:
            raise HmmError(f"transition rows sum to {row_sums}")
        if (self.variances < var_floor - atol).any():
            raise HmmError("variance below floor")

    def reordered(self, permutation: Sequence[int]) -> "HmmModel":
        """The same distribution with states relabeled by `permutation`."""
        perm = np.asarray(permutation)
        return HmmModel(
            initial_probs=self.initial_probs[perm],
            transition_matrix=self.transition_matrix[np.ix_(perm, perm)],
            means=self.means[perm],
            variances=self.variances[perm],
        )


@dataclass
class SimilarityMatrix:
    """scores[i, j] = log-likelihood of clip i's sequence under clip j's model."""

    clip_ids: tuple[str, ...]
    scores: np.ndarray

    def index_of(self, clip_id: str) -> int:
        try:
            return self.clip_ids.index(clip_id)
        except ValueError:
            raise HmmError(f"clip id {clip_id!r} not in similarity matrix") from None

    def write_csv(self, path) -> None:
        """Audit export with a header row and a leading id column."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("clip_id," + ",".join(self.clip_ids) + "\n")
            for cid, row in zip(self.clip_ids, self.scores):
                fh.write(cid + "," + ",".join(f"{v:.10g}" for v in row) + "\n")


def _log_emissions(frames: np.ndarray, means: np.ndarray, variances: np.ndarray) -> np.ndarray:
    """Per-frame diagonal-Gaussian log densities, shape (T, n)."""
    const = -0.5 * np.log(2.0 * np.pi * variances).sum(axis=1)
    inv_var = 1.0 / variances
    quad = (
        (frames**2) @ inv_var.T
        - 2.0 * frames @ (means * inv_var).T
        + (means**2 * inv_var).sum(axis=1)
    )
    return const - 0.5 * quad


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = a.max(axis=axis, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.exp(a - m_safe).sum(axis=axis)) + np.squeeze(m_safe, axis=axis)
    return np.where(np.isfinite(np.squeeze(m, axis=axis)), out, -np.inf)


def _forward(log_initial: np.ndarray, log_trans: np.ndarray, log_emit: np.ndarray) -> tuple[np.ndarray, float]:
    """Forward recursion; returns (log_alpha, total log-likelihood)."""
    T = log_emit.shape[0]
    log_alpha = np.empty_like(log_emit)
    log_alpha[0] = log_initial + log_emit[0]
    for t in range(1, T):
        log_alpha[t] = log_emit[t] + _logsumexp(log_alpha[t - 1][:, None] + log_trans, axis=0)
    return log_alpha, float(_logsumexp(log_alpha[-1], axis=0))


def _backward(log_trans: np.ndarray, log_emit: np.ndarray) -> np.ndarray:
    T, n = log_emit.shape
    log_beta = np.zeros((T, n))
    for t in range(T - 2, -1, -1):
        log_beta[t] = _logsumexp(log_trans + (log_emit[t + 1] + log_beta[t + 1])[None, :], axis=1)
    return log_beta


def _kmeans(frames: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 50) -> np.ndarray:
    """Deterministic Lloyd k-means for emission mean initialization."""
    centers = frames[rng.choice(frames.shape[0], size=k, replace=False)].copy()
    assignment = np.full(frames.shape[0], -1)
    for _ in range(max_iter):
        dists = ((frames[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assignment = dists.argmin(axis=1)
        # Re-seed empty clusters with the point farthest from its center.
        for j in range(k):
            if not (new_assignment == j).any():
                farthest = dists[np.arange(len(frames)), new_assignment].argmax()
                new_assignment[farthest] = j
                dists[farthest] = -np.inf  # never steal the same point twice
        if (new_assignment == assignment).all():
            break
        assignment = new_assignment
        for j in range(k):
            centers[j] = frames[assignment == j].mean(axis=0)
    return centers


def fit_hmm(
    mfcc: MfccMatrix,
    n_states: int = DEFAULT_N_STATES,
    seed: int = 0,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    var_floor: float = DEFAULT_VAR_FLOOR,
) -> HmmModel:
    """Baum-Welch estimation of one Gaussian HMM from a single sequence.

    Initialization is deterministic given the seed: emission means come
    from k-means on the frames, transitions and initial probabilities are
    uniform, and every state starts from the per-dimension sample
    variance. Iteration stops when the per-frame log-likelihood improves
    by less than `tol` or after `max_iter` rounds. The log-likelihood
    trace of the E-steps is kept on the returned model.
    """
    frames = np.asarray(mfcc.frames, dtype=np.float64)
    T, d = frames.shape
    if T < n_states:
        raise HmmError(f"clip {mfcc.clip_id!r}: {T} frames is fewer than {n_states} states")

    rng = np.random.default_rng(seed)
    means = _kmeans(frames, n_states, rng)
    base_var = np.maximum(frames.var(axis=0), var_floor)
    variances = np.tile(base_var, (n_states, 1))
    initial = np.full(n_states, 1.0 / n_states)
    trans = np.full((n_states, n_states), 1.0 / n_states)

    history: list[float] = []
    with np.errstate(divide="ignore"):
        log_initial = np.log(initial)
        log_trans = np.log(trans)
    for _ in range(max_iter):
        log_emit = _log_emissions(frames, means, variances)
        log_alpha, log_likelihood_total = _forward(log_initial, log_trans, log_emit)
        log_beta = _backward(log_trans, log_emit)
        history.append(log_likelihood_total)

        gamma = np.exp(log_alpha + log_beta - log_likelihood_total)  # (T, n)
        xi_log = (
            log_alpha[:-1, :, None]
            + log_trans[None, :, :]
            + (log_emit[1:] + log_beta[1:])[:, None, :]
            - log_likelihood_total
        )
        xi_sum = np.exp(xi_log).sum(axis=0)  # (n, n)

        initial = gamma[0] / gamma[0].sum()
        out_mass = gamma[:-1].sum(axis=0)
        occupied_rows = out_mass > 1e-12
        trans = trans.copy()
        trans[occupied_rows] = xi_sum[occupied_rows] / out_mass[occupied_rows, None]
        trans[occupied_rows] /= trans[occupied_rows].sum(axis=1, keepdims=True)

        weight = gamma.sum(axis=0)
        occupied = weight > 1e-12
        new_means = means.copy()
        new_vars = variances.copy()
        new_means[occupied] = (gamma.T @ frames)[occupied] / weight[occupied, None]
        second = (gamma.T @ frames**2)[occupied] / weight[occupied, None]
        new_vars[occupied] = np.maximum(second - new_means[occupied] ** 2, var_floor)
        means, variances = new_means, new_vars

        with np.errstate(divide="ignore"):
            log_initial = np.log(initial)
            log_trans = np.log(trans)
        if len(history) >= 2 and (history[-1] - history[-2]) < tol * T:
            break

    model = HmmModel(
        initial_probs=initial,
        transition_matrix=trans,
        means=means,
        variances=variances,
        train_log_likelihoods=np.asarray(history),
    )
    model.validate(var_floor=var_floor)
    return model


def _check_dims(model: HmmModel, frames: np.ndarray, clip_id: str) -> np.ndarray:
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise HmmError(f"clip {clip_id!r}: empty or misshapen sequence")
    if frames.shape[1] != model.n_dims:
        raise HmmError(f"clip {clip_id!r}: {frames.shape[1]}-dim frames do not match {model.n_dims}-dim model")
    return frames


def log_likelihood(model: HmmModel, mfcc: MfccMatrix) -> float:
    """Marginal log P(sequence | model) by the forward algorithm."""
    frames = _check_dims(model, mfcc.frames, mfcc.clip_id)
    with np.errstate(divide="ignore"):
        log_initial = np.log(model.initial_probs)
        log_trans = np.log(model.transition_matrix)
    log_emit = _log_emissions(frames, model.means, model.variances)
    _, total = _forward(log_initial, log_trans, log_emit)
    return total


def viterbi(model: HmmModel, mfcc: MfccMatrix) -> tuple[np.ndarray, float]:
    """Most probable state path and its joint log-probability."""
    frames = _check_dims(model, mfcc.frames, mfcc.clip_id)
    with np.errstate(divide="ignore"):
        log_initial = np.log(model.initial_probs)
        log_trans = np.log(model.transition_matrix)
    log_emit = _log_emissions(frames, model.means, model.variances)
    T, n = log_emit.shape
    delta = log_initial + log_emit[0]
    backpointers = np.zeros((T, n), dtype=int)
    for t in range(1, T):
        candidates = delta[:, None] + log_trans
        backpointers[t] = candidates.argmax(axis=0)
        delta = candidates.max(axis=0) + log_emit[t]
    path = np.zeros(T, dtype=int)
    path[-1] = int(delta.argmax())
    for t in range(T - 2, -1, -1):
        path[t] = backpointers[t + 1, path[t + 1]]
    return path, float(delta.max())


def log_likelihood_under_models(models: Sequence[HmmModel], mfcc: MfccMatrix) -> np.ndarray:
    """Forward log-likelihood of one sequence under many models at once.

    All models must share state count and dimensionality; returns one
    score per model, identical to looping log_likelihood (used for the
    N^2 fill of the similarity matrix).
    """
    frames = _check_dims(models[0], mfcc.frames, mfcc.clip_id)
    means = np.stack([m.means for m in models])  # (M, n, d)
    variances = np.stack([m.variances for m in models])
    with np.errstate(divide="ignore"):
        log_initial = np.log(np.stack([m.initial_probs for m in models]))  # (M, n)
        log_trans = np.log(np.stack([m.transition_matrix for m in models]))  # (M, n, n)

    const = -0.5 * np.log(2.0 * np.pi * variances).sum(axis=2)  # (M, n)
    inv_var = 1.0 / variances
    log_emit = (
        const[None]
        - 0.5
        * (
            np.einsum("td,mnd->tmn", frames**2, inv_var)
            - 2.0 * np.einsum("td,mnd->tmn", frames, means * inv_var)
            + (means**2 * inv_var).sum(axis=2)[None]
        )
    )  # (T, M, n)

    log_alpha = log_initial + log_emit[0]
    for t in range(1, frames.shape[0]):
        log_alpha = log_emit[t] + _logsumexp(log_alpha[:, :, None] + log_trans, axis=1)
    return _logsumexp(log_alpha, axis=1)


def model_seed(run_seed: int, clip_id: str) -> int:
    """Stable per-clip seed: independent of process hashing, mixed with the run seed."""
    digest = hashlib.blake2b(f"{run_seed}:{clip_id}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def similarity_matrix(
    mfccs: Sequence[MfccMatrix],
    n_states: int = DEFAULT_N_STATES,
    seed: int = 0,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    var_floor: float = DEFAULT_VAR_FLOOR,
    jobs: int = 1,
) -> SimilarityMatrix:
    """Fit one model per clip and score every sequence under every model.

    The full square matrix is produced, diagonal (self-score) included.
    Deterministic: each clip's model seed is a stable hash of its id
    mixed with the run seed.
    """
    if len(mfccs) < 2:
        raise HmmError(f"need at least 2 clips, got {len(mfccs)}")
    clip_ids = [m.clip_id for m in mfccs]
    if len(set(clip_ids)) != len(clip_ids):
        raise HmmError("duplicate clip ids in similarity input")

    def fit_one(mfcc: MfccMatrix) -> HmmModel:
        try:
            return fit_hmm(
                mfcc,
                n_states=n_states,
                seed=model_seed(seed, mfcc.clip_id),
                max_iter=max_iter,
                tol=tol,
                var_floor=var_floor,
            )
        except HmmError:
            raise
        except Exception as exc:  # noqa: BLE001 - attribute numeric blowups to the clip
            raise HmmError(f"clip {mfcc.clip_id!r}: model fit failed ({exc})") from exc

    def score_row(mfcc: MfccMatrix) -> np.ndarray:
        try:
            return log_likelihood_under_models(models, mfcc)
        except HmmError:
            raise
        except Exception as exc:  # noqa: BLE001
            raise HmmError(f"clip {mfcc.clip_id!r}: scoring failed ({exc})") from exc

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            models = list(pool.map(fit_one, mfccs))
            rows = list(pool.map(score_row, mfccs))
    else:
        models = [fit_one(m) for m in mfccs]
        rows = [score_row(m) for m in mfccs]

    scores = np.vstack(rows)
    if not np.isfinite(scores).all():
        bad = np.argwhere(~np.isfinite(scores))[0]
        raise HmmError(f"non-finite score for sequence {clip_ids[bad[0]]!r} under model {clip_ids[bad[1]]!r}")
    return SimilarityMatrix(clip_ids=tuple(clip_ids), scores=scores)
