"""Speaker classification from similarity features.

Feature standardization, PCA projection, a closed-form ridge classifier,
leak-controlled nested cross-validation over repeated stratified splits,
and the final fit that labels the unlabeled clips. Leak control: within
every repeat, all similarity columns indexed by that repeat's test clips
are removed before anything is fit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import LearnError
from .hmm import SimilarityMatrix

# Inclusive power-of-10 ladder from 1e-10 to 1e10 (21 values).
DEFAULT_ALPHA_GRID = tuple(10.0**p for p in range(-10, 11))
DEFAULT_TEST_FRACTION = 0.33
DEFAULT_N_REPEATS = 100
DEFAULT_INNER_FOLDS = 3
STD_FLOOR = 1e-12


@dataclass(frozen=True)
class Scaler:
    """Per-column mean/std computed on the fit rows only (biased std, floored)."""

    mean: np.ndarray
    std: np.ndarray


@dataclass
class RidgeModel:
    weights: np.ndarray
    intercept: float
    alpha: float
    column_ids: tuple[str, ...] | None = None
    scaler: Scaler | None = None


@dataclass
class SplitReport:
    split_index: int
    chosen_alpha: float
    train_accuracy: float
    test_accuracy: float
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]


@dataclass
class PcaResult:
    projections: np.ndarray
    components: np.ndarray
    explained_variance_ratios: np.ndarray


@dataclass
class FinalClassification:
    labels: dict[str, str]
    chosen_alpha: float
    model: RidgeModel


def standardize_fit(matrix: np.ndarray, fit_rows: Sequence[int]) -> Scaler:
    if len(fit_rows) == 0:
        raise LearnError("cannot fit a scaler on an empty row set")
    rows = np.asarray(matrix, dtype=np.float64)[list(fit_rows)]
    std = rows.std(axis=0)
    return Scaler(mean=rows.mean(axis=0), std=np.maximum(std, STD_FLOOR))


def standardize_apply(scaler: Scaler, matrix: np.ndarray) -> np.ndarray:
    return (np.asarray(matrix, dtype=np.float64) - scaler.mean) / scaler.std


def pca(matrix: np.ndarray, n_components: int = 3) -> PcaResult:
    """Principal components of the row-centered matrix via SVD.

    Component signs are fixed (largest-magnitude loading positive) so
    projections are reproducible across runs.
    """
    X = np.asarray(matrix, dtype=np.float64)
    if n_components > min(X.shape):
        raise LearnError(f"n_components={n_components} exceeds min(rows, cols)={min(X.shape)}")
    if X.shape[0] < n_components:
        raise LearnError(f"need at least {n_components} rows, got {X.shape[0]}")
    centered = X - X.mean(axis=0)
    _, singular_values, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:n_components]
    flip = np.sign(components[np.arange(n_components), np.abs(components).argmax(axis=1)])
    flip[flip == 0] = 1.0
    components = components * flip[:, None]
    variances = singular_values**2
    total = variances.sum()
    ratios = variances[:n_components] / total if total > 0 else np.zeros(n_components)
    return PcaResult(
        projections=centered @ components.T,
        components=components,
        explained_variance_ratios=ratios,
    )


def ridge_fit(
    X: np.ndarray,
    y: np.ndarray,
    alpha: float,
    column_ids: tuple[str, ...] | None = None,
    scaler: Scaler | None = None,
) -> RidgeModel:
    """Closed-form ridge on column-centered data with an unpenalized intercept.

    Solves (Xc' Xc + alpha I) w = Xc' y; alpha = 0 falls back to the
    least-squares pseudo-solution so collinear features stay solvable.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if alpha < 0:
        raise LearnError("alpha must be non-negative")
    if not ((y > 0).any() and (y < 0).any()):
        raise LearnError("need at least one example of each class")
    col_mean = X.mean(axis=0)
    centered = X - col_mean
    y_centered = y - y.mean()
    if alpha == 0:
        weights = np.linalg.lstsq(centered, y_centered, rcond=None)[0]
    else:
        gram = centered.T @ centered
        gram[np.diag_indices_from(gram)] += alpha
        weights = np.linalg.solve(gram, centered.T @ y_centered)
    intercept = float(y.mean() - col_mean @ weights)
    return RidgeModel(weights=weights, intercept=intercept, alpha=alpha, column_ids=column_ids, scaler=scaler)


def ridge_predict(model: RidgeModel, X: np.ndarray) -> np.ndarray:
    """Class decisions in {-1, +1}; an exact-zero score goes to +1."""
    scores = np.asarray(X, dtype=np.float64) @ model.weights + model.intercept
    return np.where(scores >= 0, 1, -1)


def _accuracy(model: RidgeModel, X: np.ndarray, y: np.ndarray) -> float:
    return float((ridge_predict(model, X) == y).mean())


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def stratified_split(
    ids: Sequence[str],
    labels: Sequence[str],
    test_fraction: float = DEFAULT_TEST_FRACTION,
    seed=0,
) -> tuple[list[str], list[str]]:
    """Random train/test partition preserving class proportions.

    Per-class test counts start at floor(test_fraction * class size) and
    largest-remainder rounding tops them up to the global test size
    floor(test_fraction * N). Deterministic given the seed.
    """
    if not 0 < test_fraction < 1:
        raise LearnError(f"test_fraction must be in (0, 1), got {test_fraction}")
    if len(ids) != len(labels):
        raise LearnError("ids and labels length mismatch")
    rng = _as_rng(seed)
    by_class: dict[str, list[str]] = {}
    for cid, label in zip(ids, labels):
        by_class.setdefault(label, []).append(cid)
    for label, members in by_class.items():
        if len(members) < 2:
            raise LearnError(f"class {label!r} has {len(members)} member(s); need at least 2")

    global_test = int(np.floor(test_fraction * len(ids)))
    counts = {label: int(np.floor(test_fraction * len(members))) for label, members in by_class.items()}
    remainders = sorted(
        by_class,
        key=lambda label: (-(test_fraction * len(by_class[label]) - counts[label]), label),
    )
    shortfall = global_test - sum(counts.values())
    for label in remainders[:shortfall]:
        counts[label] += 1

    order = {cid: i for i, cid in enumerate(ids)}
    test_ids: list[str] = []
    train_ids: list[str] = []
    for label in sorted(by_class):
        members = by_class[label]
        shuffled = [members[i] for i in rng.permutation(len(members))]
        test_ids.extend(shuffled[: counts[label]])
        train_ids.extend(shuffled[counts[label] :])
    return sorted(train_ids, key=order.__getitem__), sorted(test_ids, key=order.__getitem__)


def drop_test_columns(similarity: SimilarityMatrix, test_ids: Sequence[str]) -> tuple[np.ndarray, tuple[str, ...]]:
    """Remove every similarity column indexed by a test clip.

    Rows are untouched (train and test rows alike keep only train-clip
    features); returns the reduced matrix and the surviving column ids in
    original matrix order.
    """
    test_set = set(test_ids)
    unknown = test_set - set(similarity.clip_ids)
    if unknown:
        raise LearnError(f"unknown test ids: {sorted(unknown)}")
    keep = [i for i, cid in enumerate(similarity.clip_ids) if cid not in test_set]
    kept_ids = tuple(similarity.clip_ids[i] for i in keep)
    return similarity.scores[:, keep], kept_ids


def encode_labels(labels: Sequence[str]) -> tuple[np.ndarray, tuple[str, str]]:
    """Map a two-class label sequence onto {-1, +1}.

    Classes sort alphabetically; the second sorted class is +1 (which is
    also the tie-break side of the sign decision).
    """
    classes = sorted(set(labels))
    if len(classes) != 2:
        raise LearnError(f"need exactly 2 classes, got {classes}")
    y = np.array([1 if label == classes[1] else -1 for label in labels])
    return y, (classes[0], classes[1])


def _stratified_folds(ids: Sequence[str], labels: Mapping[str, str], k: int, rng: np.random.Generator) -> list[list[str]]:
    """Deal each class's shuffled members round-robin into k folds."""
    folds: list[list[str]] = [[] for _ in range(k)]
    by_class: dict[str, list[str]] = {}
    for cid in ids:
        by_class.setdefault(labels[cid], []).append(cid)
    for label in sorted(by_class):
        members = by_class[label]
        shuffled = [members[i] for i in rng.permutation(len(members))]
        for i, cid in enumerate(shuffled):
            folds[i % k].append(cid)
    return folds


def _select_alpha(
    X: np.ndarray,
    y_of: Mapping[str, int],
    row_of: Mapping[str, int],
    train_ids: Sequence[str],
    labels: Mapping[str, str],
    alpha_grid: Sequence[float],
    inner_folds: int,
    rng: np.random.Generator,
) -> float:
    """Inner stratified k-fold CV; ties go to the smallest alpha."""
    folds = _stratified_folds(train_ids, labels, inner_folds, rng)
    fold_rows = [np.array([row_of[cid] for cid in fold]) for fold in folds]
    best_alpha, best_score = None, -np.inf
    for alpha in sorted(alpha_grid):
        scores = []
        for held in range(inner_folds):
            fit_rows = np.concatenate([fold_rows[i] for i in range(inner_folds) if i != held])
            val_rows = fold_rows[held]
            y_fit = np.array([y_of[cid] for fold in (folds[i] for i in range(inner_folds) if i != held) for cid in fold])
            y_val = np.array([y_of[cid] for cid in folds[held]])
            model = ridge_fit(X[fit_rows], y_fit, alpha)
            scores.append(_accuracy(model, X[val_rows], y_val))
        mean_score = float(np.mean(scores))
        if mean_score > best_score:
            best_alpha, best_score = alpha, mean_score
    return best_alpha


def nested_cv_evaluate(
    similarity: SimilarityMatrix,
    labels: Mapping[str, str],
    n_repeats: int = DEFAULT_N_REPEATS,
    inner_folds: int = DEFAULT_INNER_FOLDS,
    alpha_grid: Sequence[float] = DEFAULT_ALPHA_GRID,
    test_fraction: float = DEFAULT_TEST_FRACTION,
    seed: int = 0,
    audit: Callable[[int, tuple[str, ...], tuple[str, ...], tuple[str, ...]], None] | None = None,
) -> list[SplitReport]:
    """Repeated leak-controlled evaluation of the similarity features.

    Each repeat draws a stratified train/test split, removes test-indexed
    feature columns, standardizes on train rows only, picks alpha by
    inner stratified CV on the train set, refits, and reports train/test
    accuracy. `audit`, when given, receives (split_index, feature column
    ids, train ids, test ids) for every repeat so callers can verify leak
    freedom structurally.
    """
    if not alpha_grid:
        raise LearnError("alpha_grid must be non-empty")
    ids = list(similarity.clip_ids)
    missing = [cid for cid in ids if cid not in labels]
    if missing:
        raise LearnError(f"{len(missing)} clips have no label (first: {missing[0]!r})")
    y_all, _ = encode_labels([labels[cid] for cid in ids])
    y_of = dict(zip(ids, y_all))
    row_of = {cid: i for i, cid in enumerate(ids)}

    reports = []
    children = np.random.SeedSequence(seed).spawn(n_repeats)
    for split_index in range(n_repeats):
        rng = np.random.default_rng(children[split_index])
        train_ids, test_ids = stratified_split(ids, [labels[cid] for cid in ids], test_fraction, rng)
        X_cols, column_ids = drop_test_columns(similarity, test_ids)
        leaked = set(column_ids) & set(test_ids)
        if leaked:
            raise LearnError(f"repeat {split_index}: test columns leaked into features: {sorted(leaked)}")
        if audit is not None:
            audit(split_index, column_ids, tuple(train_ids), tuple(test_ids))

        train_rows = np.array([row_of[cid] for cid in train_ids])
        test_rows = np.array([row_of[cid] for cid in test_ids])
        scaler = standardize_fit(X_cols, train_rows)
        X = standardize_apply(scaler, X_cols)

        chosen = _select_alpha(X, y_of, row_of, train_ids, labels, alpha_grid, inner_folds, rng)
        y_train = np.array([y_of[cid] for cid in train_ids])
        y_test = np.array([y_of[cid] for cid in test_ids])
        model = ridge_fit(X[train_rows], y_train, chosen, column_ids=column_ids, scaler=scaler)
        reports.append(
            SplitReport(
                split_index=split_index,
                chosen_alpha=chosen,
                train_accuracy=_accuracy(model, X[train_rows], y_train),
                test_accuracy=_accuracy(model, X[test_rows], y_test),
                train_ids=tuple(train_ids),
                test_ids=tuple(test_ids),
            )
        )
    return reports


def train_final_and_classify(
    similarity: SimilarityMatrix,
    labels: Mapping[str, str],
    unlabeled_ids: Sequence[str] | None = None,
    alpha_grid: Sequence[float] = DEFAULT_ALPHA_GRID,
    inner_folds: int = DEFAULT_INNER_FOLDS,
    seed: int = 0,
) -> FinalClassification:
    """Fit the deployment classifier on all labeled clips and label the rest.

    Feature columns are restricted to labeled clips; alpha comes from a
    cross-validated search over the labeled rows. Rows for unlabeled
    clips pass through the same scaler and model.
    """
    ids = list(similarity.clip_ids)
    labeled_ids = [cid for cid in ids if cid in labels]
    if not labeled_ids:
        raise LearnError("no labeled clips in the similarity matrix")
    if unlabeled_ids is None:
        unlabeled_ids = [cid for cid in ids if cid not in labels]
    unknown = set(unlabeled_ids) - set(ids)
    if unknown:
        raise LearnError(f"unlabeled ids missing from similarity matrix: {sorted(unknown)}")

    y_labeled, (neg_class, pos_class) = encode_labels([labels[cid] for cid in labeled_ids])
    X_cols, column_ids = drop_test_columns(similarity, [cid for cid in ids if cid not in labels])
    row_of = {cid: i for i, cid in enumerate(ids)}
    labeled_rows = np.array([row_of[cid] for cid in labeled_ids])
    scaler = standardize_fit(X_cols, labeled_rows)
    X = standardize_apply(scaler, X_cols)

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    y_of = dict(zip(labeled_ids, y_labeled))
    chosen = _select_alpha(X, y_of, row_of, labeled_ids, labels, alpha_grid, inner_folds, rng)
    model = ridge_fit(X[labeled_rows], y_labeled, chosen, column_ids=column_ids, scaler=scaler)

    result: dict[str, str] = {}
    if len(unlabeled_ids) > 0:
        rows = np.array([row_of[cid] for cid in unlabeled_ids])
        predictions = ridge_predict(model, X[rows])
        result = {cid: (pos_class if p > 0 else neg_class) for cid, p in zip(unlabeled_ids, predictions)}
    return FinalClassification(labels=result, chosen_alpha=chosen, model=model)
