"""Toolkit for voice-assistant interaction archives.

Scrapes interaction metadata and audio into a local archive, bootstraps
speaker labels with a KL-divergence labeler, classifies every clip's
speaker from HMM log-likelihood similarity features, and emits usage
reports.
"""

__version__ = "0.1.0"

from .archive import Archive, InteractionRecord, open_archive
from .audio import AudioClip, read_wav, write_wav
from .dsp import MfccMatrix, MfccParams, compute_mfcc, frame_count, mel_filterbank, truncate
from .hmm import HmmModel, SimilarityMatrix, fit_hmm, log_likelihood, similarity_matrix, viterbi
from .labeling import LabelRecord, LabelStore, LabelingSession, propagate
from .learn import (
    RidgeModel,
    SplitReport,
    nested_cv_evaluate,
    pca,
    ridge_fit,
    stratified_split,
    train_final_and_classify,
)
from .report import IntentCategory, categorize, usage_report
from .scraper import ScrapeConfig, scrape
from .signatures import GaussianSignature, fit_gaussian, kl_divergence, sym_kl

__all__ = [
    "Archive",
    "AudioClip",
    "GaussianSignature",
    "HmmModel",
    "IntentCategory",
    "InteractionRecord",
    "LabelRecord",
    "LabelStore",
    "LabelingSession",
    "MfccMatrix",
    "MfccParams",
    "RidgeModel",
    "ScrapeConfig",
    "SimilarityMatrix",
    "SplitReport",
    "categorize",
    "compute_mfcc",
    "fit_gaussian",
    "fit_hmm",
    "frame_count",
    "kl_divergence",
    "log_likelihood",
    "mel_filterbank",
    "nested_cv_evaluate",
    "open_archive",
    "pca",
    "propagate",
    "read_wav",
    "ridge_fit",
    "scrape",
    "similarity_matrix",
    "stratified_split",
    "sym_kl",
    "train_final_and_classify",
    "truncate",
    "usage_report",
    "viterbi",
    "write_wav",
]
