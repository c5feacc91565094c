"""Exception hierarchy shared across the toolkit."""


class EscapeError(Exception):
    """Base class for all toolkit errors."""


class ArchiveError(EscapeError):
    """Archive on disk is missing, malformed, or inconsistent."""


class MissingRecordsError(ArchiveError):
    pass


class MalformedRecordError(ArchiveError):
    pass


class DuplicateIdError(ArchiveError):
    pass


class AudioFormatError(EscapeError):
    """WAV file is not the 16-bit PCM mono format the archive stores."""


class ScrapeError(EscapeError):
    """Scrape run failed in a way that is not worth retrying."""


class AuthenticationError(ScrapeError):
    pass


class NetworkError(ScrapeError):
    """Request kept failing after the configured retries."""


class FeatureError(EscapeError):
    """Feature extraction rejected a clip or its parameters."""


class ClipTooShortError(FeatureError):
    pass


class SampleRateError(FeatureError):
    pass


class FilterbankConfigError(FeatureError):
    pass


class SignatureError(EscapeError):
    """Gaussian signature fitting or comparison failed."""


class NotPositiveDefiniteError(SignatureError):
    pass


class HmmError(EscapeError):
    """HMM fitting or scoring failed; messages carry the offending clip id."""


class LearnError(EscapeError):
    """Classifier training, splitting, or evaluation was misconfigured."""


class LabelingError(EscapeError):
    """Label store operation rejected."""


class UnknownClipError(LabelingError):
    pass


class UnknownLabelError(LabelingError):
    pass


class BootstrapRequiredError(LabelingError):
    """Propagation needs at least one manual label to chain from."""


class CacheError(EscapeError):
    """Feature or similarity cache file is unreadable or incompatible."""
