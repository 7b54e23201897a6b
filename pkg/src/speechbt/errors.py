"""Exception types shared across the pipeline."""


class SpeechBtError(Exception):
    """Base class for all speechbt errors."""


class EmptyReference(SpeechBtError):
    """Reference side of an evaluation pair has zero length; the pair is unusable."""


class DegenerateBaseline(SpeechBtError):
    """Real-speech WER is zero, so the intelligibility normalization is undefined."""


class DimensionMismatch(SpeechBtError):
    """Embedding vectors of different dimensions were compared."""


class ZeroNorm(SpeechBtError):
    """An embedding vector with zero norm has no direction to compare."""


class InsufficientPool(SpeechBtError):
    """More prompts were requested than the pool contains."""


class EmptyLanguageList(SpeechBtError):
    """Budget planning needs at least one language."""


class ZeroWeightSum(SpeechBtError):
    """Weighted budget planning needs a positive weight sum."""


class ClipTooLong(SpeechBtError):
    """A clip exceeds the packing budget and cannot be placed in any segment."""

    def __init__(self, clip_id: str, duration_s: float, budget_s: float):
        super().__init__(f"clip {clip_id!r} is {duration_s}s, over the {budget_s}s budget")
        self.clip_id = clip_id


class ProtocolError(SpeechBtError):
    """A worker sent something that is not a valid protocol message."""


class WorkerTimeout(SpeechBtError):
    """A worker did not answer within the configured timeout."""


class UnknownAudioRef(SpeechBtError):
    """An audio reference does not resolve to any stored artifact."""


class AllWorkersFailed(SpeechBtError):
    """No healthy worker remains (or retries were exhausted) with work outstanding."""


class MissingRunData(SpeechBtError):
    """The run directory holds neither manifests nor imported result tables."""


class ConfigError(SpeechBtError):
    """The run configuration is missing, malformed, or fails validation."""
