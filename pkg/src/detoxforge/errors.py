"""Exception hierarchy for the detoxforge pipeline.

Every error raised by the package derives from DetoxforgeError so CLI and
service layers can map failure classes to exit codes / HTTP statuses.
"""


class DetoxforgeError(Exception):
    """Base class for all detoxforge errors."""


class ConfigError(DetoxforgeError):
    """Invalid or unresolvable configuration (endpoints, templates, paths)."""


class DataError(DetoxforgeError):
    """Malformed input data or broken invariants on stored records."""


# -- corpus ------------------------------------------------------------------

class UnknownLabelError(DataError):
    """Raw label is not covered by the label map."""


class BadRatiosError(DataError):
    """Split ratios do not form a valid partition."""


# -- prompts -----------------------------------------------------------------

class EmptyInputError(DataError):
    """Prompt builders require non-empty input text."""


class BadFewShotCountError(DataError):
    """Paraphrase prompts require exactly five labeled exemplars."""


class ExemplarCountMismatchError(DataError):
    """Detox instruction prompts require len(exemplars) == shots."""


class TemplateError(ConfigError):
    """Template missing, malformed, or left an unresolved placeholder."""


# -- gateway -----------------------------------------------------------------

class GatewayError(DetoxforgeError):
    """Base class for remote-endpoint failures."""

    def __init__(self, message, endpoint_id=None):
        super().__init__(message)
        self.endpoint_id = endpoint_id


class TimeoutError_(GatewayError):
    """Remote call exceeded the endpoint timeout (after retries)."""


class RateLimitedError(GatewayError):
    """Remote kept returning 429 past the retry budget."""


class RemoteError(GatewayError):
    """Remote returned a non-retryable error or exhausted retries."""

    def __init__(self, message, status=None, body_excerpt="", endpoint_id=None):
        super().__init__(message, endpoint_id=endpoint_id)
        self.status = status
        self.body_excerpt = body_excerpt


class ReplayMissError(GatewayError):
    """Replay mode saw a request whose key has no recorded fixture."""


class BadInputError(DataError):
    """Endpoint operation called with unusable input (e.g. empty text)."""


# -- filtration --------------------------------------------------------------

class EmptyEnsembleError(DataError):
    """Prediction list for a pair is empty."""


class MismatchedEnsemblesError(DataError):
    """Source and target predictions cover different classifier sets."""


# -- metrics -----------------------------------------------------------------

class MetricError(DataError):
    """Base class for metric input violations."""


class LengthMismatchError(MetricError):
    """Hypothesis and reference lists differ in length."""


class EmptyMetricInputError(MetricError):
    """Metric requires at least one element."""


class DimensionMismatchError(MetricError):
    """Embedding vectors have different dimensions."""


class ZeroVectorError(MetricError):
    """Cosine similarity is undefined for a zero-norm vector."""


class OutOfRangeError(MetricError):
    """Percent argument outside [0, 100]."""


# -- adversarial -------------------------------------------------------------

class ConfigInvalidError(ConfigError):
    """Adversary configuration violates its invariants."""


class IndexOutOfRangeError(DataError):
    """Perturbation index outside the valid range for the mode."""


class FixtureMissingError(DataError):
    """A required bundled fixture file is absent."""


# -- runtime -----------------------------------------------------------------

class ParseError(DataError):
    """Model output does not match the expected wire format."""


class StageError(DetoxforgeError):
    """Wraps a failure with the runtime stage it occurred in."""

    def __init__(self, stage, cause):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


# -- roundtrip ---------------------------------------------------------------

class EmptyBatchError(DataError):
    """No pairs survived the error policy; nothing to report."""
