"""Exception hierarchy shared by all corpuskit modules.

Rejection of a document by a pipeline stage is a verdict, not an error;
these exceptions signal contract violations (bad inputs, bad configs,
broken invariants).
"""


class CorpusError(Exception):
    """Base class for all corpuskit errors."""


# --- record / validation -------------------------------------------------

class EmptyText(CorpusError):
    """Document text is empty where non-empty text is required."""


class DuplicateId(CorpusError):
    """Document id already present in the corpus."""


class OrphanSubdomain(CorpusError):
    """Subdomain label does not belong to its parent domain in the registry."""


class InvalidRecord(CorpusError):
    """A Document field violates a structural invariant."""


# --- classification / models ---------------------------------------------

class EmptyTrainingSet(CorpusError):
    pass


class SingleClass(CorpusError):
    """Training data contains fewer than two distinct labels."""


class FeatureSpecMismatch(CorpusError):
    """Model feature spec is incompatible with the given input."""


class UntrainedModel(CorpusError):
    pass


# --- dedup / ngram-lm ----------------------------------------------------

class EmptyCorpus(CorpusError):
    pass


class CorpusTooSmall(CorpusError):
    """Not enough characters to train an n-gram model of the requested order."""


class SampleTooSmall(CorpusError):
    """Calibration sample below the minimum size."""


# --- refiners / coreset / longctx / synth ---------------------------------

class MissingSkeleton(CorpusError):
    """No recognizable section headers found in a court judgment."""


class DuplicateName(CorpusError):
    """A refiner with this name is already registered."""


class EmptyCandidatePool(CorpusError):
    pass


class EmptyDocument(CorpusError):
    pass


class JudgeOutOfRange(CorpusError):
    """Judge returned a score outside 0..10."""


class AnalysisFailed(CorpusError):
    """Topic analysis reply could not be parsed after all retries."""


class GenerationFailed(CorpusError):
    pass


class SyntheticReentry(CorpusError):
    """A document already tagged Synthetic was offered as rewrite input."""


# --- reporting / pipeline --------------------------------------------------

class IncompleteAudit(CorpusError):
    """A processed document is missing stage events required for reporting."""


class ConfigInvalid(CorpusError):
    pass


class IoError(CorpusError):
    pass
