""" Exception hierarchy shared by every regime_ensemble module.

Each error also derives from the closest builtin so callers that only know
about ``ValueError`` or ``TypeError`` keep working.

"""


class RegimeEnsembleError(Exception):
    pass


class ConfigurationError(RegimeEnsembleError, ValueError):

    def __init__(self, field, message):
        self.field = field
        super(ConfigurationError, self).__init__("%s: %s" % (field, message))


class SizingError(RegimeEnsembleError, ValueError):

    def __init__(self, message, required=None, actual=None):
        self.required = required
        self.actual = actual
        if required is not None:
            message = "%s (required at least %d, got %d)" % (message, required, actual)
        super(SizingError, self).__init__(message)


class ParseError(RegimeEnsembleError, ValueError):

    def __init__(self, line, message):
        self.line = line
        super(ParseError, self).__init__("line %s: %s" % (line, message))


class SchemaError(RegimeEnsembleError, ValueError):

    def __init__(self, missing):
        self.missing = list(missing)
        super(SchemaError, self).__init__("missing required columns: %s" % ", ".join(self.missing))


class ShapeError(RegimeEnsembleError, ValueError):
    pass


class InputError(RegimeEnsembleError, ValueError):
    pass


class NormalizationError(RegimeEnsembleError, ValueError):
    pass


class TrainingError(RegimeEnsembleError, RuntimeError):

    def __init__(self, message, batch=None):
        self.batch = batch
        if batch is not None:
            message = "%s (batch %d)" % (message, batch)
        super(TrainingError, self).__init__(message)


class FormatError(RegimeEnsembleError, IOError):
    pass


class UnsupportedVersionError(FormatError):

    def __init__(self, version, supported):
        self.version = version
        self.supported = supported
        super(UnsupportedVersionError, self).__init__(
            "unsupported model file version %r (this build reads up to %d)" % (version, supported))


class StageError(RegimeEnsembleError, RuntimeError):

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super(StageError, self).__init__("stage '%s' failed: %s" % (stage, cause))
