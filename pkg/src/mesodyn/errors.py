"""Exception types shared across the package."""


class MesodynError(Exception):
    """Base class for all package-specific errors."""


class InvalidField(MesodynError):
    """A grid field contains non-finite values or has an inconsistent shape."""


class HermitianViolation(MesodynError):
    """A spectrum fails the Hermitian symmetry required of real fields."""


class ModeRangeError(MesodynError):
    """A mode truncation cutoff exceeds the representable range."""


class StepperSingular(MesodynError):
    """A semi-implicit solve hit a zero denominator."""


class BlowUp(MesodynError):
    """Integration produced a non-finite state.

    Carries the index of the offending step.
    """

    def __init__(self, step_index, message=None):
        self.step_index = step_index
        super().__init__(message or f"non-finite state at step {step_index}")


class ExtensionLimit(MesodynError):
    """A FENE strain reached or exceeded the maximum extension R."""


class InterpolationGap(MesodynError):
    """Chain nodes do not cover the requested reconstruction grid."""


class MagicMismatch(MesodynError):
    """A file does not start with the expected format magic."""


class TruncatedFile(MesodynError):
    """A file ended before the advertised payload was complete."""


class ChecksumMismatch(MesodynError):
    """Stored and recomputed payload checksums disagree."""


class SplitError(MesodynError):
    """A dataset split would leave one part empty."""


class NumericOverflow(MesodynError):
    """A numeric evaluation produced a non-finite intermediate."""


class ZeroReference(MesodynError):
    """A relative metric was requested against an identically-zero reference."""


class ZeroDrivingForce(MesodynError):
    """A step-size estimate was requested at a state with mu identically zero."""


class DegenerateFit(MesodynError):
    """A least-squares fit was requested on degenerate abscissae."""


class TrainingDiverged(MesodynError):
    """Training loss became non-finite.

    ``checkpoint`` holds the last parameters that produced a finite
    validation loss (the best ones seen so far).
    """

    def __init__(self, message, checkpoint=None):
        self.checkpoint = checkpoint
        super().__init__(message)


class ConfigError(MesodynError):
    """A run configuration contains unknown or malformed entries."""
