"""Exception types shared across the package."""


class MetfaError(Exception):
    pass


class InsufficientSamples(MetfaError, ValueError):
    """Too few sampled explanations for the requested confidence level."""

    def __init__(self, n, alpha, required=None):
        self.n = n
        self.alpha = alpha
        self.required = required
        msg = f"{n} samples are not enough for alpha={alpha}"
        if required is not None:
            msg += f" (need at least {required})"
        super().__init__(msg)


class EmptyTrim(MetfaError, ValueError):
    """No order statistics lie strictly between k1 and k2."""


class DegenerateInput(MetfaError, ValueError):
    pass


class SpecMismatch(MetfaError, TypeError):
    """Noise kind does not fit the input kind (spatial vs. token)."""


class ZeroScore(MetfaError, ArithmeticError):
    """Predicted score of the target label is too small to normalize by."""


class EmptyMask(MetfaError, ValueError):
    pass


class FormatError(MetfaError, ValueError):
    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class NonFiniteValue(FormatError):
    def __init__(self, sample, feature, offset=None):
        self.sample = sample
        self.feature = feature
        super().__init__(f"non-finite value at sample {sample}, feature {feature}", offset)
