class ShapeError(ValueError):
    """Raised when an array does not have the dimensions an operation expects."""


class CaseFileError(ValueError):
    """Raised for malformed feature files; carries the 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FoldError(RuntimeError):
    """Wraps a failure raised while running one cross-validation fold."""

    def __init__(self, fold, cause):
        self.fold = fold
        super().__init__(f"fold {fold}: {type(cause).__name__}: {cause}")
