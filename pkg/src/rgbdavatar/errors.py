"""Exception types shared across the package."""


class RgbdAvatarError(Exception):
    """Base class for all package-specific errors."""


class EmptyScan(RgbdAvatarError):
    """Depth image contained no valid pixels."""


class ParseError(RgbdAvatarError):
    """Malformed input file; carries the offending line number."""

    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class UnsupportedFormat(RgbdAvatarError):
    """File extension or header not handled by this reader/writer."""


class DimensionMismatch(RgbdAvatarError):
    """Parameter vector length does not match the model."""


class InvalidSpec(RgbdAvatarError):
    """Synthetic model specification is inconsistent."""


class TooFewVertices(RgbdAvatarError):
    """Mesh has too few vertices for the requested graph size."""


class InvalidIndex(RgbdAvatarError):
    """Correspondence refers to a vertex outside its mesh."""


class EmptyCorrespondences(RgbdAvatarError):
    """Too few correspondence pairs survived thresholding."""


class DisconnectedPieces(RgbdAvatarError):
    """Some scans cannot be reached from the reference via overlap pairs."""

    def __init__(self, unreached):
        self.unreached = list(unreached)
        super().__init__(f"scans not connected to the reference: {self.unreached}")


class EmptyFusion(RgbdAvatarError):
    """Signed-distance merge produced no surface."""


class SingularSystem(RgbdAvatarError):
    """Linear system has no anchored unknowns (empty masks)."""


class UncoveredFaces(RgbdAvatarError):
    """No view covers any face, so the fallback fill has no source."""

    def __init__(self, faces):
        self.faces = list(faces)
        super().__init__(f"{len(self.faces)} faces have no covering view")


class StageError(RgbdAvatarError):
    """Pipeline stage failure, tagged with the stage name."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
