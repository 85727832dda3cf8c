"""Exception types raised across the package."""


class OculolipidError(Exception):
    """Base class for data errors (CLI exit code 2)."""


# morphometry

class EmptyVesselClass(OculolipidError):
    pass


class DegenerateLadder(OculolipidError):
    pass


class ZeroChord(OculolipidError):
    pass


class TooShortForCurvature(OculolipidError):
    pass


class NoEyesAvailable(OculolipidError):
    pass


class InvalidMask(OculolipidError):
    pass


# cohort ingest

class MissingColumn(OculolipidError):
    def __init__(self, name):
        super().__init__(f"missing column: {name}")
        self.name = name


class DuplicateParticipant(OculolipidError):
    def __init__(self, participant_id):
        super().__init__(f"duplicate participant_id: {participant_id}")
        self.participant_id = participant_id


class NoLipidColumns(OculolipidError):
    pass


class EmptyJoin(OculolipidError):
    pass


# statistics

class ConstantInput(OculolipidError):
    def __init__(self, which):
        super().__init__(f"constant input: {which}")
        self.which = which


class InsufficientSamples(OculolipidError):
    def __init__(self, n, required):
        super().__init__(f"insufficient samples: n={n}, required={required}")
        self.n = n
        self.required = required


class RankDeficient(OculolipidError):
    pass


class InvalidP(OculolipidError):
    def __init__(self, index):
        super().__init__(f"p-value at index {index} is outside [0, 1]")
        self.index = index


# pipeline / report

class InvalidSpec(OculolipidError):
    pass


class MissingCell(OculolipidError):
    pass


class EmptyNetwork(OculolipidError):
    pass


class BinTooSmall(OculolipidError):
    pass
