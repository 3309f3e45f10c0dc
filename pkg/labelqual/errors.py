from typing import Optional

EXIT_OK = 0
EXIT_DATA = 1
EXIT_NONCONVERGED = 2
EXIT_USAGE = 64


class LabelQualError(Exception):
    exit_code: int = EXIT_DATA

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class DatasetError(LabelQualError):
    pass


class SchemaError(DatasetError):
    pass


class ScoreRangeError(DatasetError):
    row: Optional[int]
    item_id: Optional[str]

    def __init__(self, message: str, row: Optional[int] = None, item_id: Optional[str] = None):
        super().__init__(message)
        self.row = row
        self.item_id = item_id


class DuplicateFacetError(DatasetError):
    pass


class UnknownReferenceError(DatasetError):
    pass


class InestimableTermError(LabelQualError):
    term: str

    def __init__(self, term: str, reason: str):
        super().__init__(f"inestimable term '{term}': {reason}")
        self.term = term


class InfeasibleScenarioError(LabelQualError):
    pass


class BundleJoinError(LabelQualError):
    pass


class UsageError(LabelQualError):
    exit_code = EXIT_USAGE
