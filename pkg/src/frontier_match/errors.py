"""Exception hierarchy shared by all modules."""


class FrontierMatchError(Exception):
    """Base class for every error raised by this package."""


class ParseError(FrontierMatchError):
    def __init__(self, row: int, column: str, message: str):
        self.row = row
        self.column = column
        super().__init__(f"row {row}, column {column!r}: {message}")


class DuplicateKeyError(FrontierMatchError):
    def __init__(self, household_id: str, year: int, row: int | None = None):
        self.household_id = household_id
        self.year = year
        self.row = row
        where = f" (row {row})" if row is not None else ""
        super().__init__(f"duplicate household-year ({household_id!r}, {year}){where}")


class SchemaError(FrontierMatchError):
    pass


class ConfigError(FrontierMatchError):
    pass


class RuleViolationError(FrontierMatchError):
    """Panel contradicts the treated/control assignment rules."""


class DegenerateSampleError(FrontierMatchError):
    """A sample or group is empty where a non-empty one is required."""


class InsufficientDataError(FrontierMatchError):
    pass


class SizeLimitError(FrontierMatchError):
    pass
