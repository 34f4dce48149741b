class CarnotException(Exception):
    """
    Represents an ``error`` outcome of an estimator or of input handling.
    The payload is a dictionary so the CLI can emit it as a report entry.
    """

    code = "carnot_error"

    def __init__(self, exception, **details):
        if isinstance(exception, str):
            exception = {
                "status": "error",
                "code": self.code,
                "message": exception,
                **details,
            }
        self.exception = exception
        super().__init__(exception.get("message"))

    def get_exception(self):
        return self.exception

    def get_status(self):
        if self.exception.get("status"):
            return self.exception["status"]

    def get_code(self):
        if self.exception.get("code"):
            return self.exception["code"]

    def get_message(self):
        if self.exception.get("message"):
            return self.exception["message"]


class InputError(CarnotException, ValueError):
    """Invalid arguments: dimension or algebra mismatch, bad parameters, bad files."""

    code = "input_error"


class CharacteristicPointError(InputError):
    """A level-set operation was asked to work at a characteristic point."""

    code = "characteristic_point"


class SolverError(CarnotException):
    """The horizontal path solver never met its endpoint tolerance."""

    code = "solver_error"


class EmptySlabError(CarnotException):
    code = "empty_slab"
