"""Exception types raised across the package."""


class MarlHospitalError(Exception):
    pass


class InconsistentState(MarlHospitalError):
    """A WorldState violates item conservation, occupancy or stacking rules."""


class ZeroSkill(MarlHospitalError):
    pass


class Unsatisfiable(MarlHospitalError):
    pass


class UnknownSubtask(MarlHospitalError, KeyError):
    pass


class NonCanonicalLayout(MarlHospitalError):
    pass


class NaNDetected(MarlHospitalError, FloatingPointError):
    pass


class MonotonicityViolation(MarlHospitalError):
    pass


class HashMismatch(MarlHospitalError):
    pass


class ConfigError(MarlHospitalError, ValueError):
    pass
