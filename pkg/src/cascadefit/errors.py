"""Exception types shared across the package."""


class CascadeFitError(Exception):
    """Base class for all cascadefit errors."""


class StiffnessError(CascadeFitError):
    """An integration step produced a negative compartment beyond tolerance."""

    def __init__(self, compartment: int, time: float):
        self.compartment = compartment
        self.time = time
        super().__init__(
            f"compartment {compartment} went negative beyond tolerance "
            f"at t={time:.6g} h; step size too large for these parameters"
        )


class DivergenceError(CascadeFitError):
    """The integrator produced a non-finite state."""

    def __init__(self, compartment: int, time: float):
        self.compartment = compartment
        self.time = time
        super().__init__(f"non-finite value in compartment {compartment} at t={time:.6g} h")


class ParseError(CascadeFitError):
    """A malformed event-log line in strict mode."""

    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class DuplicateIdError(CascadeFitError):
    """Two events in one log share an id."""

    def __init__(self, event_id: str, line_no: int):
        self.event_id = event_id
        self.line_no = line_no
        super().__init__(f"duplicate event id {event_id!r} at line {line_no}")


class ClockSkewError(CascadeFitError):
    """Events timestamped earlier than their cascade root."""

    def __init__(self, offenders: list):
        self.offenders = list(offenders)
        ids = ", ".join(str(x) for x in self.offenders[:5])
        more = "" if len(self.offenders) <= 5 else f" (+{len(self.offenders) - 5} more)"
        super().__init__(f"{len(self.offenders)} event(s) precede the root: {ids}{more}")


class DegenerateTargetError(CascadeFitError):
    """The observed series is all-zero; nothing to fit against."""


class DegenerateTestError(CascadeFitError):
    """All values identical across both samples; rank test has zero variance."""


class FitFailedError(CascadeFitError):
    """Every optimizer start returned a non-finite objective."""
