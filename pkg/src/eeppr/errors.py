"""Exception hierarchy shared by every eeppr module."""


class EepprError(Exception):
    """Base class for all package errors."""


class OutOfRangeEvent(EepprError, ValueError):
    def __init__(self, index: int, detail: str = ""):
        self.index = index
        msg = f"event {index} lies outside the sensor geometry"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class NegativeTimestamp(EepprError, ValueError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"event {index} has a negative timestamp")


class EmptyStream(EepprError):
    pass


class InvalidROI(EepprError, ValueError):
    pass


class WindowTooLarge(EepprError, ValueError):
    pass


class TemplateDeeperThanArea(EepprError, ValueError):
    pass


class TemplateRejected(EepprError):
    """A window whose correlation template cannot be formed.

    ``reason`` is one of ``"EmptyWindow"`` or ``"InsufficientEvents"``.
    """

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


class NoValidWindows(EepprError):
    pass


class NoEstimate(EepprError):
    pass


class InvalidSpec(EepprError, ValueError):
    pass


class ParseError(EepprError, ValueError):
    def __init__(self, line_no: int, detail: str = ""):
        self.line_no = line_no
        msg = f"line {line_no}"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class BadMagic(EepprError, ValueError):
    pass


class TruncatedFile(EepprError, ValueError):
    pass


class CountMismatch(EepprError, ValueError):
    pass


class UnsortedEvents(EepprError, ValueError):
    pass
