from .base import LineProtocol
from .logfile import LogFileProtocol

__all__ = ["LineProtocol", "LogFileProtocol"]
