"""
Enumerations shared by the EHR domain model
"""

from enum import Enum


class EventType(Enum):
    """Kind of medical event recorded in a visit trajectory"""
    DIAGNOSIS = "diagnosis"
    PROCEDURE = "procedure"
    MEDICATION = "medication"
    LAB = "lab"


class LabFlag(Enum):
    """Qualitative lab result annotation"""
    NORMAL = "normal"
    ABNORMAL = "abnormal"  # binary regime
    LOW = "low"            # reference-bound regime
    HIGH = "high"


class FlagRegime(Enum):
    """Which flag vocabulary a dataset uses"""
    BINARY = "binary"      # normal / abnormal
    TERNARY = "ternary"    # low / normal / high


class LabelMode(Enum):
    """Granularity of the prediction targets"""
    CODE_FLAG = "code_flag"  # e.g. "UreaNitrogen:high"
    CODE = "code"            # flag dropped


class MaskTime(Enum):
    """Timestamp carried by the appended mask token"""
    TARGET = "target"  # t_{k+1}, the scheduled draw time
    LAST = "last"      # t_k, strict nowcast


FLAGS_BY_REGIME = {
    FlagRegime.BINARY: (LabFlag.NORMAL, LabFlag.ABNORMAL),
    FlagRegime.TERNARY: (LabFlag.LOW, LabFlag.NORMAL, LabFlag.HIGH),
}
