"""
Visit trajectories and nowcast instances
========================================
A trajectory is the time-ordered list of medical events of one (patient,
visit). The nowcast target is the final group of lab events sharing the last
lab timestamp; everything strictly earlier is history.

Trajectory file format: UTF-8, one JSON object per line:
    {"patient_id": "p1", "visit_id": "v1",
     "events": [{"code": "L1", "type": "lab", "flag": "high", "t": 2.0}, ...]}
"""

import json
import logging
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ehr.codes import EventType, LabelMode, LabFlag
from utils.errors import ContractError, ParseError, SchemaError
from utils.io import atomic_write_text
from utils.validation import (
    validate_code,
    validate_event_type,
    validate_flag,
    validate_identifier,
    validate_timestamp,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MedicalEvent:
    """One coded event; labs carry a result flag"""
    code: str
    event_type: EventType
    t: float
    flag: Optional[LabFlag] = None

    def __post_init__(self):
        if (self.flag is not None) != (self.event_type is EventType.LAB):
            raise SchemaError(f"flag present iff event is a lab (code={self.code}, type={self.event_type.value})")
        if self.t < 0:
            raise SchemaError(f"negative timestamp {self.t} for code {self.code}")

    @property
    def is_lab(self) -> bool:
        return self.event_type is EventType.LAB

    @property
    def input_token(self) -> str:
        """Labs are tokenised as code:flag since the observed result is history"""
        if self.is_lab:
            return f"{self.code}:{self.flag.value}"
        return self.code

    def label_token(self, label_mode: LabelMode = LabelMode.CODE_FLAG) -> str:
        if not self.is_lab:
            raise ContractError(f"only lab events have labels, got {self.event_type.value}")
        if label_mode is LabelMode.CODE:
            return self.code
        return f"{self.code}:{self.flag.value}"

    def to_dict(self) -> Dict[str, Any]:
        record: Dict[str, Any] = {"code": self.code, "type": self.event_type.value}
        if self.flag is not None:
            record["flag"] = self.flag.value
        record["t"] = self.t
        return record


@dataclass(frozen=True)
class Trajectory:
    """Events of one (patient, visit), sorted by t (non-decreasing)"""
    patient_id: str
    visit_id: str
    events: Tuple[MedicalEvent, ...]

    def __post_init__(self):
        for prev, cur in zip(self.events, self.events[1:]):
            if cur.t < prev.t:
                raise ContractError(f"trajectory {self.patient_id}/{self.visit_id} events are not sorted by t")

    @classmethod
    def from_events(cls, patient_id: str, visit_id: str, events: Iterable[MedicalEvent]) -> "Trajectory":
        """Stable sort by timestamp, so same-time events keep their recorded order"""
        return cls(patient_id, visit_id, tuple(sorted(events, key=lambda e: e.t)))

    @property
    def lab_events(self) -> List[MedicalEvent]:
        return [e for e in self.events if e.is_lab]

    def lab_times(self) -> List[float]:
        """Distinct lab timestamps, ascending"""
        return sorted({e.t for e in self.events if e.is_lab})

    def to_dict(self) -> Dict[str, Any]:
        return {
            "patient_id": self.patient_id,
            "visit_id": self.visit_id,
            "events": [e.to_dict() for e in self.events],
        }


@dataclass(frozen=True)
class NowcastInstance:
    """History up to t_k and the lab group observed at t_{k+1}"""
    patient_id: str
    visit_id: str
    history: Tuple[MedicalEvent, ...]
    target_time: float
    targets: Tuple[MedicalEvent, ...]

    @property
    def last_history_time(self) -> float:
        return self.history[-1].t

    def target_labels(self, label_mode: LabelMode = LabelMode.CODE_FLAG) -> List[str]:
        """Distinct target labels in first-seen order"""
        return list(dict.fromkeys(e.label_token(label_mode) for e in self.targets))


# ---------------------------------------------------------------------------
# parsing / serialisation
# ---------------------------------------------------------------------------

def _require(result: Tuple[bool, Optional[str]], line_no: int, field: str, schema: bool = False) -> None:
    is_valid, error_msg = result
    if not is_valid:
        raise (SchemaError if schema else ParseError)(error_msg, line_no=line_no, field=field)


def _parse_event(raw: Any, line_no: int, index: int) -> MedicalEvent:
    prefix = f"events[{index}]"
    if not isinstance(raw, dict):
        raise ParseError("event must be an object", line_no=line_no, field=prefix)

    code = raw.get("code")
    _require(validate_code(code), line_no, f"{prefix}.code")

    event_type = raw.get("type")
    _require(validate_event_type(event_type), line_no, f"{prefix}.type")

    t = raw.get("t")
    _require(validate_timestamp(t), line_no, f"{prefix}.t")

    flag = raw.get("flag")
    _require(validate_flag(flag, event_type), line_no, f"{prefix}.flag", schema=True)

    return MedicalEvent(
        code=code,
        event_type=EventType(event_type),
        t=float(t),
        flag=LabFlag(flag) if flag is not None else None,
    )


def parse_trajectory_line(line: str, line_no: int = 1) -> Trajectory:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", line_no=line_no, field="record") from e
    if not isinstance(record, dict):
        raise ParseError("record must be an object", line_no=line_no, field="record")

    for field in ("patient_id", "visit_id"):
        _require(validate_identifier(record.get(field), field), line_no, field)

    raw_events = record.get("events")
    if not isinstance(raw_events, list):
        raise ParseError("events must be an array", line_no=line_no, field="events")

    events = [_parse_event(raw, line_no, i) for i, raw in enumerate(raw_events)]
    return Trajectory.from_events(record["patient_id"], record["visit_id"], events)


def parse_trajectory_file(path: str) -> List[Trajectory]:
    """
    Parse a line-delimited trajectory file.

    Raises:
        OSError: file cannot be read
        ParseError / SchemaError: malformed record, with line number and field
    """
    trajectories = []
    with open(path, "rb") as f:
        for line_no, raw in enumerate(f, start=1):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as e:
                raise ParseError(f"invalid UTF-8: {e.reason}", line_no=line_no, field="record") from e
            if not line.strip():
                continue
            trajectories.append(parse_trajectory_line(line, line_no))
    logger.info("Parsed %d trajectories from %s", len(trajectories), path)
    return trajectories


def serialize_trajectory(traj: Trajectory) -> str:
    """One compact JSON line, fixed key order"""
    return json.dumps(traj.to_dict(), separators=(",", ":"), ensure_ascii=False)


def write_trajectory_file(path: str, trajectories: Sequence[Trajectory]) -> None:
    atomic_write_text(path, "".join(serialize_trajectory(t) + "\n" for t in trajectories))


# ---------------------------------------------------------------------------
# instance extraction
# ---------------------------------------------------------------------------

def _instance_at(traj: Trajectory, target_time: float) -> Optional[NowcastInstance]:
    history = tuple(e for e in traj.events if e.t < target_time)
    if not history:
        return None
    targets = tuple(e for e in traj.events if e.is_lab and e.t == target_time)
    return NowcastInstance(traj.patient_id, traj.visit_id, history, target_time, targets)


def extract_instance(traj: Trajectory) -> Optional[NowcastInstance]:
    """
    Target = final maximal group of lab events sharing the last lab timestamp.
    Returns None when the trajectory has no lab or the history would be empty.
    """
    lab_times = traj.lab_times()
    if not lab_times:
        return None
    return _instance_at(traj, lab_times[-1])


def extract_instances(traj: Trajectory, all_panels: bool = False) -> List[NowcastInstance]:
    """The final-group instance, plus one per intermediate lab group when all_panels is set"""
    times = traj.lab_times() if all_panels else traj.lab_times()[-1:]
    instances = []
    for t in times:
        instance = _instance_at(traj, t)
        if instance is not None:
            instances.append(instance)
    return instances


def build_instances(trajectories: Iterable[Trajectory], all_panels: bool = False) -> List[NowcastInstance]:
    instances = []
    skipped = 0
    for traj in trajectories:
        found = extract_instances(traj, all_panels)
        if not found:
            skipped += 1
        instances.extend(found)
    if skipped:
        logger.warning("Skipped %d trajectories without a usable lab target", skipped)
    return instances


def window(history: Sequence[MedicalEvent], max_len: int) -> List[MedicalEvent]:
    """Most recent max_len events, order preserved"""
    if max_len < 1:
        raise ContractError(f"window length must be >= 1, got {max_len}")
    return list(history[-max_len:])


def median_panel_gap(trajectories: Iterable[Trajectory]) -> Optional[float]:
    """Median gap between consecutive lab timestamps across all trajectories"""
    gaps = []
    for traj in trajectories:
        times = traj.lab_times()
        gaps.extend(b - a for a, b in zip(times, times[1:]))
    if not gaps:
        return None
    return float(np.median(gaps))
