"""
TRACE Nowcaster Configuration
=============================
Centralized configuration and data for the application.

Settings are pydantic models. Config files are flat `key=value` files in the
.env line syntax, read with python-dotenv; CLI `--set key=value` overrides
are layered on top.
"""

import logging
import os
from typing import Any, Dict, Iterable, List, Literal, Mapping, Optional, Tuple

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ehr.codes import EventType, LabFlag
from utils.errors import ConfigError

logger = logging.getLogger(__name__)


class Config:
    """Application configuration"""
    PAD_ID = 0
    MASK_ID = 1
    UNK_ID = 2
    PAD_TOKEN = "[PAD]"
    MASK_TOKEN = "[MASK]"
    UNK_TOKEN = "[UNK]"

    CHECKPOINT_MAGIC = b"TRACECKPT\n"
    CHECKPOINT_FORMAT_VERSION = 1

    LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"
    DEFAULT_LOG_LEVEL = os.getenv("TRACE_LOG_LEVEL", "INFO")

    EVENT_TYPES_DATA = {
        "diagnosis": "Coded diagnosis recorded during the visit",
        "procedure": "Procedure performed on the patient",
        "medication": "Drug administration",
        "lab": "Laboratory measurement with a result flag",
    }

    LAB_FLAGS_DATA = {
        "normal": "Within reference bounds",
        "abnormal": "Outside reference bounds (binary regime)",
        "low": "Below the lower reference bound",
        "high": "Above the upper reference bound",
    }

    # variant name -> (disable_decay, disable_periodic, disable_mask)
    ABLATION_VARIANTS = {
        "full": (False, False, False),
        "w/o D": (True, False, False),
        "w/o P": (False, True, False),
        "w/o DP": (True, True, False),
        "w/o DPM": (True, True, True),
    }
    ABLATION_FLAGS = {"d": "w/o D", "p": "w/o P", "dp": "w/o DP", "dpm": "w/o DPM"}


def get_event_types() -> List[Dict[str, str]]:
    """List all event types and their descriptions"""
    return [
        {"code": et.value, "description": Config.EVENT_TYPES_DATA.get(et.value, "")}
        for et in EventType
    ]


def get_lab_flags() -> List[Dict[str, str]]:
    """List all lab flags and their descriptions"""
    return [
        {"code": f.value, "description": Config.LAB_FLAGS_DATA.get(f.value, "")}
        for f in LabFlag
    ]


class TrainConfig(BaseModel):
    """Training, model and evaluation settings (one flat namespace)"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    # optimisation
    learning_rate: float = Field(1e-3, gt=0)
    batch_size: int = Field(32, ge=1)
    epochs: int = Field(20, ge=1)
    denoise_lambda: float = Field(1e-6, ge=0)
    seed: int = 7
    patience: int = Field(5, ge=1)
    adam_beta1: float = Field(0.9, ge=0, lt=1)
    adam_beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)

    # ablation
    disable_decay: bool = False
    disable_periodic: bool = False
    disable_mask: bool = False

    # split / evaluation
    train_ratio: float = Field(0.75, gt=0, lt=1)
    val_ratio: float = Field(0.10, gt=0, lt=1)
    test_ratio: float = Field(0.15, gt=0, lt=1)
    threshold: float = Field(0.5, gt=0, lt=1)
    k: int = Field(5, ge=1)

    # architecture
    d_model: int = Field(64, ge=1)
    n_heads: int = Field(4, ge=1)
    n_layers: int = Field(2, ge=1)
    d_ff: Optional[int] = Field(None, ge=1)
    m_decay: int = Field(16, ge=1)
    max_len: int = Field(256, ge=1)
    period: float = Field(24.0, gt=0)
    init_std: float = Field(0.02, gt=0)
    z_init_low: float = 4.0
    z_init_high: float = 6.0

    # data
    label_mode: Literal["code_flag", "code"] = "code_flag"
    mask_time: Literal["target", "last"] = "target"
    all_panels: bool = False

    @model_validator(mode="after")
    def _check_consistency(self) -> "TrainConfig":
        total = self.train_ratio + self.val_ratio + self.test_ratio
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"split ratios must sum to 1, got {total}")
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.z_init_low > self.z_init_high:
            raise ValueError("z_init_low must not exceed z_init_high")
        return self

    @property
    def ffn_width(self) -> int:
        return self.d_ff if self.d_ff is not None else 4 * self.d_model

    @property
    def ratios(self) -> Tuple[float, float, float]:
        return (self.train_ratio, self.val_ratio, self.test_ratio)

    def with_ablation(self, variant: str) -> "TrainConfig":
        """Copy with the ablation flags of a named variant ('full', 'w/o D', ... or 'd', 'dpm', ...)"""
        variant = Config.ABLATION_FLAGS.get(variant, variant)
        if variant not in Config.ABLATION_VARIANTS:
            allowed = ", ".join(list(Config.ABLATION_VARIANTS) + list(Config.ABLATION_FLAGS))
            raise ConfigError(f"Invalid ablation variant '{variant}'. Allowed: {allowed}")
        decay, periodic, mask = Config.ABLATION_VARIANTS[variant]
        return self.model_copy(
            update={"disable_decay": decay, "disable_periodic": periodic, "disable_mask": mask}
        )


class SynthConfig(BaseModel):
    """Synthetic trajectory generator settings"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    n_patients: int = Field(200, ge=1)
    n_lab_codes: int = Field(20, ge=1)
    n_med_codes: int = Field(8, ge=0)
    n_diag_codes: int = Field(10, ge=1)
    n_proc_codes: int = Field(6, ge=0)
    period: float = Field(24.0, gt=0)
    p_r: float = Field(0.8, ge=0, le=1)
    base_abnormal_prob: float = Field(0.15, ge=0, le=1)
    medication_effect: float = Field(0.75, ge=0, le=1)
    treatment_prob: float = Field(0.6, ge=0, le=1)
    background_med_rate: float = Field(0.5, ge=0)
    stat_prob: float = Field(0.5, ge=0, le=1)
    stat_delay: float = Field(6.0, gt=0)
    panel_size_min: int = Field(4, ge=1)
    panel_size_max: int = Field(8, ge=1)
    duration_min: float = Field(48.0, gt=0)
    duration_max: float = Field(144.0, gt=0)
    flag_regime: Literal["binary", "ternary"] = "ternary"

    @model_validator(mode="after")
    def _check_ranges(self) -> "SynthConfig":
        if self.panel_size_min > self.panel_size_max:
            raise ValueError("panel_size_min must not exceed panel_size_max")
        if self.panel_size_max > self.n_lab_codes:
            raise ValueError("panel_size_max cannot exceed n_lab_codes")
        if self.duration_min > self.duration_max:
            raise ValueError("duration_min must not exceed duration_max")
        if self.stat_delay >= self.period:
            raise ValueError("stat_delay must be shorter than the panel period")
        return self


def parse_overrides(pairs: Iterable[str]) -> Dict[str, str]:
    """Turn ['lr=0.1', 'epochs=3'] into a dict; malformed pairs are config errors"""
    overrides = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"Invalid override '{pair}'. Expected key=value")
        key, value = pair.split("=", 1)
        overrides[key.strip().lower()] = value.strip()
    return overrides


def read_config_file(path: Optional[str]) -> Dict[str, str]:
    """Read a flat key=value file; keys are lower-cased"""
    if not path:
        return {}
    if not os.path.isfile(path):
        raise ConfigError(f"Config file not found: {path}")
    values = dotenv_values(path)
    resolved = {}
    for key, value in values.items():
        if value is None:
            raise ConfigError(f"Config key '{key}' in {path} has no value")
        resolved[key.strip().lower()] = value
    return resolved


def _build(model_cls, layers: Iterable[Mapping[str, Any]]):
    merged: Dict[str, Any] = {}
    for layer in layers:
        merged.update({k: v for k, v in layer.items() if v is not None and v != ""})
    try:
        return model_cls.model_validate(merged)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"Invalid {model_cls.__name__}: {problems}") from e


def load_train_config(
    path: Optional[str] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    seed: Optional[int] = None,
) -> TrainConfig:
    """defaults < config file < overrides < explicit seed"""
    return _build(TrainConfig, [read_config_file(path), overrides or {}, {"seed": seed}])


def load_synth_config(
    path: Optional[str] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> SynthConfig:
    return _build(SynthConfig, [read_config_file(path), overrides or {}])


def render_config(config: BaseModel) -> str:
    """Resolved config as key=value lines (sorted), readable by load_*_config"""
    lines = []
    for key, value in sorted(config.model_dump().items()):
        if value is None:
            continue
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"
