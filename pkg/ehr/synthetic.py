"""
Synthetic visit generator with planted temporal structure
=========================================================
Stands in for access-restricted hospital data. Each patient gets one visit
with:

(a) routine lab panels at t = phase_p + j * period, so targets are periodic;
(b) recency: a lab abnormal at one panel recurs with the same flag at the next
    panel with probability p_r, otherwise it is a fresh draw;
(c) cross-event effect: medication M_j given between two panels scales the
    abnormal probability of its paired lab L_j by (1 - medication_effect);
(d) stat rechecks: after a panel with abnormal results, with probability
    stat_prob only the abnormal labs are redrawn stat_delay hours later,
    off the routine phase.

Output is a deterministic function of (config, seed).
"""

import logging
from typing import Dict, List, Sequence, Set

import numpy as np
import pandas as pd

from config import SynthConfig
from ehr.codes import FLAGS_BY_REGIME, EventType, FlagRegime, LabelMode, LabFlag
from ehr.trajectory import MedicalEvent, NowcastInstance, Trajectory

logger = logging.getLogger(__name__)

TIME_DECIMALS = 2


def lab_code(j: int) -> str:
    return f"LAB{j:02d}"


def med_code(j: int) -> str:
    return f"MED{j:02d}"


def medication_effect_table(config: SynthConfig) -> Dict[str, str]:
    """Medication code -> paired lab code (M_j treats L_j)"""
    return {med_code(j): lab_code(j) for j in range(min(config.n_med_codes, config.n_lab_codes))}


def _t(value: float) -> float:
    return round(float(value), TIME_DECIMALS)


class _VisitSimulator:
    """Draws one visit; every random draw comes from the shared generator in a fixed order"""

    def __init__(self, config: SynthConfig, rng: np.random.Generator):
        self.config = config
        self.rng = rng
        self.regime = FlagRegime(config.flag_regime)
        self.treats = medication_effect_table(config)

    def _abnormal_flag(self) -> LabFlag:
        choices = [f for f in FLAGS_BY_REGIME[self.regime] if f is not LabFlag.NORMAL]
        if len(choices) == 1:
            return choices[0]
        return choices[0] if self.rng.random() < 0.5 else choices[1]

    def _draw_flag(self, lab: str, previous: Dict[str, LabFlag], treated: Set[str], direction: LabFlag) -> LabFlag:
        cfg = self.config
        factor = (1.0 - cfg.medication_effect) if lab in treated else 1.0
        recur = self.rng.random() < cfg.p_r * factor
        if lab in previous and recur:
            return previous[lab]
        return direction if self.rng.random() < cfg.base_abnormal_prob * factor else LabFlag.NORMAL

    def simulate(self, patient_idx: int) -> Trajectory:
        cfg, rng = self.config, self.rng
        duration = float(rng.uniform(cfg.duration_min, cfg.duration_max))
        phase = float(rng.uniform(0.0, cfg.period))
        panel_size = int(rng.integers(cfg.panel_size_min, cfg.panel_size_max + 1))
        panel = [lab_code(int(j)) for j in sorted(rng.choice(cfg.n_lab_codes, panel_size, replace=False))]
        directions = {lab: self._abnormal_flag() for lab in panel}

        events: List[MedicalEvent] = []
        n_diag = int(rng.integers(1, min(3, cfg.n_diag_codes) + 1))
        for j in sorted(rng.choice(cfg.n_diag_codes, n_diag, replace=False)):
            events.append(MedicalEvent(f"DX{int(j):02d}", EventType.DIAGNOSIS, 0.0))

        if cfg.n_proc_codes:
            for _ in range(int(rng.poisson(1.0))):
                code = f"PX{int(rng.integers(cfg.n_proc_codes)):02d}"
                events.append(MedicalEvent(code, EventType.PROCEDURE, _t(rng.uniform(0.0, duration))))

        panel_times = []
        t = phase
        while t <= duration:
            panel_times.append(t)
            t += cfg.period

        previous: Dict[str, LabFlag] = {}
        treated: Set[str] = set()
        for i, t_panel in enumerate(panel_times):
            flags = {lab: self._draw_flag(lab, previous, treated, directions[lab]) for lab in panel}
            for lab in panel:
                events.append(MedicalEvent(lab, EventType.LAB, _t(t_panel), flags[lab]))

            abnormal = {lab: f for lab, f in flags.items() if f is not LabFlag.NORMAL}
            t_next = panel_times[i + 1] if i + 1 < len(panel_times) else duration

            if abnormal and rng.random() < cfg.stat_prob and t_panel + cfg.stat_delay <= duration:
                for lab, flag in abnormal.items():
                    recheck = flag if rng.random() < cfg.p_r else LabFlag.NORMAL
                    events.append(MedicalEvent(lab, EventType.LAB, _t(t_panel + cfg.stat_delay), recheck))

            treated = self._medicate(events, abnormal, t_panel, t_next)
            previous = abnormal

        return Trajectory.from_events(f"P{patient_idx:04d}", f"V{patient_idx:04d}", events)

    def _medicate(self, events: List[MedicalEvent], abnormal: Dict[str, LabFlag], start: float, end: float) -> Set[str]:
        """Treatment of abnormal labs plus background meds in (start, end); returns treated lab codes"""
        cfg, rng = self.config, self.rng
        if cfg.n_med_codes == 0 or end - start <= 1.0:
            return set()

        given = []
        for med, lab in self.treats.items():
            if lab in abnormal and rng.random() < cfg.treatment_prob:
                given.append(med)
        for _ in range(int(rng.poisson(cfg.background_med_rate))):
            given.append(med_code(int(rng.integers(cfg.n_med_codes))))

        treated = set()
        for med in given:
            events.append(MedicalEvent(med, EventType.MEDICATION, _t(rng.uniform(start + 0.5, end - 0.5))))
            if med in self.treats:
                treated.add(self.treats[med])
        return treated


def generate_synthetic(config: SynthConfig, seed: int) -> List[Trajectory]:
    """Deterministic synthetic trajectories for (config, seed)"""
    rng = np.random.default_rng(seed)
    simulator = _VisitSimulator(config, rng)
    trajectories = [simulator.simulate(p) for p in range(config.n_patients)]
    logger.info(
        "Generated %d synthetic visits (%d events, seed=%d)",
        len(trajectories),
        sum(len(t.events) for t in trajectories),
        seed,
    )
    return trajectories


def label_marginals(instances: Sequence[NowcastInstance], label_mode: LabelMode = LabelMode.CODE_FLAG) -> pd.Series:
    """Fraction of instances whose target group contains each label, sorted by label"""
    if not instances:
        return pd.Series(dtype=float, name="marginal")
    rows = [dict.fromkeys(inst.target_labels(label_mode), 1) for inst in instances]
    frame = pd.DataFrame(rows).fillna(0)
    marginals = frame.mean(axis=0).sort_index()
    marginals.name = "marginal"
    return marginals
