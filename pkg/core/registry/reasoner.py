"""
Rule-based strategy design.

A rule table is an ordered list of rules; each rule names the context facts it
needs (``when``) and the strategy fields it sets (``set``). Matching rules are
applied in ascending (priority, position) order over a default strategy, so
the highest priority wins any field two rules both set.
"""
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import yaml
from pydantic import Field, field_validator

from core.config import StrategyDefaults
from core.models import (
    ALWAYS_ON,
    AcquisitionFrequency,
    AcquisitionResponsibility,
    Credentials,
    Record,
    SensingStrategy,
    SensorMode,
    SensorProfile,
    parse_schedule,
)
from core.registry.store import RegistryError
from core.schemas import SchemaError, validate_document

logger = logging.getLogger(__name__)

PHENOMENON_FACT = "phenomenon"


class StrategyInfeasible(RegistryError):
    """Rule effects force the sampling interval outside the sensor's range."""

    def __init__(self, uid: str, sampling_s: float, rules: List[str]):
        super().__init__(f"sampling {sampling_s}s is outside the range of {uid} (rules: {', '.join(rules) or 'none'})")
        self.uid = uid
        self.sampling_s = sampling_s
        self.rules = rules


class RuleTableError(RegistryError):
    """The rule table file is missing or invalid."""

    def __init__(self, message: str, path: Optional[Path] = None):
        super().__init__(message)
        self.path = path


class ContextRule(Record):
    id: str = Field(min_length=1)
    priority: int = 0
    description: str = ""
    when: Dict[str, List[str]] = Field(default_factory=dict)
    set: Dict[str, Any] = Field(min_length=1)

    @field_validator("when", mode="before")
    @classmethod
    def _as_lists(cls, value: Dict[str, Union[Any, List[Any]]]) -> Dict[str, List[str]]:
        return {key: [str(v) for v in (items if isinstance(items, list) else [items])]
                for key, items in (value or {}).items()}

    def matches(self, facts: Dict[str, str], phenomena: Sequence[str]) -> bool:
        for key, accepted in self.when.items():
            if key == PHENOMENON_FACT:
                if not any(p in accepted for p in phenomena):
                    return False
            elif facts.get(key) not in accepted:
                return False
        return True


class RuleTable:
    """Immutable ordered rule set."""

    def __init__(self, rules: Sequence[ContextRule]):
        self.rules = tuple(rules)
        # Stable sort keeps table position as the tie-breaker
        self._ordered = tuple(sorted(self.rules, key=lambda rule: rule.priority))

    def __len__(self) -> int:
        return len(self.rules)

    def matching(self, facts: Dict[str, str], phenomena: Sequence[str]) -> List[ContextRule]:
        """Matching rules in application order (lowest priority first)."""
        return [rule for rule in self._ordered if rule.matches(facts, phenomena)]

    @classmethod
    def from_data(cls, data: Dict[str, Any], source: str = "<rules>") -> "RuleTable":
        try:
            validate_document(data, "rule_table.yaml", source)
        except SchemaError as e:
            raise RuleTableError(str(e))
        return cls([ContextRule.from_dict(item) for item in data["rules"]])

    @classmethod
    def from_file(cls, path: Path) -> "RuleTable":
        """
        Load and validate a rule table.

        Raises:
            RuleTableError: Naming the path if it is missing or invalid
        """
        path = Path(path)
        if not path.exists():
            raise RuleTableError(f"Rule table not found: {path}", path)
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise RuleTableError(f"Invalid YAML in rule table {path}: {e}", path)
        try:
            table = cls.from_data(data, str(path))
        except RuleTableError as e:
            raise RuleTableError(str(e), path)
        logger.info(f"Loaded {len(table)} context rules from {path}")
        return table


class Reasoner:
    """Designs a sensing strategy from a profile and context facts."""

    def __init__(self, rules: RuleTable, defaults: Optional[StrategyDefaults] = None):
        self.rules = rules
        self.defaults = defaults or StrategyDefaults()

    def reason(self, profile: SensorProfile, facts: Dict[str, str],
               credentials: Optional[Credentials] = None) -> SensingStrategy:
        """
        Apply matching rules over the default strategy.

        Raises:
            StrategyInfeasible: If an active strategy's sampling falls outside the profile range
        """
        matched = self.rules.matching(facts, profile.phenomena)
        fields: Dict[str, Any] = {}
        for rule in matched:
            fields.update(rule.set)
        rule_ids = [rule.id for rule in matched]

        mode = SensorMode(fields.get("mode", self.defaults.mode))
        sampling = float(fields.get("sampling", profile.sampling_range.midpoint))
        window = profile.sampling_range
        if not window.contains(sampling):
            if mode == SensorMode.ACTIVE:
                raise StrategyInfeasible(profile.identity.uid, sampling, rule_ids)
            # a sleeping sensor never samples; keep the value acceptable to it
            sampling = min(max(sampling, window.min_s), window.max_s)

        commfreq = float(fields.get("commfreq", self.defaults.commfreq_factor * sampling))
        commfreq = max(commfreq, sampling)

        schedule = fields.get("schedule", ALWAYS_ON) if profile.supports_schedules else ALWAYS_ON

        strategy = SensingStrategy(
            sampling_s=sampling,
            schedule=parse_schedule(schedule),
            commfreq_s=commfreq,
            acq_resp=AcquisitionResponsibility(fields.get("acq_resp", self.defaults.acq_resp)),
            acq_freq=AcquisitionFrequency(fields.get("acq_freq", self.defaults.acq_freq)),
            mode=mode,
            credentials=credentials,
        )
        logger.debug(f"Strategy for {profile.identity.uid}: sampling={sampling:g}s mode={mode.value} "
                     f"rules={rule_ids}")
        return strategy
