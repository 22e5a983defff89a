"""Trial input records and run configuration."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, fields, replace
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any

from .combinatorics import Design, InvariantError, StratumCounts, TrialOutcome
from .criteria import M_POLICIES, ConfigError
from .rules import UtilitySpec

TRIAL_FIELDS = ("n", "m", "x_I1", "x_I0", "x_C1", "x_C0", "label")


@dataclass(frozen=True)
class TrialRecord:
    n: int
    m: int
    x_I1: int
    x_I0: int
    x_C1: int
    x_C0: int
    label: str | None = None

    @property
    def design(self) -> Design:
        return Design(self.n, self.m)

    @property
    def outcome(self) -> TrialOutcome:
        return TrialOutcome(self.x_I1, self.x_I0, self.x_C1, self.x_C0)

    def validate(self) -> "TrialRecord":
        """Raise InvariantError naming the broken margin; return self otherwise."""
        self.outcome.check(self.design)
        return self

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrialRecord":
        return cls.from_mapping(json.loads(text))

    @classmethod
    def from_mapping(cls, data: dict[str, Any]) -> "TrialRecord":
        missing = [k for k in TRIAL_FIELDS[:6] if k not in data]
        if missing:
            raise InvariantError(f"trial record is missing {', '.join(missing)}")
        ints = {k: int(data[k]) for k in TRIAL_FIELDS[:6]}
        label = data.get("label")
        return cls(**ints, label=label if label not in ("", None) else None)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRIAL_FIELDS)
        w.writerow([getattr(self, k) if getattr(self, k) is not None else "" for k in TRIAL_FIELDS])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TrialRecord":
        rows = list(csv.DictReader(io.StringIO(text)))
        if len(rows) != 1:
            raise InvariantError(f"trial CSV must hold exactly one record, found {len(rows)}")
        return cls.from_mapping(rows[0])

    @classmethod
    def load(cls, path: str | Path) -> "TrialRecord":
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        if path.suffix.lower() == ".csv":
            return cls.from_csv(text)
        return cls.from_json(text)


def sepsis_trial() -> TrialRecord:
    """The bundled 28-patient high-dose vitamin C sepsis trial."""
    text = resources.files("exactdecision").joinpath("data/sepsis.json").read_text(encoding="utf-8")
    return TrialRecord.from_json(text)


PRIOR_KINDS = ("uniform", "point", "file")
FORMATS = ("csv", "json")


@dataclass(frozen=True)
class RunConfig:
    efficacy_weight: str = "1/2"
    unsafe_weight: str = "1"
    per_participant: bool = True
    prior: str = "uniform"
    prior_point: tuple[int, int, int, int] | None = None
    prior_file: str | None = None
    m_policy: str = "half"
    digits: int = 3
    format: str = "json"
    workers: int = 1
    top_k: int = 5
    deterministic: bool = True

    def validate(self) -> "RunConfig":
        for name in ("efficacy_weight", "unsafe_weight"):
            try:
                w = Fraction(getattr(self, name))
            except (ValueError, ZeroDivisionError) as exc:
                raise ConfigError(name, f"not a rational number: {getattr(self, name)!r}") from exc
            if w <= 0:
                raise ConfigError(name, f"must be positive, got {w}")
        if self.prior not in PRIOR_KINDS:
            raise ConfigError("prior", f"unknown prior {self.prior!r}; valid: {', '.join(PRIOR_KINDS)}")
        if self.prior == "point":
            if self.prior_point is None or len(self.prior_point) != 4 or min(self.prior_point) < 0:
                raise ConfigError("prior_point", "point prior needs four non-negative stratum counts")
        if self.prior == "file" and not self.prior_file:
            raise ConfigError("prior_file", "file prior needs a path")
        if self.m_policy not in M_POLICIES:
            raise ConfigError("m_policy", f"unknown policy {self.m_policy!r}; valid: {', '.join(M_POLICIES)}")
        if not isinstance(self.digits, int) or not 0 <= self.digits <= 30:
            raise ConfigError("digits", f"must be an integer in 0..30, got {self.digits!r}")
        if self.format not in FORMATS:
            raise ConfigError("format", f"unknown format {self.format!r}; valid: {', '.join(FORMATS)}")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ConfigError("workers", f"must be a positive integer, got {self.workers!r}")
        if not isinstance(self.top_k, int) or self.top_k < 1:
            raise ConfigError("top_k", f"must be a positive integer, got {self.top_k!r}")
        if self.deterministic is not True:
            raise ConfigError("deterministic", "every run is exhaustive and seedless; it cannot be turned off")
        return self

    @property
    def spec(self) -> UtilitySpec:
        return UtilitySpec(Fraction(self.efficacy_weight), Fraction(self.unsafe_weight), self.per_participant)

    def prior_for(self, design: Design) -> dict[StratumCounts, Fraction] | None:
        """The prior over strata for ``design``; None stands for uniform."""
        if self.prior == "uniform":
            return None
        if self.prior == "point":
            theta = StratumCounts(*self.prior_point)
            if theta.total != design.n:
                raise ConfigError("prior_point", f"{tuple(theta)} does not sum to n={design.n}")
            return {theta: Fraction(1)}
        return load_prior_file(self.prior_file, design)

    def merged(self, overrides: dict[str, Any]) -> "RunConfig":
        """Copy with every non-None override applied (CLI flags over file values)."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from exc
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(unknown[0], "not a configuration field")
        if data.get("prior_point") is not None:
            data["prior_point"] = tuple(data["prior_point"])
        for k in ("efficacy_weight", "unsafe_weight"):
            if k in data:
                data[k] = str(data[k])
        return cls(**data)


def load_prior_file(path: str | Path, design: Design) -> dict[StratumCounts, Fraction]:
    """Read ``[{"theta": [a, b, c, d], "mass": "p/q"}, ...]`` for one n."""
    try:
        entries = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("prior_file", f"cannot read {path}: {exc}") from exc
    prior: dict[StratumCounts, Fraction] = {}
    for e in entries:
        theta = StratumCounts(*e["theta"])
        if theta.total != design.n:
            continue
        prior[theta] = prior.get(theta, Fraction(0)) + Fraction(str(e["mass"]))
    if not prior:
        raise ConfigError("prior_file", f"no strata for n={design.n} in {path}")
    if sum(prior.values()) != 1 or min(prior.values()) < 0:
        raise ConfigError("prior_file", f"masses for n={design.n} must be non-negative and sum to 1")
    return prior
