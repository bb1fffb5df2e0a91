import configparser
import os
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from lockutils.errors import ConfigError


class NumericsConfig(BaseModel):
    """
    Numerical tolerances shared by every service.

    Attributes:
        norm_tol (float): Tolerance on norms and orthogonality.
        prob_tol (float): Tolerance on probabilities and completeness.
        prune_threshold (float): Branches below this probability are dropped.
        certificate_tol (float): Tolerance on certificate residuals and fidelities.
    """
    norm_tol: float = Field(1e-12, description="Norm / orthogonality tolerance.")
    prob_tol: float = Field(1e-9, description="Probability and completeness tolerance.")
    prune_threshold: float = Field(1e-15, description="Measurement branches below this are pruned.")
    certificate_tol: float = Field(1e-9, description="Residual and fidelity tolerance for certificates.")


class AuditConfig(BaseModel):
    """
    Bounds for exhaustive enumerations.

    Attributes:
        max_enumeration_m (int): enumerate_partitions refuses larger m unless overridden.
        max_audit_m (int): audit_all exhaustive mode bound.
        max_workers (int): Thread pool size for audits and evaluations.
    """
    max_enumeration_m: int = Field(10, description="Bell(10)=115975 partitions at most.")
    max_audit_m: int = Field(8, description="Largest m for an exhaustive audit.")
    max_workers: int = Field(default_factory=lambda: os.cpu_count() or 4)


def _default_seed() -> int:
    try:
        return int(os.environ.get("LOCKLAB_SEED", "0"))
    except ValueError:
        return 0


class HarnessConfig(BaseModel):
    default_seed: int = Field(default_factory=_default_seed, description="Seed used when none is given.")
    sample_count: int = Field(64, ge=0, description="Seeded sample runs checked against the exact evaluation.")


NUMERICS = NumericsConfig()
AUDIT = AuditConfig()
HARNESS = HarnessConfig()


class ScenarioConfig(BaseModel):
    """
    One harness scenario.

    Attributes:
        m (int): Number of parties (one qubit each).
        set_path (Optional[str]): State-set file; the built-in locked set when None.
        secret (Union[int, "random"]): Message index, or drawn from the seed.
        coalition (Optional[List[int]]): Members of the attacking coalition.
        bell_budget (int): Bell pairs the broker may grant.
        seed (int): Seed for every random draw of the run.
    """
    m: int = Field(..., ge=3)
    set_path: Optional[str] = None
    secret: Union[int, Literal["random"]] = "random"
    coalition: Optional[List[int]] = None
    bell_budget: int = Field(0, ge=0)
    seed: int = Field(default_factory=_default_seed)

    @field_validator("secret")
    @classmethod
    def _secret_nonnegative(cls, value):
        if isinstance(value, int) and value < 0:
            raise ValueError("secret must be >= 0")
        return value

    @model_validator(mode="after")
    def _coalition_in_range(self):
        if self.coalition is not None:
            if any(p < 1 or p > self.m for p in self.coalition):
                raise ValueError(f"coalition members must lie in 1..{self.m}")
        return self


def _parse_members(text: str) -> List[int]:
    text = text.strip()
    if "," in text or " " in text:
        return [int(tok) for tok in text.replace(",", " ").split()]
    return [int(ch) for ch in text]


def load_scenario(path: str) -> ScenarioConfig:
    """
    Reads a scenario file made of `[section]` headers and `key=value` lines.

    Sections: [system] m, set; [secret] value; [coalition] members;
    [resources] bell_budget; [rng] seed.

    Raises:
        ConfigError: If the file is missing, malformed or fails validation.
    """
    if not os.path.exists(path):
        raise ConfigError(f"Scenario file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as e:
        raise ConfigError(f"Malformed scenario file {path}: {e}")

    if not parser.has_option("system", "m"):
        raise ConfigError("Scenario is missing [system] m")
    fields = {}
    try:
        fields["m"] = parser.getint("system", "m")
        if parser.has_option("system", "set"):
            fields["set_path"] = parser.get("system", "set")
        if parser.has_option("secret", "value"):
            raw = parser.get("secret", "value").strip()
            fields["secret"] = "random" if raw == "random" else int(raw)
        if parser.has_option("coalition", "members"):
            members = parser.get("coalition", "members").strip()
            if members:
                fields["coalition"] = _parse_members(members)
        if parser.has_option("resources", "bell_budget"):
            fields["bell_budget"] = parser.getint("resources", "bell_budget")
        if parser.has_option("rng", "seed"):
            fields["seed"] = parser.getint("rng", "seed")
        return ScenarioConfig(**fields)
    except (ValueError, ValidationError) as e:
        raise ConfigError(f"Invalid scenario {path}: {e}")
