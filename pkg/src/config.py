# src/config.py
import json
import logging
from pathlib import Path
from typing import Literal, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError as PydanticValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.exceptions import FormatError, MissingInputError, ValidationError

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """Process-level settings (environment driven)"""

    model_config = SettingsConfigDict(env_prefix="PANOFUSE_", env_file=".env", extra="ignore")

    # Worker pool bound for per-window / per-overlap work
    threads: int = Field(4, ge=1)

    # Logging
    log_level: str = "INFO"

    # Default experiment manifest, used when --config is not given
    config: Optional[str] = None


# Global settings instance
settings = Settings()


class PipelineConfig(BaseModel):
    """Experiment parameters for one DARv2 pass"""

    h_window: Tuple[int, int] = (400, 256)
    v_window: Tuple[int, int] = (200, 512)
    alpha: float = Field(0.3, ge=0.0, le=1.0)
    lambda_: float = Field(0.2, ge=0.0, alias="lambda")
    snap_radius: int = Field(5, ge=0)
    num_classes: Optional[int] = Field(None, ge=1, le=255)
    ignore_label: int = Field(255, ge=0, le=255)
    sum_mode: bool = False
    be_variant: Literal["v1", "v2"] = "v2"
    ctcf_variant: Literal["v2", "fixed"] = "v2"
    fixed_theta: Optional[float] = None

    model_config = {"populate_by_name": True, "frozen": True}

    @model_validator(mode="after")
    def _check_variants(self) -> "PipelineConfig":
        if self.ctcf_variant == "fixed":
            if self.fixed_theta is None or not (0.0 < self.fixed_theta <= 1.0):
                raise ValueError("fixed-theta CTCF requires theta in (0, 1]")
        for name, size in (("h_window", self.h_window), ("v_window", self.v_window)):
            if size[0] < 1 or size[1] < 1:
                raise ValueError(f"{name} must be positive, got {size}")
        return self

    @property
    def variant_tag(self) -> str:
        ctcf = f"ctcf_fixed_theta({self.fixed_theta:g})" if self.ctcf_variant == "fixed" else "ctcfv2"
        be = "bev2" if self.be_variant == "v2" else "bev1"
        return f"{ctcf}+{be}"

    @classmethod
    def from_json_file(cls, path: Optional[str]) -> "PipelineConfig":
        """Load a JSON manifest; missing path -> defaults"""
        if not path:
            return cls()
        p = Path(path)
        if not p.exists():
            raise MissingInputError(f"config file not found: {path}")
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as e:
            raise FormatError(f"config file {path} is not valid JSON: {e}") from e
        return cls.build(**data)

    @classmethod
    def build(cls, **values) -> "PipelineConfig":
        try:
            return cls(**values)
        except PydanticValidationError as e:
            raise ValidationError(f"invalid pipeline config: {e}") from e

    def with_overrides(self, **overrides) -> "PipelineConfig":
        """Return a copy with every non-None override applied (flags win)"""
        data = self.model_dump(by_alias=True)
        for key, value in overrides.items():
            if value is None:
                continue
            data["lambda" if key == "lambda_" else key] = value
        return self.build(**data)


def parse_size(text: str) -> Tuple[int, int]:
    """Parse 'HxW' into (H, W)"""
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError as e:
        raise ValidationError(f"expected HxW, got {text!r}") from e


def parse_ctcf(text: str) -> dict:
    """Parse --ctcf {v2, fixed:θ}"""
    if text == "v2":
        return {"ctcf_variant": "v2", "fixed_theta": None}
    if text.startswith("fixed:"):
        try:
            theta = float(text.split(":", 1)[1])
        except ValueError as e:
            raise ValidationError(f"bad fixed theta in {text!r}") from e
        return {"ctcf_variant": "fixed", "fixed_theta": theta}
    raise ValidationError(f"--ctcf must be 'v2' or 'fixed:<theta>', got {text!r}")
