"""Request/response models of the detection service.

Model/prior/cost configuration travels as the same JSON document the CLI
reads from disk; the core parser stays the single source of truth for its
layout, so the schemas only shape the envelopes around it.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class SeriesRow(BaseModel):
    year: int
    mu_male: float
    mu_female: float


class ValidateRequest(BaseModel):
    config: dict


class ValidateResponse(BaseModel):
    ok: bool
    violations: list[str]


class TiltRequest(BaseModel):
    config: dict


class PostJumpsOut(BaseModel):
    intensity_post: float
    jump_means_post: list[float]


class TiltResponse(BaseModel):
    z: list[float]
    K: float
    B: float
    post_jumps: Optional[PostJumpsOut] = None


class ThresholdRequest(BaseModel):
    config: dict
    value_points: int = Field(default=201, ge=2, le=100_000)


class Curve(BaseModel):
    x: list[float]
    y: list[float]


class ThresholdResponse(BaseModel):
    A_star: float
    root_found: bool
    B: float
    K: float
    z: list[float]
    rate: float
    c: float
    y_curve: Curve
    value_curve: Curve


class CalibrateRequest(BaseModel):
    rows: list[SeriesRow]
    window: tuple[int, int]


class ResidualRow(BaseModel):
    year: int
    x_male: float
    x_female: float


class CalibrateResponse(BaseModel):
    a0: list[float]
    a1: list[float]
    sigma1: float
    sigma2: float
    rho: float
    window: tuple[int, int]
    n_increments: int
    residuals: list[ResidualRow]


class DetectRequest(BaseModel):
    rows: list[SeriesRow]
    config: dict
    calib_window: tuple[int, int]
    monitor_window: tuple[int, int]
    threshold: Optional[float] = None
    r: Optional[list[float]] = None


class DetectionRow(BaseModel):
    year: int
    n: int
    x_inc_1: Optional[float] = None
    x_inc_2: Optional[float] = None
    psi: float
    pi: float
    alarm: bool


class MortalityRow(BaseModel):
    year: int
    mu_male: float
    mu_female: float


class DetectResponse(BaseModel):
    alarm_year: Optional[int]
    A_star: float
    threshold_solved: bool
    B: float
    K: float
    z: list[float]
    r_used: list[float]
    recursion_start: int
    calibration: CalibrateResponse
    series: list[DetectionRow]
    mortality: list[MortalityRow]
    residuals: list[ResidualRow]
    config: dict


class SimulateRequest(BaseModel):
    config: dict
    horizon: float = Field(gt=0)
    dt: float = Field(default=0.02, gt=0)
    seed: int = 0
    regime: Literal["bayes", "pre", "post"] = "bayes"
    threshold: Optional[float] = Field(default=None, ge=0, le=1)


class SimulateResponse(BaseModel):
    theta: Optional[float]  # None encodes "no change within any horizon"
    dt: float
    increments: list[list[float]]
    psi: list[float]
    pi: list[float]
    alarm_index: Optional[int]


class RiskRequest(BaseModel):
    config: dict
    thresholds: list[float]
    paths: int = Field(default=10_000, ge=100)
    horizon: Optional[float] = Field(default=None, gt=0)
    dt: float = Field(default=0.02, gt=0)
    seed: int = 0


class RiskRow(BaseModel):
    A: float
    false_alarm: float
    false_alarm_se: float
    delay: float
    delay_se: float
    risk: float
    risk_se: float
    posterior_form: float
    posterior_form_se: float
    censored: int


class RiskResponse(BaseModel):
    rows: list[RiskRow]
    paths: int
    horizon: float
    dt: float
    seed: int
