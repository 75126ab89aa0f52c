"""Present-value cost of building and running a vision model for one task.

Two pricing modes are supported:

* ``reduced`` prices with the published per-unit coefficients
  (:meth:`ReducedCostCoefficients.published`).
* ``structural`` recomputes every coefficient from :class:`CostParams`.

Inference volume is measured in *decision units*: one unit is a full-time
worker-year of one decision per second (3600 * 40 * 50 decisions). A task
with time share ``tau``, vision share ``delta`` and ``N`` employees needs
``tau * delta * N`` units per year.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

from .errors import MissingWage, OutOfRange, ParseError

SECONDS_PER_HOUR = 3600.0
HOURS_PER_WORKER_YEAR = 40.0 * 50.0
DECISIONS_PER_UNIT = SECONDS_PER_HOUR * HOURS_PER_WORKER_YEAR


@dataclass(frozen=True)
class CostParams:
    """Structural cost inputs; defaults reproduce the published parameter table."""

    kappa_init: float = 1000.0
    kappa_recur: float = 6.0
    d_GPU: float = 0.22
    d: float = 0.05
    L: int = 5
    F_GPU: float = 6.0
    r_FLOP: float = 4e12
    p_GPU: float = 0.34
    U_GPU: float = 0.4
    Z_input: float = 256.0 ** 2
    C_impl: float = 2_144_475.0
    C_maint: float = 295_123.0
    Phi: float = 8.0
    p_data_floor: float = 0.05
    tau_over_tau_GPU: float = 2.01138e13

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and math.isfinite(v)):
                raise OutOfRange(f"{f.name} must be a finite number, got {v!r}")
        nonneg = ("kappa_recur", "C_maint")
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in nonneg:
                if v < 0:
                    raise OutOfRange(f"{f.name} must be >= 0, got {v}")
            elif f.name in ("d", "d_GPU"):
                if not 0 <= v < 1:
                    raise OutOfRange(f"{f.name} must be in [0, 1), got {v}")
            elif v <= 0:
                raise OutOfRange(f"{f.name} must be positive, got {v}")
        if not 0 < self.U_GPU <= 1:
            raise OutOfRange(f"U_GPU must be in (0, 1], got {self.U_GPU}")
        if int(self.L) != self.L or self.L < 1:
            raise OutOfRange(f"L must be an integer >= 1, got {self.L}")

    @classmethod
    def from_mapping(cls, values) -> "CostParams":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ParseError(f"unknown cost parameter(s): {', '.join(unknown)}")
        kw = {}
        for k, v in values.items():
            try:
                kw[k] = float(v)
            except (TypeError, ValueError):
                raise ParseError(f"cost parameter {k!r} is not numeric: {v!r}") from None
        if "L" in kw:
            kw["L"] = int(round(kw["L"])) if float(kw["L"]).is_integer() else kw["L"]
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> "CostParams":
        from .io import read_kv

        return cls.from_mapping(read_kv(path))

    def to_dict(self) -> dict:
        return asdict(self)


def _geometric(rate: float, L: int, start: int) -> float:
    """``sum_{t=start}^{start+L-1} (1+rate)^-t``."""
    if rate == 0:
        return float(L)
    v = 1.0 / (1.0 + rate)
    return v ** start * (1.0 - v ** L) / (1.0 - v)


@dataclass(frozen=True)
class AnnuityFactors:
    """Discount factors over the system lifespan.

    ``plain`` and ``joint`` are the closed forms used by the published
    coefficient table (terms ``t = 0 .. L-1``); ``joint`` discounts at the
    combined rate ``(1+d)(1+d_GPU) - 1``. The ``*_from_one`` variants sum
    ``t = 1 .. L`` as in the component cost equations.
    """

    plain: float
    joint: float
    plain_from_one: float
    joint_from_one: float


def annuity_factors(params: CostParams = CostParams()) -> AnnuityFactors:
    joint_rate = (1.0 + params.d) * (1.0 + params.d_GPU) - 1.0
    L = int(params.L)
    return AnnuityFactors(
        plain=_geometric(params.d, L, 0),
        joint=_geometric(joint_rate, L, 0),
        plain_from_one=_geometric(params.d, L, 1),
        joint_from_one=_geometric(joint_rate, L, 1),
    )


def fixed_cost(params: CostParams = CostParams()) -> float:
    """Engineering cost: implementation plus discounted maintenance."""
    return params.C_impl + annuity_factors(params).plain * params.C_maint


def p_data(wage, time_share: float, vision_share: float, judgment_freq: float,
           params: CostParams = CostParams()) -> float:
    """Cost of labelling one image, floored at ``params.p_data_floor``.

    The worker's wage spent on the vision component of the task, divided by
    how many such judgements they make per year, times the number of
    independent annotations per image.

    Raises
    ------
    MissingWage
        If ``wage`` is None or NaN; callers substitute the floor.
    """
    if wage is None or (isinstance(wage, float) and math.isnan(wage)):
        raise MissingWage("wage unavailable for per-datum pricing")
    if not judgment_freq > 0:
        raise OutOfRange(f"judgment frequency must be positive, got {judgment_freq}")
    raw = wage * time_share * vision_share / judgment_freq * params.Phi
    return max(raw, params.p_data_floor)


def data_cost(D: float, m: float, price: float, params: CostParams = CostParams()) -> float:
    """Initial collection plus ``kappa_recur`` renewals a year, discounted from year 1."""
    if D < 0:
        raise OutOfRange("D must be >= 0")
    af = annuity_factors(params)
    return m * price * D * (1.0 + params.kappa_recur * af.plain_from_one)


def _flop_price(params: CostParams) -> float:
    # currency per (step x parameter) for a single training round
    return params.p_GPU / (params.r_FLOP * params.U_GPU) * params.F_GPU * params.Z_input


def training_cost(T: float, M: float, m: float, params: CostParams = CostParams()) -> float:
    """Initial development rounds plus discounted retraining, bilinear in T and M."""
    if T < 0 or M < 0:
        raise OutOfRange("T and M must be >= 0")
    af = annuity_factors(params)
    rounds = params.kappa_init + params.kappa_recur * af.joint_from_one
    return m * rounds * _flop_price(params) * M * T


def inference_cost(M: float, annual_decisions: float, m: float,
                   params: CostParams = CostParams()) -> float:
    """Discounted GPU cost of serving ``annual_decisions`` a year with an ``M``-parameter model.

    GPU hours per year are ``M * Y * tau_GPU`` with ``tau_GPU`` one second of
    human decision time divided by ``tau_over_tau_GPU``.
    """
    if M < 0 or annual_decisions < 0:
        raise OutOfRange("M and annual_decisions must be >= 0")
    af = annuity_factors(params)
    gpu_hours = M * annual_decisions / (SECONDS_PER_HOUR * params.tau_over_tau_GPU)
    return m * af.joint_from_one * params.p_GPU / params.U_GPU * gpu_hours


def component_cost(D: float, T: float, M: float, decision_units: float, m: float, price: float,
                   params: CostParams = CostParams()) -> float:
    """Sum of engineering, data, training and inference components."""
    return (fixed_cost(params) + data_cost(D, m, price, params) + training_cost(T, M, m, params)
            + inference_cost(M, decision_units * DECISIONS_PER_UNIT, m, params))


@dataclass(frozen=True)
class ReducedCostCoefficients:
    """Prices per datum (c_D), per step-parameter (c_T), per parameter per
    decision unit (c_I) and the fixed block (c_F)."""

    c_F: float
    c_D: float
    c_T: float
    c_I: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (math.isfinite(v) and v > 0):
                raise OutOfRange(f"{f.name} must be positive, got {v}")

    @classmethod
    def published(cls) -> "ReducedCostCoefficients":
        """Coefficients for a single-subtask task under the default parameters."""
        return cls(c_F=3_486_090.0, c_D=6.19, c_T=3.83e-6, c_I=1.29e-8)

    def scaled(self, m: float = 1.0, data_price_ratio: float = 1.0) -> "ReducedCostCoefficients":
        """Per-task coefficients: variable prices times ``m``; data price rescaled."""
        return replace(self, c_D=self.c_D * m * data_price_ratio, c_T=self.c_T * m, c_I=self.c_I * m)


def reduced_cost(D: float, T: float, M: float, Y: float, coeffs: ReducedCostCoefficients) -> float:
    """``c_F + c_D D + c_T T M + c_I M Y`` with ``Y`` in decision units."""
    for name, v in (("D", D), ("T", T), ("M", M), ("Y", Y)):
        if v < 0:
            raise OutOfRange(f"{name} must be >= 0")
    return coeffs.c_F + coeffs.c_D * D + coeffs.c_T * T * M + coeffs.c_I * M * Y


def reduced_cost_gradient(D, T, M, Y, coeffs: ReducedCostCoefficients) -> tuple[float, float, float, float]:
    """Partials of :func:`reduced_cost` with respect to ``D, T, M, Y``."""
    return coeffs.c_D, coeffs.c_T * M, coeffs.c_T * T + coeffs.c_I * Y, coeffs.c_I * M


def coefficients_from_params(params: CostParams = CostParams(), m: float = 1.0,
                             price: float | None = None, *, form: str = "table",
                             delta_n: float = 1.0) -> ReducedCostCoefficients:
    """Evaluate the four reduced coefficients from structural parameters.

    Parameters
    ----------
    price : float, optional
        Per-datum labelling price. Defaults to the price implied by the
        published ``c_D``.
    form : {"table", "equation"}
        ``table`` uses the closed forms of the published coefficient table
        (annuities from ``t = 0``, ``F_GPU`` entering as printed).
        ``equation`` uses the component cost equations (recurring streams
        from ``t = 1``), which makes :func:`component_cost` and
        :func:`reduced_cost` agree exactly.
    delta_n : float
        Multiplier on ``c_I``; the published table folds a task's
        ``delta * N`` into ``c_I``. Leave at 1 for the per-unit price.
    """
    af = annuity_factors(params)
    if price is None:
        price = implied_data_price(params)
    if form == "table":
        data_factor = 1.0 + params.kappa_recur * af.plain
        rounds = params.kappa_init + params.kappa_recur * af.joint
        inf_factor = af.joint
    elif form == "equation":
        data_factor = 1.0 + params.kappa_recur * af.plain_from_one
        rounds = params.kappa_init + params.kappa_recur * af.joint_from_one
        inf_factor = af.joint_from_one
    else:
        raise ValueError(f"form must be 'table' or 'equation', got {form!r}")
    c_I = m * inf_factor * params.p_GPU / params.U_GPU * HOURS_PER_WORKER_YEAR * delta_n / params.tau_over_tau_GPU
    return ReducedCostCoefficients(
        c_F=fixed_cost(params),
        c_D=m * data_factor * price,
        c_T=m * rounds * _flop_price(params),
        c_I=c_I,
    )


def implied_data_price(params: CostParams = CostParams(),
                       published: ReducedCostCoefficients | None = None) -> float:
    """Per-datum price at which the table's ``c_D`` expression gives the published value."""
    published = published or ReducedCostCoefficients.published()
    af = annuity_factors(params)
    return published.c_D / (1.0 + params.kappa_recur * af.plain)


def task_coefficients(mode: str, m: float, price: float,
                      params: CostParams = CostParams(),
                      published: ReducedCostCoefficients | None = None) -> ReducedCostCoefficients:
    """Coefficients used to price one task's system.

    In ``reduced`` mode the published prices are scaled by ``m`` and ``c_D``
    follows the task's own labelling price (it equals the published 6.19 when
    ``price`` is the implied default). In ``structural`` mode everything is
    recomputed from ``params`` with the component-equation forms.
    """
    if mode == "reduced":
        published = published or ReducedCostCoefficients.published()
        ratio = price / implied_data_price(params, published)
        return published.scaled(m, ratio)
    if mode == "structural":
        return coefficients_from_params(params, m, price, form="equation")
    raise ValueError(f"cost mode must be 'reduced' or 'structural', got {mode!r}")


def coefficient_report(params: CostParams = CostParams()) -> dict[str, float]:
    """Compare recomputed coefficients with the published ones.

    Differences are informational; the published values stay the defaults
    of reduced mode.
    """
    pub = ReducedCostCoefficients.published()
    af = annuity_factors(params)
    table = coefficients_from_params(params, 1.0, 1.0, form="table")
    eq = coefficients_from_params(params, 1.0, 1.0, form="equation")
    c_F = fixed_cost(params)
    eng_from_one = params.C_impl + af.plain_from_one * params.C_maint
    return {
        "annuity_plain": af.plain,
        "annuity_joint": af.joint,
        "annuity_plain_from_one": af.plain_from_one,
        "annuity_joint_from_one": af.joint_from_one,
        "c_F_recomputed": c_F,
        "c_F_published": pub.c_F,
        "c_F_rel_error": c_F / pub.c_F - 1.0,
        "c_F_from_one": eng_from_one,
        "c_D_per_unit_price_table": table.c_D,
        "c_D_per_unit_price_equation": eq.c_D,
        "c_D_published": pub.c_D,
        "p_data_implied": implied_data_price(params, pub),
        "c_T_table": table.c_T,
        "c_T_equation": eq.c_T,
        "c_T_published": pub.c_T,
        "c_T_ratio": table.c_T / pub.c_T,
        "c_I_per_unit_table": table.c_I,
        "c_I_per_unit_equation": eq.c_I,
        "c_I_published": pub.c_I,
        "c_I_implied_delta_n": pub.c_I / table.c_I,
    }
