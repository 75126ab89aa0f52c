"""End-to-end runner: ingest task tables, decide every task, aggregate.

Input files are UTF-8 CSVs with a header row:

* survey: ``soc_code, task_id, required_error, random_guess_error, judgment_freq``
* complexity: ``soc_code, task_id, dwa_id, n_class, num_tasks, vision_share,
  dwa_time_share, importance_score``
* wages: ``soc_code, naics, wage, employees`` (``wage`` may be blank)

Survey and complexity join on ``(soc_code, task_id)``; the result joins
wages on ``soc_code``, giving one row per occupation, task, DWA and industry.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .aggregation import (Z_CLASSES, CoarseFirmSizeBins, FineFirmSizeDistribution, TaskOutcome,
                          automation_rate, firm_level_outcomes, impute_fine_sizes, occupation_benefit,
                          occupation_rollups, occupation_size_distribution, residual_decomposition)
from .cost_model import DECISIONS_PER_UNIT, CostParams, annuity_factors, p_data, task_coefficients
from .entropy_map import DEFAULT_ENTROPY_PARAMS, AccuracySpec, EntropyFitParams, required_entropy, task_entropy
from .errors import (BaselineNotExceeded, DomainError, JoinKeyMissing, MissingWage, OutOfRange, ParseError, TaskAutoError,
                     ZeroDenominator)
from .io import read_csv_checked, read_kv, write_csv
from .scaling_law import (DEFAULT_REGIME, PARAM_NAMES, InputBundle, ScalingLawParams, SupportedRegime,
                          eval_loss, performance_elasticities)
from .task_optimizer import (AutomationDecision, FeasibilityFlags, OptimizerConfig, Regime, TaskEconomics,
                             decide_automation, total_benefit)

SURVEY_COLUMNS = ("soc_code", "task_id", "required_error", "random_guess_error", "judgment_freq")
COMPLEXITY_COLUMNS = ("soc_code", "task_id", "dwa_id", "n_class", "num_tasks", "vision_share",
                      "dwa_time_share", "importance_score")
WAGE_COLUMNS = ("soc_code", "naics", "wage", "employees")
FIRM_SIZE_COLUMNS = ("naics", "bin_lower", "bin_upper", "firm_count")

OUTPUT_COLUMNS = (
    "soc_code", "task_id", "dwa_id", "naics",
    "replace_ratio", "optimal_accuracy", "optimal_data", "optimal_model_size", "optimal_training_steps",
    "total_benefit", "variable_cost", "fixed_cost",
    "regime", "full_feasible", "partial_feasible", "full_optimal", "partial_optimal", "optimal_loss",
    "h_task", "h_req", "p_data", "wage", "employees", "time_share", "vision_share",
    "shadow_price", "converged", "missing_wage", "pool_size", "note",
)
REJECTION_COLUMNS = ("soc_code", "task_id", "dwa_id", "naics", "reason", "detail")

NPV_CONVENTION = "plain annuity over years 0..L-1 at the discount rate d"
DATA_PRICE_CONVENTION = "rho_oi in the per-datum price is the task time share"

_KEYS = ("soc_code", "task_id", "dwa_id", "naics")


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class RunConfig:
    """Settings for one batch run.

    ``deployment`` is ``firm`` (each row, or each imputed firm when
    ``firm_sizes`` is given, decides on its own headcount) or ``pooled``
    (rows sharing the pooling key share one system). ``employee_scale``
    multiplies every headcount, for deployment-scale sweeps.
    """

    cost_mode: str = "reduced"
    deployment: str = "firm"
    pooling_key: str = "occupation_task"
    seed: int = 0
    employee_scale: float = 1.0
    cost_params: CostParams = field(default_factory=CostParams)
    law: ScalingLawParams = field(default_factory=ScalingLawParams)
    regime: SupportedRegime = DEFAULT_REGIME
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    entropy_params: EntropyFitParams = DEFAULT_ENTROPY_PARAMS
    firm_sizes: Mapping[str, FineFirmSizeDistribution] | None = None

    def __post_init__(self):
        if self.cost_mode not in ("reduced", "structural"):
            raise OutOfRange(f"cost mode must be 'reduced' or 'structural', got {self.cost_mode!r}")
        if self.deployment not in ("firm", "pooled"):
            raise OutOfRange(f"deployment must be 'firm' or 'pooled', got {self.deployment!r}")
        if self.pooling_key not in ("occupation_task", "occupation_task_naics"):
            raise OutOfRange(f"unknown pooling key {self.pooling_key!r}")
        if not self.employee_scale > 0:
            raise OutOfRange("employee_scale must be positive")

    @classmethod
    def from_mapping(cls, values: Mapping[str, object], **overrides) -> "RunConfig":
        """Build from a flat key-value mapping.

        Recognised keys: cost parameter names, scaling-law parameter names,
        optimiser settings, ``{n_class,data_per_class,steps,model_size}_{min,max}``
        regime bounds and ``cost_mode``, ``deployment``, ``pooling_key``,
        ``seed``, ``employee_scale``.
        """
        values = dict(values)
        cost_names = {f.name for f in fields(CostParams)}
        opt_names = {f.name for f in fields(OptimizerConfig)}
        regime_names = {f.name for f in fields(SupportedRegime)}
        cost, law, opt, run = {}, {}, {}, {}
        bounds = {name: list(getattr(DEFAULT_REGIME, name)) for name in regime_names}
        for key, value in values.items():
            if key in cost_names:
                cost[key] = value
            elif key in PARAM_NAMES:
                law[key] = _as_float(key, value)
            elif key in opt_names:
                opt[key] = value
            elif key.endswith(("_min", "_max")) and key[:-4] in regime_names:
                bounds[key[:-4]][key.endswith("_max")] = _as_float(key, value)
            elif key in ("cost_mode", "deployment", "pooling_key"):
                run[key] = str(value)
            elif key in ("seed", "employee_scale"):
                run[key] = _as_float(key, value)
            else:
                raise ParseError(f"unknown config key {key!r}")
        opt_kw = {}
        for f in fields(OptimizerConfig):
            if f.name in opt:
                v = opt[f.name]
                if f.type in ("bool", bool):
                    opt_kw[f.name] = str(v).strip().lower() in ("1", "1.0", "true", "yes")
                elif f.type in ("int", int):
                    opt_kw[f.name] = int(_as_float(f.name, v))
                else:
                    opt_kw[f.name] = _as_float(f.name, v)
        if "seed" in run:
            run["seed"] = int(run["seed"])
        kw = dict(
            cost_params=CostParams.from_mapping(cost),
            law=ScalingLawParams.from_dict({**ScalingLawParams().to_dict(), **law}),
            regime=SupportedRegime(**{k: tuple(v) for k, v in bounds.items()}),
            **run,
        )
        kw.update(overrides)
        seed = kw.get("seed", 0)
        kw["optimizer"] = OptimizerConfig(**{"seed": seed, **opt_kw})
        return cls(**kw)

    @classmethod
    def from_file(cls, path, **overrides) -> "RunConfig":
        return cls.from_mapping(read_kv(path), **overrides)


def _as_float(key, value) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ParseError(f"config key {key!r} is not numeric: {value!r}") from None


# ---------------------------------------------------------------------------
# ingestion


@dataclass(frozen=True)
class TaskRow:
    """One merged (occupation, task, DWA, industry) row."""

    soc_code: str
    task_id: str
    dwa_id: str
    naics: str
    n_class: float
    num_tasks: int
    vision_share: float
    required_error: float
    random_guess_error: float
    judgment_freq: float
    time_share: float
    wage: float
    employees: float

    @property
    def key(self) -> tuple[str, str, str, str]:
        return self.soc_code, self.task_id, self.dwa_id, self.naics

    @property
    def has_wage(self) -> bool:
        return not math.isnan(self.wage)


@dataclass(frozen=True)
class Rejection:
    soc_code: str
    task_id: str
    dwa_id: str
    naics: str
    reason: str
    detail: str


@dataclass
class IngestResult:
    rows: list[TaskRow]
    rejections: list[Rejection]
    n_input: int

    def rejection_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.rejections], columns=list(REJECTION_COLUMNS))


def _row_problem(rec) -> tuple[str, str] | None:
    """First invariant a merged record violates, as ``(reason, detail)``."""
    for name in ("required_error", "random_guess_error"):
        if not 0 <= rec[name] < 1:
            return "fraction-range", f"{name}={rec[name]} outside [0, 1)"
    for name in ("vision_share", "dwa_time_share", "importance_score"):
        if not 0 <= rec[name] <= 1:
            return "fraction-range", f"{name}={rec[name]} outside [0, 1]"
    if not rec["required_error"] < rec["random_guess_error"]:
        return "attention-check", (f"required_error={rec['required_error']} is not below "
                                   f"random_guess_error={rec['random_guess_error']}")
    if not 2 <= rec["n_class"] <= DEFAULT_REGIME.n_class[1]:
        return "count-range", f"n_class={rec['n_class']} outside [2, {DEFAULT_REGIME.n_class[1]:g}]"
    if not (rec["num_tasks"] >= 1 and float(rec["num_tasks"]).is_integer()):
        return "count-range", f"num_tasks={rec['num_tasks']} is not an integer >= 1"
    if not rec["employees"] >= 1:
        return "count-range", f"employees={rec['employees']} below 1"
    if not rec["judgment_freq"] > 0:
        return "count-range", f"judgment_freq={rec['judgment_freq']} must be positive"
    if not (math.isnan(rec["wage"]) or rec["wage"] >= 0):
        return "fraction-range", f"wage={rec['wage']} is negative"
    return None


def _warn_unmatched(name, keys: pd.DataFrame, other: pd.DataFrame, on):
    merged = keys[list(on)].drop_duplicates().merge(other[list(on)].drop_duplicates(), on=list(on),
                                                    how="left", indicator=True)
    missing = int((merged["_merge"] == "left_only").sum())
    if missing:
        warnings.warn(f"{name}: {missing} key(s) on {tuple(on)} have no match", JoinKeyMissing, stacklevel=3)


def ingest_frames(survey: pd.DataFrame, complexity: pd.DataFrame, wages: pd.DataFrame) -> IngestResult:
    """Join and validate already-parsed source tables."""
    for frame in (survey, complexity, wages):
        for col in ("soc_code", "task_id", "dwa_id", "naics"):
            if col in frame.columns:
                frame[col] = frame[col].astype(str).str.strip()
    _warn_unmatched("survey", survey, complexity, ("soc_code", "task_id"))
    _warn_unmatched("complexity", complexity, survey, ("soc_code", "task_id"))
    st = survey.merge(complexity, on=["soc_code", "task_id"], how="inner")
    if len(st):
        _warn_unmatched("wages", wages, st, ("soc_code",))
    else:
        warnings.warn("wages: no survey-complexity rows to join against", JoinKeyMissing, stacklevel=2)
    merged = st.merge(wages, on="soc_code", how="inner")
    if len(st) and not len(merged):
        warnings.warn("survey: no occupation matches the wage table", JoinKeyMissing, stacklevel=2)
    merged = merged.sort_values(list(_KEYS), kind="stable").reset_index(drop=True)

    rows, rejections = [], []
    for rec in merged.to_dict("records"):
        problem = _row_problem(rec)
        if problem is not None:
            rejections.append(Rejection(*(rec[k] for k in _KEYS), *problem))
            continue
        rows.append(TaskRow(
            soc_code=rec["soc_code"], task_id=rec["task_id"], dwa_id=rec["dwa_id"], naics=rec["naics"],
            n_class=float(rec["n_class"]), num_tasks=int(rec["num_tasks"]),
            vision_share=float(rec["vision_share"]), required_error=float(rec["required_error"]),
            random_guess_error=float(rec["random_guess_error"]), judgment_freq=float(rec["judgment_freq"]),
            time_share=float(rec["dwa_time_share"] * rec["importance_score"]),
            wage=float(rec["wage"]), employees=float(rec["employees"]),
        ))
    return IngestResult(rows, rejections, len(merged))


def ingest_and_merge(survey_csv, complexity_csv, wages_csv) -> IngestResult:
    """Read, join and validate the three source tables.

    Rows breaking a row invariant are dropped and logged with a reason
    (``attention-check``, ``fraction-range`` or ``count-range``).

    Raises
    ------
    ParseError
        For unreadable files, missing columns or non-numeric cells.
    """
    survey = read_csv_checked(survey_csv, SURVEY_COLUMNS,
                              numeric=["required_error", "random_guess_error", "judgment_freq"])
    complexity = read_csv_checked(complexity_csv, COMPLEXITY_COLUMNS,
                                  numeric=["n_class", "num_tasks", "vision_share", "dwa_time_share",
                                           "importance_score"])
    wages = read_csv_checked(wages_csv, WAGE_COLUMNS, numeric=["employees"], optional_numeric=["wage"])
    return ingest_frames(survey[list(SURVEY_COLUMNS)], complexity[list(COMPLEXITY_COLUMNS)],
                         wages[list(WAGE_COLUMNS)])


def read_firm_sizes(path, max_size: float = 2e6) -> dict[str, FineFirmSizeDistribution]:
    """Coarse bins per industry (``naics, bin_lower, bin_upper, firm_count``), imputed."""
    df = read_csv_checked(path, FIRM_SIZE_COLUMNS, numeric=["bin_lower", "firm_count"],
                          optional_numeric=["bin_upper"])
    out = {}
    for naics, group in df.groupby(df["naics"].astype(str).str.strip(), sort=True):
        upper = tuple(math.inf if math.isnan(u) else float(u) for u in group["bin_upper"])
        try:
            coarse = CoarseFirmSizeBins(tuple(group["bin_lower"].astype(float)), upper,
                                        tuple(group["firm_count"].astype(float)))
        except OutOfRange as exc:
            raise ParseError(f"firm sizes for {naics}: {exc}") from exc
        out[naics] = impute_fine_sizes(coarse, max_size)
    return out


# ---------------------------------------------------------------------------
# economics


@dataclass(frozen=True)
class RowEconomics:
    row: TaskRow
    economics: TaskEconomics
    price: float
    missing_wage: bool


def build_economics(row: TaskRow, config: RunConfig = RunConfig()) -> RowEconomics:
    """Turn a merged row into the optimiser's task description.

    A missing wage prices data at the floor and zeroes the wage, so the
    task cannot pay for automation; the result is flagged.

    Raises
    ------
    DomainError
        If the accuracy requirements do not give ``h_req < h_task``.
    """
    params = config.cost_params
    ep = config.entropy_params
    try:
        h_task = task_entropy(row.random_guess_error, row.n_class, ep)
        spec = AccuracySpec(1.0 - row.required_error, row.random_guess_error, row.n_class, row.num_tasks)
        h_req = required_entropy(spec, ep)
    except (DomainError, OutOfRange) as exc:
        raise DomainError(str(exc)) from exc
    if not h_req < h_task:
        raise DomainError(f"required loss {h_req:.6g} is not below the task loss {h_task:.6g}")
    missing = not row.has_wage
    try:
        price = p_data(None if missing else row.wage, row.time_share, row.vision_share, row.judgment_freq, params)
    except MissingWage:
        price = params.p_data_floor
    wage = 0.0 if missing else row.wage
    employees = row.employees * config.employee_scale
    t = TaskEconomics(
        wage=wage, employees=employees, time_share=row.time_share, vision_share=row.vision_share,
        subtasks=row.num_tasks, n_class=row.n_class, h_task=h_task, h_req=h_req,
        annual_decisions=DECISIONS_PER_UNIT * row.time_share * row.vision_share * employees,
        npv_factor=annuity_factors(params).plain, p_data=price,
    )
    return RowEconomics(row, t, price, missing)


def _decide(t: TaskEconomics, config: RunConfig) -> AutomationDecision:
    coeffs = task_coefficients(config.cost_mode, t.subtasks, t.p_data, config.cost_params)
    return decide_automation(t, coeffs, config.law, config.regime, config.optimizer, config.entropy_params)


def _failed(t: TaskEconomics, exc: Exception) -> AutomationDecision:
    return AutomationDecision(Regime.NONE, 0.0, t.h_task, float("nan"), None, total_benefit(t), 0.0, 0.0,
                              FeasibilityFlags(False, False, False, False), converged=False,
                              note=f"error: {type(exc).__name__}: {exc}")


def _safe_decide(t, config):
    try:
        return _decide(t, config)
    except (TaskAutoError, ValueError, ArithmeticError, RuntimeError) as exc:
        return _failed(t, exc)


# ---------------------------------------------------------------------------
# batch run


@dataclass
class RunResult:
    decisions: pd.DataFrame
    rejections: pd.DataFrame
    rollups: pd.DataFrame
    summary: dict
    outcomes: list[TaskOutcome]

    @property
    def not_converged_share(self) -> float:
        if not len(self.decisions):
            return 0.0
        return float((~self.decisions["converged"].astype(bool)).mean())

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "decisions": out / "decisions.csv",
            "rejections": out / "rejections.csv",
            "occupations": out / "occupations.csv",
            "summary": out / "summary.json",
        }
        write_csv(paths["decisions"], self.decisions)
        write_csv(paths["rejections"], self.rejections)
        write_csv(paths["occupations"], self.rollups)
        paths["summary"].write_text(json.dumps(self.summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return paths


def _output_row(re: RowEconomics, d: AutomationDecision, *, tb=None, var=None, fixed=None, pool_size=1):
    row, t = re.row, re.economics
    sol = d.solution
    flags = d.feasibility_flags
    return {
        "soc_code": row.soc_code, "task_id": row.task_id, "dwa_id": row.dwa_id, "naics": row.naics,
        "replace_ratio": d.r, "optimal_accuracy": d.optimal_accuracy,
        "optimal_data": sol.bundle.data if sol is not None else np.nan,
        "optimal_model_size": sol.bundle.model_size if sol is not None else np.nan,
        "optimal_training_steps": sol.bundle.steps if sol is not None else np.nan,
        "total_benefit": d.total_benefit if tb is None else tb,
        "variable_cost": d.variable_cost if var is None else var,
        "fixed_cost": d.fixed_cost if fixed is None else fixed,
        "regime": str(d.regime),
        "full_feasible": flags.full_feasible, "partial_feasible": flags.partial_feasible,
        "full_optimal": flags.full_optimal, "partial_optimal": flags.partial_optimal,
        "optimal_loss": d.optimal_loss, "h_task": t.h_task, "h_req": t.h_req, "p_data": re.price,
        "wage": t.wage, "employees": t.employees, "time_share": t.time_share, "vision_share": t.vision_share,
        "shadow_price": sol.shadow_price if sol is not None else np.nan,
        "converged": bool(d.converged), "missing_wage": re.missing_wage, "pool_size": pool_size,
        "note": d.note,
    }


def _pool_economics(members: Sequence[RowEconomics], config: RunConfig) -> TaskEconomics:
    first = members[0].economics
    N = math.fsum(m.economics.employees for m in members)
    wage = math.fsum(m.economics.employees * m.economics.wage for m in members) / N
    price = p_data(wage, first.time_share, first.vision_share, members[0].row.judgment_freq, config.cost_params)
    return replace(first, wage=wage, employees=N, p_data=price,
                   annual_decisions=DECISIONS_PER_UNIT * first.time_share * first.vision_share * N)


def _pool_key(row: TaskRow, pooling_key: str):
    key = (row.soc_code, row.task_id, row.dwa_id)
    return key + (row.naics,) if pooling_key == "occupation_task_naics" else key


def _firm_size_row(re: RowEconomics, sizes: FineFirmSizeDistribution, config: RunConfig):
    outcomes = firm_level_outcomes(re.row.soc_code, re.economics, sizes, lambda t: _safe_decide(t, config))
    N = math.fsum(o.employees for o in outcomes)
    r = math.fsum(o.r * o.employees for o in outcomes) / N if N > 0 else 0.0
    share: dict[Regime, float] = {}
    for o in outcomes:
        share[o.regime] = share.get(o.regime, 0.0) + o.employees
    regime = max(sorted(share, key=str), key=lambda k: share[k]) if share else Regime.NONE
    return outcomes, r, regime


def run(rows: Sequence[TaskRow], config: RunConfig = RunConfig(), rejections: Sequence[Rejection] = ()) -> RunResult:
    """Decide every row and aggregate the results.

    Rows whose accuracy requirements cannot be mapped to losses are added
    to the rejections with reason ``entropy-domain``. Solver failures are
    recorded on the row (``converged`` false, ``note``) without stopping
    the batch.
    """
    rejections = list(rejections)
    n_input = len(rows) + len(rejections)
    built: list[RowEconomics] = []
    for row in rows:
        try:
            built.append(build_economics(row, config))
        except DomainError as exc:
            rejections.append(Rejection(*row.key, "entropy-domain", str(exc)))
    rej_frame = pd.DataFrame([asdict(r) for r in rejections], columns=list(REJECTION_COLUMNS))

    records, outcomes = [], []
    if config.deployment == "pooled":
        pools: dict[tuple, list[RowEconomics]] = {}
        for re in built:
            key = _pool_key(re.row, config.pooling_key) if not re.missing_wage else ("__alone__",) + re.row.key
            pools.setdefault(key, []).append(re)
        for key in sorted(pools):
            members = pools[key]
            t_pool = _pool_economics(members, config) if len(members) > 1 else members[0].economics
            d = _safe_decide(t_pool, config)
            for m in members:
                share = m.economics.employees / t_pool.employees if t_pool.employees > 0 else 0.0
                tb = total_benefit(m.economics)
                records.append(_output_row(m, d, tb=tb, var=d.variable_cost * share, fixed=d.fixed_cost * share,
                                           pool_size=len(members)))
                outcomes.append(TaskOutcome(m.row.soc_code, d.regime, d.r, tb, m.economics.wage,
                                            m.economics.employees, m.economics.time_share,
                                            m.economics.vision_share, d.feasibility_flags))
    else:
        for re in built:
            sizes = None
            if config.firm_sizes is not None and not re.missing_wage:
                sizes = _occupation_sizes(re, built, config.firm_sizes)
            if sizes is None:
                d = _safe_decide(re.economics, config)
                records.append(_output_row(re, d))
                outcomes.append(TaskOutcome.from_decision(re.row.soc_code, re.economics, d))
                continue
            firm_outcomes, r, regime = _firm_size_row(re, sizes, config)
            outcomes.extend(firm_outcomes)
            rec = _output_row(re, _failed(re.economics, RuntimeError("unused")))
            rec.update(replace_ratio=r, regime=str(regime), optimal_accuracy=np.nan,
                       total_benefit=math.fsum(o.total_benefit for o in firm_outcomes),
                       full_feasible=any(o.flags.full_feasible for o in firm_outcomes),
                       partial_feasible=any(o.flags.partial_feasible for o in firm_outcomes),
                       full_optimal=any(o.flags.full_optimal for o in firm_outcomes),
                       partial_optimal=any(o.flags.partial_optimal for o in firm_outcomes),
                       variable_cost=np.nan, fixed_cost=np.nan, optimal_loss=np.nan,
                       converged=True, pool_size=len(firm_outcomes), note="firm_size_distribution")
            records.append(rec)

    decisions = pd.DataFrame(records, columns=list(OUTPUT_COLUMNS))
    rollups = occupation_rollups(outcomes)
    summary = summarize(outcomes, config, n_input=n_input,
                        n_rejected=len(rej_frame), decisions=decisions)
    return RunResult(decisions, rej_frame, rollups, summary, outcomes)


def _occupation_sizes(re: RowEconomics, built: Sequence[RowEconomics],
                      firm_sizes: Mapping[str, FineFirmSizeDistribution]):
    naics = re.row.naics
    if naics not in firm_sizes:
        return None
    # industry headcount: each occupation counted once per industry
    seen = {}
    for b in built:
        if b.row.naics == naics:
            seen[b.row.soc_code] = b.row.employees
    l_i = math.fsum(seen.values())
    return occupation_size_distribution({naics: firm_sizes[naics]}, {naics: l_i}, {naics: re.row.employees})


def summarize(outcomes: Sequence[TaskOutcome], config: RunConfig, *, n_input: int, n_rejected: int,
              decisions: pd.DataFrame | None = None) -> dict:
    """Economy-wide totals for a list of outcomes."""
    z_totals = {z: math.fsum(occupation_benefit(outcomes, z).values()) for z in Z_CLASSES}
    parts = residual_decomposition(outcomes)
    try:
        rate = automation_rate(outcomes)
        rate_tau = automation_rate(outcomes, tau_weighted=True)
    except ZeroDenominator:
        rate = rate_tau = 0.0
    counts = {str(r): 0 for r in Regime}
    for o in outcomes:
        counts[str(o.regime)] += 1
    base = parts["base"]
    summary = {
        "npv_convention": NPV_CONVENTION,
        "data_price_convention": DATA_PRICE_CONVENTION,
        "cost_mode": config.cost_mode,
        "deployment": config.deployment,
        "pooling_key": config.pooling_key if config.deployment == "pooled" else None,
        "employee_scale": config.employee_scale,
        "seed": config.seed,
        "input_rows": n_input,
        "rejected_rows": n_rejected,
        "decided_units": len(outcomes),
        "regime_counts": counts,
        "benefit_by_class": z_totals,
        "realized_saving_npv": math.fsum(z_totals.values()),
        "residual_decomposition": parts,
        "residual_shares": {k: (v / base if base else 0.0) for k, v in parts.items() if k != "base"},
        "automation_rate": rate,
        "automation_rate_tau_weighted": rate_tau,
    }
    if decisions is not None:
        summary["output_rows"] = int(len(decisions))
        summary["not_converged_rows"] = int((~decisions["converged"].astype(bool)).sum())
        summary["missing_wage_rows"] = int(decisions["missing_wage"].astype(bool).sum())
    return summary


def outcomes_from_frame(df: pd.DataFrame) -> list[TaskOutcome]:
    """Rebuild outcomes from a decisions CSV written by :func:`run`."""
    regimes = {str(r): r for r in Regime}
    out = []
    for rec in df.to_dict("records"):
        flags = FeasibilityFlags(*(_as_bool(rec[k]) for k in ("full_feasible", "partial_feasible",
                                                               "full_optimal", "partial_optimal")))
        out.append(TaskOutcome(str(rec["soc_code"]), regimes[str(rec["regime"])], float(rec["replace_ratio"]),
                               float(rec["total_benefit"]), float(rec["wage"]), float(rec["employees"]),
                               float(rec["time_share"]), float(rec["vision_share"]), flags))
    return out


def _as_bool(v) -> bool:
    if isinstance(v, str):
        return v.strip().lower() in ("true", "1", "yes")
    return bool(v)


def run_files(data_dir, config: RunConfig = RunConfig()) -> RunResult:
    """Ingest ``survey.csv``, ``complexity.csv`` and ``wages.csv`` from a directory and run."""
    data_dir = Path(data_dir)
    ingest = ingest_and_merge(data_dir / "survey.csv", data_dir / "complexity.csv", data_dir / "wages.csv")
    sizes_path = data_dir / "firm_sizes.csv"
    if config.deployment == "firm" and config.firm_sizes is None and sizes_path.exists():
        config = replace(config, firm_sizes=read_firm_sizes(sizes_path))
    return run(ingest.rows, config, ingest.rejections)


# ---------------------------------------------------------------------------
# elasticity report

ELASTICITY_BUNDLES = {
    "small": (25_000.0, 200_000.0, 250_000.0),
    "medium": (100_000.0, 1_000_000.0, 5_000_000.0),
}

# reference values (r, eps_D, eps_T, eps_M, total) per class count and scenario
REFERENCE_ELASTICITIES = {
    2: {"small": (0.804, 0.010, 0.046, 0.046, 0.102), "medium": (0.911, 0.009, 0.021, 0.007, 0.037)},
    5: {"small": (0.866, 0.016, 0.035, 0.032, 0.083), "medium": (0.960, 0.013, 0.016, 0.006, 0.034)},
    10: {"small": (0.860, 0.016, 0.040, 0.034, 0.089), "medium": (0.961, 0.012, 0.018, 0.006, 0.036)},
    50: {"small": (0.771, 0.015, 0.080, 0.056, 0.151), "medium": (0.925, 0.009, 0.032, 0.012, 0.052)},
    100: {"small": (0.695, 0.015, 0.122, 0.078, 0.215), "medium": (0.894, 0.007, 0.044, 0.017, 0.068)},
    500: {"small": (0.351, 0.023, 0.544, 0.283, 0.849), "medium": (0.751, 0.006, 0.112, 0.045, 0.163)},
    1000: {"small": (0.080, 0.088, 3.459, 1.629, 5.176), "medium": (0.636, 0.006, 0.188, 0.075, 0.269)},
}
ELASTICITY_FIELDS = ("r", "eps_D", "eps_T", "eps_M", "total")


def _baseline(n, convention, entropy_params):
    if convention == "ln_n":
        return math.log(n)
    if convention == "entropy_map":
        return task_entropy(1.0 - 1.0 / n, n, entropy_params)
    raise ValueError(f"unknown baseline convention {convention!r}")


def report_elasticities(law: ScalingLawParams = ScalingLawParams(),
                        data_terms: Sequence[str] = ("per_class", "total"),
                        conventions: Sequence[str] = ("ln_n", "entropy_map"),
                        entropy_params: EntropyFitParams = DEFAULT_ENTROPY_PARAMS) -> pd.DataFrame:
    """Performance elasticities at the two reference bundles.

    One row per data-term convention, baseline convention, class count and
    scenario, with ``r = (h_task - H) / h_task``, the three elasticities,
    their total, the reference values and the relative deviation of each
    cell (``dev_*``).
    """
    rows = []
    for data_term in data_terms:
        for conv in conventions:
            for n, ref in REFERENCE_ELASTICITIES.items():
                h_task = _baseline(n, conv, entropy_params)
                for scenario, (D, T, M) in ELASTICITY_BUNDLES.items():
                    bundle = InputBundle(D, T, M, float(n))
                    H = eval_loss(bundle, law, mode="extrapolate", data_term=data_term)
                    try:
                        eps = performance_elasticities(bundle, law, h_task, data_term=data_term)
                        vals = ((h_task - H) / h_task, *eps, sum(eps))
                    except BaselineNotExceeded:
                        # the bundle does not beat the baseline; elasticities undefined
                        vals = ((h_task - H) / h_task,) + (math.nan,) * 4
                    rec = {"data_term": data_term, "baseline": conv, "n_class": n, "scenario": scenario,
                           "loss": H, "h_task": h_task}
                    for name, v, r in zip(ELASTICITY_FIELDS, vals, ref[scenario]):
                        rec[name] = v
                        rec[f"ref_{name}"] = r
                        rec[f"dev_{name}"] = v / r - 1.0
                    rows.append(rec)
    return pd.DataFrame(rows)


def best_elasticity_convention(report: pd.DataFrame, classes: Sequence[int] = (2, 10)) -> tuple[tuple[str, str], float]:
    """Convention with the smallest worst-case cell deviation on ``classes``."""
    dev_cols = [f"dev_{f}" for f in ELASTICITY_FIELDS]
    best, best_err = None, math.inf
    for key, group in report.groupby(["data_term", "baseline"], sort=True):
        devs = group[group["n_class"].isin(classes)][dev_cols].abs().to_numpy()
        err = math.inf if np.isnan(devs).any() else float(devs.max())
        if err < best_err:
            best, best_err = key, float(err)
    return best, best_err


# ---------------------------------------------------------------------------
# synthetic fixtures

# hand-picked tasks with known decisions at the default settings
ANCHOR_TASKS = (
    # partial at 100 employees, full once the headcount reaches 1,000
    dict(task_id="A-PARTIAL", n_class=10, required_error=0.05, employees=100.0),
    dict(task_id="A-FULL", n_class=2, required_error=0.05, employees=10_000.0),
    dict(task_id="A-NONE", n_class=10, required_error=0.05, employees=10.0),
)
_ANCHOR_COMMON = dict(random_guess_error=0.9, judgment_freq=2e5, num_tasks=1, vision_share=0.6,
                      dwa_time_share=0.6, importance_score=0.5, wage=60_000.0)


def make_fixture(n_rows: int = 500, seed: int = 0, n_invalid: int = 0,
                 n_missing_wage: int = 0) -> dict[str, pd.DataFrame]:
    """Synthetic survey, complexity and wage tables.

    The merged table has exactly ``n_rows`` valid rows plus ``n_invalid``
    rows that each break one row invariant (cycling through the rejection
    reasons) plus ``n_missing_wage`` rows with a blank wage. It always
    includes the :data:`ANCHOR_TASKS`.
    """
    if n_rows < len(ANCHOR_TASKS):
        raise OutOfRange(f"n_rows must be at least {len(ANCHOR_TASKS)}")
    rng = np.random.default_rng(seed)
    survey, complexity, wages = [], [], []

    def add_task(soc, task_id, n_class, required_error, random_guess_error, judgment_freq, num_tasks,
                 vision_share, dwa_time_share, importance_score):
        survey.append(dict(soc_code=soc, task_id=task_id, required_error=required_error,
                           random_guess_error=random_guess_error, judgment_freq=judgment_freq))
        complexity.append(dict(soc_code=soc, task_id=task_id, dwa_id=f"D{task_id}", n_class=n_class,
                               num_tasks=num_tasks, vision_share=vision_share, dwa_time_share=dwa_time_share,
                               importance_score=importance_score))

    for i, anchor in enumerate(ANCHOR_TASKS):
        soc = f"00-{i:04d}"
        kw = {**_ANCHOR_COMMON, **anchor}
        wages.append(dict(soc_code=soc, naics="0000", wage=kw.pop("wage"), employees=kw.pop("employees")))
        add_task(soc, **kw)

    def random_task(soc, j):
        n_class = int(round(math.exp(rng.uniform(math.log(2), math.log(1000)))))
        n_class = max(n_class, 2)
        chance_error = 1.0 - 1.0 / n_class
        random_guess_error = float(rng.uniform(0.3, 0.95) * max(chance_error, 0.5))
        random_guess_error = min(random_guess_error, chance_error) if n_class > 2 else min(random_guess_error, 0.5)
        required_error = float(rng.uniform(0.01, 0.2) * random_guess_error)
        add_task(soc, f"T{soc}-{j}", n_class, round(required_error, 6), round(random_guess_error, 6),
                 round(float(math.exp(rng.uniform(math.log(1e4), math.log(1e6)))), 2),
                 int(rng.integers(1, 4)), round(float(rng.uniform(0.1, 0.9)), 4),
                 round(float(rng.uniform(0.1, 0.6)), 4), round(float(rng.uniform(0.3, 1.0)), 4))

    remaining = n_rows - len(ANCHOR_TASKS)
    occ = 0
    while remaining > 0:
        occ += 1
        soc = f"{10 + occ // 10000:02d}-{occ % 10000:04d}"
        n_tasks, n_naics = (5, 2) if remaining >= 10 else (remaining, 1)
        base_wage = float(math.exp(rng.normal(math.log(55_000), 0.35)))
        for k in range(n_naics):
            wages.append(dict(soc_code=soc, naics=f"{3100 + k}", wage=round(base_wage * rng.uniform(0.9, 1.1), 2),
                              employees=float(round(math.exp(rng.uniform(math.log(20), math.log(2e4)))))))
        for j in range(n_tasks):
            random_task(soc, j)
        remaining -= n_tasks * n_naics

    bad = (
        dict(required_error=0.5, random_guess_error=0.4),        # attention-check
        dict(vision_share=1.3),                                   # fraction-range
        dict(n_class=1),                                          # count-range
    )
    for i in range(n_invalid):
        soc = f"99-{i:04d}"
        kw = {**_ANCHOR_COMMON, "task_id": f"X{i}", "n_class": 10, "required_error": 0.05, **bad[i % len(bad)]}
        wages.append(dict(soc_code=soc, naics="0000", wage=kw.pop("wage"), employees=50.0))
        add_task(soc, **kw)
    for i in range(n_missing_wage):
        soc = f"98-{i:04d}"
        kw = {**_ANCHOR_COMMON, "task_id": f"W{i}", "n_class": 10, "required_error": 0.05}
        kw.pop("wage")
        wages.append(dict(soc_code=soc, naics="0000", wage=np.nan, employees=500.0))
        add_task(soc, **kw)

    return {
        "survey": pd.DataFrame(survey, columns=list(SURVEY_COLUMNS)),
        "complexity": pd.DataFrame(complexity, columns=list(COMPLEXITY_COLUMNS)),
        "wages": pd.DataFrame(wages, columns=list(WAGE_COLUMNS)),
    }


def write_fixture(out_dir, tables: Mapping[str, pd.DataFrame]) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, df in tables.items():
        paths[name] = out / f"{name}.csv"
        write_csv(paths[name], df)
    return paths


def make_firm_size_table(naics_codes: Sequence[str], seed: int = 0) -> pd.DataFrame:
    """Coarse firm-size bins per industry with counts falling in firm size."""
    from .aggregation import STANDARD_BIN_EDGES

    rng = np.random.default_rng(seed)
    rows = []
    for code in naics_codes:
        scale = float(rng.uniform(500, 5000))
        for k, (lo, hi) in enumerate(STANDARD_BIN_EDGES):
            rows.append(dict(naics=code, bin_lower=lo, bin_upper=np.nan if hi is None else hi,
                             firm_count=round(scale * 0.45 ** k, 3)))
    return pd.DataFrame(rows, columns=list(FIRM_SIZE_COLUMNS))
