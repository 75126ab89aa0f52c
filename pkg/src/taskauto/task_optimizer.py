"""Cost-minimising AI system design and the none / partial / full decision.

For a target loss ``h`` the cheapest system solves

    min  c_D D + c_T T M + q M          (q = c_I * decision units)
    s.t. loss(D, T, M; n) <= h,  T >= s D,  (D, T, M) in the regime box.

In log coordinates the objective is a sum of exponentials and the loss
constraint is a posynomial, so the problem is convex with a unique optimum.
It is solved through its Lagrangian: for a multiplier ``lam`` on the loss
bracket the data block has a closed form, steps follow from model size in
closed form and model size is a one-dimensional monotone root. An outer
root-find on ``ln lam`` matches the target. The multiplier is the shadow
price of loss reduction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.optimize import brentq

from .cost_model import DECISIONS_PER_UNIT, ReducedCostCoefficients
from .entropy_map import DEFAULT_ENTROPY_PARAMS, EntropyFitParams, accuracy_from_entropy, entropy_bracket
from .errors import Infeasible, NotConverged, OutOfRange
from .scaling_law import DEFAULT_REGIME, InputBundle, ScalingLawParams, SupportedRegime


class Regime(str, Enum):
    NONE = "None"
    PARTIAL = "Partial"
    FULL = "Full"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class TaskEconomics:
    """Economic description of one task instance.

    ``annual_decisions`` is the yearly decision volume the system must serve;
    ``npv_factor`` converts one year of labour saving into lifetime present
    value.
    """

    wage: float
    employees: float
    time_share: float
    vision_share: float
    subtasks: int
    n_class: float
    h_task: float
    h_req: float
    annual_decisions: float
    npv_factor: float
    p_data: float

    def __post_init__(self):
        if not self.h_req < self.h_task:
            raise OutOfRange(f"h_req ({self.h_req}) must be below h_task ({self.h_task})")
        for name in ("time_share", "vision_share"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise OutOfRange(f"{name} must be in [0, 1], got {v}")
        if self.wage < 0 or self.employees < 0:
            raise OutOfRange("wage and employees must be >= 0")
        if self.annual_decisions < 0 or self.npv_factor <= 0:
            raise OutOfRange("annual_decisions must be >= 0 and npv_factor > 0")
        if self.subtasks < 1 or self.n_class < 2:
            raise OutOfRange("need subtasks >= 1 and n_class >= 2")

    @property
    def decision_units(self) -> float:
        return self.annual_decisions / DECISIONS_PER_UNIT

    def scaled(self, k: float) -> "TaskEconomics":
        """Same task with ``k`` times the employees (and decision volume)."""
        return replace(self, employees=self.employees * k, annual_decisions=self.annual_decisions * k)


@dataclass(frozen=True)
class OptimizerConfig:
    """Numerical settings for the task optimiser.

    ``step_floor_per_datum`` is the constant ``s`` in ``T >= s D``; with
    ``step_floor_scales_with_n`` it becomes ``s * n``. ``golden_tol`` is the
    absolute tolerance (nats) of the outer loss search.
    """

    step_floor_per_datum: float = 1.0
    step_floor_scales_with_n: bool = False
    golden_tol: float = 1e-4
    multiplier_rtol: float = 0.05
    fd_step: float = 1e-5
    feasibility_grid: int = 8
    n_starts: int = 0
    seed: int = 0

    def step_floor(self, n: float) -> float:
        s = self.step_floor_per_datum
        return s * n if self.step_floor_scales_with_n else s


@dataclass(frozen=True)
class CostMinSolution:
    bundle: InputBundle
    variable_cost: float
    shadow_price: float
    converged: bool
    achieved_loss: float
    target_loss: float
    shadow_price_fd: float = float("nan")
    constraint_active: bool = True


@dataclass(frozen=True)
class FeasibilityFlags:
    full_feasible: bool
    partial_feasible: bool
    full_optimal: bool
    partial_optimal: bool

    def as_dict(self) -> dict[str, bool]:
        return {k: getattr(self, k) for k in ("full_feasible", "partial_feasible", "full_optimal", "partial_optimal")}


@dataclass(frozen=True)
class AutomationDecision:
    regime: Regime
    r: float
    optimal_loss: float
    optimal_accuracy: float
    solution: CostMinSolution | None
    total_benefit: float
    variable_cost: float
    fixed_cost: float
    feasibility_flags: FeasibilityFlags
    marginal_benefit: float = float("nan")
    converged: bool = True
    note: str = ""


NO_FLAGS = FeasibilityFlags(False, False, False, False)


def total_benefit(t: TaskEconomics) -> float:
    """Lifetime present value of the labour saved by full automation."""
    return t.employees * t.wage * t.time_share * t.vision_share * t.npv_factor


def marginal_benefit(t: TaskEconomics) -> float:
    """Benefit per nat of loss reduction between ``h_task`` and ``h_req``."""
    return total_benefit(t) / (t.h_task - t.h_req)


# ---------------------------------------------------------------------------
# inner solver


def _clamp(x, lo, hi):
    return lo if x < lo else hi if x > hi else x


class CostMinimizer:
    """Minimum-cost system designs for one task across loss targets.

    Parameters
    ----------
    n_class : float
        Classes per subtask.
    coeffs : ReducedCostCoefficients
        Per-task prices (already scaled by the subtask count).
    decision_units : float
        Yearly inference volume in decision units.
    """

    def __init__(self, n_class: float, coeffs: ReducedCostCoefficients, decision_units: float,
                 law: ScalingLawParams = ScalingLawParams(), regime: SupportedRegime = DEFAULT_REGIME,
                 config: OptimizerConfig = OptimizerConfig()):
        self.n = float(n_class)
        self.coeffs = coeffs
        self.law = law
        self.regime = regime
        self.config = config
        n = self.n
        a, b, c = (float(v) for v in law.exponents(n))
        alpha, beta, sigma = (float(v) for v in law.prefactors(n))
        self.a, self.b, self.c = a, b, c
        # data term in total images: alpha (D/n)^-a = alpha n^a D^-a
        self.kD = alpha * n ** a
        self.kT, self.kM = beta, sigma
        self.G = law.G
        self.scale = n ** law.K
        self.cD, self.cT = coeffs.c_D, coeffs.c_T
        self.q = coeffs.c_I * decision_units
        dlo, dhi = regime.data_bounds(n)
        self.uL, self.uU = math.log(dlo), math.log(dhi)
        self.vL, self.vU = math.log(regime.steps[0]), math.log(regime.steps[1])
        self.wL, self.wU = math.log(regime.model_size[0]), math.log(regime.model_size[1])
        s = config.step_floor(n)
        self.ls = math.log(s) if s > 0 else None
        self._cache: dict[float, CostMinSolution] = {}
        self._last_log_lam = None

        # cheapest and lowest-loss corners of the feasible set
        uL, uU, vL, vU = self.uL, self.uU, self.vL, self.vU
        if self.ls is not None:
            uU = min(uU, vU - self.ls)
            vL = max(vL, uL + self.ls)
        if uU < uL - 1e-12 or vL > vU + 1e-12:
            self.empty = True
            self.cheap = self.best = None
            self.h_cheap = self.h_min = math.inf
        else:
            self.empty = False
            self.cheap = (uL, vL, self.wL)
            self.best = (uU, vU, self.wU)
            self.h_cheap = self.loss(*self.cheap)
            self.h_min = self.loss(*self.best)

    # -- primitives in log coordinates
    def bracket(self, u, v, w):
        return (self.kD * math.exp(-self.a * u) + self.kT * math.exp(-self.b * v)
                + self.kM * math.exp(-self.c * w) + self.G)

    def loss(self, u, v, w):
        return self.scale * self.bracket(u, v, w)

    def cost(self, u, v, w):
        return self.cD * math.exp(u) + self.cT * math.exp(v + w) + self.q * math.exp(w)

    # -- Lagrangian minimiser for a given multiplier on the bracket
    def _argmin_free(self, lam):
        """Minimiser over the box only (step floor ignored)."""
        a, b, c = self.a, self.b, self.c
        u = _clamp(math.log(lam * a * self.kD / self.cD) / (1 + a), self.uL, self.uU)
        lbt = math.log(lam * b * self.kT / self.cT)
        cT, q, lcs = self.cT, self.q, lam * c * self.kM
        vL, vU = self.vL, self.vU

        def v_of(w):
            return _clamp((lbt - w) / (1 + b), vL, vU)

        def g(w):
            return cT * math.exp(v_of(w) + w) + q * math.exp(w) - lcs * math.exp(-c * w)

        w = self._monotone_root(g, self.wL, self.wU)
        return u, v_of(w), w

    def _argmin_floor(self, lam):
        """Minimiser with the step floor active, ``v = u + ln s``."""
        a, b, c = self.a, self.b, self.c
        ls = self.ls
        s = math.exp(ls)
        cD, cTs, q = self.cD, self.cT * s, self.q
        ka, kb = lam * a * self.kD, lam * b * self.kT * s ** (-b)
        lcs = lam * c * self.kM
        uL = max(self.uL, self.vL - ls)
        uU = min(self.uU, self.vU - ls)

        def u_of(w):
            ew = math.exp(w)

            def du(u):
                return cD * math.exp(u) + cTs * math.exp(u) * ew - ka * math.exp(-a * u) - kb * math.exp(-b * u)

            return self._monotone_root(du, uL, uU)

        def g(w):
            u = u_of(w)
            return cTs * math.exp(u + w) + q * math.exp(w) - lcs * math.exp(-c * w)

        w = self._monotone_root(g, self.wL, self.wU)
        u = u_of(w)
        return u, u + ls, w

    @staticmethod
    def _monotone_root(fun, lo, hi):
        """Root of an increasing function clamped to ``[lo, hi]``."""
        flo = fun(lo)
        if flo >= 0:
            return lo
        fhi = fun(hi)
        if fhi <= 0:
            return hi
        return brentq(fun, lo, hi, xtol=1e-13, rtol=1e-14, maxiter=200)

    def argmin_lagrangian(self, lam):
        """Minimise ``cost + lam * bracket`` over the feasible set."""
        u, v, w = self._argmin_free(lam)
        if self.ls is not None and v < u + self.ls - 1e-12:
            u, v, w = self._argmin_floor(lam)
        return u, v, w

    # -- public solves
    def _solution(self, x, lam, h_target, active):
        u, v, w = x
        bundle = InputBundle(data=math.exp(u), steps=math.exp(v), model_size=math.exp(w), n_class=self.n)
        return CostMinSolution(bundle=bundle, variable_cost=self.cost(u, v, w),
                               shadow_price=lam / self.scale, converged=True,
                               achieved_loss=self.loss(u, v, w), target_loss=h_target,
                               constraint_active=active)

    def solve(self, h_target: float) -> CostMinSolution:
        """Cheapest design reaching ``loss <= h_target`` (no multiplier check)."""
        h_target = float(h_target)
        hit = self._cache.get(h_target)
        if hit is not None:
            return hit
        if self.empty or h_target < self.h_min * (1 - 1e-12) - 1e-12:
            raise Infeasible(f"target loss {h_target:.6g} below the regime minimum {self.h_min:.6g}")
        if h_target >= self.h_cheap:
            sol = self._solution(self.cheap, 0.0, h_target, False)
        elif h_target <= self.h_min:
            # only the lowest-loss corner attains the target; report the
            # one-sided multiplier from just above it
            x = self.best
            lam = self._solve_multiplier(self.h_min * (1 + 1e-9) + 1e-12)[1]
            sol = self._solution(x, lam, h_target, True)
        else:
            x, lam = self._solve_multiplier(h_target)
            sol = self._solution(x, lam, h_target, True)
        self._cache[h_target] = sol
        return sol

    def _solve_multiplier(self, h_target):
        """Outer root-find on ``ln lam`` so the Lagrangian minimiser hits the target."""
        R = h_target / self.scale  # bracket target

        def F(ll):
            x = self.argmin_lagrangian(math.exp(ll))
            return math.log(self.bracket(*x)) - math.log(R), x

        ll0 = self._last_log_lam
        if ll0 is None:
            # the data block alone balances where cost ~ lam * term
            ll0 = math.log(max(self.cost(*self.cheap), 1e-300)) - math.log(max(R, 1e-300))
        lo = hi = ll0
        f0, _ = F(ll0)
        step = 2.0
        if f0 > 0:
            # loss too high: raise the multiplier
            while True:
                hi = lo + step
                fhi, _ = F(hi)
                if fhi <= 0:
                    break
                lo, step = hi, step * 2
                if step > 4096:
                    raise NotConverged("could not bracket the loss multiplier")
        else:
            while True:
                lo = hi - step
                flo, _ = F(lo)
                if flo > 0:
                    break
                hi, step = lo, step * 2
                if step > 4096:
                    raise NotConverged("could not bracket the loss multiplier")
        ll = brentq(lambda z: F(z)[0], lo, hi, xtol=1e-12, rtol=1e-14, maxiter=300)
        fval, x = F(ll)
        # step to the feasible side if the root landed marginally above target
        bump = 1e-12
        while fval > 1e-12 and bump < 1e-3:
            ll_b = ll + bump
            fval, x = F(ll_b)
            bump *= 10
        self._last_log_lam = ll
        return x, math.exp(ll)

    def value(self, h: float) -> float:
        """Minimum variable cost ``kappa*(h)``."""
        return self.solve(h).variable_cost

    def min_cost_for_target(self, h_target: float, check_multiplier: bool = True) -> CostMinSolution:
        """Solve and cross-check the shadow price by central differences.

        Raises
        ------
        NotConverged
            If the analytic and finite-difference shadow prices differ by
            more than ``multiplier_rtol``.
        """
        sol = self.solve(h_target)
        if self.config.n_starts > 0:
            sol = self._polish_multistart(sol, h_target)
        if not check_multiplier:
            return sol
        fd = self.shadow_price_fd(h_target)
        lam = sol.shadow_price
        scale = max(abs(lam), abs(fd))
        ok = scale == 0 or abs(lam - fd) <= self.config.multiplier_rtol * scale
        sol = replace(sol, shadow_price_fd=fd, converged=ok)
        if not ok:
            raise NotConverged(f"shadow price {lam:.6g} disagrees with finite difference {fd:.6g}")
        return sol

    def shadow_price_fd(self, h: float) -> float:
        """``-d kappa*/dh`` by central differences (one-sided at the ends)."""
        delta = self.config.fd_step * max(1.0, abs(h))
        hp, hm = h + delta, h - delta
        if hm <= self.h_min:
            return -(self.value(hp) - self.value(h)) / delta
        if hp >= self.h_cheap and h < self.h_cheap:
            return -(self.value(h) - self.value(hm)) / delta
        return -(self.value(hp) - self.value(hm)) / (2 * delta)

    def _polish_multistart(self, sol, h_target):
        """Local SLSQP solves from random starts; keep any strictly cheaper feasible point."""
        from scipy.optimize import minimize

        rng = np.random.default_rng(self.config.seed)
        lo = np.array([self.uL, self.vL, self.wL])
        hi = np.array([self.uU, self.vU, self.wU])
        cons = [{"type": "ineq", "fun": lambda x: h_target - self.loss(*x)}]
        if self.ls is not None:
            cons.append({"type": "ineq", "fun": lambda x: x[1] - x[0] - self.ls})
        best = sol
        for _ in range(self.config.n_starts):
            x0 = rng.uniform(lo, hi)
            res = minimize(lambda x: math.log(self.cost(*x)), x0, method="SLSQP",
                           bounds=list(zip(lo, hi)), constraints=cons, options={"maxiter": 500, "ftol": 1e-12})
            if not res.success:
                continue
            x = res.x
            feasible = self.loss(*x) <= h_target + 1e-9 and (self.ls is None or x[1] >= x[0] + self.ls - 1e-9)
            if feasible and self.cost(*x) < best.variable_cost * (1 - 1e-9):
                best = replace(best, bundle=InputBundle(math.exp(x[0]), math.exp(x[1]), math.exp(x[2]), self.n),
                               variable_cost=self.cost(*x), achieved_loss=self.loss(*x))
        return best

    def solve_for_multiplier(self, shadow_price: float) -> CostMinSolution:
        """Design that minimises ``cost + shadow_price * loss`` directly."""
        lam = shadow_price * self.scale
        if self.empty:
            raise Infeasible("empty feasible set")
        x = self.argmin_lagrangian(lam) if lam > 0 else self.cheap
        return self._solution(x, lam, self.loss(*x), lam > 0)


def min_cost_for_target(h_target: float, t: TaskEconomics, coeffs: ReducedCostCoefficients,
                        law: ScalingLawParams = ScalingLawParams(), regime: SupportedRegime = DEFAULT_REGIME,
                        config: OptimizerConfig = OptimizerConfig()) -> CostMinSolution:
    """Cheapest (D, T, M) meeting ``h_target`` for task ``t``."""
    cm = CostMinimizer(t.n_class, coeffs, t.decision_units, law, regime, config)
    if not h_target < t.h_task:
        raise OutOfRange("target loss must be below the task baseline")
    return cm.min_cost_for_target(h_target)


# ---------------------------------------------------------------------------
# outer search


def golden_section(f, lo: float, hi: float, tol: float = 1e-4):
    """Minimise a unimodal ``f`` on ``[lo, hi]``; returns ``(x, f(x))``.

    The best evaluated point is returned, endpoints included.
    """
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    candidates = [(fc, c), (fd, d), (f(lo), lo), (f(hi), hi)]
    fx, x = min(candidates)
    return x, fx


def _inverse_mc(cm: CostMinimizer, mb: float, h_lo: float, h_hi: float, tol: float):
    def objective(h):
        return h + cm.value(h) / mb

    h, _ = golden_section(objective, h_lo, h_hi, tol)
    return h, cm.solve(h)


def inverse_marginal_cost(mb: float, t: TaskEconomics, coeffs: ReducedCostCoefficients,
                          law: ScalingLawParams = ScalingLawParams(), regime: SupportedRegime = DEFAULT_REGIME,
                          config: OptimizerConfig = OptimizerConfig(), h_lower: float | None = None):
    """Loss ``h*`` minimising ``h + kappa*(h)/mb`` on ``[h_min, h_task]``.

    Returns
    -------
    (float, CostMinSolution)
    """
    if not mb > 0:
        raise OutOfRange("marginal benefit must be positive")
    cm = CostMinimizer(t.n_class, coeffs, t.decision_units, law, regime, config)
    if cm.empty or cm.h_min >= t.h_task:
        raise Infeasible("no design beats the task baseline inside the regime")
    lo = cm.h_min if h_lower is None else max(h_lower, cm.h_min)
    return _inverse_mc(cm, mb, lo, t.h_task, config.golden_tol)


# ---------------------------------------------------------------------------
# decision


def _accuracy(h, n, entropy_params):
    lo, hi = entropy_bracket(n, entropy_params)
    if h <= lo:
        return 1.0
    if h >= hi:
        return 1.0 / n
    return accuracy_from_entropy(h, n, entropy_params)


def _ratio(t, h):
    return min(max((t.h_task - h) / (t.h_task - t.h_req), 0.0), 1.0)


def classify_feasibility(t: TaskEconomics, cm: CostMinimizer, h_star: float, fixed: float,
                         config: OptimizerConfig = OptimizerConfig()) -> FeasibilityFlags:
    """Feasibility and optimality of full and partial automation.

    Automation at loss ``h`` is feasible when it lowers total cost, that is
    ``TB * r(h) - fixed - kappa*(h) > 0``. Partial feasibility is checked at
    ``h_star`` and on a coarse grid of losses between ``h_req`` and
    ``h_task``.
    """
    TB = total_benefit(t)
    h_min = cm.h_min

    def net(h):
        return TB * _ratio(t, h) - fixed - cm.value(h)

    full_feasible = t.h_req >= h_min and net(t.h_req) > 0
    lo = max(t.h_req, h_min)
    grid = [h_star] if lo <= h_star < t.h_task else []
    if lo < t.h_task:
        grid += list(np.linspace(lo, t.h_task, config.feasibility_grid + 2)[:-1])
    partial_feasible = full_feasible or any(net(h) > 0 for h in grid)
    full_optimal = full_feasible and h_star <= t.h_req
    partial_optimal = partial_feasible and h_star > t.h_req
    return FeasibilityFlags(bool(full_feasible), bool(partial_feasible), bool(full_optimal), bool(partial_optimal))


def decide_automation(t: TaskEconomics, coeffs: ReducedCostCoefficients,
                      law: ScalingLawParams = ScalingLawParams(), regime: SupportedRegime = DEFAULT_REGIME,
                      config: OptimizerConfig = OptimizerConfig(),
                      entropy_params: EntropyFitParams = DEFAULT_ENTROPY_PARAMS) -> AutomationDecision:
    """Choose none, partial or full automation for one task.

    Compares the constant marginal benefit of loss reduction with the shadow
    price at the baseline and at the required loss, searches the interior
    otherwise, then applies the profitability gate against the fixed cost.
    """
    TB = total_benefit(t)
    fixed = coeffs.c_F
    base = dict(total_benefit=TB, fixed_cost=fixed)

    def none(h_star=t.h_task, var=0.0, flags=NO_FLAGS, note="", converged=True, mb=float("nan")):
        return AutomationDecision(Regime.NONE, 0.0, h_star, _accuracy(h_star, t.n_class, entropy_params),
                                  None, variable_cost=var, feasibility_flags=flags, marginal_benefit=mb,
                                  converged=converged, note=note, **base)

    if t.employees == 0 or t.wage == 0 or t.time_share == 0 or t.vision_share == 0:
        return none(note="degenerate")
    mb = marginal_benefit(t)
    if TB <= fixed:
        # even r = 1 at zero variable cost cannot repay the fixed block
        return none(note="fixed_cost_exceeds_benefit", mb=mb)
    cm = CostMinimizer(t.n_class, coeffs, t.decision_units, law, regime, config)
    if cm.empty or cm.h_min >= t.h_task:
        return none(note="infeasible", mb=mb)

    lam_task = cm.solve(t.h_task).shadow_price
    full_reachable = t.h_req >= cm.h_min
    if mb <= lam_task:
        h_star, note = t.h_task, "mc_exceeds_mb"
    elif full_reachable and mb >= cm.solve(t.h_req).shadow_price:
        h_star, note = t.h_req, ""
    else:
        lo = max(t.h_req, cm.h_min)
        h_star, _ = _inverse_mc(cm, mb, lo, t.h_task, config.golden_tol)
        note = ""

    flags = classify_feasibility(t, cm, h_star, fixed, config)
    if h_star >= t.h_task:
        return none(t.h_task, 0.0, flags, note, mb=mb)

    try:
        sol = cm.min_cost_for_target(h_star, check_multiplier=True)
        converged = True
    except NotConverged:
        sol = replace(cm.solve(h_star), converged=False, shadow_price_fd=cm.shadow_price_fd(h_star))
        converged = False
    r = _ratio(t, h_star)
    if TB * r - sol.variable_cost - fixed <= 0:
        return none(h_star, sol.variable_cost, flags, "not_profitable", converged, mb)
    if h_star <= t.h_req:
        regime_out, r = Regime.FULL, 1.0
    else:
        regime_out = Regime.PARTIAL
        r = (t.h_task - h_star) / (t.h_task - t.h_req)
    return AutomationDecision(regime_out, r, h_star, _accuracy(h_star, t.n_class, entropy_params), sol,
                              variable_cost=sol.variable_cost, feasibility_flags=flags,
                              marginal_benefit=mb, converged=converged, **base)
