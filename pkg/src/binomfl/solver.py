"""Joint optimization of quantization level, Binomial noise, and power.

The search minimizes (1 + n*p*(1-p)) / (q-1)^2 over integer q and n, a
probability grid of pitch lambda for p, and per-device powers, subject to
the privacy-budget cap, the noise-variance floor, channel capacity and the
power limits.  For each (q, p) cell the trial count is pinned down by a
doubling-plus-bisection search on the (monotone in n) budget estimate,
followed by the variance-floor ceiling.  The q range is pre-pruned by a
monotone lower envelope of the budget, and p is restricted to [1/2, 1)
because every constraint and the objective are symmetric around 1/2.

``brute_force_solve`` is the test oracle: an exhaustive scan over a denser
p grid and every single n, sharing nothing with the search logic above.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    AllInfeasibleError,
    ErrorBoundUnavailableError,
    InfeasibleError,
    PrivacyInfeasibleError,
)
from .privacy import (
    ALPHA,
    PrivacyContext,
    _sensitivity_triple,
    dp_variance_threshold,
    tight_epsilon_n_array,
    tight_epsilon_value,
)
from .wireless import (
    SystemParams,
    capacity_base,
    capacity_feasible,
    domain_bound,
    required_power,
)


@dataclass(frozen=True)
class SolverConfig:
    """Search configuration.

    eps_bar: privacy budget cap; rho: target relative error the pitch was
    derived from (informational once lambda_step is fixed); lambda_step:
    pitch of the p grid; n_cap: largest trial count the search will ever
    probe; bit_cap: optional hard cap b on payload bits per coordinate,
    enforcing q + n <= 2^b.
    """

    eps_bar: float
    lambda_step: float
    n_cap: int
    rho: float | None = None
    bit_cap: int | None = None

    def __post_init__(self):
        if self.eps_bar <= 0.0:
            raise ValueError(f"eps_bar must be positive, got {self.eps_bar}")
        if not (0.0 < self.lambda_step < 0.5):
            raise ValueError(f"lambda_step must lie in (0, 1/2), got {self.lambda_step}")
        if self.n_cap < 2:
            raise ValueError(f"n_cap must be >= 2, got {self.n_cap}")
        if self.rho is not None and self.rho <= 0.0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.bit_cap is not None and self.bit_cap < 2:
            raise ValueError(f"bit_cap must be >= 2, got {self.bit_cap}")

    @classmethod
    def for_target_error(
        cls,
        eps_bar: float,
        rho: float,
        n_cap: int,
        ctx: PrivacyContext,
        bit_cap: int | None = None,
    ) -> "SolverConfig":
        """Build a config whose grid pitch guarantees relative error < rho."""
        _, mu = eta_and_mu_values(n_cap, ctx)
        return cls(
            eps_bar=eps_bar,
            lambda_step=lambda_for_rho(rho, mu),
            n_cap=n_cap,
            rho=rho,
            bit_cap=bit_cap,
        )


@dataclass(frozen=True)
class Solution:
    """One feasible point of the joint problem, with its score."""

    q: int
    n: int
    p: float
    powers: tuple[float, ...]
    objective: float
    epsilon_achieved: float


@dataclass
class SolveStats:
    """Bookkeeping of one solve run, for reports and complexity checks."""

    eta: float | None
    mu: float | None
    lambda_step: float
    p_grid_size: int
    q_lo: int
    q_hi: int
    cells_total: int = 0
    cells_feasible: int = 0
    eps_evaluations: int = 0
    max_evals_per_cell: int = 0


def objective(q: int, n: int, p: float) -> float:
    """Convergence-rate surrogate (1 + n*p*(1-p)) / (q-1)^2; lower is faster."""
    if q < 2:
        raise ValueError(f"q must be >= 2, got {q}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not (0.0 < p < 1.0):
        raise ValueError(f"p must lie in (0, 1), got {p}")
    pq = p * (1.0 - p)
    return (1.0 + n * pq) / (q - 1) ** 2


def min_n_for_privacy(
    q: int,
    p: float,
    cfg: SolverConfig,
    ctx: PrivacyContext,
    epsilon_fn: Callable[[int], float] | None = None,
) -> int:
    """Smallest trial count whose budget estimate meets eps_bar at (q, p).

    Doubling phase followed by bisection, relying on the estimate being
    non-increasing in n.  ``epsilon_fn`` may replace the default tight
    estimator (used by tests to inject synthetic budget curves).  Raises
    :class:`PrivacyInfeasibleError` when even n_cap cannot meet the budget.
    """
    if epsilon_fn is None:
        epsilon_fn = lambda n: tight_epsilon_value(q, n, p, ctx.d, ctx.delta)
    memo: dict[int, float] = {}

    def eps(n: int) -> float:
        if n not in memo:
            memo[n] = epsilon_fn(n)
        return memo[n]

    eb = cfg.eps_bar
    if eps(2) <= eb:
        return 2
    if eps(cfg.n_cap) > eb:
        raise PrivacyInfeasibleError(
            f"budget at (q={q}, p={p}) stays above {eb} up to n_cap={cfg.n_cap}"
        )
    lo = hi = 2
    while eps(hi) > eb:
        lo = hi
        hi = min(2 * hi, cfg.n_cap)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if eps(mid) > eb:
            lo = mid
        else:
            hi = mid
    return hi


def n_from_constraints(q: int, p: float, n1: int, ctx: PrivacyContext) -> int:
    """Final trial count: the variance-floor ceiling joined with n1."""
    pq = p * (1.0 - p)
    n_floor = math.ceil(dp_variance_threshold(q, ctx.d, ctx.delta) / (ctx.K * pq))
    return max(n_floor, n1)


def mu_from_eta(eta: float) -> float:
    """Error amplification 2 / (1 - sqrt(1 - 4*eta)); ~1/eta for small eta."""
    if not (0.0 < eta < 0.25):
        raise ErrorBoundUnavailableError(
            f"eta = {eta:.4g} outside (0, 1/4): no relative-error factor can be quoted"
        )
    return 2.0 / (1.0 - math.sqrt(1.0 - 4.0 * eta))


def eta_and_mu_values(n_cap: int, ctx: PrivacyContext) -> tuple[float, float]:
    """Grid-error parameters (eta, mu) for a given trial-count cap.

    eta lower-bounds p*(1-p) at any feasible optimum; mu then converts a
    grid pitch into a relative-error factor.  Raises
    :class:`ErrorBoundUnavailableError` at eta >= 1/4, where no feasible
    point exists even at p = 1/2 with n = n_cap and the machinery breaks.
    """
    eta = max(23.0 * math.log(10.0 * ctx.d / ctx.delta), 6.0) / (ctx.K * n_cap)
    return eta, mu_from_eta(eta)


def eta_and_mu(cfg: SolverConfig, ctx: PrivacyContext) -> tuple[float, float]:
    return eta_and_mu_values(cfg.n_cap, ctx)


def lambda_for_rho(rho: float, mu: float) -> float:
    """Grid pitch that keeps the relative-error guarantee under rho.

    Any pitch strictly below rho/mu qualifies; a 0.99 safety factor keeps
    the returned value clear of the boundary.
    """
    if rho <= 0.0 or mu <= 0.0:
        raise ValueError("rho and mu must be positive")
    return 0.99 * rho / mu


def p_grid(lambda_step: float) -> list[float]:
    """Probability grid {1/2} plus every multiple of the pitch in (1/2, 1)."""
    grid = [0.5]
    i = math.floor(0.5 / lambda_step) + 1
    while True:
        p = i * lambda_step
        if p >= 1.0:
            break
        if p > 0.5:
            grid.append(p)
        i += 1
    return grid


def qbar_envelope(q: int, sys: SystemParams, ctx: PrivacyContext) -> float:
    """Monotone-in-q lower envelope of the budget over all feasible (n, p).

    Built from the worst-case noise variance the channel allows at this q;
    wherever the envelope already exceeds eps_bar, no (n, p, P_k) can be
    feasible.
    """
    r = 0.25 * (capacity_base(sys) - q)
    if r <= 0.0:
        return math.inf
    d1, d2, dinf = _sensitivity_triple(q, ctx.d, ctx.delta)
    ln125 = math.log(1.25 / ctx.delta)
    ln10 = math.log(10.0 / ctx.delta)
    ln20d = math.log(20.0 * ctx.d / ctx.delta)
    one_minus = 1.0 - ctx.delta / 10.0
    g1 = d2 * math.sqrt(2.0 * ln125) / math.sqrt(r)
    g2 = ALPHA * d1 * (r + 1.0) / (2.0 * one_minus * r * r)
    g3 = d2 / math.sqrt(one_minus) * math.sqrt((r + 1.0) / r**3 * ln10)
    g4 = (ALPHA / 3.0) * ln10 * dinf * (
        math.sqrt(2.0 * ln20d / r) + (3.0 + ln20d) / (3.0 * r)
    ) ** 2
    g5 = 2.0 * ln125 * dinf / r
    return g1 + g2 + g3 + g4 + g5


def qbar(sys: SystemParams, cfg: SolverConfig, ctx: PrivacyContext) -> int:
    """Largest quantization level the budget cap leaves any room for.

    Bisection for the largest q in {2, ..., domain bound} whose lower
    envelope stays at or under eps_bar.  Raises
    :class:`AllInfeasibleError` when already q = 2 is ruled out.
    """
    bound = domain_bound(sys)
    if qbar_envelope(2, sys, ctx) > cfg.eps_bar:
        raise AllInfeasibleError(
            f"budget envelope at q=2 already exceeds eps_bar={cfg.eps_bar}"
        )
    if qbar_envelope(bound, sys, ctx) <= cfg.eps_bar:
        return bound
    lo, hi = 2, bound  # envelope(lo) <= eps_bar < envelope(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if qbar_envelope(mid, sys, ctx) <= cfg.eps_bar:
            lo = mid
        else:
            hi = mid
    return lo


def _q_and_cap(sys: SystemParams, cfg: SolverConfig, ctx: PrivacyContext) -> tuple[int, float]:
    """Upper q limit and the real-valued ceiling on q + n for this run."""
    q_hi = min(qbar(sys, cfg, ctx), domain_bound(sys))
    cap_real = capacity_base(sys)
    if cfg.bit_cap is not None:
        cap_real = min(cap_real, float(2**cfg.bit_cap))
        q_hi = min(q_hi, 2**cfg.bit_cap - 2)
    return q_hi, cap_real


def solve_with_stats(
    sys: SystemParams, cfg: SolverConfig, ctx: PrivacyContext
) -> tuple[Solution, SolveStats]:
    """Grid search over (q, p) cells; see :func:`solve`."""
    q_hi, cap_real = _q_and_cap(sys, cfg, ctx)
    ps = p_grid(cfg.lambda_step)
    try:
        eta, mu = eta_and_mu(cfg, ctx)
    except ErrorBoundUnavailableError:
        eta = mu = None
    stats = SolveStats(
        eta=eta, mu=mu, lambda_step=cfg.lambda_step,
        p_grid_size=len(ps), q_lo=2, q_hi=q_hi,
    )

    cache: dict[tuple[int, int, float], float] = {}

    def cached_eps(q: int, n: int, p: float) -> float:
        key = (q, n, p)
        if key not in cache:
            cache[key] = tight_epsilon_value(q, n, p, ctx.d, ctx.delta)
        return cache[key]

    best: tuple[float, int, float, int] | None = None
    privacy_blocked = 0
    for q in range(2, q_hi + 1):
        for p in ps:
            stats.cells_total += 1
            cell_evals = 0

            def counted(n: int, _q=q, _p=p) -> float:
                nonlocal cell_evals
                cell_evals += 1
                stats.eps_evaluations += 1
                return cached_eps(_q, n, _p)

            try:
                n1 = min_n_for_privacy(q, p, cfg, ctx, epsilon_fn=counted)
            except PrivacyInfeasibleError:
                stats.max_evals_per_cell = max(stats.max_evals_per_cell, cell_evals)
                privacy_blocked += 1
                continue
            stats.max_evals_per_cell = max(stats.max_evals_per_cell, cell_evals)
            n = n_from_constraints(q, p, n1, ctx)
            if n > cfg.n_cap:
                continue
            if not (n <= cap_real - q):
                continue
            stats.cells_feasible += 1
            cand = (objective(q, n, p), q, p, n)
            if best is None or cand < best:
                best = cand

    if best is None:
        if privacy_blocked == stats.cells_total:
            raise PrivacyInfeasibleError(
                f"budget {cfg.eps_bar} unreachable within n_cap={cfg.n_cap} "
                "at every grid point"
            )
        raise InfeasibleError("no feasible grid point")
    phi, q, p, n = best
    powers = tuple(required_power(q, n, h, sys) for h in sys.gains)
    if not capacity_feasible(q, n, list(powers), sys):
        raise InfeasibleError("final power assignment failed the capacity re-check")
    sol = Solution(
        q=q, n=n, p=p, powers=powers,
        objective=phi, epsilon_achieved=cached_eps(q, n, p),
    )
    return sol, stats


def solve(sys: SystemParams, cfg: SolverConfig, ctx: PrivacyContext) -> Solution:
    """Best feasible (q, n, p, P_k) on the configured grid.

    Deterministic: ties are broken by smallest objective, then smallest q,
    then smallest p, then smallest n.  Raises :class:`EmptyDomainError`,
    :class:`AllInfeasibleError` or :class:`InfeasibleError` depending on
    which stage ruled everything out.
    """
    sol, _ = solve_with_stats(sys, cfg, ctx)
    return sol


def brute_force_solve(
    sys: SystemParams, cfg: SolverConfig, ctx: PrivacyContext, fine_factor: int = 3
) -> Solution:
    """Exhaustive oracle: scans every n and a fine p grid, no binary search.

    The p grid is ``fine_factor`` times denser than the solver's and spans
    all of (0, 1) plus the point 1/2; q runs over the full channel domain
    with no envelope pruning.  Intended for small instances only.
    """
    if fine_factor < 1:
        raise ValueError(f"fine_factor must be >= 1, got {fine_factor}")
    bound = domain_bound(sys)
    q_hi = bound
    cap_real = capacity_base(sys)
    if cfg.bit_cap is not None:
        cap_real = min(cap_real, float(2**cfg.bit_cap))
        q_hi = min(q_hi, 2**cfg.bit_cap - 2)

    lam = cfg.lambda_step / fine_factor
    ps = []
    i = 1
    while True:
        p = i * lam
        if p >= 1.0:
            break
        ps.append(p)
        i += 1
    if 0.5 not in ps:
        ps.append(0.5)
        ps.sort()

    n_hi = min(cfg.n_cap, bound)
    if n_hi < 2:
        raise InfeasibleError("no admissible trial count")
    n_all = np.arange(2, n_hi + 1, dtype=np.float64)

    best: tuple[float, int, float, int] | None = None
    for q in range(2, q_hi + 1):
        cap_mask = n_all <= cap_real - q
        if not cap_mask.any():
            continue
        thr = dp_variance_threshold(q, ctx.d, ctx.delta)
        denom_sq = (q - 1) ** 2
        for p in ps:
            pq = p * (1.0 - p)
            mask = cap_mask & (ctx.K * n_all * p * (1.0 - p) >= thr)
            if not mask.any():
                continue
            n_sub = n_all[mask]
            eps = tight_epsilon_n_array(q, n_sub, p, ctx.d, ctx.delta)
            ok = eps <= cfg.eps_bar
            if not ok.any():
                continue
            n_feas = n_sub[ok]
            obj = (1.0 + n_feas * pq) / denom_sq
            i_best = int(np.argmin(obj))
            cand = (float(obj[i_best]), q, p, int(n_feas[i_best]))
            if best is None or cand < best:
                best = cand

    if best is None:
        raise InfeasibleError("no feasible tuple in the exhaustive scan")
    phi, q, p, n = best
    powers = tuple(required_power(q, n, h, sys) for h in sys.gains)
    eps_val = tight_epsilon_value(q, n, p, ctx.d, ctx.delta)
    return Solution(q=q, n=n, p=p, powers=powers, objective=phi, epsilon_achieved=eps_val)


def check_solution(
    sol: Solution, sys: SystemParams, cfg: SolverConfig, ctx: PrivacyContext
) -> list[str]:
    """Independent re-check of every original constraint; empty list = clean."""
    problems = []
    bound = domain_bound(sys)
    if not (2 <= sol.q <= bound):
        problems.append(f"q={sol.q} outside {{2..{bound}}}")
    if not (2 <= sol.n <= bound):
        problems.append(f"n={sol.n} outside {{2..{bound}}}")
    if sol.n > cfg.n_cap:
        problems.append(f"n={sol.n} above n_cap={cfg.n_cap}")
    if not (0.0 < sol.p < 1.0):
        problems.append(f"p={sol.p} outside (0, 1)")
    lhs = ctx.K * sol.n * sol.p * (1.0 - sol.p)
    if lhs < dp_variance_threshold(sol.q, ctx.d, ctx.delta):
        problems.append("noise variance below its required floor")
    eps = tight_epsilon_value(sol.q, sol.n, sol.p, ctx.d, ctx.delta)
    if eps > cfg.eps_bar:
        problems.append(f"budget {eps:.6g} exceeds eps_bar={cfg.eps_bar}")
    if abs(sol.epsilon_achieved - eps) > 1e-12 * max(1.0, eps):
        problems.append("stored epsilon_achieved disagrees with a fresh evaluation")
    if cfg.bit_cap is not None and sol.q + sol.n > 2**cfg.bit_cap:
        problems.append(f"q + n = {sol.q + sol.n} breaks the {cfg.bit_cap}-bit cap")
    if len(sol.powers) != sys.K:
        problems.append(f"{len(sol.powers)} powers for K={sys.K} devices")
    for k, p_k in enumerate(sol.powers):
        if not (sys.p_min <= p_k <= sys.p_max):
            problems.append(f"power of device {k} outside [p_min, p_max]")
            break
    if not capacity_feasible(sol.q, sol.n, list(sol.powers), sys):
        problems.append("capacity constraint violated at the stored powers")
    expected = objective(sol.q, sol.n, sol.p)
    if sol.objective != expected:
        problems.append("stored objective disagrees with a fresh evaluation")
    return problems
