"""State evolution for the Lasso with an i.i.d. Gaussian design.

In the proportional regime (n/p -> delta, coefficients drawn i.i.d. from an
eps-sparse prior, noise level sigma) the Lasso estimate at penalty lambda
behaves marginally like a soft-thresholded Gaussian observation of the truth:
eta(Pi + tau W; alpha tau) with W ~ N(0,1).  The pair (alpha, tau) is pinned
down by two calibration equations,

    tau^2   = sigma^2 + E[ (eta(Pi + tau W; alpha tau) - Pi)^2 ] / delta
    lambda  = alpha tau (1 - P(|Pi + tau W| > alpha tau) / delta),

and the asymptotic true/false positive proportions are read off from the
exceedance probabilities.  This module solves the calibration equations for
discrete priors and produces instance-specific TPP/FDP trade-off curves.

The first equation is solved in the variable theta = 1/tau, in which the
(normalized, dimensionless) residual

    R(theta) = sigma^2 theta^2
             + [ (1-eps) mse_null(alpha) + sum_i p_i mse_signal(v_i theta, alpha) ] / delta
             - 1

is strictly increasing, so bracketed root finding is safe.  For sigma = 0 the
limit R(inf) equals N(alpha)/delta, where

    N(alpha) = (1-eps) mse_null(alpha) + eps (1 + alpha^2) - delta

does not depend on the atom values; the equation is solvable exactly when
N(alpha) > 0, i.e. above the noiseless floor returned by
``noiseless_alpha_floor``.
"""

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.optimize import brentq

from .errors import ConvergenceError, InfeasibleRegionError
from .gauss import excess_prob, mse_null, mse_signal, normal_cdf

_RESIDUAL_TOL = 1e-10
# theta = 1/tau search range.  Atom magnitudes up to ~1e15 push the solution
# theta below 1e-14, so the expansion is allowed to run much further than the
# starting decade in both directions.
_THETA_MIN = 1e-18
_THETA_MAX = 1e18


@dataclass(frozen=True)
class ModelShape:
    """Problem shape: aspect ratio delta = n/p, sparsity eps, noise sigma."""

    delta: float
    epsilon: float
    sigma: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.delta) and self.delta > 0):
            raise ValueError(f"delta must be a positive finite number, got {self.delta!r}")
        if not (math.isfinite(self.epsilon) and 0.0 < self.epsilon < 1.0):
            raise ValueError(f"epsilon must lie strictly in (0, 1), got {self.epsilon!r}")
        if not (math.isfinite(self.sigma) and self.sigma >= 0.0):
            raise ValueError(f"sigma must be nonnegative and finite, got {self.sigma!r}")


@dataclass(frozen=True)
class DiscretePrior:
    """A sparse discrete prior: P(v_i) = p_i on nonzero atoms, P(0) = null_mass.

    ``atoms`` is a tuple of (value, probability) pairs with distinct nonzero
    values and positive probabilities; together with ``null_mass`` the
    probabilities must sum to one.
    """

    atoms: tuple
    null_mass: float

    def __post_init__(self):
        atoms = tuple((float(v), float(p)) for v, p in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        if not atoms:
            raise ValueError("prior needs at least one nonzero atom")
        vals = [v for v, _ in atoms]
        if any(not math.isfinite(v) or v == 0.0 for v in vals):
            raise ValueError("atom values must be finite and nonzero")
        if len(set(vals)) != len(vals):
            raise ValueError("atom values must be distinct")
        if any(not math.isfinite(p) or p <= 0.0 for _, p in atoms):
            raise ValueError("atom probabilities must be positive")
        total = self.null_mass + sum(p for _, p in atoms)
        if not math.isfinite(self.null_mass) or not 0.0 <= self.null_mass < 1.0:
            raise ValueError(f"null_mass must lie in [0, 1), got {self.null_mass!r}")
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {total}, expected 1")

    @classmethod
    def homogeneous(cls, epsilon, magnitude):
        """Single-effect-size prior: magnitude with probability epsilon."""
        return cls(atoms=((magnitude, epsilon),), null_mass=1.0 - epsilon)

    @classmethod
    def heterogeneous(cls, epsilon, m, base):
        """Geometric ladder of m atoms base^1, ..., base^m, equal mass eps/m."""
        if m < 1:
            raise ValueError("m must be at least 1")
        try:
            values = [float(base) ** i for i in range(1, m + 1)]
        except OverflowError:
            raise ValueError(f"base**{m} overflows") from None
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"base**{m} overflows")
        return cls(
            atoms=tuple((v, epsilon / m) for v in values),
            null_mass=1.0 - epsilon,
        )

    @classmethod
    def from_levels(cls, epsilon, values, weights=None):
        """Atoms at ``values`` carrying total mass epsilon split by ``weights``
        (uniform when omitted)."""
        values = [float(v) for v in values]
        if weights is None:
            weights = [1.0] * len(values)
        weights = [float(w) for w in weights]
        if len(weights) != len(values):
            raise ValueError("values and weights must have the same length")
        if any(w <= 0 for w in weights):
            raise ValueError("weights must be positive")
        wsum = sum(weights)
        return cls(
            atoms=tuple((v, epsilon * w / wsum) for v, w in zip(values, weights)),
            null_mass=1.0 - epsilon,
        )

    @cached_property
    def values(self):
        return np.array([v for v, _ in self.atoms])

    @cached_property
    def probs(self):
        return np.array([p for _, p in self.atoms])

    @property
    def epsilon(self):
        return 1.0 - self.null_mass

    def second_moment(self):
        return float(np.sum(self.probs * np.square(self.values)))


@dataclass(frozen=True)
class StateEvolutionPoint:
    """A solved calibration point (alpha, tau, lam) for a given shape."""

    alpha: float
    tau: float
    lam: float
    shape: ModelShape


@dataclass(frozen=True)
class TradeoffCurve:
    """Sampled instance-specific trade-off curve, ordered by increasing TPP."""

    tpp: np.ndarray
    fdp: np.ndarray
    alpha: np.ndarray
    lam: np.ndarray
    tau: np.ndarray
    prior: DiscretePrior
    shape: ModelShape


def _require_matching_sparsity(prior, shape):
    if abs(prior.epsilon - shape.epsilon) > 1e-9:
        raise ValueError(
            f"prior has nonzero mass {prior.epsilon} but shape.epsilon = {shape.epsilon}"
        )


@lru_cache(maxsize=256)
def _alpha_min_cached(delta):
    # unique root of mse_null(a) = delta on (0, inf); mse_null decreases 1 -> 0
    return brentq(lambda a: mse_null(a) - delta, 0.0, 40.0, xtol=1e-13)


def alpha_min(shape):
    """Smallest normalized threshold at which the null equation is solvable.

    Zero when delta >= 1; otherwise the unique root of
    ``mse_null(alpha) = delta`` (equivalently
    2[(1 + a^2) Phi(-a) - a phi(a)] = delta).
    """
    if shape.delta >= 1.0:
        return 0.0
    return _alpha_min_cached(shape.delta)


def _null_excess(alpha, shape):
    # N(alpha): sign decides noiseless solvability; independent of atom values
    a = np.asarray(alpha, dtype=float)
    return (
        (1.0 - shape.epsilon) * mse_null(a)
        + shape.epsilon * (1.0 + np.square(a))
        - shape.delta
    )


@lru_cache(maxsize=256)
def _noiseless_floor_cached(delta, epsilon):
    shape = ModelShape(delta=delta, epsilon=epsilon, sigma=0.0)
    grid = np.linspace(0.0, 60.0, 2401)
    vals = _null_excess(grid, shape)
    if vals[-1] <= 0.0:  # would need a scan cap above 60; not reachable for eps >= 1e-3
        raise ConvergenceError(
            f"noiseless floor search failed: N(60) = {vals[-1]} <= 0 for {shape}"
        )
    neg = np.nonzero(vals < 0.0)[0]
    if len(neg) == 0:
        return 0.0
    k = neg[-1]  # last sign change from below zero to above
    return brentq(lambda a: float(_null_excess(a, shape)), grid[k], grid[k + 1], xtol=1e-13)


def noiseless_alpha_floor(shape):
    """Largest root of N(alpha) = 0, or 0 when N > 0 everywhere.

    With sigma = 0 the first calibration equation is solvable exactly for
    alpha above this floor; as alpha decreases to it, tau -> 0 and the
    asymptotic TPP increases to 1.
    """
    return _noiseless_floor_cached(shape.delta, shape.epsilon)


def admissible_alpha_lower(prior, shape):
    """Infimum of thresholds alpha at which (tau, lambda) can be calibrated."""
    lo = alpha_min(shape)
    if shape.sigma == 0.0:
        lo = max(lo, noiseless_alpha_floor(shape))
    return lo


def _tau_residual(theta, prior, alpha, shape):
    mse = prior.null_mass * mse_null(alpha) + float(
        np.sum(prior.probs * mse_signal(prior.values * theta, alpha))
    )
    return (shape.sigma * theta) ** 2 + mse / shape.delta - 1.0


def solve_tau_given_alpha(prior, alpha, shape, theta_hint=None):
    """Solve the first calibration equation for tau at threshold alpha.

    The equation is solved for theta = 1/tau, in which the normalized
    residual is strictly increasing; the bracket is grown geometrically from
    ``theta_hint`` (or an Pi-second-moment based default) before Brent
    refinement.  Raises ``InfeasibleRegionError`` when alpha is at or below
    the admissible lower bound for this shape.
    """
    _require_matching_sparsity(prior, shape)
    if not (math.isfinite(alpha) and alpha >= 0.0):
        raise ValueError(f"alpha must be nonnegative, got {alpha!r}")

    def g(theta):
        return _tau_residual(theta, prior, alpha, shape)

    # quick feasibility screens: R(0+) >= 0 or R(inf) <= 0 mean no root
    if mse_null(alpha) >= shape.delta:
        raise InfeasibleRegionError(
            f"alpha = {alpha} is at or below alpha_min for delta = {shape.delta}"
        )
    if shape.sigma == 0.0 and _null_excess(alpha, shape) <= 0.0:
        raise InfeasibleRegionError(
            f"alpha = {alpha} is at or below the noiseless floor "
            f"{noiseless_alpha_floor(shape):.6f} for {shape}"
        )

    if theta_hint is not None and _THETA_MIN < theta_hint < _THETA_MAX:
        center = theta_hint
    else:
        scale = math.sqrt(shape.sigma**2 + prior.second_moment() / shape.delta)
        center = 1.0 / scale if scale > 0 else 1.0
    lo = hi = center
    g_lo = g(lo)
    while g_lo > 0.0:
        hi, lo = lo, lo / 8.0
        if lo < _THETA_MIN:
            raise ConvergenceError(
                f"no sign change for tau equation down to theta = {_THETA_MIN}"
            )
        g_lo = g(lo)
    g_hi = g(hi)
    while g_hi < 0.0:
        lo, hi = hi, hi * 8.0
        if hi > _THETA_MAX:
            raise ConvergenceError(
                f"no sign change for tau equation up to theta = {_THETA_MAX}"
            )
        g_hi = g(hi)
    if lo == hi:  # hint landed exactly on one side
        lo = lo / 8.0
    theta = brentq(g, lo, hi, xtol=1e-300, rtol=8.9e-16, maxiter=200)
    if abs(g(theta)) > _RESIDUAL_TOL:
        raise ConvergenceError(
            f"tau equation residual {g(theta):.2e} exceeds {_RESIDUAL_TOL} "
            f"at alpha = {alpha}"
        )
    return 1.0 / theta


def _exceedance(prior, alpha, tau):
    # P(|Pi + tau W| > alpha tau), split over the null mass and the atoms
    tail = float(np.sum(prior.probs * excess_prob(prior.values / tau, alpha)))
    return prior.null_mass * 2.0 * normal_cdf(-alpha) + tail


def _lambda_given_tau(prior, alpha, shape, tau):
    return (1.0 - _exceedance(prior, alpha, tau) / shape.delta) * alpha * tau


def lambda_of_alpha(prior, alpha, shape):
    """Penalty level lambda calibrated to the threshold alpha."""
    tau = solve_tau_given_alpha(prior, alpha, shape)
    return _lambda_given_tau(prior, alpha, shape, tau)


def equation_residuals(prior, point):
    """Normalized residuals (first equation, lambda equation) of a solved point."""
    r1 = _tau_residual(1.0 / point.tau, prior, point.alpha, point.shape)
    lam = _lambda_given_tau(prior, point.alpha, point.shape, point.tau)
    r2 = (point.lam - lam) / max(1.0, abs(lam))
    return r1, r2


def solve_alpha_given_lambda(prior, lam, shape):
    """Invert the lambda calibration: find alpha with lambda(alpha) = lam.

    lambda(alpha) is strictly increasing on the admissible range, tending to 0
    (or below) at the lower end and to infinity with alpha, so the root is
    bracketed by geometric expansion.  Raises ``InfeasibleRegionError`` with
    the achievable lambda range if ``lam`` cannot be attained.
    """
    _require_matching_sparsity(prior, shape)
    if not (math.isfinite(lam) and lam > 0.0):
        raise ValueError(f"lam must be positive and finite, got {lam!r}")
    floor = admissible_alpha_lower(prior, shape)

    def lam_at(a):
        return lambda_of_alpha(prior, a, shape)

    a_lo = floor + max(1e-6, 1e-6 * floor)
    lam_lo = lam_at(a_lo)
    shrink = 0
    while lam_lo >= lam:
        a_lo = floor + (a_lo - floor) / 8.0
        shrink += 1
        if shrink > 40:
            raise InfeasibleRegionError(
                f"lambda = {lam} is below the achievable range "
                f"(lambda({a_lo:.3e}) = {lam_lo:.3e} is already larger)"
            )
        lam_lo = lam_at(a_lo)
    a_hi = max(2.0 * a_lo, 1.0)
    lam_hi = lam_at(a_hi)
    grow = 0
    while lam_hi <= lam:
        a_lo, lam_lo = a_hi, lam_hi
        a_hi *= 2.0
        grow += 1
        if grow > 40:
            raise InfeasibleRegionError(
                f"lambda = {lam} exceeds the achievable range "
                f"(lambda({a_hi:.3e}) = {lam_hi:.3e})"
            )
        lam_hi = lam_at(a_hi)
    alpha = brentq(lambda a: lam_at(a) - lam, a_lo, a_hi, xtol=1e-13, rtol=8.9e-16)
    tau = solve_tau_given_alpha(prior, alpha, shape)
    return StateEvolutionPoint(alpha=alpha, tau=tau, lam=lam, shape=shape)


def tradeoff_point(prior, alpha, shape):
    """Asymptotic (TPP, FDP) of the Lasso calibrated at threshold alpha."""
    _require_matching_sparsity(prior, shape)
    tau = solve_tau_given_alpha(prior, alpha, shape)
    return _tradeoff_given_tau(prior, alpha, shape, tau)


def _tradeoff_given_tau(prior, alpha, shape, tau):
    eps = shape.epsilon
    tpp = float(np.sum((prior.probs / eps) * excess_prob(prior.values / tau, alpha)))
    null_rate = 2.0 * (1.0 - eps) * normal_cdf(-alpha)
    denom = null_rate + eps * tpp
    fdp = null_rate / denom if denom > 0.0 else 0.0
    return tpp, fdp


class _CurveSolver:
    """Monotone inversion alpha <-> TPP for one (prior, shape), with warm
    theta hints shared across solves."""

    def __init__(self, prior, shape):
        _require_matching_sparsity(prior, shape)
        self.prior = prior
        self.shape = shape
        self.floor = admissible_alpha_lower(prior, shape)
        self._tau_cache = {}
        self._hint = None

    def tau(self, alpha):
        tau = self._tau_cache.get(alpha)
        if tau is None:
            tau = solve_tau_given_alpha(
                self.prior, alpha, self.shape, theta_hint=self._hint
            )
            self._hint = 1.0 / tau
            self._tau_cache[alpha] = tau
        return tau

    def tpp(self, alpha):
        tau = self.tau(alpha)
        return _tradeoff_given_tau(self.prior, alpha, self.shape, tau)[0]

    def lam(self, alpha):
        return _lambda_given_tau(self.prior, alpha, self.shape, self.tau(alpha))

    def feasible_alpha_lo(self):
        """Smallest usable alpha: just above the floor, pushed up to where the
        calibrated penalty becomes positive (the hard phase-transition cut)."""
        a = self.floor + max(1e-7, 1e-7 * self.floor)
        if self.lam(a) > 0.0:
            return a
        hi = max(2.0 * a, 1.0)
        grow = 0
        while self.lam(hi) <= 0.0:
            a = hi
            hi *= 2.0
            grow += 1
            if grow > 40:
                raise InfeasibleRegionError(
                    f"calibrated penalty never becomes positive for {self.shape}"
                )
        root = brentq(self.lam, a, hi, xtol=1e-13, rtol=8.9e-16)
        return root + max(1e-9, 1e-9 * root)

    def alpha_at_tpp(self, target, a_lo, a_hi):
        return brentq(
            lambda a: self.tpp(a) - target, a_lo, a_hi, xtol=1e-13, rtol=8.9e-16
        )


def tradeoff_curve(prior, shape, n_points, tpp_lo=0.01, tpp_hi=0.99):
    """Sample the instance-specific trade-off curve on an even TPP grid.

    The requested [tpp_lo, tpp_hi] window is intersected with the achievable
    TPP range for this prior/shape (the upper end is limited by the
    phase-transition cut where the calibrated penalty reaches zero).  Returns
    a ``TradeoffCurve`` ordered by increasing TPP with at least two points.
    """
    if n_points < 2:
        raise ValueError("n_points must be at least 2")
    if not 0.0 < tpp_lo < tpp_hi < 1.0:
        raise ValueError(f"need 0 < tpp_lo < tpp_hi < 1, got ({tpp_lo}, {tpp_hi})")
    solver = _CurveSolver(prior, shape)
    a_min = solver.feasible_alpha_lo()
    u_max_ach = solver.tpp(a_min)

    # expand the upper alpha end until the TPP drops below the requested low end
    a_max = max(4.0 * a_min, 4.0)
    while solver.tpp(a_max) > tpp_lo:
        a_max *= 1.5
        if a_max > 80.0:
            break
    u_min_ach = solver.tpp(a_max)

    lo = max(tpp_lo, u_min_ach + 1e-12)
    hi = min(tpp_hi, u_max_ach - 1e-12)
    if not lo < hi:
        raise InfeasibleRegionError(
            f"achievable TPP range ({u_min_ach:.4f}, {u_max_ach:.4f}) does not "
            f"meet the requested window ({tpp_lo}, {tpp_hi})"
        )
    targets = np.linspace(lo, hi, n_points)

    # coarse bracketing table on a geometric alpha grid (TPP is decreasing)
    grid = np.geomspace(a_min, a_max, 48)
    grid_u = np.array([solver.tpp(a) for a in grid])

    out_alpha = np.empty(n_points)
    for i, u in enumerate(targets):
        k = int(np.searchsorted(-grid_u, -u))  # first index with grid_u[k] <= u
        if k == 0:
            out_alpha[i] = grid[0]
        elif k >= len(grid):
            out_alpha[i] = grid[-1]
        else:
            out_alpha[i] = solver.alpha_at_tpp(u, grid[k - 1], grid[k])

    tpps = np.empty(n_points)
    fdps = np.empty(n_points)
    lams = np.empty(n_points)
    taus = np.empty(n_points)
    for i, a in enumerate(out_alpha):
        tau = solver.tau(a)
        tpps[i], fdps[i] = _tradeoff_given_tau(prior, a, shape, tau)
        lams[i] = _lambda_given_tau(prior, a, shape, tau)
        taus[i] = tau

    order = np.argsort(tpps)
    return TradeoffCurve(
        tpp=tpps[order],
        fdp=fdps[order],
        alpha=out_alpha[order],
        lam=lams[order],
        tau=taus[order],
        prior=prior,
        shape=shape,
    )


def tradeoff_at_tpp(prior, shape, tpp):
    """Point on the instance trade-off curve at a prescribed TPP level."""
    solver = _CurveSolver(prior, shape)
    a_min = solver.feasible_alpha_lo()
    if not 0.0 < tpp < solver.tpp(a_min):
        raise InfeasibleRegionError(
            f"TPP = {tpp} outside achievable range (0, {solver.tpp(a_min):.6f})"
        )
    a_hi = max(4.0 * a_min, 4.0)
    while solver.tpp(a_hi) > tpp:
        a_hi *= 1.5
        if a_hi > 100.0:
            raise ConvergenceError(f"failed to bracket TPP = {tpp} from above")
    alpha = solver.alpha_at_tpp(tpp, a_min, a_hi)
    tau = solver.tau(alpha)
    u, q = _tradeoff_given_tau(prior, alpha, shape, tau)
    return u, q, alpha, tau
