"""Monte Carlo experiment harness around the path solver.

Experiments are described by plain configs (JSON-friendly dataclasses) and
driven by counter-based RNG streams: replicate r of an experiment seeded with
``seed`` draws from ``numpy.random.SeedSequence(seed, spawn_key=(tag, r))``
children, so results are independent of execution order and worker count, and
rerunning any single replicate reproduces it bit for bit.

Two experiment modes:

* ``tradeoff``: full paths, per-event TPP/FDP, step-interpolated onto a fixed
  TPP grid (the FDP carried to a grid point is that of the path event with
  the largest TPP not exceeding it, latest such event in path order), then
  averaged across replicates.
* ``rank``: early-stopped paths recording the first-false-selection rank,
  optionally swept over a design or coefficient parameter.
"""

import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, toeplitz

from .lasso_path import first_false_rank, lasso_path, tpp_fdp_along_path
from .state_evolution import DiscretePrior

_DESIGN_KINDS = ("iid_gaussian", "correlated_gaussian", "bernoulli_pm", "genotype_file")
_COEF_KINDS = ("prior_sample", "fixed_levels", "geometric", "linear", "equal")
_MAGNITUDE_CAP = 1e300


@dataclass(frozen=True)
class DesignSpec:
    """Random design family.  Entry variance defaults to 1/n (so columns have
    roughly unit norm); ``variance_scale`` overrides it when a study calls
    for a different normalization."""

    kind: str
    n: int
    p: int
    rho: float = 0.0
    structure: str = "toeplitz"  # or "equicorrelation"
    path: str = ""  # for kind = "genotype_file"
    variance_scale: float = None

    def __post_init__(self):
        if self.kind not in _DESIGN_KINDS:
            raise ValueError(f"unknown design kind {self.kind!r}, expected {_DESIGN_KINDS}")
        if self.kind != "genotype_file" and (self.n < 1 or self.p < 1):
            raise ValueError(f"need n, p >= 1, got n={self.n}, p={self.p}")
        if self.kind == "correlated_gaussian":
            if not 0.0 <= self.rho < 1.0:
                raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
            if self.structure not in ("toeplitz", "equicorrelation"):
                raise ValueError(f"unknown correlation structure {self.structure!r}")
        if self.kind == "genotype_file" and not self.path:
            raise ValueError("genotype_file design needs a file path")
        if self.variance_scale is not None and not self.variance_scale > 0:
            raise ValueError(f"variance_scale must be positive, got {self.variance_scale}")

    @property
    def scale(self):
        return self.variance_scale if self.variance_scale is not None else 1.0 / self.n


@dataclass(frozen=True)
class CoefficientSpec:
    """Coefficient vector family on p coordinates.

    kinds: ``prior_sample`` (i.i.d. from a DiscretePrior), ``fixed_levels``
    (given values with multiplicities on the first coordinates), ``geometric``
    (beta_j = M^(k+1-j), j = 1..k), ``linear`` (beta_j = j, j = 1..k),
    ``equal`` (beta_j = M, j = 1..k).  All fixed kinds put the support on the
    first k coordinates.
    """

    kind: str
    p: int
    prior: DiscretePrior = None
    values: tuple = ()
    counts: tuple = ()
    magnitude: float = 0.0
    k: int = 0

    def __post_init__(self):
        if self.kind not in _COEF_KINDS:
            raise ValueError(f"unknown coefficient kind {self.kind!r}, expected {_COEF_KINDS}")
        if self.p < 1:
            raise ValueError("p must be positive")
        if self.kind == "prior_sample":
            if self.prior is None:
                raise ValueError("prior_sample needs a DiscretePrior")
        elif self.kind == "fixed_levels":
            if len(self.values) != len(self.counts) or not self.values:
                raise ValueError("fixed_levels needs matching nonempty values/counts")
            if any(c < 1 for c in self.counts):
                raise ValueError("counts must be positive")
            if sum(self.counts) > self.p:
                raise ValueError("fixed_levels support exceeds p")
        else:
            if not 0 < self.k <= self.p:
                raise ValueError(f"k must lie in [1, p], got {self.k}")
            if self.kind in ("geometric", "equal"):
                if self.magnitude <= 0:
                    raise ValueError("magnitude must be positive")
                if self.kind == "geometric":
                    try:
                        top = float(self.magnitude) ** self.k
                    except OverflowError:
                        top = math.inf
                    if top >= _MAGNITUDE_CAP:
                        raise ValueError(
                            f"geometric ladder overflows: {self.magnitude}**{self.k} >= 1e300"
                        )


@dataclass(frozen=True)
class ExperimentConfig:
    design: DesignSpec
    coefficients: CoefficientSpec
    sigma: float
    replicates: int
    seed: int
    mode: str  # "tradeoff" | "rank"
    tpp_grid: tuple = ()
    sweep_param: str = ""  # "" | "k" | "rho"
    sweep_values: tuple = ()

    def __post_init__(self):
        if self.mode not in ("tradeoff", "rank"):
            raise ValueError(f"mode must be 'tradeoff' or 'rank', got {self.mode!r}")
        if self.sigma < 0 or not math.isfinite(self.sigma):
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        if self.replicates < 1:
            raise ValueError("replicates must be positive")
        if self.mode == "tradeoff":
            grid = tuple(float(g) for g in self.tpp_grid)
            if not grid or any(not 0.0 <= g <= 1.0 for g in grid) or list(grid) != sorted(grid):
                raise ValueError("tpp_grid must be a nondecreasing tuple inside [0, 1]")
            object.__setattr__(self, "tpp_grid", grid)
        if self.sweep_param not in ("", "k", "rho"):
            raise ValueError(f"sweep_param must be '', 'k' or 'rho', got {self.sweep_param!r}")
        if self.sweep_param and not self.sweep_values:
            raise ValueError("sweep_values must be nonempty when sweep_param is set")


@dataclass(frozen=True)
class ReplicateResult:
    replicate_id: int
    seed_key: tuple
    n_events: int
    stopping_reason: str
    grid_fdp: np.ndarray = None  # tradeoff mode
    rank: int = -1  # rank mode
    censored: bool = False


def replicate_rng(seed, replicate_id, tag=0):
    """Independent child generators (design, coefficients, noise) for one
    replicate.  Streams depend only on (seed, tag, replicate_id)."""
    ss = np.random.SeedSequence(seed, spawn_key=(tag, replicate_id))
    return [np.random.Generator(np.random.PCG64(child)) for child in ss.spawn(3)]


def load_design_file(path):
    """Dense numeric matrix from a whitespace- or comma-separated text file."""
    with open(path) as fh:
        first = fh.readline()
    delim = "," if "," in first else None
    mat = np.loadtxt(path, delimiter=delim, ndmin=2)
    if not np.all(np.isfinite(mat)):
        raise ValueError(f"design file {path} contains non-finite entries")
    return mat


def sample_design(spec, rng):
    """Draw a design matrix according to ``spec`` using generator ``rng``."""
    scale = spec.scale
    if spec.kind == "iid_gaussian":
        return rng.normal(0.0, math.sqrt(scale), size=(spec.n, spec.p))
    if spec.kind == "bernoulli_pm":
        return (2.0 * rng.integers(0, 2, size=(spec.n, spec.p)) - 1.0) * math.sqrt(scale)
    if spec.kind == "correlated_gaussian":
        if spec.structure == "toeplitz":
            cov = scale * toeplitz(spec.rho ** np.arange(spec.p))
        else:
            cov = scale * ((1.0 - spec.rho) * np.eye(spec.p) + spec.rho)
        upper = cholesky(cov, lower=False)
        return rng.standard_normal((spec.n, spec.p)) @ upper
    # genotype_file: real matrix, jittered to break exact duplicates, then
    # columns centered and rescaled to match the synthetic normalization
    mat = load_design_file(spec.path)
    n, p = mat.shape
    jitter_scale = spec.variance_scale if spec.variance_scale is not None else 1.0 / n
    mat = mat + rng.normal(0.0, math.sqrt(jitter_scale), size=mat.shape)
    mat = mat - mat.mean(axis=0)
    norms = np.linalg.norm(mat, axis=0)
    if np.any(norms == 0.0):
        raise ValueError("design file has a constant column even after jitter")
    return mat * (math.sqrt(n * jitter_scale) / norms)


def sample_coefficients(spec, rng):
    """Draw (beta, true_support) according to ``spec``.

    Fixed families place their k values on the first k coordinates;
    ``prior_sample`` draws each coordinate i.i.d. from the prior.
    """
    beta = np.zeros(spec.p)
    if spec.kind == "prior_sample":
        prior = spec.prior
        probs = np.concatenate([[prior.null_mass], prior.probs])
        levels = np.concatenate([[0.0], prior.values])
        beta = rng.choice(levels, size=spec.p, p=probs)
        support = np.flatnonzero(beta != 0.0)
        return beta, support
    if spec.kind == "fixed_levels":
        vals = np.repeat(np.asarray(spec.values, dtype=float), np.asarray(spec.counts))
    elif spec.kind == "geometric":
        j = np.arange(1, spec.k + 1)
        vals = spec.magnitude ** (spec.k + 1.0 - j)
    elif spec.kind == "linear":
        vals = np.arange(1, spec.k + 1, dtype=float)
    else:  # equal
        vals = np.full(spec.k, float(spec.magnitude))
    beta[: len(vals)] = vals
    return beta, np.arange(len(vals))


def fdp_on_grid(event_tpp, event_fdp, grid):
    """Step interpolation of path FDP onto a TPP grid.

    For each grid point: among events whose TPP does not exceed it, take the
    one with the largest TPP (latest in path order on ties); grid points
    below every event TPP get 0.
    """
    event_tpp = np.asarray(event_tpp, dtype=float)
    event_fdp = np.asarray(event_fdp, dtype=float)
    out = np.zeros(len(grid))
    for i, g in enumerate(grid):
        ok = np.flatnonzero(event_tpp <= g)
        if ok.size:
            best = event_tpp[ok].max()
            last = ok[np.flatnonzero(event_tpp[ok] >= best - 1e-15)][-1]
            out[i] = event_fdp[last]
    return out


def _simulate_instance(config, rep_id, tag=0, design=None, coefficients=None):
    design = design or config.design
    coefficients = coefficients or config.coefficients
    rng_x, rng_b, rng_z = replicate_rng(config.seed, rep_id, tag=tag)
    X = sample_design(design, rng_x)
    beta, support = sample_coefficients(coefficients, rng_b)
    y = X @ beta
    if config.sigma > 0:
        y = y + config.sigma * rng_z.standard_normal(X.shape[0])
    return X, y, support


def _tradeoff_replicate(config, rep_id):
    X, y, support = _simulate_instance(config, rep_id)
    # The grid never goes past max(tpp_grid), so the path can stop once the
    # active set is comfortably larger than the discoveries needed there;
    # fall back to the unrestricted path in the rare case the cap was hit
    # before the top grid point was reached.
    n = X.shape[0]
    cap = min(n - 1, X.shape[1], 2 * len(support) + 64)
    path = lasso_path(X, y, max_active=cap)
    samples = tpp_fdp_along_path(path, support)
    if cap < min(n - 1, X.shape[1]) and config.tpp_grid:
        reached = max((s[1] for s in samples), default=0.0)
        if reached < config.tpp_grid[-1] and path.stopping_reason == "max_active":
            path = lasso_path(X, y)
            samples = tpp_fdp_along_path(path, support)
    tpps = [s[1] for s in samples]
    fdps = [s[2] for s in samples]
    return ReplicateResult(
        replicate_id=rep_id,
        seed_key=(config.seed, 0, rep_id),
        n_events=len(path.events),
        stopping_reason=path.stopping_reason,
        grid_fdp=fdp_on_grid(tpps, fdps, config.tpp_grid),
    )


def _rank_replicate(config, rep_id, tag, design, coefficients):
    X, y, support = _simulate_instance(
        config, rep_id, tag=tag, design=design, coefficients=coefficients
    )
    path = lasso_path(X, y, stop_outside_support=support)
    res = first_false_rank(path, support)
    return ReplicateResult(
        replicate_id=rep_id,
        seed_key=(config.seed, tag, rep_id),
        n_events=len(path.events),
        stopping_reason=path.stopping_reason,
        rank=res.rank,
        censored=res.censored,
    )


def _run_replicates(worker, rep_ids, jobs):
    results, failures = [], []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for rep, res in zip(rep_ids, pool.map(worker, rep_ids)):
                if isinstance(res, Exception):
                    failures.append((rep, res))
                else:
                    results.append(res)
    else:
        for rep in rep_ids:
            try:
                results.append(worker(rep))
            except Exception as exc:  # noqa: BLE001 - tallied and re-raised below
                failures.append((rep, exc))
    return results, failures


class _TradeoffWorker:
    """Picklable replicate runner (ProcessPoolExecutor needs a top-level
    callable; an instance with a config works)."""

    def __init__(self, config):
        self.config = config

    def __call__(self, rep_id):
        try:
            return _tradeoff_replicate(self.config, rep_id)
        except Exception as exc:  # noqa: BLE001
            return exc


class _RankWorker:
    def __init__(self, config, tag, design, coefficients):
        self.args = (config, tag, design, coefficients)

    def __call__(self, rep_id):
        config, tag, design, coefficients = self.args
        try:
            return _rank_replicate(config, rep_id, tag, design, coefficients)
        except Exception as exc:  # noqa: BLE001
            return exc


@dataclass(frozen=True)
class TradeoffSummary:
    tpp_grid: tuple
    mean_fdp: np.ndarray
    se_fdp: np.ndarray
    n_ok: int
    replicates: list


def run_tradeoff_experiment(config, jobs=1):
    """Average path FDP over replicates on the configured TPP grid.

    Aborts (RuntimeError) when more than 10% of replicates fail; individual
    failures below that are dropped from the averages but counted in n_ok.
    """
    if config.mode != "tradeoff":
        raise ValueError(f"config.mode is {config.mode!r}, expected 'tradeoff'")
    rep_ids = list(range(config.replicates))
    results, failures = _run_replicates(_TradeoffWorker(config), rep_ids, jobs)
    if len(failures) > 0.1 * config.replicates:
        rep, exc = failures[0]
        raise RuntimeError(
            f"{len(failures)}/{config.replicates} replicates failed; "
            f"first failure (replicate {rep}): {exc}"
        ) from exc
    results.sort(key=lambda r: r.replicate_id)
    mat = np.vstack([r.grid_fdp for r in results])
    n_ok = mat.shape[0]
    mean = mat.mean(axis=0)
    se = mat.std(axis=0, ddof=1) / math.sqrt(n_ok) if n_ok > 1 else np.zeros(mat.shape[1])
    return TradeoffSummary(
        tpp_grid=config.tpp_grid, mean_fdp=mean, se_fdp=se, n_ok=n_ok, replicates=results
    )


@dataclass(frozen=True)
class RankSummary:
    sweep_param: str
    rows: list  # (sweep_value, mean, median, q10, q90, n_censored)
    replicates: dict  # sweep_value -> list of ReplicateResult


def run_rank_experiment(config, jobs=1):
    """First-false-rank statistics, optionally swept over k or rho.

    Censored replicates enter the statistics at rank k+1 (flagged, never
    dropped).  Without a sweep the single row uses the configured spec.
    """
    if config.mode != "rank":
        raise ValueError(f"config.mode is {config.mode!r}, expected 'rank'")
    if config.sweep_param == "k":
        settings = [
            (v, config.design, dataclasses.replace(config.coefficients, k=int(v)))
            for v in config.sweep_values
        ]
    elif config.sweep_param == "rho":
        settings = [
            (v, dataclasses.replace(config.design, rho=float(v)), config.coefficients)
            for v in config.sweep_values
        ]
    else:
        settings = [(float(config.coefficients.k), config.design, config.coefficients)]

    rows, reps_by_value = [], {}
    rep_ids = list(range(config.replicates))
    for tag, (value, design, coefficients) in enumerate(settings):
        worker = _RankWorker(config, tag, design, coefficients)
        results, failures = _run_replicates(worker, rep_ids, jobs)
        if failures:
            rep, exc = failures[0]
            raise RuntimeError(
                f"rank replicate {rep} at sweep value {value} failed: {exc}"
            ) from exc
        results.sort(key=lambda r: r.replicate_id)
        ranks = np.array([r.rank for r in results], dtype=float)
        rows.append(
            (
                float(value),
                float(ranks.mean()),
                float(np.median(ranks)),
                float(np.quantile(ranks, 0.1)),
                float(np.quantile(ranks, 0.9)),
                int(sum(r.censored for r in results)),
            )
        )
        reps_by_value[float(value)] = results
    return RankSummary(sweep_param=config.sweep_param, rows=rows, replicates=reps_by_value)


# --- JSON config (used by the command line tool) ---------------------------


def prior_from_json(obj):
    """DiscretePrior from {"kind": "homogeneous"|"heterogeneous"|"levels", ...}."""
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ValueError("prior must be an object with a 'kind' field")
    kind = obj["kind"]
    try:
        if kind == "homogeneous":
            return DiscretePrior.homogeneous(obj["epsilon"], obj["magnitude"])
        if kind == "heterogeneous":
            return DiscretePrior.heterogeneous(obj["epsilon"], obj["m"], obj["base"])
        if kind == "levels":
            return DiscretePrior.from_levels(
                obj["epsilon"], obj["values"], obj.get("weights")
            )
    except KeyError as missing:
        raise ValueError(f"prior spec is missing field {missing}") from None
    raise ValueError(f"unknown prior kind {kind!r}")


def config_from_json(obj):
    """ExperimentConfig from a parsed JSON object (field-checked)."""
    if isinstance(obj, str):
        obj = json.loads(obj)
    try:
        d = dict(obj["design"])
        c = dict(obj["coefficients"])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"config needs 'design' and 'coefficients' objects: {exc}") from None
    design = DesignSpec(
        kind=d.pop("kind"),
        n=int(d.pop("n", 0)),
        p=int(d.pop("p", 0)),
        rho=float(d.pop("rho", 0.0)),
        structure=d.pop("structure", "toeplitz"),
        path=d.pop("path", ""),
        variance_scale=d.pop("variance_scale", None),
    )
    if d:
        raise ValueError(f"unknown design fields: {sorted(d)}")
    prior = c.pop("prior", None)
    coef_p = int(c.pop("p", design.p))
    if design.kind != "genotype_file" and coef_p != design.p:
        raise ValueError(f"coefficients.p = {coef_p} disagrees with design.p = {design.p}")
    coefficients = CoefficientSpec(
        kind=c.pop("kind"),
        p=coef_p,
        prior=prior_from_json(prior) if prior is not None else None,
        values=tuple(c.pop("values", ())),
        counts=tuple(int(x) for x in c.pop("counts", ())),
        magnitude=float(c.pop("magnitude", 0.0)),
        k=int(c.pop("k", 0)),
    )
    if c:
        raise ValueError(f"unknown coefficient fields: {sorted(c)}")
    return ExperimentConfig(
        design=design,
        coefficients=coefficients,
        sigma=float(obj.get("sigma", 0.0)),
        replicates=int(obj.get("replicates", 1)),
        seed=int(obj.get("seed", 0)),
        mode=obj.get("mode", "tradeoff"),
        tpp_grid=tuple(obj.get("tpp_grid", ())),
        sweep_param=obj.get("sweep_param", ""),
        sweep_values=tuple(obj.get("sweep_values", ())),
    )


def config_to_json(config):
    """Inverse of ``config_from_json`` (dataclasses -> plain dict)."""

    def prior_obj(prior):
        if prior is None:
            return None
        return {
            "kind": "levels",
            "epsilon": prior.epsilon,
            "values": [v for v, _ in prior.atoms],
            "weights": [p for _, p in prior.atoms],
        }

    design = {k: v for k, v in dataclasses.asdict(config.design).items() if v not in (None, "")}
    coefficients = {
        "kind": config.coefficients.kind,
        "p": config.coefficients.p,
    }
    if config.coefficients.prior is not None:
        coefficients["prior"] = prior_obj(config.coefficients.prior)
    if config.coefficients.values:
        coefficients["values"] = list(config.coefficients.values)
        coefficients["counts"] = list(config.coefficients.counts)
    if config.coefficients.magnitude:
        coefficients["magnitude"] = config.coefficients.magnitude
    if config.coefficients.k:
        coefficients["k"] = config.coefficients.k
    out = {
        "design": design,
        "coefficients": coefficients,
        "sigma": config.sigma,
        "replicates": config.replicates,
        "seed": config.seed,
        "mode": config.mode,
    }
    if config.mode == "tradeoff":
        out["tpp_grid"] = list(config.tpp_grid)
    if config.sweep_param:
        out["sweep_param"] = config.sweep_param
        out["sweep_values"] = list(config.sweep_values)
    return out
