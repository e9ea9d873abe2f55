"""Data-generating processes, truth sets, and the Monte Carlo harness.

Three stationary response processes share one exogenous covariate block:
50 AR(1) series (coefficient 0.2) driven by cross-correlated Gaussian
innovations with Cov(eps_k, eps_l) = 0.2^|k-l|. The response loads on
its own first two lags and on the first 15 contemporaneous exogenous
series. The assembled covariate vector stacks 20 response lags with the
exogenous block at lags 0..4, for p = 270 columns.
"""

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientLength
from .filters import FilterParams, tski_run
from .knockoffs import fit_knockoff_model
from .numerics import RngStream

MODEL_ARX = "arx"
MODEL_SETARX = "setarx"
MODEL_ARX_ARCH = "arx_arch"
MODELS = (MODEL_ARX, MODEL_SETARX, MODEL_ARX_ARCH)

N_EXOG = 50
N_ACTIVE_EXOG = 15
N_RESPONSE_LAGS = 20
N_EXOG_LAGS = 5  # lags 0..4
N_COVARIATES = N_RESPONSE_LAGS + N_EXOG * N_EXOG_LAGS  # 270

EXOG_AR = 0.2
EXOG_INNOV_BASE = 0.2
H_COEF = 0.6
SETAR_THRESHOLD = 0.5
ARCH_CONST = 0.1
ARCH_LOAD = 0.9

# Mean-function truth: lags 1-2 of the response plus exogenous series
# 1..15 at lag 0 (columns 21..35). 1-based column indices.
S0 = frozenset({1, 2} | set(range(21, 36)))
H0 = frozenset(range(1, N_COVARIATES + 1)) - S0
# Broad-sense truth for the ARCH model: the variance recursion drags in
# lag 3 of the response and lag 1 of exogenous series 1..15.
S_ARCH = frozenset({1, 2, 3} | set(range(21, 36)) | set(range(71, 86)))
H_ARCH = frozenset(range(1, N_COVARIATES + 1)) - S_ARCH


@dataclass(frozen=True)
class DgpSpec:
    model: str
    beta: float
    n: int
    burn_in: int = 200
    seed: int | None = None

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; expected one of {MODELS}")
        if self.n < 25:
            raise ValueError("n must be >= 25 to form all lags")
        if self.burn_in < N_RESPONSE_LAGS:
            raise ValueError("burn_in must cover the response lags")


@dataclass(frozen=True)
class SimDataset:
    y: np.ndarray
    x: np.ndarray
    s0: frozenset = S0
    h0: frozenset = H0
    s_arch: frozenset = S_ARCH
    h_arch: frozenset = H_ARCH


@dataclass(frozen=True)
class McReport:
    reps: int
    fdp_per_rep: np.ndarray
    power_per_rep: np.ndarray
    fdr: float
    power: float
    spec: DgpSpec
    params: FilterParams
    master_seed: int
    sandwich_violations: int
    failures: tuple = ()

    def csv_row(self):
        return (
            f"{self.spec.model},{self.spec.n},{self.spec.beta:.17g},"
            f"{self.params.q},{self.params.statistic},"
            f"{self.fdr:.17g},{self.power:.17g},{self.reps}"
        )

    def to_json_dict(self):
        return {
            "model": self.spec.model,
            "n": self.spec.n,
            "beta": self.spec.beta,
            "burn_in": self.spec.burn_in,
            "q": self.params.q,
            "statistic": self.params.statistic,
            "tau_star": self.params.tau_star,
            "tau1": self.params.effective_tau1(),
            "reps": self.reps,
            "master_seed": self.master_seed,
            "fdr": self.fdr,
            "power": self.power,
            "fdp_per_rep": self.fdp_per_rep.tolist(),
            "power_per_rep": self.power_per_rep.tolist(),
            "sandwich_violations": self.sandwich_violations,
            "failures": [{"rep": r, "error": msg} for r, msg in self.failures],
        }


def exog_innovation_chol():
    """Cholesky factor of the 0.2^|k-l| innovation covariance."""
    idx = np.arange(N_EXOG)
    cov = EXOG_INNOV_BASE ** np.abs(idx[:, None] - idx[None, :])
    return np.linalg.cholesky(cov)


def gen_exogenous(n_total, rng: RngStream, noise_scale=1.0):
    """Simulate the 50 cross-correlated AR(1) covariate series.

    n_total counts every step including whatever burn-in the caller
    plans to discard; the series start at zero.
    """
    chol = exog_innovation_chol()
    eps = noise_scale * (rng.generator().standard_normal((n_total, N_EXOG)) @ chol.T)
    h = np.empty((n_total, N_EXOG))
    prev = np.zeros(N_EXOG)
    for t in range(n_total):
        prev = EXOG_AR * prev + eps[t]
        h[t] = prev
    return h


def gen_response(spec, h, rng: RngStream, h_coef=H_COEF, threshold=SETAR_THRESHOLD, with_state=False):
    """Simulate the response recursion; the first burn_in steps are dropped.

    h must cover all n_total = len(h) steps; the returned series has
    length n_total - spec.burn_in and stays aligned with h[spec.burn_in:].
    The h_coef and threshold arguments are test hooks (zero coefficients,
    threshold -inf degenerating the regime switch).
    """
    n_total = h.shape[0]
    if n_total <= spec.burn_in:
        raise InsufficientLength("h must be longer than the burn-in")
    eps = rng.generator().standard_normal(n_total)
    drive = h_coef * h[:, :N_ACTIVE_EXOG].sum(axis=1)
    beta = spec.beta

    y = np.empty(n_total)
    sigma2 = np.ones(n_total)
    y1 = 0.0
    y2 = 0.0
    sig_eps_prev = 0.0
    for t in range(n_total):
        ar = beta * y1 - 0.5 * beta * y2
        if spec.model == MODEL_SETARX and not y1 > threshold:
            ar = -ar
        if spec.model == MODEL_ARX_ARCH:
            # sigma starts at its unconditional scale 1; the recursion
            # takes over from t = 1 and the burn-in washes the start out.
            if t > 0:
                sigma2[t] = ARCH_CONST + ARCH_LOAD * sig_eps_prev**2
            shock = np.sqrt(sigma2[t]) * eps[t]
            sig_eps_prev = shock
        else:
            shock = eps[t]
        y[t] = ar + drive[t] + shock
        y2 = y1
        y1 = y[t]
    if with_state:
        state = {"y_full": y.copy(), "sigma2_full": sigma2.copy(), "eps_full": eps}
        return y[spec.burn_in :], state
    return y[spec.burn_in :]


def assemble_covariates(y, h):
    """Stack response lags 1..20 and exogenous lags 0..4 into the design.

    Row t pairs y[t] with (y[t-1..t-20], h[t], h[t-1], ..., h[t-4]);
    the first 20 observations only feed lags.
    """
    y = np.asarray(y, dtype=float)
    h = np.asarray(h, dtype=float)
    if h.shape != (y.shape[0], N_EXOG):
        raise InsufficientLength(f"h {h.shape} does not align with y {y.shape}")
    total = y.shape[0]
    n = total - N_RESPONSE_LAGS
    if n < 1:
        raise InsufficientLength(f"{total} observations cannot form {N_RESPONSE_LAGS} lags")
    t = np.arange(N_RESPONSE_LAGS, total)
    x = np.empty((n, N_COVARIATES))
    for lag in range(1, N_RESPONSE_LAGS + 1):
        x[:, lag - 1] = y[t - lag]
    for lag in range(N_EXOG_LAGS):
        cols = slice(N_RESPONSE_LAGS + lag * N_EXOG, N_RESPONSE_LAGS + (lag + 1) * N_EXOG)
        x[:, cols] = h[t - lag]
    return SimDataset(y=y[t], x=x)


def simulate_dataset(spec, rng=None):
    """Draw one aligned (y, X) dataset of spec.n rows."""
    if rng is None:
        rng = RngStream(spec.seed if spec.seed is not None else 0)
    n_total = spec.n + spec.burn_in + N_RESPONSE_LAGS
    h = gen_exogenous(n_total, rng.child(0))
    y = gen_response(spec, h, rng.child(1))
    return assemble_covariates(y, h[spec.burn_in :])


def fdp_power(selected, s0, h0):
    """False discovery proportion and sample power of a selected set."""
    selected = frozenset(selected)
    fdp = len(selected & frozenset(h0)) / max(len(selected), 1)
    power = len(selected & frozenset(s0)) / len(s0)
    return fdp, power


def _run_rep(args):
    spec, params, master_seed, rep = args
    rng = RngStream(master_seed, rep)
    dataset = simulate_dataset(spec, rng.child(0))
    model = fit_knockoff_model(dataset.x, params.shrinkage)
    result = tski_run(dataset.y, dataset.x, model, params, rng.child(1))
    fdp, power = fdp_power(result.selected, dataset.s0, dataset.h0)
    return rep, fdp, power, result.sandwich_ok


def _run_rep_safe(args):
    try:
        return _run_rep(args)
    except Exception as exc:  # recorded, excluded from the averages
        return args[3], None, None, f"{type(exc).__name__}: {exc}"


def monte_carlo(spec, params, reps, master_seed, workers=1):
    """Repeat draw-fit-select and average FDP/power over replications.

    Replication r uses RngStream(master_seed, r), so the report is
    deterministic for any worker count.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    tasks = [(spec, params, master_seed, rep) for rep in range(reps)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(_run_rep_safe, tasks, chunksize=1))
    else:
        raw = [_run_rep_safe(t) for t in tasks]
    raw.sort(key=lambda r: r[0])

    fdps, powers, failures = [], [], []
    violations = 0
    for rep, fdp, power, flag in raw:
        if fdp is None:
            failures.append((rep, flag))
            continue
        fdps.append(fdp)
        powers.append(power)
        if not flag:
            violations += 1
    fdps = np.asarray(fdps)
    powers = np.asarray(powers)
    return McReport(
        reps=len(fdps),
        fdp_per_rep=fdps,
        power_per_rep=powers,
        fdr=float(fdps.mean()) if fdps.size else float("nan"),
        power=float(powers.mean()) if powers.size else float("nan"),
        spec=spec,
        params=params,
        master_seed=master_seed,
        sandwich_violations=violations,
        failures=tuple(failures),
    )


def write_report_csv(report, path):
    header = "model,n,beta,q,stat,fdr,power,reps\n"
    with open(path, "w") as fh:
        fh.write(header)
        fh.write(report.csv_row() + "\n")


def write_report_json(report, path):
    with open(path, "w") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
