"""Seeded Monte-Carlo drivers for the perturbation and factor-model studies.

Randomness comes from numpy's Philox counter-based generator. Every task
gets its own stream keyed by ``SeedSequence([seed, d, rep, method])``, so
results do not depend on execution order or thread count. Output rows are
sorted by key before they are returned.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import toeplitz

from .errors import DataError, DomainError, ParseError, SpecterError
from .perturb import empirical_err
from .poet import PilotTrio, PoetConfig, poet
from .robust import DataPanel, HuberConfig, huber_cov, kendall_marginal_cov, kendall_spatial, plugin_v, sample_cov
from .spectra import eig_sym, eig_top

CSV_HEADER = ("experiment", "d", "param", "rep", "metric", "value")


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent Philox stream for ``(seed, *keys)``."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


@dataclass(frozen=True, order=True)
class ResultRow:
    experiment: str
    param: str
    d: int
    rep: int
    metric: str
    value: float = field(compare=False)

    def as_tuple(self):
        return (self.experiment, self.d, self.param, self.rep, self.metric, self.value)


def _fmt(x: float) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def rows_to_csv(rows: Iterable[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([r.experiment, r.d, r.param, r.rep, r.metric, _fmt(r.value)])
    return buf.getvalue()


def write_rows(path, rows: Iterable[ResultRow]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(rows_to_csv(rows))


def loglog_slope(ds: Sequence[float], errs: Sequence[float]) -> float:
    """OLS slope of ``log err`` on ``log d``."""
    x = np.log(np.asarray(ds, dtype=float))
    y = np.log(np.asarray(errs, dtype=float))
    if x.size < 2:
        raise DomainError("a slope needs at least two grid points")
    xc = x - x.mean()
    return float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))


def _map(fn: Callable, tasks: list, threads: int) -> list:
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))


# ------------------------------------------------------------ perturbation


@dataclass(frozen=True)
class Mechanism:
    """``sparse_rows``: ``s`` uniform ``[0, L]`` entries per row, symmetrised.
    ``toeplitz``: ``E_ij = L_prime * rho^|i-j|``."""

    kind: str
    s: int = 0
    L: float = 0.0
    L_prime: float = 0.0
    rho: float = 0.0

    def __post_init__(self):
        if self.kind == "sparse_rows":
            if self.s < 1 or not self.L >= 0:
                raise DomainError(f"sparse_rows needs s >= 1 and L >= 0, got s={self.s}, L={self.L}")
        elif self.kind == "toeplitz":
            if not 0 < self.rho < 1 or not self.L_prime >= 0:
                raise DomainError(f"toeplitz needs 0 < rho < 1 and L_prime >= 0, got rho={self.rho}")
        else:
            raise DomainError(f"unknown mechanism {self.kind!r}")

    def label(self) -> str:
        if self.kind == "sparse_rows":
            return f"sparse_rows(s={self.s},L={self.L:g})"
        return f"toeplitz(L_prime={self.L_prime:g},rho={self.rho:g})"

    @classmethod
    def from_dict(cls, obj) -> "Mechanism":
        if not isinstance(obj, dict) or "kind" not in obj:
            raise ParseError("mechanism must be an object with a 'kind' field")
        kind = obj["kind"]
        if kind == "sparse_rows":
            return cls(kind, s=int(obj["s"]), L=float(obj["L"]))
        if kind == "toeplitz":
            return cls(kind, L_prime=float(obj["L_prime"]), rho=float(obj["rho"]))
        raise ParseError(f"unknown mechanism kind {kind!r}")


@dataclass(frozen=True)
class PerturbExperimentConfig:
    d_grid: Tuple[int, ...]
    mechanism: Mechanism
    r: int = 3
    gamma: Optional[float] = None
    gamma_sqrt_d: Optional[float] = None
    replications: int = 20
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "d_grid", tuple(int(d) for d in self.d_grid))
        if not self.d_grid or list(self.d_grid) != sorted(set(self.d_grid)):
            raise DomainError("d_grid must be a nonempty strictly ascending list")
        if (self.gamma is None) == (self.gamma_sqrt_d is None):
            raise DomainError("set exactly one of gamma and gamma_sqrt_d")
        if self.r < 1 or self.r > self.d_grid[0]:
            raise DomainError(f"rank {self.r} must be in [1, min(d_grid)]")
        if self.replications < 1:
            raise DomainError("replications must be at least 1")

    def gamma_for(self, d: int) -> float:
        return float(self.gamma) if self.gamma is not None else float(self.gamma_sqrt_d) / math.sqrt(d)

    def label(self) -> str:
        g = f"gamma={self.gamma:g}" if self.gamma is not None else f"gamma_sqrt_d={self.gamma_sqrt_d:g}"
        return f"{g};{self.mechanism.label()}"

    @classmethod
    def from_dict(cls, obj, default_seed: int = 0) -> "PerturbExperimentConfig":
        known = {"d_grid", "mechanism", "r", "gamma", "gamma_sqrt_d", "replications", "seed"}
        _check_keys(obj, known, "perturb config")
        try:
            return cls(
                d_grid=tuple(obj.get("d_grid", (100, 200, 400, 800))),
                mechanism=Mechanism.from_dict(obj["mechanism"]),
                r=int(obj.get("r", 3)),
                gamma=None if obj.get("gamma") is None else float(obj["gamma"]),
                gamma_sqrt_d=None if obj.get("gamma_sqrt_d") is None else float(obj["gamma_sqrt_d"]),
                replications=int(obj.get("replications", 20)),
                seed=int(obj.get("seed", default_seed)),
            )
        except KeyError as exc:
            raise ParseError(f"perturb config is missing {exc}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, DataError):
                raise
            raise ParseError(f"perturb config: {exc}") from None


def _check_keys(obj, known, what):
    if not isinstance(obj, dict):
        raise ParseError(f"{what} must be a JSON object")
    extra = set(obj) - known
    if extra:
        raise ParseError(f"{what} has unknown fields {sorted(extra)}")


def random_orthonormal(d: int, r: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed ``d x r`` frame: QR of a Gaussian matrix with sign fix."""
    Q, R = np.linalg.qr(rng.standard_normal((d, r)))
    return Q * np.where(np.diag(R) < 0, -1.0, 1.0)


def gen_incoherent_lowrank(d: int, r: int, gamma: float, rng):
    """``A = V D V^T`` with ``D = diag(r gamma, ..., gamma)`` and Haar ``V``."""
    if not 1 <= r <= d:
        raise DomainError(f"rank {r} must be in [1, {d}]")
    if isinstance(rng, (int, np.integer)):
        rng = make_rng(int(rng))
    V = random_orthonormal(d, r, rng)
    D = gamma * np.arange(r, 0, -1, dtype=float)
    A = (V * D) @ V.T
    return 0.5 * (A + A.T), V, D


def gen_perturbation(d: int, mechanism: Mechanism, rng=None) -> np.ndarray:
    if mechanism.kind == "toeplitz":
        E = toeplitz(mechanism.L_prime * mechanism.rho ** np.arange(d))
        limit = 2 * mechanism.L_prime / (1 - mechanism.rho)
        row_max = np.abs(E).sum(axis=1).max()
        assert row_max <= limit * (1 + 1e-12), f"Toeplitz row sum {row_max} exceeds {limit}"
        return E
    if isinstance(rng, (int, np.integer)) or rng is None:
        rng = make_rng(0 if rng is None else int(rng))
    s = mechanism.s
    if s > d:
        raise DomainError(f"cannot place {s} entries in rows of length {d}")
    cols = np.argsort(rng.random((d, d)), axis=1)[:, :s]
    E0 = np.zeros((d, d))
    np.put_along_axis(E0, cols, rng.uniform(0.0, mechanism.L, size=(d, s)), axis=1)
    return 0.5 * (E0 + E0.T)


def perturb_replicate(cfg: PerturbExperimentConfig, d: int, rep: int) -> float:
    rng = make_rng(cfg.seed, d, rep, 0)
    A, V, _ = gen_incoherent_lowrank(d, cfg.r, cfg.gamma_for(d), rng)
    E = gen_perturbation(d, cfg.mechanism, rng)
    Vt = eig_sym(A + E).vectors[:, : cfg.r]
    return empirical_err(V, Vt)


def run_perturb_experiment(cfg: PerturbExperimentConfig, threads: int = 1) -> List[ResultRow]:
    """Per-replication errors, the max over replications per ``d``, the
    max error times ``gamma sqrt(d)`` and the log-log slope of the maxima."""
    label = cfg.label()
    tasks = [(d, rep) for d in cfg.d_grid for rep in range(cfg.replications)]

    def one(task):
        d, rep = task
        try:
            return d, rep, perturb_replicate(cfg, d, rep), None
        except (SpecterError, np.linalg.LinAlgError) as exc:
            return d, rep, float("nan"), str(exc)

    rows: List[ResultRow] = []
    maxima = {}
    for d, rep, err, fail in _map(one, tasks, threads):
        if fail is None:
            rows.append(ResultRow("perturb", label, d, rep, "err", err))
            maxima[d] = max(maxima.get(d, 0.0), err)
        else:
            rows.append(ResultRow("perturb", label, d, rep, "failed", float("nan")))
    for d in cfg.d_grid:
        if d in maxima:
            g = cfg.gamma_for(d)
            rows.append(ResultRow("perturb", label, d, -1, "err_max", maxima[d]))
            rows.append(ResultRow("perturb", label, d, -1, "err_max_scaled", maxima[d] * g * math.sqrt(d)))
    ok = [d for d in cfg.d_grid if d in maxima and maxima[d] > 0]
    if len(ok) >= 2:
        rows.append(ResultRow("perturb", label, -1, -1, "loglog_slope", loglog_slope(ok, [maxima[d] for d in ok])))
    return sorted(rows)


# ------------------------------------------------------------ factor model


@dataclass(frozen=True)
class FactorDist:
    kind: str
    nu: float

    def __post_init__(self):
        if self.kind not in ("mvt", "iid_t"):
            raise DomainError(f"unknown distribution {self.kind!r}; expected 'mvt' or 'iid_t'")
        if not self.nu > 2:
            raise DomainError(f"degrees of freedom must exceed 2, got {self.nu}")

    def label(self) -> str:
        return f"{self.kind}(nu={'inf' if math.isinf(self.nu) else format(self.nu, 'g')})"

    @classmethod
    def from_dict(cls, obj) -> "FactorDist":
        if not isinstance(obj, dict) or "kind" not in obj:
            raise ParseError("dist must be an object with 'kind' and 'nu'")
        nu = obj.get("nu", "inf")
        nu = math.inf if isinstance(nu, str) and nu.lower() in ("inf", "infinity") else float(nu)
        return cls(obj["kind"], nu)


@dataclass(frozen=True)
class FactorExperimentConfig:
    d_grid: Tuple[int, ...]
    dist: FactorDist
    n_rule: Union[str, int] = "half_d"
    r: int = 3
    methods: Tuple[int, ...] = (1, 2, 3, 4)
    replications: int = 20
    seed: int = 0
    tau_scale: float = 2.0
    shrink: str = "soft"

    def __post_init__(self):
        object.__setattr__(self, "d_grid", tuple(int(d) for d in self.d_grid))
        object.__setattr__(self, "methods", tuple(sorted(set(int(m) for m in self.methods))))
        if not self.d_grid or list(self.d_grid) != sorted(set(self.d_grid)):
            raise DomainError("d_grid must be a nonempty strictly ascending list")
        if not self.methods or not set(self.methods) <= {1, 2, 3, 4}:
            raise DomainError(f"methods must be a nonempty subset of {{1,2,3,4}}, got {self.methods}")
        if self.n_rule != "half_d" and not (isinstance(self.n_rule, int) and self.n_rule >= 2):
            raise DomainError(f"n_rule must be 'half_d' or a fixed n >= 2, got {self.n_rule!r}")
        if self.replications < 1:
            raise DomainError("replications must be at least 1")

    def n_for(self, d: int) -> int:
        return max(2, d // 2) if self.n_rule == "half_d" else int(self.n_rule)

    def label(self) -> str:
        return self.dist.label()

    @classmethod
    def from_dict(cls, obj, default_seed: int = 0) -> "FactorExperimentConfig":
        known = {"d_grid", "dist", "n_rule", "r", "methods", "replications", "seed", "tau_scale", "shrink"}
        _check_keys(obj, known, "factor config")
        rule = obj.get("n_rule", "half_d")
        if isinstance(rule, dict):
            if set(rule) != {"fixed"}:
                raise ParseError("n_rule object must be {\"fixed\": n}")
            rule = int(rule["fixed"])
        elif rule != "half_d":
            raise ParseError(f"n_rule must be 'half_d' or {{\"fixed\": n}}, got {rule!r}")
        try:
            return cls(
                d_grid=tuple(obj.get("d_grid", (100, 200, 400, 800))),
                dist=FactorDist.from_dict(obj["dist"]),
                n_rule=rule,
                r=int(obj.get("r", 3)),
                methods=tuple(obj.get("methods", (1, 2, 3, 4))),
                replications=int(obj.get("replications", 20)),
                seed=int(obj.get("seed", default_seed)),
                tau_scale=float(obj.get("tau_scale", 2.0)),
                shrink=str(obj.get("shrink", "soft")),
            )
        except KeyError as exc:
            raise ParseError(f"factor config is missing {exc}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, DataError):
                raise
            raise ParseError(f"factor config: {exc}") from None


def _standardized_t(rng, nu: float, size) -> np.ndarray:
    """Unit-variance t draws (standard normal for ``nu = inf``)."""
    if math.isinf(nu):
        return rng.standard_normal(size)
    return rng.standard_t(nu, size) * math.sqrt((nu - 2) / nu)


def gen_factor_panel(cfg: FactorExperimentConfig, d: int, n: int, rng):
    """Panel ``y_t = B f_t + u_t`` with ``cov(f, u) = diag(I_r, 5 I_d)``.

    Returns ``(X, B, Sigma, Sigma_u)`` with ``X`` a :class:`DataPanel` and
    ``Sigma = B B^T + 5 I``.
    """
    if isinstance(rng, (int, np.integer)):
        rng = make_rng(int(rng))
    r, nu = cfg.r, cfg.dist.nu
    B = rng.standard_normal((d, r))
    scale = np.sqrt(np.concatenate([np.ones(r), np.full(d, 5.0)]))
    if cfg.dist.kind == "mvt":
        Z = rng.standard_normal((n, r + d))
        if not math.isinf(nu):
            w = rng.chisquare(nu, size=n)
            Z = Z * np.sqrt((nu - 2) / w)[:, None]
    else:
        Z = _standardized_t(rng, nu, (n, r + d))
    F = Z * scale
    Y = F[:, :r] @ B.T + F[:, r:]
    sigma_u = 5.0 * np.eye(d)
    sigma = B @ B.T + sigma_u
    return DataPanel(Y), B, sigma, sigma_u


def factor_v(cfg: FactorExperimentConfig, B, sigma) -> float:
    """``max_ij sqrt(Var(y_i y_j))`` for the generator; ``inf`` if the fourth
    moment does not exist."""
    nu = cfg.dist.nu
    if not math.isinf(nu) and nu <= 4:
        return math.inf
    d, r = B.shape
    diag = np.diag(sigma)
    base = np.outer(diag, diag)
    if cfg.dist.kind == "mvt":
        k = 1.0 if math.isinf(nu) else (nu - 2) / (nu - 4)
        var = k * (base + 2 * sigma**2) - sigma**2
    else:
        excess = 0.0 if math.isinf(nu) else 6.0 / (nu - 4)
        s4 = np.concatenate([np.ones(r), np.full(d, 25.0)])
        M2 = np.hstack([B, np.eye(d)]) ** 2
        var = base + sigma**2 + excess * (M2 * s4) @ M2.T
    return float(np.sqrt(var.max()))


METRICS = ("err_u_spectral", "err_precision", "err_relative_frob")


def build_pilots(Y, r: int, methods: Sequence[int], v: float, heuristic_v: bool = False):
    """Pilot trios for methods 1-4 (sample, Huber, marginal Kendall,
    marginal Kendall with spatial-Kendall eigenvectors)."""
    n, d = Y.shape
    out = {}
    huber = None
    if any(m in (2, 3, 4) for m in methods):
        cfg = HuberConfig.default(n, d, v, heuristic_v=heuristic_v)
        huber = huber_cov(Y, cfg).sigma_hat
    if 1 in methods:
        out[1] = PilotTrio.from_covariance(sample_cov(Y).sigma_hat, r)
    if 2 in methods:
        out[2] = PilotTrio.from_covariance(huber, r)
    if 3 in methods or 4 in methods:
        sk = kendall_marginal_cov(Y, np.sqrt(np.clip(np.diag(huber), 1e-300, None))).sigma_hat
        if 3 in methods:
            out[3] = PilotTrio.from_covariance(sk, r)
        if 4 in methods:
            _, Vs = eig_top(kendall_spatial(Y), r, by="value")
            out[4] = PilotTrio.from_covariance(sk, r, v_hat=Vs)
    return out


def factor_replicate(cfg: FactorExperimentConfig, d: int, rep: int):
    """Metrics for each method on one panel: ``{method: {metric: value}}``."""
    import warnings

    n = cfg.n_for(d)
    rng = make_rng(cfg.seed, d, rep, 0)
    X, B, sigma, sigma_u = gen_factor_panel(cfg, d, n, rng)
    Y = X.values
    v = factor_v(cfg, B, sigma)
    heuristic = not math.isfinite(v)
    if heuristic:
        v = plugin_v(Y)
    pcfg = PoetConfig(r=cfg.r, tau_scale=cfg.tau_scale, shrink=cfg.shrink)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        pilots = build_pilots(Y, cfg.r, cfg.methods, v, heuristic)
    out = {}
    for m, pilot in pilots.items():
        try:
            res = poet(n, pilot, pcfg, truth=(sigma, sigma_u))
            out[m] = {k: getattr(res.metrics, k) for k in METRICS}
        except SpecterError as exc:
            out[m] = exc
    return out


def _median_iqr(x: np.ndarray):
    x = x[~np.isnan(x)]
    if x.size == 0:
        return float("nan"), float("nan")
    # infinite entries break linear interpolation; fall back to order statistics
    method = "inverted_cdf" if np.isinf(x).any() else "linear"
    q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75], method=method)
    iqr = q3 - q1 if np.isfinite(q3) else math.inf
    return float(med), float(iqr)


def run_factor_experiment(cfg: FactorExperimentConfig, threads: int = 1) -> List[ResultRow]:
    """Per-replication metrics and ratios against method 1, plus their
    medians and interquartile ranges per ``d`` and method.

    A replication where a method fails enters that method's ratio
    aggregates as ``+inf``; one where method 1 fails is left out.
    """
    label = cfg.label()
    tasks = [(d, rep) for d in cfg.d_grid for rep in range(cfg.replications)]

    def one(task):
        d, rep = task
        try:
            return d, rep, factor_replicate(cfg, d, rep)
        except (SpecterError, np.linalg.LinAlgError) as exc:
            return d, rep, exc

    rows: List[ResultRow] = []
    ratios = {}
    for d, rep, res in _map(one, tasks, threads):
        if isinstance(res, Exception):
            for m in cfg.methods:
                rows.append(ResultRow("factor", f"{label};method={m}", d, rep, "failed", float("nan")))
            continue
        base = res.get(1)
        for m in cfg.methods:
            param = f"{label};method={m}"
            got = res.get(m)
            if isinstance(got, Exception) or got is None:
                rows.append(ResultRow("factor", param, d, rep, "failed", float("nan")))
                # a failure counts as the worst possible ratio in the aggregates
                if isinstance(base, dict):
                    for k in METRICS:
                        ratios.setdefault((d, m, k), []).append(math.inf)
                continue
            for k in METRICS:
                rows.append(ResultRow("factor", param, d, rep, k, got[k]))
                if isinstance(base, dict):
                    ratio = _ratio(got[k], base[k])
                    rows.append(ResultRow("factor", param, d, rep, "ratio_" + k, ratio))
                    ratios.setdefault((d, m, k), []).append(ratio)
    for (d, m, k), vals in ratios.items():
        med, iqr = _median_iqr(np.asarray(vals, dtype=float))
        param = f"{label};method={m}"
        rows.append(ResultRow("factor", param, d, -1, f"ratio_{k}_median", med))
        rows.append(ResultRow("factor", param, d, -1, f"ratio_{k}_iqr", iqr))
    return sorted(rows)


def _ratio(a: float, b: float) -> float:
    if a == b:
        return 1.0
    if b == 0 or not np.isfinite(b):
        return float("nan")
    return a / b
