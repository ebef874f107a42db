"""Experiment harness: config parsing, Monte Carlo runs, CSV reporting.

A single YAML document (version 1) describes one experiment: the graph, the
bandlimit, the noise, how sampling probabilities are obtained (fixed,
designed, or a baseline strategy), the estimator, and the Monte Carlo
budget.  Runs aggregate per-iteration squared deviation over independent
trials whose generators are seeded ``seed + trial_index``, so results are
reproducible and trial order is irrelevant.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import design as design_mod
from .distributed import CommGraph, DrlsConfig, drls_simulate
from .filters import (
    lms_msd_theory,
    lms_rate_theory,
    lms_step_bound,
    rls_msd_theory,
)
from .graphs import (
    Bandlimit,
    Graph,
    build_laplacian,
    connected_components,
    eigendecompose,
    load_edge_list,
    random_geometric_graph,
    save_edge_list,
)
from .sampling import (
    NoiseModel,
    SamplingProbabilities,
    leverage_score_probabilities,
    leverage_scores,
    max_det_greedy,
    weighted_gram,
)

TRIAL_CHUNK = 64


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


def to_db(x) -> float:
    return 10.0 * math.log10(x)


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def load_config(path) -> dict:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    version = raw.get("version", 1)
    if version != 1:
        raise ConfigError(f"version: unsupported config version {version!r}")
    return raw


def _need(cfg: dict, section: str, key: str, kind=None):
    if key not in cfg:
        raise ConfigError(f"{section}.{key}: required field is missing")
    val = cfg[key]
    if kind is not None and not isinstance(val, kind):
        raise ConfigError(f"{section}.{key}: expected {kind}, got {type(val).__name__}")
    return val


def _get(cfg: dict, key: str, default=None):
    return cfg.get(key, default) if isinstance(cfg, dict) else default


# ---------------------------------------------------------------------------
# experiment setup

@dataclass
class Setup:
    """Everything a run needs, resolved from one config document."""

    config: dict
    graph: Graph
    bandlimit: Bandlimit
    noise: NoiseModel
    signal_coeffs: np.ndarray
    x_true: np.ndarray
    seed: int
    trials: int
    horizon: int


def build_graph(config: dict) -> Graph:
    gcfg = config.get("graph")
    if not isinstance(gcfg, dict):
        raise ConfigError("graph: section is missing")
    kind = _need(gcfg, "graph", "kind", str)
    if kind == "edge_list":
        return load_edge_list(_need(gcfg, "graph", "path", str))
    if kind != "random_geometric":
        raise ConfigError(f"graph.kind: unknown kind {kind!r}")
    n = _need(gcfg, "graph", "n", int)
    radius = float(_need(gcfg, "graph", "radius", (int, float)))
    seed = int(gcfg.get("seed", config.get("seed", 0)))
    if not gcfg.get("ensure_connected", True):
        return random_geometric_graph(n, radius, seed)
    import warnings

    for offset in range(200):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            g = random_geometric_graph(n, radius, seed + offset)
        if connected_components(g) == 1:
            return g
    raise ConfigError(
        f"graph: no connected draw in 200 attempts (n={n}, radius={radius}); "
        "increase the radius"
    )


def build_setup(config: dict) -> Setup:
    seed = int(config.get("seed", 0))
    trials = int(config.get("trials", 200))
    horizon = int(config.get("horizon", 1000))
    if trials < 1:
        raise ConfigError("trials: must be at least 1")
    if horizon < 1:
        raise ConfigError("horizon: must be at least 1")

    graph = build_graph(config)
    basis = eigendecompose(build_laplacian(graph))

    bcfg = config.get("bandlimit")
    if not isinstance(bcfg, dict):
        raise ConfigError("bandlimit: section is missing")
    if "indices" in bcfg:
        bl = Bandlimit.from_indices(basis, bcfg["indices"])
    else:
        size = _need(bcfg, "bandlimit", "size", int)
        if not 1 <= size <= graph.n:
            raise ConfigError(f"bandlimit.size: {size} out of range for n={graph.n}")
        bl = Bandlimit.lowest(basis, size)

    ncfg = config.get("noise")
    if not isinstance(ncfg, dict):
        raise ConfigError("noise: section is missing")
    nkind = ncfg.get("kind", "uniform")
    if nkind == "uniform":
        noise = NoiseModel.uniform(graph.n, float(_need(ncfg, "noise", "sigma_sq", (int, float))))
    elif nkind == "values":
        vals = _need(ncfg, "noise", "values", list)
        if len(vals) != graph.n:
            raise ConfigError(f"noise.values: expected {graph.n} entries, got {len(vals)}")
        noise = NoiseModel(variances=np.asarray(vals, dtype=float))
    elif nkind == "loguniform":
        low = float(_need(ncfg, "noise", "low", (int, float)))
        high = float(_need(ncfg, "noise", "high", (int, float)))
        if not 0 < low <= high:
            raise ConfigError("noise.low/high: need 0 < low <= high")
        rng = np.random.default_rng([seed, 202])
        noise = NoiseModel(variances=np.exp(rng.uniform(np.log(low), np.log(high), graph.n)))
    else:
        raise ConfigError(f"noise.kind: unknown kind {nkind!r}")

    scale = float(_get(config.get("signal"), "scale", 1.0))
    coeffs = scale * np.random.default_rng([seed, 101]).normal(size=bl.size)
    return Setup(
        config=config,
        graph=graph,
        bandlimit=bl,
        noise=noise,
        signal_coeffs=coeffs,
        x_true=bl.basis_slice @ coeffs,
        seed=seed,
        trials=trials,
        horizon=horizon,
    )


def _design_spec(setup: Setup, scfg: dict) -> design_mod.DesignSpec:
    msd_target = None
    if "msd_target_db" in scfg:
        msd_target = 10.0 ** (float(scfg["msd_target_db"]) / 10.0)
    elif "msd_target" in scfg:
        msd_target = float(scfg["msd_target"])
    return design_mod.DesignSpec(
        bandlimit=setup.bandlimit,
        noise=setup.noise,
        mu=float(scfg["mu"]) if "mu" in scfg else _get(setup.config.get("algorithm"), "mu"),
        beta=float(scfg["beta"]) if "beta" in scfg else _get(setup.config.get("algorithm"), "beta"),
        rate_target=float(scfg["rate_target"]) if "rate_target" in scfg else None,
        msd_target=msd_target,
        budget=float(scfg["budget"]) if "budget" in scfg else None,
        bounds=scfg.get("p_max"),
    )


_DESIGN_PROBLEMS = {
    "min_rate_convex": design_mod.solve_min_rate_convex,
    "sca_min_rate": design_mod.sca_min_rate,
    "dinkelbach": design_mod.dinkelbach_min_msd,
    "sca_min_msd": design_mod.sca_min_msd,
    "rls": design_mod.solve_rls_design,
}


def resolve_sampling(setup: Setup):
    """Turn the sampling section into a probability vector.

    Returns (probabilities, trace_or_None); designed sampling also yields
    the solver trace for reporting.
    """
    scfg = setup.config.get("sampling")
    if not isinstance(scfg, dict):
        raise ConfigError("sampling: section is missing")
    kind = _need(scfg, "sampling", "kind", str)
    n = setup.graph.n
    if kind == "full":
        return SamplingProbabilities.full(n), None
    if kind == "explicit":
        p = _need(scfg, "sampling", "p", list)
        if len(p) != n:
            raise ConfigError(f"sampling.p: expected {n} entries, got {len(p)}")
        return SamplingProbabilities(probs=np.asarray(p, dtype=float)), None
    if kind == "design":
        problem = _need(scfg, "sampling", "problem", str)
        if problem not in _DESIGN_PROBLEMS:
            raise ConfigError(
                f"sampling.problem: unknown problem {problem!r}; "
                f"choose from {sorted(_DESIGN_PROBLEMS)}"
            )
        spec = _design_spec(setup, scfg)
        probs, trace = _DESIGN_PROBLEMS[problem](spec)
        return probs, trace
    if kind == "strategy":
        name = _need(scfg, "sampling", "strategy", str)
        m = _need(scfg, "sampling", "m", int)
        if name == "leverage":
            return leverage_score_probabilities(setup.bandlimit, m), None
        if name == "max_det":
            chosen = max_det_greedy(setup.bandlimit, m, setup.noise)
            return SamplingProbabilities.from_support(chosen, n), None
        if name == "uniform":
            rng = np.random.default_rng([setup.seed, 303])
            chosen = np.sort(rng.choice(n, size=m, replace=False))
            return SamplingProbabilities.from_support(chosen, n), None
        raise ConfigError(f"sampling.strategy: unknown strategy {name!r}")
    raise ConfigError(f"sampling.kind: unknown kind {kind!r}")


# ---------------------------------------------------------------------------
# Monte Carlo engine

@dataclass
class LearningCurve:
    """Trial-averaged squared-deviation trajectory plus theory annotations.

    ``msd_linear[t]`` is the mean of ||estimate - x_true||^2 before the
    observation at instant t is consumed, so index 0 carries the
    initialization error and the tail carries the steady state.
    """

    msd_linear: np.ndarray
    metadata: dict = field(default_factory=dict)
    per_node: np.ndarray = None

    @property
    def msd_db(self) -> np.ndarray:
        return 10.0 * np.log10(np.maximum(self.msd_linear, 1e-300))

    def steady_state_linear(self) -> float:
        tail = self.msd_linear[-max(1, self.msd_linear.shape[0] // 4):]
        return float(tail.mean())

    def steady_state_db(self) -> float:
        return to_db(self.steady_state_linear())


def _trial_randomness(seed: int, trial: int, horizon: int, probs: np.ndarray,
                      std: np.ndarray):
    rng = np.random.default_rng(seed + trial)
    masks = (rng.random((horizon, probs.shape[0])) < probs).astype(np.int8)
    noise = rng.normal(0.0, std, size=(horizon, probs.shape[0]))
    return masks, noise


def _run_lms_mc(setup: Setup, probs: SamplingProbabilities, mu: float) -> np.ndarray:
    u = setup.bandlimit.basis_slice
    s_true = setup.signal_coeffs
    x_true = setup.x_true
    horizon, trials = setup.horizon, setup.trials
    acc = np.zeros(horizon)
    for start in range(0, trials, TRIAL_CHUNK):
        chunk = range(start, min(start + TRIAL_CHUNK, trials))
        masks = np.empty((len(chunk), horizon, setup.graph.n), dtype=np.int8)
        vs = np.empty((len(chunk), horizon, setup.graph.n))
        for c, t in enumerate(chunk):
            masks[c], vs[c] = _trial_randomness(setup.seed, t, horizon,
                                                probs.probs, setup.noise.std)
        s_hat = np.zeros((len(chunk), setup.bandlimit.size))
        for t in range(horizon):
            err = s_hat - s_true
            acc[t] += float((err * err).sum())
            resid = masks[:, t, :] * (x_true + vs[:, t, :] - s_hat @ u.T)
            s_hat = s_hat + mu * (resid @ u)
        del masks, vs
    return acc / trials


def _run_rls_mc(setup: Setup, probs: SamplingProbabilities, beta: float,
                delta: float) -> np.ndarray:
    u = setup.bandlimit.basis_slice
    s_true = setup.signal_coeffs
    x_true = setup.x_true
    horizon, trials = setup.horizon, setup.trials
    f = setup.bandlimit.size
    inv_var = 1.0 / setup.noise.variances
    acc = np.zeros(horizon)
    for start in range(0, trials, TRIAL_CHUNK):
        chunk = range(start, min(start + TRIAL_CHUNK, trials))
        c_sz = len(chunk)
        masks = np.empty((c_sz, horizon, setup.graph.n), dtype=np.int8)
        vs = np.empty((c_sz, horizon, setup.graph.n))
        for c, t in enumerate(chunk):
            masks[c], vs[c] = _trial_randomness(setup.seed, t, horizon,
                                                probs.probs, setup.noise.std)
        psi = np.tile(delta * np.eye(f), (c_sz, 1, 1))
        psiv = np.zeros((c_sz, f))
        for t in range(horizon):
            s_hat = np.linalg.solve(psi, psiv[:, :, None])[:, :, 0]
            err = s_hat - s_true
            acc[t] += float((err * err).sum())
            w = masks[:, t, :] * inv_var
            psi = beta * psi + np.einsum("cn,nf,ng->cfg", w, u, u, optimize=True)
            psiv = beta * psiv + (w * (x_true + vs[:, t, :])) @ u
        del masks, vs
    return acc / trials


def _comm_from_config(setup: Setup, acfg: dict) -> CommGraph:
    comm = acfg.get("comm", "processing")
    if comm == "processing":
        return CommGraph.from_graph(setup.graph)
    if comm == "complete":
        return CommGraph.complete(setup.graph.n)
    if comm == "ring":
        return CommGraph.ring(setup.graph.n)
    if isinstance(comm, str):
        return CommGraph.load(comm)
    raise ConfigError(f"algorithm.comm: unknown topology {comm!r}")


def _run_drls_mc(setup: Setup, probs: SamplingProbabilities, cfg: DrlsConfig,
                 comm: CommGraph):
    horizon, trials = setup.horizon, setup.trials
    x_true = setup.x_true
    acc = np.zeros((horizon, setup.graph.n))
    for t in range(trials):
        masks, vs = _trial_randomness(setup.seed, t, horizon, probs.probs,
                                      setup.noise.std)
        observations = masks * (x_true + vs)
        curves, _ = drls_simulate(comm, setup.bandlimit, setup.noise, cfg,
                                  masks, observations, x_true)
        acc += curves
    per_node = acc / trials
    return per_node.mean(axis=1), per_node


def run_experiment(config: dict) -> LearningCurve:
    """Monte Carlo learning curve for the configured estimator, with theory
    predictions embedded in the metadata."""
    setup = build_setup(config)
    probs, trace = resolve_sampling(setup)
    acfg = setup.config.get("algorithm")
    if not isinstance(acfg, dict):
        raise ConfigError("algorithm: section is missing")
    kind = _need(acfg, "algorithm", "kind", str)

    meta = {
        "config_hash": config_hash(config),
        "algorithm": kind,
        "seed": setup.seed,
        "trials": setup.trials,
        "horizon": setup.horizon,
        "sampling_rate": float(probs.probs.sum()),
        "theory_rate": math.nan,
    }
    per_node = None
    if kind == "lms":
        mu = float(_need(acfg, "algorithm", "mu", (int, float)))
        theory = lms_msd_theory(probs, mu, setup.noise, setup.bandlimit)
        meta["theory_rate"] = lms_rate_theory(probs, mu, setup.bandlimit)
        meta["step_bound"] = lms_step_bound(probs, setup.bandlimit)
        curve = _run_lms_mc(setup, probs, mu)
    elif kind == "rls":
        beta = float(_need(acfg, "algorithm", "beta", (int, float)))
        delta = float(acfg.get("delta", 1e-3))
        theory = rls_msd_theory(probs, beta, setup.noise, setup.bandlimit)
        curve = _run_rls_mc(setup, probs, beta, delta)
    elif kind == "drls":
        beta = float(_need(acfg, "algorithm", "beta", (int, float)))
        cfg = DrlsConfig(
            rho=float(acfg.get("rho", 1.0)),
            inner_iters=int(acfg.get("inner_iters", 1)),
            beta=beta,
            delta=float(acfg.get("delta", 1e-3)),
        )
        comm = _comm_from_config(setup, acfg)
        theory = rls_msd_theory(probs, beta, setup.noise, setup.bandlimit)
        curve, per_node = _run_drls_mc(setup, probs, cfg, comm)
        meta["inner_iters"] = cfg.inner_iters
    else:
        raise ConfigError(f"algorithm.kind: unknown kind {kind!r}")

    meta["theory_msd_linear"] = float(theory)
    meta["theory_msd_db"] = to_db(theory)
    if trace is not None:
        meta["design_iterations"] = trace.iterations
        meta["design_converged"] = trace.converged
    result = LearningCurve(msd_linear=curve, metadata=meta, per_node=per_node)
    meta["steady_state_db"] = result.steady_state_db()
    return result


# ---------------------------------------------------------------------------
# rate fitting and strategy comparison

def fit_rate(curve) -> float:
    """Per-iteration geometric decay factor of a learning curve.

    Fits a log-linear regression over the transient window, which runs from
    the first iteration until the curve first comes within 3 dB of its
    steady-state mean (the mean over the final quarter of the iterations).
    A flat curve yields 1.0; an exact geometric curve is recovered to
    machine precision.
    """
    y = np.asarray(curve.msd_linear if hasattr(curve, "msd_linear") else curve,
                   dtype=float)
    if y.ndim != 1 or y.shape[0] < 2:
        raise ValueError("need a 1-d curve with at least two points")
    steady = float(y[-max(1, y.shape[0] // 4):].mean())
    inside = y <= steady * 10.0 ** 0.3
    cut = int(np.argmax(inside)) if inside.any() else y.shape[0]
    window = y[:max(cut, 2)]
    logs = np.log(np.maximum(window, 1e-300))
    slope = float(np.polyfit(np.arange(window.shape[0]), logs, 1)[0])
    return float(np.exp(slope))


def _prefix_feasible(bl: Bandlimit, noise: NoiseModel, subset, mu, lam_t, gamma) -> bool:
    w = np.zeros(bl.n)
    w[list(subset)] = 1.0
    lam = float(np.linalg.eigvalsh(weighted_gram(bl, w))[0])
    if lam < lam_t - 1e-12:
        return False
    tr_g = float((noise.variances[list(subset)] * leverage_scores(bl)[list(subset)]).sum())
    return 0.5 * mu * tr_g <= gamma * lam + 1e-12


def _min_prefix(bl, noise, order, mu, lam_t, gamma):
    for m in range(1, len(order) + 1):
        if _prefix_feasible(bl, noise, order[:m], mu, lam_t, gamma):
            return m
    return math.nan


def compare_sampling(config: dict) -> list:
    """Minimal sampling rate per strategy over a grid of rate targets.

    The designed strategy reports sum(p) from the convex program; the greedy
    determinant, leverage-ordered, and uniform-random baselines report the
    smallest number of deterministically sampled vertices whose set meets
    the same rate and MSD-bound constraints.  The random baseline averages
    over ``compare.random_seeds`` permutations (mean and standard deviation).
    """
    setup = build_setup(config)
    ccfg = setup.config.get("compare")
    if not isinstance(ccfg, dict):
        raise ConfigError("compare: section is missing")
    targets = _need(ccfg, "compare", "rate_targets", list)
    mu = float(_need(ccfg, "compare", "mu", (int, float)))
    if "msd_target_db" in ccfg:
        gamma = 10.0 ** (float(ccfg["msd_target_db"]) / 10.0)
    else:
        gamma = float(_need(ccfg, "compare", "msd_target", (int, float)))
    seeds = int(ccfg.get("random_seeds", 200))

    bl, noise = setup.bandlimit, setup.noise
    n = setup.graph.n
    det_order = list(max_det_greedy(bl, n, noise))
    lev_order = list(np.argsort(-leverage_scores(bl), kind="stable"))
    rng = np.random.default_rng(setup.seed)
    perms = [list(rng.permutation(n)) for _ in range(seeds)]

    rows = []
    for alpha in targets:
        alpha = float(alpha)
        lam_t = (1.0 - alpha) / (2.0 * mu)
        spec = design_mod.DesignSpec(
            bandlimit=bl, noise=noise, mu=mu,
            rate_target=alpha, msd_target=gamma,
            bounds=ccfg.get("p_max"),
        )
        try:
            designed, _ = design_mod.solve_min_rate_convex(spec)
            designed_rate = float(designed.probs.sum())
        except design_mod.InfeasibleDesignError:
            designed_rate = math.nan
        rows.append({"strategy": "designed", "rate_target": alpha,
                     "sampling_rate": designed_rate, "sampling_rate_std": 0.0})
        for name, order in (("max_det", det_order), ("leverage", lev_order)):
            rows.append({"strategy": name, "rate_target": alpha,
                         "sampling_rate": _min_prefix(bl, noise, order, mu, lam_t, gamma),
                         "sampling_rate_std": 0.0})
        counts = np.array([_min_prefix(bl, noise, perm, mu, lam_t, gamma)
                           for perm in perms], dtype=float)
        rows.append({"strategy": "uniform", "rate_target": alpha,
                     "sampling_rate": float(np.nanmean(counts)),
                     "sampling_rate_std": float(np.nanstd(counts))})
    return rows


# ---------------------------------------------------------------------------
# file outputs

def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_curve_csv(curve: LearningCurve, path) -> None:
    theory_db = curve.metadata.get("theory_msd_db", math.nan)
    rate = curve.metadata.get("theory_rate", math.nan)
    rows = [
        (t, curve.msd_linear[t], curve.msd_db[t], theory_db, rate)
        for t in range(curve.msd_linear.shape[0])
    ]
    _write_csv(path, ["iteration", "msd_linear", "msd_db", "theory_msd_db", "theory_rate"], rows)


def write_per_node_csv(curve: LearningCurve, path) -> None:
    if curve.per_node is None:
        raise ValueError("curve has no per-node trajectories")
    horizon, n = curve.per_node.shape
    header = ["iteration"] + [f"node_{i}" for i in range(n)]
    rows = [(t, *curve.per_node[t]) for t in range(horizon)]
    _write_csv(path, header, rows)


def write_design_csv(probs: SamplingProbabilities, noise: NoiseModel, path) -> None:
    rows = [
        (i, probs.probs[i], noise.variances[i], probs.bounds[i])
        for i in range(probs.n)
    ]
    _write_csv(path, ["node", "p_i", "sigma_sq_i", "p_max_i"], rows)


def write_trace_csv(trace, path) -> None:
    rows = [
        (k, trace.objectives[k], trace.msd_values[k])
        for k in range(len(trace.points))
    ]
    _write_csv(path, ["iteration", "objective", "msd"], rows)


def write_compare_csv(rows, path) -> None:
    data = [
        (r["strategy"], r["rate_target"], r["sampling_rate"], r["sampling_rate_std"])
        for r in rows
    ]
    _write_csv(path, ["strategy", "rate_target", "sampling_rate", "sampling_rate_std"], data)


def write_metadata(curve: LearningCurve, config: dict, path) -> None:
    payload = {"config": config, "metadata": curve.metadata}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


__all__ = [
    "ConfigError",
    "LearningCurve",
    "Setup",
    "build_graph",
    "build_setup",
    "compare_sampling",
    "config_hash",
    "fit_rate",
    "load_config",
    "resolve_sampling",
    "run_experiment",
    "to_db",
    "write_compare_csv",
    "write_curve_csv",
    "write_design_csv",
    "write_metadata",
    "write_per_node_csv",
    "write_trace_csv",
]
