"""Config-driven experiment harness.

Wires ensembles, denoisers, the AMP runners and state evolution into the
universality experiments (local / spectral / anisotropic sensing pipelines
compared across matrix ensembles) and the tensor-network check batteries,
emitting machine-readable CSV/JSON results.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import tensor_net as tn
from .amp import SensingProblem, run_sensing_amp
from .denoisers import (
    Denoiser,
    LocalKernelSpec,
    SpectralSpec,
    local_average_denoiser,
    soft_threshold_denoiser,
    svt_denoiser,
)
from .ensembles import (
    ENTRY_DISTS,
    EnsembleSpec,
    SignalSpec,
    sample_ginibre,
    sample_haar_orthogonal,
    sample_noise,
    sample_signal,
)
from .exceptions import ConfigError
from .rng import RngStream
from .state_evolution import se_scalar_sensing
from .vecmat import mat

EXPERIMENTS = (
    "fig1_local",
    "fig2_spectral",
    "fig3_aniso",
    "universality_sweep",
    "se_only",
    "tensor_checks",
)

# stream_id namespaces; seeds select replicates within each purpose
_STREAM_SIGNAL = 1
_STREAM_NOISE = 2
_STREAM_SE = 3
_STREAM_KAPPA = 4
_STREAM_ONSAGER = 5
_STREAM_MATRIX = 100  # + ensemble index


@dataclass
class ExperimentConfig:
    experiment: str
    seeds: List[int]
    M: int = 0
    N: int = 0
    m: int = 0
    n: int = 0
    iterations: int = 4
    ensembles: List[str] = field(default_factory=lambda: ["gaussian", "rademacher"])
    pipeline: str = "local"  # used by se_only
    bandwidth: int = 1
    threshold: float = 0.05
    signal_rank: int = 4
    signal_density: float = 0.05
    signal_seed: int = 1
    kappa_low: float = 0.5
    kappa_high: float = 2.0
    noise_std: float = 0.05
    se_draws: int = 50
    onsager_source: str = ""  # "" = experiment default; else analytic | mc
    mc_reps: int = 100
    serial: bool = True
    out: Optional[str] = None
    fmt: str = "csv"
    # tensor_checks battery sizes
    tensor_trees: int = 50
    tensor_cycles: int = 20
    tensor_n: int = 5
    wick_instances: int = 20
    wick_samples: int = 200_000
    bcp_queries: int = 100
    graph_instances: int = 1000
    battery_seed: int = 7

    def __post_init__(self):
        validate_config(self)


def validate_config(cfg: ExperimentConfig) -> None:
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"must be one of {EXPERIMENTS}, got {cfg.experiment!r}")
    if cfg.experiment != "tensor_checks":
        if not cfg.seeds:
            raise ConfigError("seeds", "must list at least one seed")
        if cfg.iterations < 1:
            raise ConfigError("iterations", "must be >= 1")
        for i, ens in enumerate(cfg.ensembles):
            if ens not in ENTRY_DISTS:
                raise ConfigError(f"ensembles[{i}]", f"unknown entry distribution {ens!r}")
    needs_image = cfg.experiment in ("fig1_local", "fig2_spectral", "universality_sweep") or (
        cfg.experiment == "se_only" and cfg.pipeline in ("local", "spectral")
    )
    if needs_image:
        if cfg.M < 1 or cfg.N < 1:
            raise ConfigError("dims.M", "matrix experiments need positive M, N")
        if cfg.n != cfg.M * cfg.N:
            raise ConfigError("dims.n", f"need n == M*N ({cfg.M * cfg.N}), got {cfg.n}")
    if cfg.experiment != "tensor_checks":
        if cfg.n < 1:
            raise ConfigError("dims.n", "must be positive")
        if cfg.m < 1:
            raise ConfigError("dims.m", "must be positive")
    if cfg.noise_std < 0:
        raise ConfigError("noise_std", "must be >= 0")
    if cfg.fmt not in ("csv", "json"):
        raise ConfigError("fmt", f"must be csv or json, got {cfg.fmt!r}")
    if cfg.onsager_source not in ("", "analytic", "mc"):
        raise ConfigError("onsager_source", "must be 'analytic' or 'mc'")
    if not (0 < cfg.kappa_low <= cfg.kappa_high):
        raise ConfigError("kappa_low", "need 0 < kappa_low <= kappa_high")


def config_from_dict(data: dict) -> ExperimentConfig:
    known = set(ExperimentConfig.__dataclass_fields__)
    for key in data:
        if key not in known:
            raise ConfigError(key, "unknown configuration field")
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError("<root>", str(exc))


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"not valid JSON: {exc}")
    return config_from_dict(data)


@dataclass
class ResultRecord:
    experiment: str
    ensemble: str
    seed: int
    t: int
    mse: float
    se_predicted: float
    gap: float
    runtime_ms: float


# ---------------------------------------------------------------------------
# Pipelines


@dataclass
class _Pipeline:
    theta_star: np.ndarray
    e: np.ndarray
    eta_seq: List[Denoiser]
    K: Optional[np.ndarray]
    onsager: str  # analytic | mc


def _build_pipeline(cfg: ExperimentConfig, kind: str) -> _Pipeline:
    signal_rng = RngStream(cfg.signal_seed, _STREAM_SIGNAL)
    noise_rng = RngStream(cfg.signal_seed, _STREAM_NOISE)
    e = sample_noise(cfg.m, cfg.noise_std, noise_rng)
    T = cfg.iterations
    if kind == "local":
        spec = SignalSpec(kind="smooth_image", dims=cfg.n, M=cfg.M, N=cfg.N)
        theta = sample_signal(spec, signal_rng).vector
        den = local_average_denoiser(LocalKernelSpec(cfg.M, cfg.N, cfg.bandwidth))
        return _Pipeline(theta, e, [den] * T, None, cfg.onsager_source or "analytic")
    if kind == "spectral":
        spec = SignalSpec(kind="low_rank", dims=cfg.n, M=cfg.M, N=cfg.N,
                          rank=cfg.signal_rank, sv_high=np.sqrt(cfg.N))
        theta = sample_signal(spec, signal_rng).vector
        den = svt_denoiser(SpectralSpec(cfg.M, cfg.N, cfg.threshold))
        return _Pipeline(theta, e, [den] * T, None, cfg.onsager_source or "mc")
    if kind == "aniso":
        spec = SignalSpec(kind="sparse", dims=cfg.n, density=cfg.signal_density)
        theta = sample_signal(spec, signal_rng).vector
        o = sample_haar_orthogonal(cfg.n, RngStream(cfg.signal_seed, _STREAM_KAPPA))
        diag = RngStream(cfg.signal_seed, _STREAM_KAPPA).derive(1).generator().uniform(
            cfg.kappa_low, cfg.kappa_high, size=cfg.n
        )
        K = (o * diag) @ o.T
        den = soft_threshold_denoiser(cfg.threshold)
        return _Pipeline(theta, e, [den] * T, K, cfg.onsager_source or "analytic")
    raise ConfigError("experiment", f"no sensing pipeline for {kind!r}")


_KIND_OF = {
    "fig1_local": "local",
    "universality_sweep": "local",
    "fig2_spectral": "spectral",
    "fig3_aniso": "aniso",
}


def _run_cell(cfg: ExperimentConfig, pipe: _Pipeline, ensemble: str, seed: int):
    # streams keyed by the ensemble name, so a repeated entry replays exactly
    eidx = ENTRY_DISTS.index(ensemble)
    w = sample_ginibre(
        EnsembleSpec("ginibre_iid", cfg.m, cfg.n, ensemble),
        RngStream(seed, _STREAM_MATRIX + eidx),
    )
    problem = SensingProblem(W=w, theta_star=pipe.theta_star, e=pipe.e,
                             eta_seq=pipe.eta_seq, K=pipe.K)
    trace = run_sensing_amp(
        problem,
        cfg.iterations,
        onsager="analytic" if pipe.onsager == "analytic" else "monte_carlo",
        mc_reps=cfg.mc_reps,
        rng=RngStream(seed, _STREAM_ONSAGER + 10 * eidx),
    )
    return trace


def _sv_count_above(theta_vec: np.ndarray, cfg: ExperimentConfig) -> int:
    sv = np.linalg.svd(mat(theta_vec, cfg.M, cfg.N), compute_uv=False)
    return int(np.count_nonzero(sv > cfg.threshold * np.sqrt(cfg.N)))


def run_experiment(cfg: ExperimentConfig) -> Tuple[List[ResultRecord], dict]:
    """Run the configured experiment; returns (records, summary).

    Sensing experiments share one signal/noise draw per config (so the
    state-evolution prediction is a single per-iteration curve), vary the
    matrix across (ensemble, seed) cells, and record per-iteration MSE
    against the prediction.
    """
    if cfg.experiment == "tensor_checks":
        return [], tensor_checks(cfg)
    kind = _KIND_OF.get(cfg.experiment, cfg.pipeline if cfg.experiment == "se_only" else None)
    if kind is None:
        raise ConfigError("experiment", f"cannot dispatch {cfg.experiment!r}")
    pipe = _build_pipeline(cfg, kind)
    scalar = se_scalar_sensing(
        pipe.theta_star, pipe.e, pipe.eta_seq, cfg.iterations,
        mc_draws=cfg.se_draws, rng=RngStream(cfg.signal_seed, _STREAM_SE), K=pipe.K,
    )
    summary: dict = {
        "config": asdict(cfg),
        "se_predicted": list(scalar.predicted_mse),
        "sigma_sq": list(scalar.sigma_sq),
        "omega_sq": list(scalar.omega_sq),
    }
    if cfg.experiment == "se_only":
        return [], summary
    cells = [(ens, seed) for ens in cfg.ensembles for seed in cfg.seeds]
    if cfg.serial:
        traces = [_run_cell(cfg, pipe, ens, seed) for ens, seed in cells]
    else:
        with ThreadPoolExecutor() as pool:
            traces = list(pool.map(lambda c: _run_cell(cfg, pipe, c[0], c[1]), cells))
    records: List[ResultRecord] = []
    sv_counts: Dict[str, List[int]] = {}
    curves: Dict[str, List[List[float]]] = {}
    for (ens, seed), trace in zip(cells, traces):
        curves.setdefault(ens, []).append([float(v) for v in trace.mse])
        for t in range(1, cfg.iterations + 1):
            mse = float(trace.mse[t - 1])
            pred = float(scalar.predicted_mse[t - 1])
            records.append(ResultRecord(
                experiment=cfg.experiment, ensemble=ens, seed=seed, t=t,
                mse=mse, se_predicted=pred, gap=abs(mse - pred),
                runtime_ms=0.0 if cfg.serial else trace.wall_ms,
            ))
        if cfg.experiment == "fig2_spectral":
            sv_counts.setdefault(ens, []).append(
                _sv_count_above(trace.theta[:, -1], cfg))
    records.sort(key=lambda r: (r.ensemble, r.seed, r.t))
    for ens, rows in curves.items():
        arr = np.asarray(rows)
        summary.setdefault("ensembles", {})[ens] = {
            "mean_mse": arr.mean(axis=0).tolist(),
            "sd_mse": arr.std(axis=0, ddof=1).tolist() if arr.shape[0] > 1 else [0.0] * arr.shape[1],
        }
    if sv_counts:
        summary["sv_count_above_threshold"] = {
            ens: float(np.mean(v)) for ens, v in sv_counts.items()
        }
    return records, summary


def universality_compare(cfg: ExperimentConfig) -> dict:
    """Mean-over-seeds MSE per (ensemble, t) plus pairwise and SE gaps."""
    if len(cfg.ensembles) < 2:
        raise ConfigError("ensembles", "universality comparison needs >= 2 ensembles")
    records, summary = run_experiment(cfg)
    means = {ens: np.asarray(info["mean_mse"])
             for ens, info in summary["ensembles"].items()}
    pred = np.asarray(summary["se_predicted"])
    names = list(means)
    pair_gaps = {}
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            rel = np.abs(means[a] - means[b]) / np.maximum((means[a] + means[b]) / 2, 1e-300)
            pair_gaps[f"{a}|{b}"] = rel.tolist()
    se_gaps = {
        ens: (np.abs(curve - pred) / np.maximum(pred, 1e-300)).tolist()
        for ens, curve in means.items()
    }
    return {
        "mean_mse": {k: v.tolist() for k, v in means.items()},
        "se_predicted": pred.tolist(),
        "pairwise_relative_gap": pair_gaps,
        "se_relative_gap": se_gaps,
        "summary": summary,
    }


# ---------------------------------------------------------------------------
# Tensor-network batteries


def random_tree_network(num_vertices: int, n: int, gen) -> Tuple[tn.OrderedMultigraph, dict]:
    edges = [(int(gen.integers(0, v)), v) for v in range(1, num_vertices)]
    graph = tn.OrderedMultigraph.from_edges(num_vertices, edges)
    labeling = {
        v: tn.DenseTensor.from_array(gen.standard_normal((n,) * graph.degree(v)))
        for v in range(num_vertices)
    }
    return graph, labeling


def random_cyclic_network(num_vertices: int, n: int, extra: int, gen):
    edges = [(int(gen.integers(0, v)), v) for v in range(1, num_vertices)]
    for _ in range(extra):
        a, b = gen.choice(num_vertices, size=2, replace=False)
        edges.append((int(min(a, b)), int(max(a, b))))
    graph = tn.OrderedMultigraph.from_edges(num_vertices, edges)
    labeling = {
        v: tn.DenseTensor.from_array(gen.standard_normal((n,) * graph.degree(v)))
        for v in range(num_vertices)
    }
    return graph, labeling


def _battery_oracle_equivalence(cfg: ExperimentConfig, rng: RngStream) -> dict:
    gen = rng.generator()
    worst = 0.0
    checked = 0
    for i in range(cfg.tensor_trees):
        nv = int(gen.integers(2, 7))
        n = int(gen.integers(2, cfg.tensor_n + 1))
        graph, labeling = random_tree_network(nv, n, gen)
        a = tn.eval_value_bruteforce(graph, labeling, n)
        b = tn.eval_value_contraction(graph, labeling, n)
        worst = max(worst, abs(a - b) / max(abs(a), 1.0))
        checked += 1
    for i in range(cfg.tensor_cycles):
        nv = int(gen.integers(3, 6))
        n = int(gen.integers(2, cfg.tensor_n + 1))
        graph, labeling = random_cyclic_network(nv, n, int(gen.integers(1, 3)), gen)
        a = tn.eval_value_bruteforce(graph, labeling, n)
        b = tn.eval_value_contraction(graph, labeling, n)
        worst = max(worst, abs(a - b) / max(abs(a), 1.0))
        checked += 1
    return {"name": "oracle_equivalence", "checked": checked,
            "worst_relative": worst, "passed": worst <= 1e-10}


def random_wick_instance(gen, n_cap: int):
    d = int(gen.choice([2, 4, 4, 6]))
    n = int(gen.integers(2, n_cap + 1))
    tensor = tn.DenseTensor.from_array(gen.standard_normal((n,) * d))
    # stream pattern with even multiplicities
    streams = []
    remaining = d
    label = 0
    while remaining > 0:
        block = 2 * int(gen.integers(1, remaining // 2 + 1))
        streams.extend([label] * block)
        remaining -= block
        label += 1
    sigma = list(gen.permutation(streams))
    return tensor, sigma, n


def _battery_wick(cfg: ExperimentConfig, rng: RngStream) -> dict:
    gen = rng.generator()
    checked = 0
    failures = 0
    worst_z = 0.0
    for i in range(cfg.wick_instances):
        tensor, sigma, n = random_wick_instance(gen, cfg.tensor_n)
        exact = tn.wick_expectation(tensor, sigma, n)
        mc, se = tn.wick_expectation_mc(tensor, sigma, n, cfg.wick_samples,
                                        rng.derive(1000 + i))
        z = abs(exact - mc) / max(se, 1e-300)
        worst_z = max(worst_z, z)
        if z > 3.0:
            failures += 1
        checked += 1
        # odd-multiplicity variant must vanish identically
        odd_sigma = list(sigma)
        odd_sigma[0] = max(sigma) + 1
        if tn.wick_expectation(tensor, odd_sigma, n) != 0.0:
            failures += 1
    return {"name": "wick_mc", "checked": checked, "worst_z": worst_z,
            "passed": failures == 0}


def random_diagonal_bcp_query(gen, bound: float):
    m = int(gen.integers(1, 4))
    orders = [int(gen.choice([2, 4])) for _ in range(m)]
    total = sum(orders)
    for _ in range(200):
        ell = int(gen.integers(1, total // 2 + 1))
        pi = list(gen.integers(0, ell, size=total))
        if set(pi) != set(range(ell)):
            continue
        query = tn.BcpQuery(orders=orders, ell=ell, pi=pi)
        rep = tn.validate_bcp_query(query)
        if rep["even_multiplicity"] and rep["connected"]:
            return query
    # fall back to the fully-collapsed pattern, always valid
    return tn.BcpQuery(orders=orders, ell=1, pi=[0] * total)


def _battery_bcp_diagonal(cfg: ExperimentConfig, rng: RngStream) -> dict:
    gen = rng.generator()
    checked = 0
    failures = 0
    n = 16
    for _ in range(cfg.bcp_queries):
        bound = float(gen.uniform(0.5, 2.0))
        query = random_diagonal_bcp_query(gen, bound)
        tensors = [
            tn.DenseTensor.diagonal(gen.uniform(-bound, bound, size=n), k)
            for k in query.orders
        ]
        ratio = tn.bcp_ratio(query, tensors, n)
        if ratio > bound ** query.m:
            failures += 1
        checked += 1
    return {"name": "bcp_diagonal_bound", "checked": checked, "passed": failures == 0}


def random_alt_cycles(gen, max_vertices: int = 8, max_cycles: int = 4):
    cycles = []
    for _ in range(int(gen.integers(1, max_cycles + 1))):
        walk = [int(v) for v in gen.integers(0, max_vertices, size=int(gen.integers(1, 4)))]
        cycles.append(walk + walk)  # doubling keeps per-vertex color degrees even
    return cycles


def _battery_graph_lemma(cfg: ExperimentConfig, rng: RngStream) -> dict:
    gen = rng.generator()
    checked = 0
    failures = 0
    base = tn.alt_cycle_component_bound_check([[0, 0]])
    if not (base["holds"] and base["lhs"] == base["rhs"]):
        failures += 1
    for _ in range(cfg.graph_instances):
        report = tn.alt_cycle_component_bound_check(random_alt_cycles(gen))
        if not report["holds"]:
            failures += 1
        checked += 1
    return {"name": "graph_lemma", "checked": checked, "passed": failures == 0,
            "base_case_equality": base["lhs"] == base["rhs"]}


def tensor_checks(cfg: ExperimentConfig) -> dict:
    """Oracle-equivalence, Wick-MC, BCP-diagonal-bound and graph-lemma
    batteries at the configured sizes; raises BudgetError on sizes beyond
    the enumeration budget."""
    rng = RngStream(cfg.battery_seed)
    batteries = [
        _battery_oracle_equivalence(cfg, rng.derive(1)),
        _battery_wick(cfg, rng.derive(2)),
        _battery_bcp_diagonal(cfg, rng.derive(3)),
        _battery_graph_lemma(cfg, rng.derive(4)),
    ]
    return {"batteries": batteries, "all_pass": all(b["passed"] for b in batteries)}


# ---------------------------------------------------------------------------
# Output writers


CSV_HEADER = ["experiment", "ensemble", "seed", "t", "mse", "se_predicted", "gap", "runtime_ms"]


def write_records_csv(path, records: Sequence[ResultRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow([
                r.experiment, r.ensemble, r.seed, r.t,
                f"{r.mse:.17g}", f"{r.se_predicted:.17g}", f"{r.gap:.17g}",
                f"{r.runtime_ms:.17g}",
            ])


def write_summary_json(path, summary: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
