"""Stationary Gaussian time-series simulation from a dynamic DAG.

Each variable is a recursive linear regression on its within-time parents
and lagged parents with independent Gaussian noise.  Stationarity of the
implied vector autoregression is checked before any sample is drawn.
"""

from __future__ import annotations

import importlib.resources
import json
from dataclasses import dataclass, field

import numpy as np

from .data import TimeSeriesDataset
from .graph import Dag, GraphError, graph_from_json, node_index

# two-interval coefficient ranges used in the experiments
WEAK_RANGE = ((-0.6, -0.2), (0.2, 0.6))
STRONG_RANGE = ((-0.6, -0.4), (0.4, 0.6))


class SimulationError(ValueError):
    """Invalid structural model or nonstationary dynamics."""


def _as_seedseq(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


@dataclass
class SemSkeleton:
    """Edge structure of a dynamic SEM before coefficients are drawn."""

    base_dag: Dag  # within-time DAG over p variables
    q: int
    lag_edges: frozenset[tuple[int, int, int]]  # (src_var, lag, dst_var)
    variables: list[str]

    def __post_init__(self):
        p = self.base_dag.node_count
        for src, lag, dst in self.lag_edges:
            if not (0 <= src < p and 0 <= dst < p and 1 <= lag <= self.q):
                raise SimulationError(f"lag edge ({src}, {lag}, {dst}) out of range")


@dataclass
class DynamicSem:
    """Linear-Gaussian SEM with within-time and lagged coefficients."""

    p: int
    q: int
    variables: list[str]
    within: dict[tuple[int, int], float]  # (src, dst) -> coefficient
    lag: dict[tuple[int, int, int], float]  # (src, lag, dst) -> coefficient
    noise_sd: np.ndarray | None = None

    def __post_init__(self):
        if self.noise_sd is None:
            self.noise_sd = np.ones(self.p)
        self.noise_sd = np.asarray(self.noise_sd, dtype=float)
        if self.noise_sd.shape != (self.p,) or np.any(self.noise_sd <= 0):
            raise SimulationError("noise_sd must be p positive values")
        for coef in list(self.within.values()) + list(self.lag.values()):
            if coef == 0.0:
                raise SimulationError("zero coefficients are not allowed on edges")
        # acyclicity of the within-time part
        self.base_dag = Dag(self.p, self.within.keys())

    def window_dag(self) -> Dag:
        """Time-unrolled DAG on the p(q+1) lag-window node set."""
        p, q = self.p, self.q
        edges = []
        for block_lag in range(q + 1):
            for src, dst in self.within:
                edges.append((node_index(src, block_lag, p, q),
                              node_index(dst, block_lag, p, q)))
        for src, lag, dst in self.lag:
            for dst_lag in range(q + 1 - lag):
                edges.append((node_index(src, dst_lag + lag, p, q),
                              node_index(dst, dst_lag, p, q)))
        return Dag(p * (q + 1), edges)

    def transition_matrices(self) -> tuple[np.ndarray, list[np.ndarray]]:
        """Reduced VAR form: X_t = A_1 X_{t-1} + ... + A_q X_{t-q} + M eps."""
        p, q = self.p, self.q
        b_within = np.zeros((p, p))
        for (src, dst), coef in self.within.items():
            b_within[dst, src] = coef
        m = np.linalg.inv(np.eye(p) - b_within)
        mats = []
        for l in range(1, q + 1):
            b_l = np.zeros((p, p))
            for (src, lag, dst), coef in self.lag.items():
                if lag == l:
                    b_l[dst, src] = coef
            mats.append(m @ b_l)
        return m, mats

    def spectral_radius(self) -> float:
        _, mats = self.transition_matrices()
        p, q = self.p, self.q
        if q == 0:
            return 0.0
        companion = np.zeros((p * q, p * q))
        for l, a in enumerate(mats):
            companion[:p, l * p:(l + 1) * p] = a
        if q > 1:
            companion[p:, :p * (q - 1)] = np.eye(p * (q - 1))
        return float(np.max(np.abs(np.linalg.eigvals(companion))))


@dataclass
class SimConfig:
    m: int = 1
    lengths: list[int] | int = 500
    coeff_range: tuple = WEAK_RANGE
    burn_in: int = 200
    seed: int = 0

    def length_list(self) -> list[int]:
        if isinstance(self.lengths, int):
            return [self.lengths] * self.m
        if len(self.lengths) != self.m:
            raise SimulationError(f"{len(self.lengths)} lengths for m={self.m} replicates")
        return list(self.lengths)


# ---------------------------------------------------------------------------
# model construction

def extend_to_dynamic(dag: Dag, q: int = 1, variables: list[str] | None = None) -> SemSkeleton:
    """Add a self-lag edge per variable; only q=1 is supported here."""
    if q != 1:
        raise SimulationError("extend_to_dynamic supports q=1; build DynamicSem "
                              "directly for deeper lags")
    p = dag.node_count
    if variables is None:
        variables = [f"X{g + 1}" for g in range(p)]
    lag_edges = frozenset((g, 1, g) for g in range(p))
    return SemSkeleton(base_dag=dag, q=q, lag_edges=lag_edges, variables=list(variables))


def _draw_coefficient(rng: np.random.Generator, intervals) -> float:
    widths = np.array([hi - lo for lo, hi in intervals], dtype=float)
    if np.any(widths < 0):
        raise SimulationError("coefficient intervals must have lo <= hi")
    if widths.sum() == 0.0:
        lo, hi = intervals[int(rng.integers(len(intervals)))]
        return float(lo)
    k = int(rng.choice(len(intervals), p=widths / widths.sum()))
    lo, hi = intervals[k]
    return float(rng.uniform(lo, hi))


def sample_coefficients(skel: SemSkeleton, cfg: SimConfig) -> DynamicSem:
    """Draw one independent coefficient per edge; deterministic per seed."""
    rng = np.random.default_rng(_as_seedseq(cfg.seed))
    within = {}
    for src, dst in sorted(skel.base_dag.edges):
        within[(src, dst)] = _draw_coefficient(rng, cfg.coeff_range)
    lag = {}
    for src, l, dst in sorted(skel.lag_edges):
        lag[(src, l, dst)] = _draw_coefficient(rng, cfg.coeff_range)
    return DynamicSem(p=skel.base_dag.node_count, q=skel.q,
                      variables=list(skel.variables), within=within, lag=lag)


# ---------------------------------------------------------------------------
# sampling

def generate_dataset(sem: DynamicSem, cfg: SimConfig,
                     noise_seed: int | None = None) -> TimeSeriesDataset:
    """Simulate m replicates; the first burn_in steps of each are discarded.

    Replicates get independent child seeds from one seed sequence, so the
    output does not depend on generation order.
    """
    radius = sem.spectral_radius()
    if radius >= 1.0:
        raise SimulationError(f"nonstationary dynamics: spectral radius {radius:.4f} >= 1")
    m_mat, lag_mats = sem.transition_matrices()
    noise_map = m_mat * sem.noise_sd  # column scaling: M @ diag(sd)
    seed = cfg.seed if noise_seed is None else noise_seed
    children = _as_seedseq(seed).spawn(cfg.m)
    lengths = cfg.length_list()
    replicates = []
    p, q = sem.p, sem.q
    for j in range(cfg.m):
        rng = np.random.default_rng(children[j])
        total = lengths[j] + cfg.burn_in
        eps = rng.standard_normal((total, p))
        out = np.zeros((total, p))
        history = [np.zeros(p) for _ in range(q)]  # history[l-1] = X_{t-l}
        for t in range(total):
            x = noise_map @ eps[t]
            for l, a in enumerate(lag_mats):
                x += a @ history[l]
            out[t] = x
            if q:
                history = [x] + history[:-1]
        replicates.append(out[cfg.burn_in:])
    return TimeSeriesDataset(replicates=replicates, variable_names=list(sem.variables))


# ---------------------------------------------------------------------------
# serialization and bundled assets

def sem_to_json(sem: DynamicSem, seed: int | None = None) -> dict:
    doc = {
        "p": sem.p,
        "q": sem.q,
        "variables": list(sem.variables),
        "edges": [
            {"from": {"var": sem.variables[src], "lag": 0},
             "to": {"var": sem.variables[dst], "lag": 0},
             "coefficient": coef}
            for (src, dst), coef in sorted(sem.within.items())
        ] + [
            {"from": {"var": sem.variables[src], "lag": lag},
             "to": {"var": sem.variables[dst], "lag": 0},
             "coefficient": coef}
            for (src, lag, dst), coef in sorted(sem.lag.items())
        ],
        "noise_sd": [float(s) for s in sem.noise_sd],
    }
    if seed is not None:
        doc["seed"] = seed
    return doc


def sem_from_json(doc) -> DynamicSem:
    p = int(doc["p"])
    q = int(doc["q"])
    variables = list(doc["variables"])
    idx = {name: g for g, name in enumerate(variables)}
    within, lag = {}, {}
    for e in doc["edges"]:
        src = idx[e["from"]["var"]]
        dst = idx[e["to"]["var"]]
        l = int(e["from"].get("lag", 0))
        coef = float(e["coefficient"])
        if int(e["to"].get("lag", 0)) != 0:
            raise SimulationError("edge targets must be at lag 0")
        if l == 0:
            within[(src, dst)] = coef
        else:
            lag[(src, l, dst)] = coef
    noise_sd = np.asarray(doc.get("noise_sd", np.ones(p)), dtype=float)
    return DynamicSem(p=p, q=q, variables=variables, within=within, lag=lag,
                      noise_sd=noise_sd)


def load_alarm() -> tuple[Dag, list[str]]:
    """Bundled ALARM network: 37 nodes, 46 edges, within-time only."""
    ref = importlib.resources.files("tslocaldag.assets").joinpath("alarm.json")
    doc = json.loads(ref.read_text())
    dag, p, q, variables = graph_from_json(doc)
    if q != 0 or not isinstance(dag, Dag):
        raise GraphError("alarm asset must be a lag-free DAG")
    return dag, variables


def alarm_dynamic_skeleton() -> SemSkeleton:
    dag, variables = load_alarm()
    return extend_to_dynamic(dag, q=1, variables=variables)
