"""Multi-level coevolutionary hyperparameter search.

The population is split into collectives. Each collective evolves with its
own individual-level algorithm (IBEA, or a simplified immune-style HEIA
variant) and every few generations the worst collective is replaced by
elites of the best one plus fresh random genomes.

A genome is a length-10 real vector::

    0 layers  1-4 neurons per layer  5 optimizer  6 activation
    7 l1 index  8 l2 index  9 dropout
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.cluster.vq import kmeans2

from . import _backend
from .data import DataSplit, subsample_indices, SAMPLE_SIZES
from .errors import ConfigError, DataError
from .interpret import mode_sweep
from .metrics import (
    DEFAULT_BINS,
    DEFAULT_MIN_COUNT,
    DEFAULT_SWEEP_POINTS,
    MEASURES,
    FitToMedianProbe,
    ObjectiveVector,
    conditional_median_table,
    max_absolute_relative_error,
    mean_absolute_error,
    mean_absolute_relative_error,
)
from .nn_core import (
    ACTIVATIONS,
    MAX_NEURONS,
    OPTIMIZERS,
    REGULARISATION_RATES,
    NetworkConfig,
    TrainingSchedule,
    init_network,
    train,
)

log = logging.getLogger(__name__)

N_GENES = 10
GENE_NAMES = ("layers", "neurons_1", "neurons_2", "neurons_3", "neurons_4",
              "optimizer", "activation", "l1_index", "l2_index", "dropout")
REGULARISATION_GENES = slice(7, 10)
DROPOUT_MAX = float(np.nextafter(0.9, 0.0))
ALGORITHMS = ("ibea", "heia")
FAILURE_FACTOR = 10.0


def gene_bounds(max_neurons: int = MAX_NEURONS) -> tuple[np.ndarray, np.ndarray]:
    top = max_neurons + 0.999
    lo = np.array([1, 1, 1, 1, 1, 0, 0, 0, 0, 0], dtype=float)
    hi = np.array([4.999, top, top, top, top, 6.999, 7.999, 4.999, 4.999, DROPOUT_MAX])
    return lo, hi


def decode_genome(genome, regularisation_mask: bool = False, input_dim: int = 5) -> NetworkConfig:
    g = np.asarray(genome, dtype=float)
    layers = int(math.floor(g[0]))
    neurons = tuple(min(int(math.floor(x)), MAX_NEURONS) for x in g[1:1 + layers])
    if regularisation_mask:
        l1 = l2 = dropout = 0.0
    else:
        l1 = REGULARISATION_RATES[int(math.floor(g[7]))]
        l2 = REGULARISATION_RATES[int(math.floor(g[8]))]
        dropout = float(min(g[9], DROPOUT_MAX))
    return NetworkConfig(
        hidden_layers=layers,
        neurons_per_layer=neurons,
        optimizer=OPTIMIZERS[int(math.floor(g[5]))],
        activation=ACTIVATIONS[int(math.floor(g[6]))],
        l1_rate=l1,
        l2_rate=l2,
        dropout_rate=dropout,
        input_dim=input_dim,
    )


def sbx_crossover(p1, p2, lo, hi, rng, eta: float = 15.0, beta=None):
    """Simulated binary crossover on every gene; children clipped to bounds.

    ``beta`` forces the spread factor (scalar or per gene) instead of sampling it.
    """
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    if beta is None:
        u = rng.random(p1.shape)
        beta = np.where(u <= 0.5, (2 * u) ** (1 / (eta + 1)),
                        (1 / (2 * (1 - u))) ** (1 / (eta + 1)))
    same = p1 == p2
    c1 = np.where(same, p1, 0.5 * ((1 + beta) * p1 + (1 - beta) * p2))
    c2 = np.where(same, p2, 0.5 * ((1 - beta) * p1 + (1 + beta) * p2))
    return np.clip(c1, lo, hi), np.clip(c2, lo, hi)


def de_variation(target, a, b, c, lo, hi, rng, F: float = 0.5, CR: float = 0.9):
    """DE/rand/1/bin trial vector."""
    target = np.asarray(target, dtype=float)
    mutant = np.asarray(a, dtype=float) + F * (np.asarray(b, dtype=float) - np.asarray(c, dtype=float))
    cross = rng.random(target.shape) < CR
    cross[rng.integers(target.size)] = True
    return np.clip(np.where(cross, mutant, target), lo, hi)


def polynomial_mutation(genome, lo, hi, rng, rate: float = 0.08, eta: float = 20.0):
    """Bounded polynomial mutation, each gene independently with probability ``rate``."""
    x = np.array(genome, dtype=float)
    hit = rng.random(x.shape) < rate
    u = rng.random(x.shape)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    d1 = (x - lo) / safe
    d2 = (hi - x) / safe
    p = 1.0 / (eta + 1.0)
    low = u < 0.5
    val_lo = 2 * u + (1 - 2 * u) * (1 - d1) ** (eta + 1)
    val_hi = 2 * (1 - u) + 2 * (u - 0.5) * (1 - d2) ** (eta + 1)
    dq = np.where(low, val_lo ** p - 1, 1 - val_hi ** p)
    x = np.where(hit & (span > 0), x + dq * span, x)
    return np.clip(x, lo, hi)


def _as_matrix(points) -> np.ndarray:
    pts = list(points) if not isinstance(points, np.ndarray) else points
    if len(pts) and isinstance(pts[0], ObjectiveVector):
        return np.array([p.values for p in pts], dtype=float)
    return np.asarray(pts, dtype=float).reshape(len(pts), -1)


def dominates(a, b) -> bool:
    a = np.asarray(a)
    b = np.asarray(b)
    return bool((a <= b).all() and (a < b).any())


def nondominated_filter(points) -> list[int]:
    """Indices of the points no other point dominates (minimisation)."""
    F = _as_matrix(points)
    if len(F) == 0:
        return []
    return np.flatnonzero(_backend.kernels.nondominated_mask(F)).tolist()


def nondominated_sort(F) -> list[list[int]]:
    F = _as_matrix(F)
    n = len(F)
    if n == 0:
        return []
    le = (F[:, None, :] <= F[None, :, :]).all(-1)
    lt = (F[:, None, :] < F[None, :, :]).any(-1)
    dom = le & lt
    count = dom.sum(axis=0)
    fronts = []
    current = np.flatnonzero(count == 0)
    while current.size:
        fronts.append(current.tolist())
        count = count - dom[current].sum(axis=0)
        count[current] = -1
        current = np.flatnonzero(count == 0)
    return fronts


def crowding_distance(F) -> np.ndarray:
    F = _as_matrix(F)
    n, m = F.shape
    dist = np.zeros(n)
    if n <= 2:
        dist[:] = np.inf
        return dist
    for k in range(m):
        order = np.argsort(F[:, k], kind="stable")
        span = F[order[-1], k] - F[order[0], k]
        dist[order[0]] = dist[order[-1]] = np.inf
        if span > 0:
            dist[order[1:-1]] += (F[order[2:], k] - F[order[:-2], k]) / span
    return dist


def normalise_objectives(F) -> np.ndarray:
    F = _as_matrix(F)
    lo = F.min(axis=0)
    span = F.max(axis=0) - lo
    return (F - lo) / np.where(span > 0, span, 1.0)


def ibea_fitness(F, kappa: float = 0.05) -> np.ndarray:
    """Additive-epsilon indicator fitness on min-max normalised objectives."""
    ind = _backend.kernels.eps_indicator(normalise_objectives(F))
    c = np.abs(ind).max() or 1.0
    E = np.exp(-ind / (c * kappa))
    np.fill_diagonal(E, 0.0)
    return -E.sum(axis=0)


def ibea_select(F, n_survivors: int, kappa: float = 0.05) -> np.ndarray:
    F = _as_matrix(F)
    if n_survivors > len(F):
        raise ValueError("population smaller than n_survivors")
    return np.asarray(_backend.kernels.ibea_truncate(normalise_objectives(F), kappa, n_survivors))


def _by_crowding(F, members):
    cd = crowding_distance(F[members])
    order = sorted(range(len(members)), key=lambda i: (-cd[i], members[i]))
    return [members[i] for i in order]


def clone_allocation(weights, budget: int) -> np.ndarray:
    """Largest-remainder split of ``budget`` proportional to ``weights``."""
    w = np.asarray(weights, dtype=float)
    if budget <= 0 or w.sum() <= 0:
        return np.zeros(len(w), dtype=int)
    share = budget * w / w.sum()
    counts = np.floor(share).astype(int)
    rest = budget - counts.sum()
    order = np.argsort(-(share - counts), kind="stable")
    counts[order[:rest]] += 1
    return counts


def heia_select_simplified(F, n_survivors: int, clone_budget: int):
    """Immune-style selection: returns ``(survivors, clone_pool)`` as index arrays.

    Survivors are filled front by front (crowding breaks the last front).
    The first front is ranked by crowding distance, most isolated first, and
    clones are allocated proportionally to ``front_size - rank``.
    """
    F = _as_matrix(F)
    if n_survivors > len(F):
        raise ValueError("population smaller than n_survivors")
    fronts = nondominated_sort(F)
    survivors = []
    for front in fronts:
        if len(survivors) + len(front) <= n_survivors:
            survivors.extend(front)
        else:
            survivors.extend(_by_crowding(F, front)[:n_survivors - len(survivors)])
        if len(survivors) == n_survivors:
            break
    ranked = _by_crowding(F, fronts[0]) if fronts else []
    counts = clone_allocation(np.arange(len(ranked), 0, -1), clone_budget)
    clones = np.repeat(np.array(ranked, dtype=int), counts)
    return np.array(sorted(survivors), dtype=int), clones


def epochs_schedule(generation: int, total_generations: int) -> int:
    """1 epoch early on, ramping to 20 at the end of the run."""
    if not 1 <= generation <= total_generations:
        raise ValueError("generation must lie in [1, total_generations]")
    if total_generations <= 30:
        if total_generations == 1:
            return 1
        frac = (generation - 1) / (total_generations - 1)
    elif generation <= 15:
        return 1
    elif generation > total_generations - 15:
        return 20
    else:
        frac = (generation - 15) / (total_generations - 30)
    return int(math.floor(1 + 19 * frac + 0.5))


@dataclass
class GARunConfig:
    population_size: int = 1000
    generations: int = 300
    n_collectives: int = 8
    eliminated_collectives: int = 1
    elimination_interval: int = 10
    elite_fraction: float = 0.10
    crossover_rate: float = 1.0
    mutation_rate: float = 0.08
    objective_set: tuple[str, ...] = ("MARE", "MaxARE")
    regularisation_mask: bool = False
    max_neurons: int = MAX_NEURONS
    sbx_eta: float = 15.0
    mutation_eta: float = 20.0
    de_f: float = 0.5
    de_cr: float = 0.9
    ibea_kappa: float = 0.05
    sample_sizes: tuple[int, int, int] = SAMPLE_SIZES
    workers: int = 1

    def __post_init__(self):
        self.objective_set = tuple(self.objective_set)
        self.sample_sizes = tuple(self.sample_sizes)
        if not self.objective_set or any(o not in MEASURES for o in self.objective_set):
            raise ConfigError(f"objective_set must be a nonempty subset of {MEASURES}")
        if not 0 < self.elite_fraction < 1:
            raise ConfigError("elite_fraction must lie in (0, 1)")
        if self.elimination_interval < 1:
            raise ConfigError("elimination_interval must be >= 1")
        if self.eliminated_collectives != 1:
            raise ConfigError("exactly one collective is eliminated per event")
        if self.n_collectives < 2 and self.n_collectives != 1:
            raise ConfigError("n_collectives must be >= 1")
        if self.population_size < 2 * self.n_collectives:
            raise ConfigError("population_size must give every collective at least 2 members")
        if self.generations < 1:
            raise ConfigError("generations must be >= 1")
        if not 1 <= self.max_neurons <= MAX_NEURONS:
            raise ConfigError(f"max_neurons must lie in [1, {MAX_NEURONS}]")
        if self.crossover_rate != 1.0:
            raise ConfigError("only crossover_rate 1 is supported")
        if not 0 <= self.mutation_rate <= 1:
            raise ConfigError("mutation_rate must lie in [0, 1]")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


@dataclass
class DataContext:
    """Pools, median tables and the fit-to-median probe shared by every evaluation."""
    train_X: np.ndarray
    train_y: np.ndarray
    val_X: np.ndarray
    val_y: np.ndarray
    test_X: np.ndarray
    test_y: np.ndarray
    tables: list
    probe: FitToMedianProbe
    schedule: TrainingSchedule = field(default_factory=TrainingSchedule)

    @property
    def input_dim(self) -> int:
        return self.train_X.shape[1]

    @property
    def pool_sizes(self):
        return len(self.train_X), len(self.val_X), len(self.test_X)

    @classmethod
    def from_split(cls, data: DataSplit, schedule: TrainingSchedule | None = None,
                   n_bins: int = DEFAULT_BINS, min_count: int = DEFAULT_MIN_COUNT,
                   sweep_points: int = DEFAULT_SWEEP_POINTS, names=None) -> DataContext:
        X, y = data.train.inputs, data.train.target
        tables = [conditional_median_table(X, y, j, n_bins, min_count, names[j] if names else "")
                  for j in range(X.shape[1])]
        probe = FitToMedianProbe.build(X, tables, mode_sweep(X, sweep_points))
        return cls(X, y, data.validation.inputs, data.validation.target,
                   data.test.inputs, data.test.target, tables, probe,
                   schedule or TrainingSchedule())


@dataclass
class Evaluation:
    genome: np.ndarray
    config: NetworkConfig
    generation: int
    index: int
    epochs: int
    objectives: ObjectiveVector | None = None
    model: object = None
    epochs_run: int = 0
    failed: bool = False

    def objective_array(self) -> np.ndarray:
        return self.objectives.as_array()


def evaluation_seeds(master_seed: int, generation: int, index: int):
    """Independent (sample, init) seeds for one evaluation."""
    ss = np.random.SeedSequence([master_seed, generation, index])
    a, b = ss.generate_state(2)
    return int(a), int(b)


def compute_objectives(predict, ctx: DataContext, test_idx, objective_set) -> ObjectiveVector:
    Xt = ctx.test_X[test_idx]
    yt = ctx.test_y[test_idx]
    pred = np.asarray(predict(Xt), dtype=float).ravel()
    if not np.isfinite(pred).all():
        raise FloatingPointError("non-finite predictions")
    cache = {}
    for name in objective_set:
        if name in cache:
            continue
        if name == "MARE":
            cache[name] = mean_absolute_relative_error(pred, yt)
        elif name == "MaxARE":
            cache[name] = max_absolute_relative_error(pred, yt)
        elif name == "MAE":
            cache[name] = mean_absolute_error(pred, yt)
        else:
            cache[name] = ctx.probe(predict)
    return ObjectiveVector(objective_set, [cache[n] for n in objective_set])


def evaluate_genome(genome, ctx: DataContext, generation: int, run_config: GARunConfig,
                    master_seed: int = 0, index: int = 0, trainer=None) -> Evaluation:
    """Train the decoded network on its own data sample and score it.

    A failed or diverged training comes back with ``failed=True`` and no
    objectives; :func:`assign_failure_objectives` fills those in.
    ``trainer(model, train_set, val_set, schedule)`` defaults to ``nn_core.train``
    and may return any callable predictor in place of the model.
    """
    trainer = trainer or train
    config = decode_genome(genome, run_config.regularisation_mask, ctx.input_dim)
    epochs = epochs_schedule(generation, run_config.generations)
    sample_seed, init_seed = evaluation_seeds(master_seed, generation, index)
    tr, va, te = subsample_indices(ctx.pool_sizes, sample_seed, run_config.sample_sizes)
    ev = Evaluation(np.array(genome, dtype=float), config, generation, index, epochs)
    schedule = replace(ctx.schedule, max_epochs=epochs)
    try:
        with np.errstate(all="ignore"):
            model, history = trainer(init_network(config, init_seed),
                                     (ctx.train_X[tr], ctx.train_y[tr]),
                                     (ctx.val_X[va], ctx.val_y[va]), schedule)
            ev.epochs_run = history.epochs_run
            if history.diverged:
                raise FloatingPointError("training diverged")
            ev.objectives = compute_objectives(model, ctx, te, run_config.objective_set)
            ev.model = model
    except (FloatingPointError, DataError, ValueError) as exc:
        log.debug("evaluation g%d/%d failed: %s", generation, index, exc)
        ev.failed = True
        ev.model = None
    return ev


def assign_failure_objectives(evals, objective_set, worst_seen: np.ndarray | None):
    """Give failed evaluations 10x the worst value observed so far; returns the new worst."""
    finite = [e.objective_array() for e in evals if not e.failed]
    worst = worst_seen
    if finite:
        batch = np.max(finite, axis=0)
        worst = batch if worst is None else np.maximum(worst, batch)
    fill = FAILURE_FACTOR * (worst if worst is not None else np.full(len(objective_set), 100.0))
    fill = np.where(fill > 0, fill, FAILURE_FACTOR)
    for e in evals:
        if e.failed:
            e.objectives = ObjectiveVector(objective_set, fill)
    return worst


class ParetoArchive:
    """Nondominated evaluations; an entry equal in every objective to an
    existing one is rejected, so duplicated objectives collapse to one entry."""

    def __init__(self):
        self.entries: list[Evaluation] = []

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def add(self, ev: Evaluation) -> bool:
        if ev.failed or ev.objectives is None:
            return False
        f = ev.objective_array()
        keep = []
        for e in self.entries:
            g = e.objective_array()
            if (g <= f).all():
                return False
            if not dominates(f, g):
                keep.append(e)
        keep.append(ev)
        self.entries = keep
        return True

    def update(self, evals) -> int:
        return sum(self.add(e) for e in evals)

    def objective_matrix(self) -> np.ndarray:
        return np.array([e.objective_array() for e in self.entries])


@dataclass
class Collective:
    id: int
    members: list
    individual_algorithm: str
    collective_fitness: float = 0.0


@dataclass
class EvolutionResult:
    archive: ParetoArchive
    history: list
    evaluations: list
    collectives: list

    @property
    def final_population(self):
        return [m for c in self.collectives for m in c.members]


_WORKER_CTX = None


def _worker_init(ctx, run_config, master_seed):
    global _WORKER_CTX
    _WORKER_CTX = (ctx, run_config, master_seed)


def _worker_eval(task):
    genome, generation, index = task
    ctx, run_config, master_seed = _WORKER_CTX
    return evaluate_genome(genome, ctx, generation, run_config, master_seed, index)


class _Evaluator:
    def __init__(self, ctx, run_config, master_seed, trainer=None):
        self.ctx = ctx
        self.run_config = run_config
        self.master_seed = master_seed
        self.trainer = trainer
        self.pool = None
        if run_config.workers > 1 and trainer is None:
            self.pool = ProcessPoolExecutor(run_config.workers, initializer=_worker_init,
                                            initargs=(ctx, run_config, master_seed))

    def __call__(self, genomes, generation, first_index):
        tasks = [(g, generation, first_index + i) for i, g in enumerate(genomes)]
        if self.pool is not None:
            return list(self.pool.map(_worker_eval, tasks, chunksize=1))
        return [evaluate_genome(g, self.ctx, gen, self.run_config, self.master_seed, i, self.trainer)
                for g, gen, i in tasks]

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()


def form_collectives(genomes, n_collectives, lo, hi, rng) -> list[list[int]]:
    """k-means on normalised genomes, repaired so every group has >= 2 members."""
    n = len(genomes)
    if n_collectives == 1:
        return [list(range(n))]
    Z = (np.asarray(genomes) - lo) / (hi - lo)
    centroids, labels = kmeans2(Z, n_collectives, minit="++", rng=rng)
    groups = [list(np.flatnonzero(labels == k)) for k in range(n_collectives)]
    for k in range(n_collectives):
        while len(groups[k]) < 2:
            donor = max(range(n_collectives), key=lambda q: (len(groups[q]), -q))
            d = ((Z[groups[donor]] - centroids[k]) ** 2).sum(axis=1)
            groups[k].append(groups[donor].pop(int(np.argmin(d))))
    return [sorted(int(i) for i in g) for g in groups]


def _tournament(fitness, rng, size):
    a = rng.integers(len(fitness), size=size)
    b = rng.integers(len(fitness), size=size)
    return np.where(fitness[a] >= fitness[b], a, b)


def _offspring(coll, rc: GARunConfig, lo, hi, rng):
    G = np.array([m.genome for m in coll.members])
    F = np.array([m.objective_array() for m in coll.members])
    s = len(G)
    kids = []
    if coll.individual_algorithm == "ibea":
        fit = ibea_fitness(F, rc.ibea_kappa)
        parents = _tournament(fit, rng, s + (s % 2))
        for i in range(0, len(parents), 2):
            kids.extend(sbx_crossover(G[parents[i]], G[parents[i + 1]], lo, hi, rng, rc.sbx_eta))
        kids = [polynomial_mutation(k, lo, hi, rng, rc.mutation_rate, rc.mutation_eta) for k in kids[:s]]
    else:
        _, clones = heia_select_simplified(F, s, s)
        for ci in clones:
            others = [i for i in range(s) if i != ci]
            if s >= 4 and rng.random() >= 0.5:
                a, b, c = rng.choice(others, 3, replace=False)
                child = de_variation(G[ci], G[a], G[b], G[c], lo, hi, rng, rc.de_f, rc.de_cr)
            else:
                child = sbx_crossover(G[ci], G[rng.choice(others)], lo, hi, rng, rc.sbx_eta)[0]
            kids.append(polynomial_mutation(child, lo, hi, rng, min(1.0, 2 * rc.mutation_rate),
                                            rc.mutation_eta))
    kids = np.array(kids)
    if rc.regularisation_mask:
        kids[:, REGULARISATION_GENES] = 0.0
    return kids


def _survivors(coll, union, rc: GARunConfig):
    F = np.array([e.objective_array() for e in union])
    s = len(coll.members)
    if coll.individual_algorithm == "ibea":
        keep = ibea_select(F, s, rc.ibea_kappa)
    else:
        keep, _ = heia_select_simplified(F, s, 0)
    return [union[i] for i in keep]


def _score_collectives(collectives):
    """Collective fitness = minus the mean normalised objective sum of its members."""
    members = [m for c in collectives for m in c.members]
    sums = normalise_objectives([m.objective_array() for m in members]).sum(axis=1)
    pos = 0
    per_member = {}
    for c in collectives:
        k = len(c.members)
        c.collective_fitness = -float(sums[pos:pos + k].mean())
        per_member[c.id] = sums[pos:pos + k]
        pos += k
    return per_member


def _history_rows(generation, collectives, rc, epochs, eliminated):
    rows = []
    names = list(dict.fromkeys(rc.objective_set))
    for c in collectives:
        F = np.array([m.objective_array() for m in c.members])
        row = {"generation": generation, "collective": c.id, "algorithm": c.individual_algorithm,
               "size": len(c.members), "epochs": epochs, "eliminated": int(c.id == eliminated)}
        for name in names:
            k = rc.objective_set.index(name)
            row[f"best_{name}"] = float(F[:, k].min())
            row[f"mean_{name}"] = float(F[:, k].mean())
        rows.append(row)
    return rows


def _log_rows(evals, collective_of):
    rows = []
    for e in evals:
        cfg = e.config
        row = {"generation": e.generation, "index": e.index,
               "collective": collective_of.get(e.index, -1)}
        row.update({f"g_{n}": float(v) for n, v in zip(GENE_NAMES, e.genome)})
        row.update({"hidden_layers": cfg.hidden_layers,
                    "neurons": "x".join(str(n) for n in cfg.neurons_per_layer),
                    "activation": cfg.activation, "optimizer": cfg.optimizer,
                    "l1_rate": cfg.l1_rate, "l2_rate": cfg.l2_rate, "dropout_rate": cfg.dropout_rate,
                    "epochs": e.epochs, "epochs_run": e.epochs_run, "failed": int(e.failed)})
        for k, name in enumerate(e.objectives.names):
            row[f"obj{k}_{name}"] = e.objectives.values[k]
        rows.append(row)
    return rows


def evolve(run_config: GARunConfig, ctx: DataContext, master_seed: int,
           trainer=None, progress=None) -> EvolutionResult:
    """Run the collective search and return the archive plus bookkeeping.

    Generation 1 evaluates the random initial population; every later
    generation breeds one offspring per member in each collective.
    """
    rc = run_config
    rng = np.random.default_rng([master_seed, 0x6A0])
    lo, hi = gene_bounds(rc.max_neurons)
    archive = ParetoArchive()
    history, log_rows = [], []
    worst = None
    evaluate = _Evaluator(ctx, rc, master_seed, trainer)
    try:
        genomes = rng.uniform(lo, hi, size=(rc.population_size, N_GENES))
        if rc.regularisation_mask:
            genomes[:, REGULARISATION_GENES] = 0.0
        evals = evaluate(genomes, 1, 0)
        worst = assign_failure_objectives(evals, rc.objective_set, worst)
        archive.update(evals)
        groups = form_collectives(genomes, rc.n_collectives, lo, hi, rng)
        collectives = [Collective(k, [evals[i] for i in g], ALGORITHMS[k % len(ALGORITHMS)])
                       for k, g in enumerate(groups)]
        owner = {e.index: c.id for c in collectives for e in c.members}
        log_rows += _log_rows(evals, owner)
        _score_collectives(collectives)
        history += _history_rows(1, collectives, rc, epochs_schedule(1, rc.generations), -1)
        if progress:
            progress(1, archive)

        for gen in range(2, rc.generations + 1):
            kids = [_offspring(c, rc, lo, hi, rng) for c in collectives]
            flat = np.vstack(kids)
            new = evaluate(flat, gen, 0)
            worst = assign_failure_objectives(new, rc.objective_set, worst)
            archive.update(new)
            owner = {}
            pos = 0
            for c, k in zip(collectives, kids):
                offspring = new[pos:pos + len(k)]
                for e in offspring:
                    owner[e.index] = c.id
                pos += len(k)
                c.members = _survivors(c, c.members + offspring, rc)
            log_rows += _log_rows(new, owner)

            eliminated = -1
            per_member = _score_collectives(collectives)
            if gen % rc.elimination_interval == 0 and len(collectives) > 1:
                ranked = sorted(collectives, key=lambda c: (c.collective_fitness, c.id))
                loser, winner = ranked[0], ranked[-1]
                order = np.argsort(per_member[winner.id], kind="stable")
                n_elite = max(1, math.ceil(rc.elite_fraction * len(winner.members)))
                elites = [winner.members[i] for i in order[:n_elite]][:len(loser.members)]
                n_random = len(loser.members) - len(elites)
                fresh = []
                if n_random:
                    g = rng.uniform(lo, hi, size=(n_random, N_GENES))
                    if rc.regularisation_mask:
                        g[:, REGULARISATION_GENES] = 0.0
                    fresh = evaluate(g, gen, len(flat))
                    worst = assign_failure_objectives(fresh, rc.objective_set, worst)
                    archive.update(fresh)
                    log_rows += _log_rows(fresh, {e.index: loser.id for e in fresh})
                loser.members = elites + fresh
                eliminated = loser.id
                _score_collectives(collectives)
            history += _history_rows(gen, collectives, rc, epochs_schedule(gen, rc.generations),
                                     eliminated)
            if progress:
                progress(gen, archive)
    finally:
        evaluate.close()
    return EvolutionResult(archive, history, log_rows, collectives)
