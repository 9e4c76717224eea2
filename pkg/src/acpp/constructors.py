"""The five portfolio constructors, budget planning, and validation-based
selection of the final portfolio.

All constructors follow the same outer scheme: ``r`` independent
construction repetitions produce candidate portfolios, and the candidate
with the best training-set validation score wins. Repetitions and the
per-subset configuration calls inside one repetition may run concurrently;
results are schedule-independent because every configuration call owns its
seeds and the shared stores are order-invariant.
"""

from __future__ import annotations

import hashlib
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .configurator import ConfiguratorSettings, configure
from .core import (
    Instance,
    InstanceGrouping,
    InstanceResult,
    Portfolio,
    RunRecord,
    RunStatus,
    Scenario,
    penalized_score,
    portfolio_runtime,
    split_random_even,
)
from .perfmodel import ForestParams
from .rundata import RunDataStore
from .runner import Backend, BudgetLedger, evaluate_portfolio
from .space import (
    Configuration,
    compose_product_space,
    decode_product_config,
    default_config,
    make_product_config,
)
from .transfer import TransferReport, transfer_instances

logger = logging.getLogger(__name__)

ALL_METHODS = ("pcit", "pcrs", "global", "clustering", "parhydra")


def derive_seed(*parts) -> int:
    """Stable 31-bit seed derived from arbitrary labels."""
    digest = hashlib.sha256(repr(parts).encode()).digest()
    return int.from_bytes(digest[:4], "big") % (2**31)


@dataclass(frozen=True)
class BudgetPlan:
    """Time budgets (seconds) for one constructor run.

    ``phase_budgets`` are the per-subset configuration budgets of the
    successive phases (one entry for single-phase methods). For the greedy
    block constructor, ``t_c``/``t_v`` are the per-iteration budgets and
    ``iterations`` = k / b.
    """

    method: str
    k: int
    t_c: float
    t_v: float
    r: int
    n: int = 1
    b: int = 1
    phase_budgets: tuple[float, ...] = ()
    iterations: int = 1
    total_cpu: float = 0.0


def plan_budget(
    method: str,
    k: int,
    t_c: float,
    t_v: float,
    r: int,
    n: int = 4,
    b: int = 1,
) -> BudgetPlan:
    """Derive phase/iteration budgets and the total CPU cost of a method.

    Group-style methods cost ``r * k * (t_c + t_v)``. The phased method
    spends ``t_c / (2(n-1))`` per subset in each adjustment phase and
    ``t_c / 2`` in the final construction phase, so phases sum to ``t_c``.
    The block-greedy method costs ``r * sum_i i*b*(t_c + t_v)`` over its
    k/b iterations.
    """
    method = method.lower()
    if method not in ALL_METHODS:
        raise ValueError(f"unknown method {method!r}")
    if k < 1 or r < 1 or t_c <= 0 or t_v < 0:
        raise ValueError("k, r must be >= 1 and budgets positive")
    if method == "pcit":
        if n < 1:
            raise ValueError("phase count must be >= 1")
        if n == 1:
            phases: tuple[float, ...] = (t_c,)
        else:
            phases = (t_c / (2 * (n - 1)),) * (n - 1) + (t_c / 2,)
        return BudgetPlan(
            method, k, t_c, t_v, r, n=n, phase_budgets=phases,
            total_cpu=r * k * (t_c + t_v),
        )
    if method in ("pcrs", "global", "clustering"):
        return BudgetPlan(
            method, k, t_c, t_v, r, n=1, phase_budgets=(t_c,),
            total_cpu=r * k * (t_c + t_v),
        )
    # block-greedy construction
    if b < 1 or k % b != 0:
        raise ValueError(f"block size {b} must divide k={k}")
    iterations = k // b
    total = r * sum(i * b * (t_c + t_v) for i in range(1, iterations + 1))
    return BudgetPlan(
        method, k, t_c, t_v, r, b=b, phase_budgets=(t_c,),
        iterations=iterations, total_cpu=total,
    )


@dataclass
class ValidationOutcome:
    best_index: int
    scores: tuple[float, ...]
    best_results: list[InstanceResult]
    n_scored_instances: int


def validate_and_select(
    portfolios: Sequence[Sequence[Configuration]],
    instances: Sequence[Instance],
    t_v: float,
    cutoff: float,
    penalty: int,
    seed: int,
    backend: Backend,
    ledger: BudgetLedger | None = None,
) -> ValidationOutcome:
    """Score every candidate on the training instances and pick the best.

    Each candidate spends at most ``t_v`` of per-core time (component time
    divided by portfolio width); instances are visited in one shared seeded
    order so partial validations stay paired, and candidates are compared on
    the longest common prefix. Ties go to the lower index.
    """
    if not portfolios:
        raise ValueError("no candidate portfolios")
    order = list(instances)
    np.random.default_rng(seed).shuffle(order)
    all_results: list[list[InstanceResult]] = []
    for components in portfolios:
        width = max(1, len(components))
        consumed = 0.0
        results: list[InstanceResult] = []
        for instance in order:
            res = evaluate_portfolio(
                backend, components, [instance], cutoff, seed,
                ledger=ledger, charge="validation",
            )[0]
            results.append(res)
            consumed += res.cpu_cost / width
            if consumed >= t_v:
                break
        all_results.append(results)
    n_common = min(len(r) for r in all_results)
    if n_common == 0:
        return ValidationOutcome(0, (math.inf,) * len(portfolios), all_results[0], 0)
    scores = tuple(
        math.fsum(
            penalized_score(r.status, r.runtime, cutoff, penalty) for r in results[:n_common]
        )
        / n_common
        for results in all_results
    )
    best = min(range(len(scores)), key=lambda i: (scores[i], i))
    return ValidationOutcome(best, scores, all_results[best], n_common)


@dataclass
class ConstructionResult:
    portfolio: Portfolio
    candidates: tuple[tuple[Configuration, ...], ...]
    selected_index: int
    validation_scores: tuple[float, ...]
    groupings: tuple[InstanceGrouping | None, ...]
    transfer_reports: tuple[tuple[TransferReport, ...], ...]
    ledger: BudgetLedger
    events: list[dict]
    stores: tuple[RunDataStore, ...]

    @property
    def selected_grouping(self) -> InstanceGrouping | None:
        return self.groupings[self.selected_index]


def _finalize(
    scenario: Scenario,
    plan: BudgetPlan,
    seed: int,
    backend: Backend,
    ledger: BudgetLedger,
    events: list[dict],
    rep_outputs: list,
    rep_seeds: list[int],
) -> ConstructionResult:
    ok = [(i, out) for i, out in enumerate(rep_outputs) if not isinstance(out, Exception)]
    for i, out in enumerate(rep_outputs):
        if isinstance(out, Exception):
            logger.warning("construction repetition %d failed and is excluded: %s", i, out)
            events.append({"event": "repetition_failed", "repetition": i, "error": str(out)})
    if not ok:
        raise RuntimeError("every construction repetition failed")
    candidates = tuple(tuple(out[0]) for _, out in ok)
    groupings = tuple(out[1] for _, out in ok)
    reports = tuple(tuple(out[2]) for _, out in ok)
    stores = tuple(out[3] for _, out in ok)
    outcome = validate_and_select(
        candidates,
        scenario.train_instances,
        plan.t_v,
        scenario.cutoff,
        scenario.metric.penalty,
        derive_seed(seed, "validation"),
        backend,
        ledger,
    )
    events.append(
        {
            "event": "validation",
            "scores": list(outcome.scores),
            "selected": outcome.best_index,
            "n_instances": outcome.n_scored_instances,
        }
    )
    portfolio = Portfolio(
        components=candidates[outcome.best_index],
        method_label=plan.method,
        seeds=tuple(rep_seeds),
        consumed_cpu_time=ledger.total,
    )
    return ConstructionResult(
        portfolio=portfolio,
        candidates=candidates,
        selected_index=outcome.best_index,
        validation_scores=outcome.scores,
        groupings=groupings,
        transfer_reports=reports,
        ledger=ledger,
        events=events,
        stores=stores,
    )


def _run_reps(reps: int, worker: Callable[[int], object], cores: int | None) -> list:
    outputs: list = [None] * reps
    workers = min(reps, cores if cores else (os.cpu_count() or 1))
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = {pool.submit(worker, rep): rep for rep in range(reps)}
        for future, rep in futures.items():
            try:
                outputs[rep] = future.result()
            except Exception as exc:  # excluded from validation later
                outputs[rep] = exc
    return outputs


def construct_pcit(
    scenario: Scenario,
    plan: BudgetPlan,
    seed: int,
    backend: Backend,
    *,
    settings: ConfiguratorSettings | None = None,
    transfer_forest: ForestParams | None = None,
    cores: int | None = None,
) -> ConstructionResult:
    """Phased construction with instance transfer between phases.

    Each repetition starts from a fresh random even split; every phase
    configures all subsets concurrently (warm-started from the previous
    phase), and the grouping is adjusted after every phase but the last.
    A plan with a single phase performs no transfers, which is exactly the
    random-splitting baseline.
    """
    if plan.method not in ("pcit", "pcrs"):
        raise ValueError(f"plan is for method {plan.method!r}")
    ledger = BudgetLedger()
    events: list[dict] = []
    train_by_id = {ins.id: ins for ins in scenario.train_instances}
    features = scenario.train_features()
    rep_seeds = [derive_seed(seed, "rep", rep) for rep in range(plan.r)]

    def one_rep(rep: int):
        rep_seed = rep_seeds[rep]
        store = RunDataStore()
        grouping = split_random_even(scenario.train_instances, scenario.k, rep_seed)
        incumbents: list[Configuration | None] = [None] * scenario.k
        reports: list[TransferReport] = []
        n_phases = len(plan.phase_budgets)
        for phase_idx, phase_budget in enumerate(plan.phase_budgets, start=1):

            def conf_subset(j: int) -> Configuration:
                subset = [train_by_id[i] for i in grouping.subsets[j]]
                return configure(
                    scenario.space,
                    subset,
                    scenario.cutoff,
                    phase_budget,
                    scenario.metric,
                    store,
                    derive_seed(rep_seed, "configure", phase_idx, j),
                    initial_incumbent=incumbents[j],
                    backend=backend,
                    ledger=ledger,
                    phase=phase_idx,
                    subset_index=j,
                    settings=settings,
                )

            workers = min(scenario.k, cores if cores else (os.cpu_count() or 1))
            with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
                incumbents = list(pool.map(conf_subset, range(scenario.k)))
            events.append(
                {
                    "event": "phase_done",
                    "repetition": rep,
                    "phase": phase_idx,
                    "incumbents": [c.config_id for c in incumbents],
                    "subset_sizes": list(grouping.sizes()),
                    "ledger": ledger.snapshot(),
                }
            )
            if phase_idx < n_phases:
                grouping, report = transfer_instances(
                    grouping,
                    incumbents,
                    features,
                    store,
                    scenario.space,
                    derive_seed(rep_seed, "transfer", phase_idx),
                    scenario.cutoff,
                    scenario.metric.penalty,
                    forest=transfer_forest,
                )
                reports.append(report)
                events.append(
                    {"event": "transfer", "repetition": rep, "phase": phase_idx, **report.to_dict()}
                )
        return incumbents, grouping, reports, store

    outputs = _run_reps(plan.r, one_rep, cores)
    return _finalize(scenario, plan, seed, backend, ledger, events, outputs, rep_seeds)


def construct_pcrs(
    scenario: Scenario,
    plan: BudgetPlan,
    seed: int,
    backend: Backend,
    *,
    settings: ConfiguratorSettings | None = None,
    cores: int | None = None,
) -> ConstructionResult:
    """Parallel configuration on the initial random grouping, no transfers."""
    if plan.method != "pcrs":
        raise ValueError(f"plan is for method {plan.method!r}")
    return construct_pcit(scenario, plan, seed, backend, settings=settings, cores=cores)


class PortfolioEvaluator:
    """Adapter letting the configurator search a product space whose points
    are whole portfolios (optionally extending a fixed prefix of components).

    The record appended to the store is the portfolio-level outcome (first
    solver's time); the ledger receives every component's time; the budget
    cost handed back to the configurator is the component-time sum divided
    by the portfolio width, i.e. per-core time. On a cache hit the prefix is
    charged as one block of ``prefix_width * min(prefix_time, cap)``.
    """

    def __init__(
        self,
        base_space,
        block_size: int,
        backend: Backend,
        store: RunDataStore,
        ledger: BudgetLedger | None = None,
        prefix: tuple[Configuration, ...] = (),
        prefix_cache: dict[str, tuple[RunStatus, float]] | None = None,
        scenario_cutoff: float | None = None,
    ):
        self.base_space = base_space
        self.block_size = block_size
        self.backend = backend
        self.store = store
        self.ledger = ledger
        self.prefix = prefix
        self.prefix_cache = prefix_cache if prefix_cache is not None else {}
        self.scenario_cutoff = scenario_cutoff

    @property
    def width(self) -> int:
        return len(self.prefix) + self.block_size

    def _prefix_outcome(self, instance: Instance, seed: int) -> tuple[tuple[RunStatus, float], float]:
        """Prefix-portfolio result on the instance plus the fresh cost paid."""
        cached = self.prefix_cache.get(instance.id)
        if cached is not None:
            return cached, 0.0
        cutoff = self.scenario_cutoff
        outcomes = []
        cost = 0.0
        for comp in self.prefix:
            status, runtime = self.backend.run(comp, instance, cutoff, seed)
            runtime = cutoff if status is RunStatus.TIMEOUT else min(runtime, cutoff)
            outcomes.append((status, runtime))
            cost += runtime
        combined = portfolio_runtime(outcomes, cutoff)
        result = (combined.status, combined.runtime)
        self.prefix_cache[instance.id] = result
        return result, cost

    def run(
        self, config: Configuration, instance: Instance, cutoff: float, seed: int
    ) -> tuple[RunRecord, float]:
        block = decode_product_config(self.base_space, config, self.block_size)
        outcomes: list[tuple[RunStatus, float]] = []
        cpu = 0.0
        if self.prefix:
            (status, runtime), fresh_cost = self._prefix_outcome(instance, seed)
            if status is RunStatus.SOLVED and runtime < cutoff:
                outcomes.append((status, runtime))
            else:
                outcomes.append((RunStatus.TIMEOUT, cutoff))
            cpu += fresh_cost if fresh_cost > 0 else len(self.prefix) * min(runtime, cutoff)
        for comp in block:
            status, runtime = self.backend.run(comp, instance, cutoff, seed)
            runtime = cutoff if status is RunStatus.TIMEOUT else min(runtime, cutoff)
            outcomes.append((status, runtime))
            cpu += runtime
        combined = portfolio_runtime(outcomes, cutoff)
        record = RunRecord(
            config_id=config.config_id,
            instance_id=instance.id,
            seed=seed,
            status=combined.status,
            runtime=combined.runtime,
            cutoff=cutoff,
            backend_label=f"{self.backend.label}:portfolio",
        )
        self.store.add(record, config)
        if self.ledger is not None:
            self.ledger.charge(cpu, kind="configuration")
        return record, cpu / self.width


def construct_global(
    scenario: Scenario,
    plan: BudgetPlan,
    seed: int,
    backend: Backend,
    *,
    settings: ConfiguratorSettings | None = None,
    cores: int | None = None,
) -> ConstructionResult:
    """Configure the whole portfolio at once over the k-fold product space."""
    if plan.method != "global":
        raise ValueError(f"plan is for method {plan.method!r}")
    ledger = BudgetLedger()
    events: list[dict] = []
    product_space = compose_product_space(scenario.space, scenario.k)
    initial = make_product_config(
        product_space, [default_config(scenario.space)] * scenario.k
    )
    rep_seeds = [derive_seed(seed, "rep", rep) for rep in range(plan.r)]

    def one_rep(rep: int):
        store = RunDataStore()
        evaluator = PortfolioEvaluator(
            scenario.space,
            scenario.k,
            backend,
            store,
            ledger,
            scenario_cutoff=scenario.cutoff,
        )
        winner = configure(
            product_space,
            scenario.train_instances,
            scenario.cutoff,
            plan.t_c,
            scenario.metric,
            store,
            rep_seeds[rep],
            initial_incumbent=initial,
            evaluator=evaluator,
            settings=settings,
        )
        components = decode_product_config(scenario.space, winner, scenario.k)
        events.append(
            {"event": "repetition_done", "repetition": rep,
             "incumbents": [c.config_id for c in components]}
        )
        return list(components), None, [], store

    outputs = _run_reps(plan.r, one_rep, cores)
    return _finalize(scenario, plan, seed, backend, ledger, events, outputs, rep_seeds)


# ---------------------------------------------------------------------------
# feature clustering


def normalize_features(X: np.ndarray, mode: str) -> np.ndarray:
    """Feature normalization: none, per-dimension min-max, or z-score."""
    X = np.asarray(X, dtype=float)
    if mode == "none":
        return X
    if mode == "linear":
        lo = X.min(axis=0)
        span = X.max(axis=0) - lo
        span[span == 0] = 1.0
        return (X - lo) / span
    if mode == "standard":
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std[std == 0] = 1.0
        return (X - mean) / std
    raise ValueError(f"unknown normalization {mode!r}")


def kmeans(
    X: np.ndarray, k: int, seed: int, max_iter: int = 300
) -> tuple[np.ndarray, np.ndarray, tuple[float, ...]]:
    """Plain k-means with seeded k-means++ init, single run, <= max_iter
    iterations. An emptied cluster is re-seeded at the instance farthest
    from its assigned center. Returns (labels, centers, inertia per
    iteration)."""
    X = np.asarray(X, dtype=float)
    n = len(X)
    if k < 1 or n < k:
        raise ValueError("need at least k points")
    rng = np.random.default_rng(seed)

    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    closest = ((X - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            centers[j] = X[rng.integers(n)]
        else:
            centers[j] = X[rng.choice(n, p=closest / total)]
        closest = np.minimum(closest, ((X - centers[j]) ** 2).sum(axis=1))

    labels = np.full(n, -1)
    inertias: list[float] = []
    for _ in range(max_iter):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        for j in range(k):
            if not (new_labels == j).any():
                farthest = int(d2[np.arange(n), new_labels].argmax())
                centers[j] = X[farthest]
                new_labels[farthest] = j
                d2[:, j] = ((X - centers[j]) ** 2).sum(axis=1)
        inertias.append(float(d2[np.arange(n), new_labels].sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            centers[j] = X[labels == j].mean(axis=0)
    return labels, centers, tuple(inertias)


def construct_clustering(
    scenario: Scenario,
    plan: BudgetPlan,
    seed: int,
    backend: Backend,
    *,
    normalization: str = "none",
    settings: ConfiguratorSettings | None = None,
    cores: int | None = None,
) -> ConstructionResult:
    """Cluster instances in feature space once, then configure one component
    per cluster."""
    if plan.method != "clustering":
        raise ValueError(f"plan is for method {plan.method!r}")
    if scenario.feature_dimension == 0:
        raise ValueError("clustering needs instance features")
    ledger = BudgetLedger()
    events: list[dict] = []
    train = scenario.train_instances
    X = normalize_features(np.array([ins.features for ins in train]), normalization)
    labels, _, _ = kmeans(X, scenario.k, derive_seed(seed, "kmeans"))
    subsets = [
        tuple(ins.id for ins, lab in zip(train, labels) if lab == j)
        for j in range(scenario.k)
    ]
    grouping = InstanceGrouping(tuple(subsets), 1, len(train))
    events.append(
        {"event": "clustering", "normalization": normalization,
         "cluster_sizes": list(grouping.sizes())}
    )
    train_by_id = {ins.id: ins for ins in train}
    rep_seeds = [derive_seed(seed, "rep", rep) for rep in range(plan.r)]

    def one_rep(rep: int):
        store = RunDataStore()

        def conf_cluster(j: int) -> Configuration:
            cluster = [train_by_id[i] for i in grouping.subsets[j]]
            return configure(
                scenario.space,
                cluster,
                scenario.cutoff,
                plan.t_c,
                scenario.metric,
                store,
                derive_seed(rep_seeds[rep], "configure", j),
                backend=backend,
                ledger=ledger,
                subset_index=j,
                settings=settings,
            )

        workers = min(scenario.k, cores if cores else (os.cpu_count() or 1))
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            incumbents = list(pool.map(conf_cluster, range(scenario.k)))
        return incumbents, grouping, [], store

    outputs = _run_reps(plan.r, one_rep, cores)
    return _finalize(scenario, plan, seed, backend, ledger, events, outputs, rep_seeds)


def construct_parhydra(
    scenario: Scenario,
    plan: BudgetPlan,
    seed: int,
    backend: Backend,
    *,
    settings: ConfiguratorSettings | None = None,
    cores: int | None = None,
) -> ConstructionResult:
    """Greedy block construction: each iteration jointly configures b new
    components to best extend the portfolio built so far.

    With b = k this is one-shot whole-portfolio configuration; with b = 1 it
    adds one component at a time.
    """
    if plan.method != "parhydra":
        raise ValueError(f"plan is for method {plan.method!r}")
    ledger = BudgetLedger()
    events: list[dict] = []
    b = plan.b
    block_space = compose_product_space(scenario.space, b)
    initial = make_product_config(block_space, [default_config(scenario.space)] * b)
    prefix: list[Configuration] = []
    prefix_cache: dict[str, tuple[RunStatus, float]] = {}
    stores: list[RunDataStore] = []
    rep_seeds = [derive_seed(seed, "rep", rep) for rep in range(plan.r)]

    for iteration in range(plan.iterations):

        def one_block(rep: int):
            store = RunDataStore()
            evaluator = PortfolioEvaluator(
                scenario.space,
                b,
                backend,
                store,
                ledger,
                prefix=tuple(prefix),
                prefix_cache=dict(prefix_cache),
                scenario_cutoff=scenario.cutoff,
            )
            winner = configure(
                block_space,
                scenario.train_instances,
                scenario.cutoff,
                plan.t_c,
                scenario.metric,
                store,
                derive_seed(seed, "iteration", iteration, "rep", rep),
                initial_incumbent=initial,
                evaluator=evaluator,
                settings=settings,
            )
            return list(decode_product_config(scenario.space, winner, b)), store

        outputs = _run_reps(plan.r, one_block, cores)
        blocks = [out for out in outputs if not isinstance(out, Exception)]
        for out in outputs:
            if isinstance(out, Exception):
                logger.warning("block repetition failed: %s", out)
        if not blocks:
            raise RuntimeError("every block repetition failed")
        stores.extend(store for _, store in blocks)
        unions = [tuple(prefix) + tuple(block) for block, _ in blocks]
        outcome = validate_and_select(
            unions,
            scenario.train_instances,
            plan.t_v,
            scenario.cutoff,
            scenario.metric.penalty,
            derive_seed(seed, "validation", iteration),
            backend,
            ledger,
        )
        prefix.extend(blocks[outcome.best_index][0])
        prefix_cache = {
            r.instance_id: (r.status, r.runtime) for r in outcome.best_results
        }
        events.append(
            {
                "event": "iteration_done",
                "iteration": iteration,
                "selected": outcome.best_index,
                "scores": list(outcome.scores),
                "portfolio_size": len(prefix),
            }
        )

    portfolio = Portfolio(
        components=tuple(prefix),
        method_label="parhydra",
        seeds=tuple(rep_seeds),
        consumed_cpu_time=ledger.total,
    )
    return ConstructionResult(
        portfolio=portfolio,
        candidates=(tuple(prefix),),
        selected_index=0,
        validation_scores=(math.nan,),
        groupings=(None,),
        transfer_reports=((),),
        ledger=ledger,
        events=events,
        stores=tuple(stores),
    )


CONSTRUCTORS: dict[str, Callable] = {
    "pcit": construct_pcit,
    "pcrs": construct_pcrs,
    "global": construct_global,
    "clustering": construct_clustering,
    "parhydra": construct_parhydra,
}
