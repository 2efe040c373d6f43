"""Local and global learning-rate optimization with grid search or Bayesian optimization.

Local regime: every client tunes its own eta on its validation split before
any federation happens. Global regime: every candidate eta is scored by a
complete FedAvg run of the cohort.
"""

import logging
import math
from typing import Callable, Optional

import numpy as np

from .errors import DivergenceError
from .federation import Clients, federated_averaging, index_clients, ordered_map
from .gp import maximize_acquisition
from .models import (
    BOConfig,
    ClientDataset,
    Cohort,
    FederationConfig,
    GlobalEta,
    GPState,
    Grid,
    HpoOutcome,
    InitDesign,
    ModelSpec,
    Regime,
    Strategy,
    TraceEntry,
    TrainConfig,
)
from .network import ParamVector, accuracy, client_update, init_params
from .seeding import derive_seed, make_rng

logger = logging.getLogger(__name__)

# objective(eta, candidate_index) -> evaluation record
Objective = Callable[[float, int], TraceEntry]


def select_best(trace: list[TraceEntry]) -> float:
    """Eta of the first entry with the highest accuracy."""
    if not trace:
        raise ValueError("no evaluations to select from")
    best = max(range(len(trace)), key=lambda i: trace[i].accuracy)
    return trace[best].eta


def local_objective(spec: ModelSpec, client: ClientDataset, w0: ParamVector, train_cfg: TrainConfig) -> Objective:
    """ClientUpdate from w0 followed by validation accuracy; divergence scores 0."""
    if len(client.valid) == 0:
        raise ValueError(f"client {client.client_id} has no validation data")

    def evaluate(eta: float, index: int) -> TraceEntry:
        cfg = train_cfg.model_copy(update={"learning_rate": eta})
        try:
            params = client_update(spec, client.client_id, w0, cfg, client.train)
        except DivergenceError as e:
            logger.warning("client %d diverged with eta=%g at step %d", client.client_id, eta, e.step)
            return TraceEntry(eta=eta, accuracy=0.0, client_id=client.client_id, diverged=True)
        return TraceEntry(eta=eta, accuracy=accuracy(spec, params, client.valid), client_id=client.client_id)

    return evaluate


class FederatedObjective:
    """Score a candidate eta by a complete FedAvg run of the cohort.

    The score is the unweighted mean of the members' validation accuracies.
    A run in which any client diverged scores 0.
    """

    def __init__(
        self,
        cohort: Cohort,
        clients: Clients,
        spec: ModelSpec,
        fed_cfg: FederationConfig,
        w0: Optional[ParamVector] = None,
        workers: int = 1,
    ):
        self.cohort = cohort
        self.clients = index_clients(clients, cohort)
        self.spec = spec
        self.fed_cfg = fed_cfg
        self.w0 = w0
        self.workers = workers
        self.broadcasts = 0
        self.participant_updates = 0
        self.aggregation_rounds = 0
        for member in cohort.members:
            if len(self.clients[member].valid) == 0:
                raise ValueError(f"client {member} has no validation data")

    def start_params(self, index: int) -> ParamVector:
        if self.w0 is not None:
            return self.w0
        return init_params(self.spec, derive_seed(self.fed_cfg.seed, "global-w0", index))

    def __call__(self, eta: float, index: int) -> TraceEntry:
        cfg = self.fed_cfg.model_copy(update={"eta_source": GlobalEta(learning_rate=eta)})
        result = federated_averaging(self.cohort, cfg, self.spec, self.clients, self.start_params(index), self.workers)
        self.broadcasts += result.broadcasts
        self.participant_updates += result.participant_updates
        self.aggregation_rounds += result.aggregation_rounds

        diverged = any(log.diverged for log in result.logs)
        per_client = {
            member: 0.0 if diverged else accuracy(self.spec, result.params, self.clients[member].valid)
            for member in self.cohort.members
        }
        if diverged:
            logger.warning("cohort %d: FedAvg with eta=%g diverged, scoring 0", self.cohort.cohort_id, eta)
        return TraceEntry(
            eta=eta,
            accuracy=float(np.mean(list(per_client.values()))),
            client_accuracies=per_client,
            diverged=diverged,
        )


def grid_search(objective: Objective, grid: Grid, workers: int = 1) -> tuple[float, list[TraceEntry]]:
    """Evaluate every grid value; argmax with ties toward the smaller eta.

    Returns:
        Tuple of (selected eta, trace in grid order)
    """
    trace = ordered_map(lambda item: objective(item[1], item[0]), list(enumerate(grid.values)), workers)
    if all(entry.diverged for entry in trace):
        logger.warning("every grid candidate diverged; falling back to eta=%g", grid.values[0])
        return grid.values[0], trace
    return select_best(trace), trace


def initial_design(cfg: BOConfig) -> list[float]:
    """One initial point per equal-width stratum of log10-eta space."""
    low, high = cfg.log_bounds
    width = (high - low) / cfg.n_init
    if cfg.init_design is InitDesign.LATIN:
        rng = make_rng(cfg.seed, "bo-init")
        return [low + (i + float(rng.uniform())) * width for i in range(cfg.n_init)]
    return [low + (i + 0.5) * width for i in range(cfg.n_init)]


def bayesian_search(objective: Objective, cfg: BOConfig, workers: int = 1) -> tuple[float, list[TraceEntry]]:
    """GP-UCB search; returns the best evaluated eta, not the surrogate optimum.

    Args:
        objective: Candidate scorer
        cfg: Search space, budget, kernel and acquisition settings
        workers: Pool size for the initial evaluations

    Returns:
        Tuple of (selected eta, trace of n_init + n_iter evaluations)
    """
    low, high = cfg.log_bounds

    def to_eta(u: float) -> float:
        return float(min(max(10.0**u, cfg.eta_min), cfg.eta_max))

    state = GPState(kernel=cfg.kernel)
    initial = [to_eta(u) for u in initial_design(cfg)]
    trace = ordered_map(lambda item: objective(item[1], item[0]), list(enumerate(initial)), workers)
    for entry in trace:
        state = state.observe(math.log10(entry.eta), entry.accuracy)

    for step in range(cfg.n_iter):
        u = min(max(maximize_acquisition(state, cfg), low), high)
        entry = objective(to_eta(u), cfg.n_init + step)
        trace.append(entry)
        state = state.observe(math.log10(entry.eta), entry.accuracy)
    return select_best(trace), trace


def grid_search_local(
    client: ClientDataset,
    spec: ModelSpec,
    w0: ParamVector,
    grid: Grid,
    train_cfg: TrainConfig,
) -> tuple[float, list[TraceEntry]]:
    """Grid search of one client's eta on its own validation data."""
    return grid_search(local_objective(spec, client, w0, train_cfg), grid)


def bayesian_local(
    client: ClientDataset,
    spec: ModelSpec,
    w0: ParamVector,
    cfg: BOConfig,
    train_cfg: TrainConfig,
) -> tuple[float, list[TraceEntry]]:
    """Bayesian optimization of one client's eta on its own validation data."""
    return bayesian_search(local_objective(spec, client, w0, train_cfg), cfg)


def grid_search_global(
    cohort: Cohort,
    clients: Clients,
    spec: ModelSpec,
    grid: Grid,
    fed_cfg: FederationConfig,
    w0: Optional[ParamVector] = None,
    workers: int = 1,
) -> tuple[float, list[TraceEntry]]:
    """Grid search where each candidate runs a full FedAvg of the cohort."""
    return grid_search(FederatedObjective(cohort, clients, spec, fed_cfg, w0, workers), grid)


def bayesian_global(
    cohort: Cohort,
    clients: Clients,
    spec: ModelSpec,
    cfg: BOConfig,
    fed_cfg: FederationConfig,
    w0: Optional[ParamVector] = None,
    workers: int = 1,
) -> tuple[float, list[TraceEntry]]:
    """Bayesian optimization where each evaluation runs a full FedAvg of the cohort."""
    return bayesian_search(FederatedObjective(cohort, clients, spec, fed_cfg, w0, workers), cfg)


def _search(strategy: Strategy, objective: Objective, grid: Optional[Grid], bo: Optional[BOConfig]):
    if strategy is Strategy.GRID:
        return grid_search(objective, grid or Grid())
    return bayesian_search(objective, bo or BOConfig())


def local_hpo(
    strategy: Strategy,
    clients: Clients,
    spec: ModelSpec,
    w0: ParamVector,
    train_cfg: TrainConfig,
    grid: Optional[Grid] = None,
    bo: Optional[BOConfig] = None,
    workers: int = 1,
    cohort_id: int = 0,
) -> HpoOutcome:
    """Optimize eta_k separately on every client, starting all from the shared w0.

    Only the w0 broadcast reaches the clients; no aggregation takes place.

    Args:
        strategy: Grid search or Bayesian optimization
        clients: Client datasets
        spec: Network architecture
        w0: Shared initial parameters
        train_cfg: Local training settings (epochs = E_global * R by default)
        grid: Candidate values for grid search
        bo: Bayesian-optimization settings
        workers: Number of clients optimized concurrently
        cohort_id: Cohort recorded in the outcome

    Returns:
        HpoOutcome mapping every client to its selected eta
    """
    by_id = index_clients(clients)
    client_ids = sorted(by_id)
    searches = ordered_map(
        lambda cid: _search(strategy, local_objective(spec, by_id[cid], w0, train_cfg), grid, bo),
        client_ids,
        workers,
    )
    result = {cid: eta for cid, (eta, _) in zip(client_ids, searches)}
    logger.info("local %s search selected %s", strategy.value, result)
    return HpoOutcome(
        cohort_id=cohort_id,
        regime=Regime.LOCAL,
        strategy=strategy,
        result=result,
        trace=[entry for _, trace in searches for entry in trace],
        broadcasts=len(client_ids),
        participant_updates=0,
        aggregation_rounds=0,
    )


def global_hpo(
    strategy: Strategy,
    cohort: Cohort,
    clients: Clients,
    spec: ModelSpec,
    fed_cfg: FederationConfig,
    grid: Optional[Grid] = None,
    bo: Optional[BOConfig] = None,
    w0: Optional[ParamVector] = None,
    workers: int = 1,
) -> HpoOutcome:
    """Optimize one eta for the whole cohort inside the federation.

    Each candidate costs R communication rounds. Without an explicit w0 every
    candidate starts from a fresh w0 seeded by its index.
    """
    objective = FederatedObjective(cohort, clients, spec, fed_cfg, w0, workers)
    eta, trace = _search(strategy, objective, grid, bo)
    logger.info("global %s search for cohort %d selected eta=%g", strategy.value, cohort.cohort_id, eta)
    return HpoOutcome(
        cohort_id=cohort.cohort_id,
        regime=Regime.GLOBAL,
        strategy=strategy,
        result=float(eta),
        trace=trace,
        broadcasts=objective.broadcasts,
        participant_updates=objective.participant_updates,
        aggregation_rounds=objective.aggregation_rounds,
    )
