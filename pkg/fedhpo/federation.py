"""FedAvg over a client cohort plus the individual / central / federated baselines."""

import logging
import math
from collections.abc import Iterable, Mapping
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, TypeVar, Union

import numpy as np

from .errors import DivergenceError
from .models import (
    BaselineReport,
    BaselineRow,
    ClientDataset,
    Cohort,
    Dataset,
    FederationConfig,
    FederationResult,
    ModelSpec,
    RoundLog,
    TrainConfig,
)
from .network import ParamVector, accuracy, client_update, freeze_params, train_loss
from .seeding import derive_seed

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

Clients = Union[Mapping[int, ClientDataset], Iterable[ClientDataset]]


def ordered_map(fn: Callable[[T], R], items: list[T], workers: int = 1) -> list[R]:
    """Apply fn to every item, optionally on a thread pool; output keeps input order."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def index_clients(clients: Clients, cohort: Optional[Cohort] = None) -> dict[int, ClientDataset]:
    """Key client datasets by id and check the cohort is covered."""
    if isinstance(clients, Mapping):
        by_id = dict(clients)
    else:
        by_id = {client.client_id: client for client in clients}
    if cohort is not None:
        missing = [member for member in cohort.members if member not in by_id]
        if missing:
            raise ValueError(f"cohort {cohort.cohort_id} members without data: {missing}")
    return by_id


def select_clients(cohort: Cohort, client_fraction: float, round_seed: int) -> list[int]:
    """Sample max(floor(C * |members|), 1) members without replacement.

    Args:
        cohort: Cohort to sample from
        client_fraction: Fraction C in (0, 1]
        round_seed: Seed of this round's sampling stream

    Returns:
        Selected client ids in member order
    """
    members = cohort.members
    count = max(math.floor(client_fraction * len(members) + 1e-9), 1)
    if count >= len(members):
        return list(members)
    picked = np.random.default_rng(round_seed).choice(len(members), size=count, replace=False)
    return [members[i] for i in sorted(picked)]


def aggregate(updates: list[tuple[int, ParamVector]], sizes: Mapping[int, int]) -> ParamVector:
    """Weighted mean of client parameters, weights n_k / sum(n_j).

    Summation runs in ascending client id as w_ref + sum_k (n_k/N)(w_k - w_ref),
    w_ref being the lowest-id update.

    Raises:
        ValueError: On an empty update list, mismatched lengths or non-positive sizes
    """
    if not updates:
        raise ValueError("nothing to aggregate")
    ordered = sorted(updates, key=lambda item: item[0])
    reference = ordered[0][1]
    for client_id, params in ordered:
        if params.shape != reference.shape:
            raise ValueError(
                f"update of client {client_id} has length {params.shape[0]}, expected {reference.shape[0]}"
            )
        if sizes[client_id] <= 0:
            raise ValueError(f"client {client_id} has non-positive weight {sizes[client_id]}")
    total = sum(sizes[client_id] for client_id, _ in ordered)
    shift = np.zeros_like(reference, dtype=np.float64)
    for client_id, params in ordered[1:]:
        shift += (sizes[client_id] / total) * (params - reference)
    return freeze_params(reference + shift)


def federated_averaging(
    cohort: Cohort,
    cfg: FederationConfig,
    spec: ModelSpec,
    clients: Clients,
    w0: ParamVector,
    workers: int = 1,
) -> FederationResult:
    """Run R rounds of FedAvg inside one cohort.

    Each round samples participants, runs ClientUpdate from the round-start
    weights with the client's learning rate, and aggregates weighted by the
    train-split sizes. A diverged client contributes the round-start weights.

    Args:
        cohort: Participating clients
        cfg: Rounds, fraction, epochs, batch size and learning-rate source
        spec: Network architecture
        clients: Client datasets (mapping or iterable)
        w0: Initial global parameters
        workers: Thread-pool size for the client updates of a round

    Returns:
        FederationResult with final parameters, round logs and communication counts

    Raises:
        ValueError: If a member has no training data
    """
    by_id = index_clients(clients, cohort)
    for member in cohort.members:
        if by_id[member].n_train == 0:
            raise ValueError(f"client {member} has no training data")
    sizes = {member: by_id[member].n_train for member in cohort.members}

    w = w0
    logs: list[RoundLog] = []
    broadcasts = 0
    for round_index in range(cfg.rounds):
        participants = select_clients(cohort, cfg.client_fraction, derive_seed(cfg.seed, "select", round_index))
        round_start = w

        def local_step(client_id: int, round_index=round_index, round_start=round_start):
            train_cfg = TrainConfig(
                learning_rate=cfg.learning_rate_for(client_id),
                epochs=cfg.epochs,
                batch_size=cfg.batch_size,
                seed=cfg.seed,
                dropout=cfg.dropout,
                epoch_offset=round_index * cfg.epochs,
            )
            try:
                return client_update(spec, client_id, round_start, train_cfg, by_id[client_id].train), False
            except DivergenceError as e:
                logger.warning(
                    "client %d diverged in round %d at step %d; using round-start weights",
                    client_id,
                    round_index,
                    e.step,
                )
                return round_start, True

        results = ordered_map(local_step, participants, workers)
        broadcasts += len(participants)
        w = aggregate([(cid, params) for cid, (params, _) in zip(participants, results)], sizes)

        logs.append(
            RoundLog(
                round=round_index,
                participants=participants,
                train_loss={
                    cid: train_loss(spec, params, by_id[cid].train) for cid, (params, _) in zip(participants, results)
                },
                valid_accuracy={
                    member: accuracy(spec, w, by_id[member].valid)
                    for member in cohort.members
                    if len(by_id[member].valid)
                },
                diverged=[cid for cid, (_, diverged) in zip(participants, results) if diverged],
            )
        )
        logger.debug("cohort %d round %d done (%d participants)", cohort.cohort_id, round_index, len(participants))

    return FederationResult(
        params=w,
        logs=logs,
        broadcasts=broadcasts,
        participant_updates=broadcasts,
        aggregation_rounds=cfg.rounds,
    )


def pooled_test_data(cohort: Cohort, clients: Clients) -> Dataset:
    """Concatenate the test splits of every cohort member."""
    by_id = index_clients(clients, cohort)
    pooled = Dataset.concat([by_id[member].test for member in cohort.members])
    if len(pooled) == 0:
        raise ValueError(f"cohort {cohort.cohort_id} has no test data")
    return pooled


def run_baselines(
    cohort: Cohort,
    cfg: FederationConfig,
    spec: ModelSpec,
    clients: Clients,
    w0: ParamVector,
    workers: int = 1,
) -> BaselineReport:
    """Compare individual, central and federated training on the pooled cohort test set.

    Individual and central models train E * R epochs from the same w0 the
    federation starts from; the central model uses the first member's random
    streams and learning rate. Diverged models score 0.
    """
    by_id = index_clients(clients, cohort)
    test_pool = pooled_test_data(cohort, by_id)
    epochs = cfg.epochs * cfg.rounds

    def train_alone(client_id: int, data: Dataset) -> Optional[ParamVector]:
        train_cfg = TrainConfig(
            learning_rate=cfg.learning_rate_for(client_id),
            epochs=epochs,
            batch_size=cfg.batch_size,
            seed=cfg.seed,
            dropout=cfg.dropout,
        )
        try:
            return client_update(spec, client_id, w0, train_cfg, data)
        except DivergenceError as e:
            logger.warning("baseline model of client %d diverged at step %d", client_id, e.step)
            return None

    def score(params: Optional[ParamVector]) -> float:
        return 0.0 if params is None else accuracy(spec, params, test_pool)

    individual = ordered_map(lambda member: score(train_alone(member, by_id[member].train)), cohort.members, workers)
    first = cohort.members[0]
    central = score(train_alone(first, Dataset.concat([by_id[member].train for member in cohort.members])))
    federated = score(federated_averaging(cohort, cfg, spec, by_id, w0, workers).params)

    rows = [
        BaselineRow(
            client_id=member,
            individual=individual_accuracy,
            central=central,
            federated=federated,
            learning_rate=cfg.learning_rate_for(member),
        )
        for member, individual_accuracy in zip(cohort.members, individual)
    ]
    return BaselineReport(cohort_id=cohort.cohort_id, rows=rows)
