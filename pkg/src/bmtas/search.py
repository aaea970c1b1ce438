"""Branching search: warm-up, alternating architecture/weight updates with
an annealed Gumbel-Softmax, argmax discretization, and from-scratch
retraining of the found structure.

Every iteration draws fresh routing noise, takes one weight step on the
large data split, one architecture step (task loss plus the weighted,
normalized expected cost) on the small split, and resets weight momentum
whenever the discretized architecture changes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from .errors import ConfigError, NumericError, SearchError
from .eval import Dataset
from .graph import BranchedStructure, SupergraphSpec, derive_groupings, structure_hash
from .nncore import (
    SGD,
    Adam,
    LossWeights,
    OperationParams,
    Tensor,
    backward,
    candidate_forward,
    collect_grads,
    head_forward,
    mixed_layer_forward,
    reset_grads,
    task_loss,
)
from .relax import TemperatureSchedule, discretize, gumbel_noise, schedule_tau
from .resloss import ArchitectureParams, expected_cost, expected_cost_grad
from .seeding import rng_stream


@dataclass(frozen=True)
class SearchConfig:
    """Hyperparameters of one search run.

    resource_weight is the multiplier on the normalized expected cost
    (1.0 = fully shared), so its useful range is independent of the cost
    table's units.
    """

    resource_weight: float = 0.0
    warmup_steps: int = 300
    search_steps: int = 300
    alpha_data_fraction: float = 0.2
    schedule: TemperatureSchedule | None = None
    theta_lr: float = 0.3
    theta_momentum: float = 0.9
    theta_weight_decay: float = 1e-4
    alpha_lr: float = 0.01
    alpha_betas: tuple[float, float] = (0.9, 0.999)
    alpha_weight_decay: float = 5e-5
    batch_size: int = 32
    retrain_steps: int = 400
    retrain_lr: float | None = None
    seed: int = 0
    omega: LossWeights | None = None

    def __post_init__(self):
        if self.resource_weight < 0:
            raise ConfigError("resource_weight must be non-negative")
        if not 0 < self.alpha_data_fraction < 1:
            raise ConfigError("alpha_data_fraction must lie strictly in (0, 1)")
        if min(self.warmup_steps, self.retrain_steps) < 0 or self.search_steps < 1:
            raise ConfigError("step counts out of range")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.schedule is None:
            steps = max(self.search_steps - 1, 1)
            object.__setattr__(self, "schedule", TemperatureSchedule(total_steps=steps))

    def weights_for(self, dataset: Dataset) -> LossWeights:
        if self.omega is None:
            return LossWeights.ones(dataset.num_tasks)
        if len(self.omega.omega) != dataset.num_tasks:
            raise ConfigError("omega length does not match the task count")
        return self.omega


@dataclass(frozen=True)
class TraceRow:
    """Post-update snapshot of one search iteration."""

    step: int
    tau: float
    task_losses: tuple[float, ...]
    resource_loss: float
    expected_cost: float
    structure_hash: str


@dataclass
class SearchResult:
    structure: BranchedStructure
    alpha_final: ArchitectureParams
    trace: list[TraceRow]
    retrained_metrics: dict[str, float] | None = None


def _batch(rng: np.random.Generator, pool: np.ndarray, size: int) -> np.ndarray:
    return pool[rng.choice(len(pool), size=min(size, len(pool)), replace=False)]


def warm_up(
    supergraph: SupergraphSpec,
    data: Dataset,
    steps: int,
    rng: np.random.Generator,
    lr: float = 0.3,
    momentum: float = 0.9,
    weight_decay: float = 1e-4,
    batch_size: int = 32,
) -> OperationParams:
    """Assign candidate j to task j for a few steps of plain SGD.

    Candidates start identical; warm-up is what differentiates them, giving
    the later search a meaningful candidate-task affinity to exploit.
    """
    if data.num_tasks != supergraph.num_tasks:
        raise ConfigError("dataset task count does not match the supergraph")
    params = OperationParams.init(supergraph, data.target_dims, rng)
    opt = SGD(params.parameters(), lr, momentum, weight_decay)
    all_rows = np.arange(data.inputs_train.shape[0])
    for _ in range(steps):
        idx = _batch(rng, all_rows, batch_size)
        x = Tensor(data.inputs_train[idx])
        reset_grads(params.parameters())
        for t in range(data.num_tasks):
            h = x
            for layer in range(1, supergraph.num_layers + 1):
                h = candidate_forward(params, layer, t, h)
            loss = task_loss(head_forward(params, t, h), data.targets_train[t][idx])
            backward(loss)
        opt.step()
    return params


def _soft_rows_tape(alpha_param: Tensor, task: int, noise: np.ndarray, tau: float):
    """Per-layer soft routing rows that keep the architecture on the tape."""
    rows = []
    for layer in range(noise.shape[0]):
        scores = (alpha_param[(task, layer)] + Tensor(noise[layer])) * (1.0 / tau)
        rows.append(scores.softmax1d())
    return rows


def _forward_mixed(params, supergraph, task, rows, x) -> Tensor:
    h = x
    for layer in range(1, supergraph.num_layers + 1):
        h = mixed_layer_forward(params, layer, rows[layer - 1], h)
    return head_forward(params, task, h)


def search(
    config: SearchConfig,
    supergraph: SupergraphSpec,
    data: Dataset,
    params: OperationParams | None = None,
) -> SearchResult:
    """Run the alternating optimization and return the discretized result.

    When params is omitted, warm-up runs first with this config's settings.
    Raises SearchError (with the partial trace attached) if training hits a
    non-finite value.
    """
    num_tasks = supergraph.num_tasks
    if data.num_tasks != num_tasks:
        raise ConfigError("dataset task count does not match the supergraph")
    omega = config.weights_for(data).omega

    if params is None:
        params = warm_up(
            supergraph,
            data,
            config.warmup_steps,
            rng_stream(config.seed, "warmup"),
            lr=config.theta_lr,
            momentum=config.theta_momentum,
            weight_decay=config.theta_weight_decay,
            batch_size=config.batch_size,
        )

    split_rng = rng_stream(config.seed, "search", "split")
    gumbel_rng = rng_stream(config.seed, "search", "gumbel")
    theta_batches = rng_stream(config.seed, "search", "theta-batches")
    alpha_batches = rng_stream(config.seed, "search", "alpha-batches")

    n_train = data.inputs_train.shape[0]
    perm = split_rng.permutation(n_train)
    n_alpha = min(max(1, round(config.alpha_data_fraction * n_train)), n_train - 1)
    alpha_rows, theta_rows = perm[:n_alpha], perm[n_alpha:]

    alpha_param = Tensor(np.zeros((num_tasks, supergraph.num_layers, num_tasks)))
    theta_opt = SGD(
        params.parameters(),
        config.theta_lr,
        config.theta_momentum,
        config.theta_weight_decay,
    )
    alpha_opt = Adam(
        [alpha_param],
        config.alpha_lr,
        config.alpha_betas,
        weight_decay=config.alpha_weight_decay,
    )
    shared_cost = supergraph.cost_table.fully_shared_cost
    prev_hash = structure_hash(
        derive_groupings(discretize(ArchitectureParams(alpha_param.data.copy())))
    )

    trace: list[TraceRow] = []
    for step in range(1, config.search_steps + 1):
        tau = schedule_tau(
            config.schedule, min(step - 1, config.schedule.total_steps)
        )
        noise = gumbel_noise(
            (num_tasks, supergraph.num_layers, num_tasks), gumbel_rng
        )
        try:
            # weight phase: routing is a constant sample
            z_const = softmax((alpha_param.data + noise) / tau, axis=2)
            idx = _batch(theta_batches, theta_rows, config.batch_size)
            x = Tensor(data.inputs_train[idx])
            reset_grads(params.parameters())
            losses = []
            for t in range(num_tasks):
                pred = _forward_mixed(params, supergraph, t, list(z_const[t]), x)
                loss = omega[t] * task_loss(pred, data.targets_train[t][idx])
                backward(loss)
                losses.append(float(loss.data) / omega[t])
            theta_opt.step()

            # architecture phase: same noise, routing on the tape
            idx = _batch(alpha_batches, alpha_rows, config.batch_size)
            x = Tensor(data.inputs_train[idx])
            reset_grads(params.parameters())
            reset_grads([alpha_param])
            for t in range(num_tasks):
                rows = _soft_rows_tape(alpha_param, t, noise[t], tau)
                pred = _forward_mixed(params, supergraph, t, rows, x)
                backward(omega[t] * task_loss(pred, data.targets_train[t][idx]))
            grad = collect_grads([alpha_param])[0]
            if config.resource_weight > 0:
                at = ArchitectureParams(alpha_param.data.copy())
                grad = grad + (config.resource_weight / shared_cost) * (
                    expected_cost_grad(at, supergraph)
                )
            alpha_opt.step([grad])
        except NumericError as exc:
            raise SearchError(f"non-finite value at step {step}: {exc}", trace) from exc

        alpha_now = ArchitectureParams(alpha_param.data.copy())
        structure = derive_groupings(discretize(alpha_now))
        digest = structure_hash(structure)
        if digest != prev_hash:
            theta_opt.reset_momentum()
            prev_hash = digest
        cost = expected_cost(alpha_now, supergraph)
        trace.append(
            TraceRow(
                step=step,
                tau=tau,
                task_losses=tuple(losses),
                resource_loss=cost / shared_cost,
                expected_cost=cost,
                structure_hash=digest,
            )
        )

    alpha_final = ArchitectureParams(alpha_param.data.copy())
    return SearchResult(
        structure=derive_groupings(discretize(alpha_final)),
        alpha_final=alpha_final,
        trace=trace,
    )


@dataclass
class RetrainedModel:
    """A branched network trained from scratch on a fixed structure."""

    structure: BranchedStructure
    task_names: tuple[str, ...]
    block_params: list[dict]
    heads: dict[str, tuple[np.ndarray, np.ndarray]]
    test_mse: dict[str, float]

    def encoder_features(self, task: int, inputs: np.ndarray) -> np.ndarray:
        """Final shared-trunk output for one task, plain numpy forward."""
        h = np.asarray(inputs, dtype=np.float64)
        for layer_blocks in self.block_params:
            for tasks, (w, b) in layer_blocks.items():
                if task in tasks:
                    h = np.tanh(h @ w + b)
                    break
            else:
                raise SearchError(f"task {task} missing from a layer", [])
        return h

    def predict(self, task: int, inputs: np.ndarray) -> np.ndarray:
        w, b = self.heads[self.task_names[task]]
        return self.encoder_features(task, inputs) @ w + b


def retrain_model(
    structure: BranchedStructure,
    supergraph: SupergraphSpec,
    data: Dataset,
    config: SearchConfig,
    seed: int,
) -> RetrainedModel:
    """Train the branched network from fresh weights.

    One op instance per (layer, block); a shared op's learning rate is
    divided by the number of tasks in its block. Initialization streams
    are keyed by the task names inside each block, which makes a fully
    branched run reproduce independently trained single-task networks
    exactly.
    """
    if structure.num_tasks != data.num_tasks:
        raise ConfigError("structure task count does not match the dataset")
    if structure.num_layers != supergraph.num_layers:
        raise ConfigError("structure depth does not match the supergraph")
    names = data.task_names
    omega = config.weights_for(data).omega
    lr = config.retrain_lr if config.retrain_lr is not None else config.theta_lr

    tensors, scales = [], []
    layer_blocks = []
    for layer in range(1, structure.num_layers + 1):
        in_dim, out_dim = supergraph.layer_dims[layer - 1]
        here = []
        for block in structure.groupings[layer - 1].blocks():
            stream = rng_stream(
                seed, "retrain-op", layer, *(names[t] for t in block)
            )
            w = Tensor(stream.normal(0.0, 1.0 / np.sqrt(in_dim), (in_dim, out_dim)))
            b = Tensor(np.zeros(out_dim))
            here.append((tuple(block), w, b))
            tensors += [w, b]
            scales += [1.0 / len(block)] * 2
        layer_blocks.append(here)

    enc_out = supergraph.layer_dims[-1][1]
    heads = {}
    for t, name in enumerate(names):
        stream = rng_stream(seed, "retrain-head", name)
        hw = Tensor(
            stream.normal(0.0, 1.0 / np.sqrt(enc_out), (enc_out, data.target_dims[t]))
        )
        hb = Tensor(np.zeros(data.target_dims[t]))
        heads[name] = (hw, hb)
        tensors += [hw, hb]
        scales += [1.0, 1.0]

    opt = SGD(
        tensors,
        lr,
        config.theta_momentum,
        config.theta_weight_decay,
        lr_scales=scales,
    )
    batches = rng_stream(seed, "retrain-batches")
    all_rows = np.arange(data.inputs_train.shape[0])
    for _ in range(config.retrain_steps):
        idx = _batch(batches, all_rows, config.batch_size)
        x = Tensor(data.inputs_train[idx])
        reset_grads(tensors)
        for t in range(data.num_tasks):
            h = x
            for here in layer_blocks:
                for tasks, w, b in here:
                    if t in tasks:
                        h = (h @ w + b).tanh()
                        break
            hw, hb = heads[names[t]]
            pred = h @ hw + hb
            backward(omega[t] * task_loss(pred, data.targets_train[t][idx]))
        opt.step()

    model = RetrainedModel(
        structure=structure,
        task_names=names,
        block_params=[
            {tasks: (w.data.copy(), b.data.copy()) for tasks, w, b in here}
            for here in layer_blocks
        ],
        heads={n: (hw.data.copy(), hb.data.copy()) for n, (hw, hb) in heads.items()},
        test_mse={},
    )
    for t, name in enumerate(names):
        err = model.predict(t, data.inputs_test) - data.targets_test[t]
        model.test_mse[name] = float((err * err).mean())
    return model


def retrain(
    structure: BranchedStructure,
    supergraph: SupergraphSpec,
    data: Dataset,
    config: SearchConfig,
    seed: int,
) -> dict[str, float]:
    """Per-task test MSE of the retrained structure."""
    return retrain_model(structure, supergraph, data, config, seed).test_mse
