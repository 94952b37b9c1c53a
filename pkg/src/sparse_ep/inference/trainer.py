"""Training loops: batch passes, minibatch steps and the full fit."""

import logging
import time

import numpy as np

from ..data.dataset import DataError, Dataset, init_inducing, minibatches
from ..hypergrad.gradient import grad_hyper
from ..hypergrad.optimizer import AdamState, opt_step
from ..model.fitc import evaluate
from ..model.gaussian import moments
from ..model.types import FloatArray, HyperParams, NumericalError
from .events import EventType, TrainingEventStream
from .methods import MethodFactory, UpdateStats
from .state import KernelCache, ModelState, TraceLog, TraceRecord, TrainConfig, memory_footprint

logger = logging.getLogger("sparse-ep.inference")


def init_hypers(config: TrainConfig, data: Dataset) -> HyperParams:
    """Initial kernel parameters and inducing inputs drawn from the training inputs."""
    lengthscale = config.initial_lengthscale or float(np.sqrt(data.d))
    return HyperParams(
        log_lengthscales=np.full(data.d, np.log(lengthscale)),
        log_amplitude=float(np.log(config.initial_amplitude)),
        inducing_points=init_inducing(data.X, config.m, config.seed),
        jitter=config.jitter,
    )


def init_state(
    config: TrainConfig, data: Dataset, hypers: HyperParams | None = None
) -> ModelState:
    """Prior-initialized state: uniform EP sites, zero SEP factor, ADF q = prior."""
    if hypers is None:
        hypers = init_hypers(config, data)
    method = MethodFactory.create(config.method, config.repair_halvings)
    sites, theta = method.init_factors(data.n, hypers.m)
    cache = KernelCache.build(
        hypers, data.X, config.cache_upsilon, config.max_jitter_factor, config.jitter_growth
    )
    return ModelState(
        method=config.method,
        n=data.n,
        hypers=hypers,
        q_nat=cache.prior.copy(),
        sites=sites,
        theta=theta,
        opt=AdamState(
            learning_rate=config.learning_rate,
            beta1=config.beta1,
            beta2=config.beta2,
            eps=config.adam_eps,
        ),
        cache_upsilon=config.cache_upsilon,
        cache=cache,
    )


def batch_pass(
    state: ModelState, data: Dataset, config: TrainConfig | None = None
) -> UpdateStats:
    """Update every factor from one snapshot of q, then rebuild q once."""
    config = config or TrainConfig(method=state.method)
    method = MethodFactory.create(state.method, config.repair_halvings)
    cache = state.kernel_cache(data.X, config)
    index = np.arange(data.n)
    return method.update(state, cache, index, data.y, config.effective_damping, full_pass=True)


def hyper_step(
    state: ModelState,
    batch: FloatArray | None,
    data: Dataset,
    config: TrainConfig | None = None,
    events: TrainingEventStream | None = None,
) -> bool:
    """One ascent step on the hyperparameters, then q is rebuilt under the new kernel.

    Emits a ``hyper_step`` event with the gradient norm and the optimizer step
    index, or a ``rejected`` event.

    Returns False when the step was rejected (non-finite update, or an
    inducing Gram that cannot be factorized).
    """
    config = config or TrainConfig(method=state.method)
    old_cache = state.kernel_cache(data.X, config)
    grad = grad_hyper(state, batch, data)
    grad_norm = float(np.linalg.norm(grad.values)) if grad.is_finite else float("nan")
    state.opt, hypers = opt_step(state.opt, grad.values, state.hypers)

    def report(event_type: EventType, summary: str) -> None:
        if events is not None:
            events.emit(
                event_type,
                state.opt.t,
                summary,
                grad_norm=grad_norm,
                batch_size=float(grad.batch_size),
            )

    if hypers is state.hypers:
        report(EventType.REJECTED, "non-finite update")
        return False

    try:
        new_cache = KernelCache.build(
            hypers, data.X, state.cache_upsilon, config.max_jitter_factor, config.jitter_growth
        )
    except NumericalError as e:
        logger.warning(f"Rejected hyperparameter step {state.opt.t}: {e}")
        report(EventType.REJECTED, str(e))
        return False

    state.hypers = hypers
    state.cache = new_cache
    method = MethodFactory.create(state.method, config.repair_halvings)
    repairs = method.rebuild(state, old_cache, new_cache)
    if repairs:
        logger.warning(f"Posterior repaired after hyperparameter step ({repairs} halvings)")
    report(EventType.HYPER_STEP, f"|g|={grad_norm:.3g}")
    return True


def minibatch_step(
    state: ModelState,
    batch: FloatArray,
    data: Dataset,
    config: TrainConfig | None = None,
    events: TrainingEventStream | None = None,
) -> UpdateStats:
    """Update the factors of ``batch``, then take one hyperparameter step if learning."""
    config = config or TrainConfig(method=state.method, minibatch_size=max(len(batch), 1))
    batch = np.asarray(batch, dtype=np.intp)
    method = MethodFactory.create(state.method, config.repair_halvings)
    cache = state.kernel_cache(data.X, config)
    stats = method.update(
        state, cache, batch, data.y[batch], config.effective_damping, full_pass=False
    )
    if config.learn_hypers and len(batch):
        hyper_step(state, batch, data, config, events)
    return stats


def _checkpoint(
    state: ModelState, test: Dataset | None, started: float, trace: TraceLog
) -> TraceRecord:
    nll = err = None
    if test is not None and test.n > 0:
        gramres = None
        if state.cache is not None and state.cache.hypers is state.hypers:
            gramres = state.cache.gramres
        nll, err = evaluate(moments(state.q_nat), test.X, test.y, state.hypers, gramres)
    record = TraceRecord(
        step=state.step,
        wall_time_s=time.perf_counter() - started,
        test_nll=nll,
        test_err=err,
        passes=state.passes,
        factor_params=memory_footprint(state).factor_params,
    )
    trace.append(record)
    if nll is not None:
        logger.info(f"step {state.step}: test NLL {nll:.4f}, error {err:.4f}")
    return record


def fit(
    data: Dataset,
    config: TrainConfig,
    test: Dataset | None = None,
    events: TrainingEventStream | None = None,
    hypers: HyperParams | None = None,
) -> tuple[ModelState, TraceLog]:
    """Train from the prior for the configured budget.

    Batch mode runs ``config.iterations`` passes; minibatch mode runs
    ``config.epochs`` shuffled epochs. A trace checkpoint is taken at step
    0, after every pass (batch) or every ``config.trace_every`` minibatches,
    and at the end.
    """
    if data.n > 0 and not data.has_both_classes():
        raise DataError("Training data must contain both classes")
    if config.minibatch_size is not None and config.minibatch_size > max(data.n, 1):
        raise ValueError(
            f"Minibatch size {config.minibatch_size} exceeds the training set size {data.n}"
        )

    started = time.perf_counter()
    state = init_state(config, data, hypers)
    trace = TraceLog()

    def emit(event_type: EventType, summary: str = "", record: TraceRecord | None = None) -> None:
        if events is None:
            return
        if record is None:
            events.emit(event_type, state.step, summary)
        else:
            events.emit(
                event_type,
                state.step,
                summary,
                test_nll=record.test_nll,
                test_err=record.test_err,
                wall_time_s=record.wall_time_s,
                passes=float(record.passes),
            )

    logger.info(
        f"Training {config.method.value}: n={data.n}, m={state.m}, "
        f"{'batch' if config.is_batch else f'minibatch {config.minibatch_size}'}"
    )
    emit(EventType.START, f"{config.method.value} n={data.n} m={state.m}")
    emit(EventType.CHECKPOINT, "initial", _checkpoint(state, test, started, trace))

    if config.is_batch:
        for _ in range(config.iterations):
            stats = batch_pass(state, data, config)
            if config.learn_hypers and data.n:
                hyper_step(state, None, data, config, events)
            state.passes += 1
            state.step += 1
            if stats.repairs:
                emit(EventType.REPAIR, f"{stats.repairs} halvings at pass {state.passes}")
            record = _checkpoint(state, test, started, trace)
            emit(EventType.CHECKPOINT, f"pass {state.passes}", record)
    else:
        assert config.minibatch_size is not None
        rng = np.random.default_rng(config.seed)
        for _ in range(config.epochs):
            for batch in minibatches(data.n, config.minibatch_size, rng):
                minibatch_step(state, batch, data, config, events)
                state.step += 1
                if state.step % config.trace_every == 0:
                    record = _checkpoint(state, test, started, trace)
                    emit(EventType.CHECKPOINT, f"step {state.step}", record)
            state.passes += 1
        last = trace.last
        if last is None or last.step != state.step:
            emit(EventType.CHECKPOINT, "final", _checkpoint(state, test, started, trace))

    emit(EventType.COMPLETE, f"{state.step} steps")
    logger.info(f"Finished {config.method.value} after {state.step} steps")
    return state, trace
