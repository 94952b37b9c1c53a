"""Factor training loops for EP, SEP and ADF.

Import from specific modules:
    from sparse_ep.inference.state import TrainConfig, ModelState, TraceLog
    from sparse_ep.inference.methods import MethodFactory
    from sparse_ep.inference.trainer import fit, batch_pass, minibatch_step
    from sparse_ep.inference.events import EventType, TrainingEventStream
"""
