"""Recursive gradient optimization for continual learning, on a from-scratch MLP."""

from .bench import (
    AccuracyMatrix,
    RunReport,
    TaskStream,
    acc_bwt,
    evaluate,
    gen_permuted_tasks,
    gen_split_tasks,
    gen_synth_gaussian_tasks,
    run_arm,
    run_continual,
    run_stl,
)
from .network import NetworkSpec, backward, forward, init_network
from .optimizer import (
    ProjectionState,
    TrainConfig,
    consolidate_task,
    init_projections,
    modify_grads,
    rls_update,
    sgd_step,
)

__version__ = "0.1.0"
