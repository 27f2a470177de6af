"""Behavior trees as labeled hidden Markov models.

A tree with stochastic leaves compiles into a Markov model whose
transitions remember which leaf outcome they encode, which makes the
mapping invertible and the model's hidden-state structure analyzable:
how decodable the states are from emissions alone, how decoding and
refitting degrade as the model drifts, and how many such models exist.
"""

from .compiler import (
    DEFAULT_STATE_CAP,
    ConstraintReport,
    EdgeLabel,
    InconsistentLabelsError,
    LabeledHMM,
    ParallelBlock,
    StateCapError,
    StructureShape,
    apply_retry,
    check_constraints,
    compile_abt,
    count_bts,
    decompile,
    enumerate_structures,
    load_model,
    product_parallel,
    save_model,
)
from .divergence import (
    SyntheticEmissionSpec,
    default_n_symbols,
    divergence_table,
    entropy,
    js_divergence,
    jsd_all,
    kl_divergence,
    synth_emissions,
)
from .dsl import ParseError, parse, serialize
from .hmm import DiscreteHMM, ImpossibleSequenceError, load_hmm, save_hmm
from .simulate import (
    Dataset,
    MetricRow,
    PerturbationSpec,
    Run,
    SweepConfig,
    estimate_ps,
    perturb_hmm,
    randomize_hmm,
    read_dataset,
    read_metrics,
    rollout_dataset,
    rms_nonzero,
    run_sweep,
    sed,
    sweep_cells,
    with_synthetic_emissions,
    write_dataset,
    write_metrics,
)
from .tree import (
    FAILURE,
    SUCCESS,
    ABTDefinition,
    Leaf,
    LeafStats,
    Parallel,
    Retry,
    Selector,
    Sequence,
    TickLimitError,
    TickTrace,
    UnsupportedStructureError,
    ValidationReport,
    canonicalize,
    leaves_of,
    successor_map,
    tick,
    validate_abt,
)

__version__ = "0.1.0"

__all__ = [
    "ABTDefinition",
    "ConstraintReport",
    "Dataset",
    "DEFAULT_STATE_CAP",
    "DiscreteHMM",
    "EdgeLabel",
    "FAILURE",
    "ImpossibleSequenceError",
    "InconsistentLabelsError",
    "LabeledHMM",
    "Leaf",
    "LeafStats",
    "MetricRow",
    "Parallel",
    "ParallelBlock",
    "ParseError",
    "PerturbationSpec",
    "Retry",
    "Run",
    "SUCCESS",
    "Selector",
    "Sequence",
    "StateCapError",
    "StructureShape",
    "SweepConfig",
    "SyntheticEmissionSpec",
    "TickLimitError",
    "TickTrace",
    "UnsupportedStructureError",
    "ValidationReport",
    "apply_retry",
    "canonicalize",
    "check_constraints",
    "compile_abt",
    "count_bts",
    "decompile",
    "default_n_symbols",
    "divergence_table",
    "entropy",
    "enumerate_structures",
    "estimate_ps",
    "js_divergence",
    "jsd_all",
    "kl_divergence",
    "leaves_of",
    "load_hmm",
    "load_model",
    "parse",
    "perturb_hmm",
    "product_parallel",
    "randomize_hmm",
    "read_dataset",
    "read_metrics",
    "rms_nonzero",
    "rollout_dataset",
    "run_sweep",
    "save_hmm",
    "save_model",
    "sed",
    "serialize",
    "successor_map",
    "sweep_cells",
    "synth_emissions",
    "tick",
    "validate_abt",
    "with_synthetic_emissions",
    "write_dataset",
    "write_metrics",
]
