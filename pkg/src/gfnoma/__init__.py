"""Grant-free NOMA active-user-detection laboratory.

Synthesizes superimposed sparse-signature uplink signals, detects active
devices with greedy block-sparse baselines and a trained feedforward
classifier, estimates the activity level blindly, and reproduces the
analytical complexity comparison - all reproducible from a single seed.
"""

from .cs_baselines import BompConfig, RecoveryResult, bomp, ls_refit, mmse_refit, \
    oracle_exhaustive
from .complexity import FlopReport, flops_daud, flops_ls_bomp, flops_mmse_bomp, \
    table1_report, table1_rows
from .daud_net import (AdamState, NetworkParams, NetworkShape, TrainConfig,
                       adam_step, backward, batch_cross_entropy,
                       cross_entropy_loss, ensemble_predict, forward,
                       init_params, load_checkpoint, predict_probabilities,
                       save_checkpoint, select_support, train)
from .errors import (ConfigurationError, ContractViolationError,
                     DegenerateSystemWarning, ShapeMismatchError)
from .harness import (ExperimentConfig, ResultRow, ScenarioSpec, SweepSpec,
                      TrainSpec, bank_pipeline, build_scenario,
                      desk_scale_config, load_config, load_ensemble, run_sweep,
                      success_probability, train_pipeline)
from .rng import stream_rng
from .signal_model import (AudInstance, AudScenario, DeviceGeometry,
                           LdsCodebook, SampleBatch, SensingMatrix,
                           build_sensing_matrix, generate_channel,
                           generate_codebook, generate_dataset,
                           generate_dataset_arrays, generate_geometry,
                           mutual_coherence, read_dataset, real_split,
                           recombine, synthesize_batch, synthesize_received,
                           write_dataset)
from .sparsity_est import (ModelBank, SparsityEstimate, ThresholdCalibration,
                           calibrate_tau, estimate_sparsity, load_model_bank,
                           write_bank_manifest)

__version__ = "0.1.0"
