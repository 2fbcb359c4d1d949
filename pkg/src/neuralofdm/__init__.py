"""Link-level OFDM simulator with classical and neural transceivers."""

from .channel import (
    ChannelRealization,
    TdlProfile,
    apply_channel,
    freq_csi,
    generate_tdl,
    ici_fraction,
)
from .classical_rx import (
    iedd_receive,
    lmmse_estimate,
    ls_estimate,
    make_covariance,
    mmse_equalize_demap,
)
from .errors import (
    ConfigError,
    FramingError,
    NeuralOfdmError,
    NumericError,
    UsageError,
    WeightsFormatError,
)
from .fec import LdpcCode, ldpc_decode, ldpc_encode, make_code, segment_payload
from .grid import (
    Constellation,
    PilotPattern,
    ResourceGrid,
    make_pilot_pattern,
    map_bits_to_grid,
    qam_constellation,
)
from .harness import (
    ExperimentConfig,
    SweepResult,
    SweepRow,
    goodput,
    load_config,
    required_snr,
    run_ablation,
    run_sweep,
    symmetry_metric,
    symmetry_noise_floor,
    tx_symbol_cloud,
    write_csv,
)
from .neural_mod import ModulatorNet, collapse_to_gs, neural_modulate, sip_modulate
from .neural_rx import ReceiverNet, neural_receive
from .persist import WeightsBundle, load_weights, save_weights
from .trainer import TrainConfig, TrainHistory, train_end_to_end
from .waveform import ofdm_demodulate, ofdm_modulate, papr_db

__version__ = "0.1.0"

__all__ = [
    "ChannelRealization", "ConfigError", "Constellation", "ExperimentConfig",
    "FramingError", "LdpcCode", "ModulatorNet", "NeuralOfdmError",
    "NumericError", "PilotPattern", "ReceiverNet", "ResourceGrid",
    "SweepResult", "SweepRow", "TdlProfile", "TrainConfig", "TrainHistory",
    "UsageError", "WeightsBundle", "WeightsFormatError", "apply_channel",
    "collapse_to_gs", "freq_csi", "generate_tdl", "goodput", "ici_fraction",
    "iedd_receive", "ldpc_decode", "ldpc_encode", "lmmse_estimate",
    "load_config", "load_weights", "ls_estimate", "make_code",
    "make_covariance", "make_pilot_pattern", "map_bits_to_grid",
    "mmse_equalize_demap", "neural_modulate", "neural_receive",
    "ofdm_demodulate", "ofdm_modulate", "papr_db", "qam_constellation",
    "required_snr", "run_ablation", "run_sweep", "save_weights",
    "segment_payload", "sip_modulate", "symmetry_metric",
    "symmetry_noise_floor", "train_end_to_end", "tx_symbol_cloud",
    "write_csv", "__version__",
]
