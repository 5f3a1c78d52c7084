"""Event-driven spiking neural network engine for unsupervised motion perception.

Synthetic event-camera streams feed a hierarchy of adaptive LIF layers
whose kernels self-organize through an inherently stable STDP rule under
winner-take-all competition; converged multisynaptic kernels are decoded
into optical-flow vectors.
"""

from .errors import (ConfigError, EventFormatError, FlowExtractionError,
                     SpikeflowError, WeightsFormatError)
from .events import (Bar, CameraModel, Checkerboard, Event, EventStream,
                     PlanarMotion, apply_flips, augment, downsample_half,
                     flow_observables, generate_events, read_events,
                     write_events)
from .flow import (KernelFlow, ResponseTable, colorize, colorize_grid,
                   colorize_winner_map, flows_csv, kernel_flow, layer_flows,
                   response_curve, select_slots)
from .layers import (Kernel, LayerConfig, LayerKind, WtaPolicy, event_frames,
                     export_kernels, shared_kernel_update, wta_resolve)
from .network import (InferenceResult, LayerRecord, Network, NetworkConfig,
                      PostsynapticTrace, TrainResult, TrainSchedule, build,
                      format_config, infer, load_weights, parse_config,
                      read_config, read_weights, save_weights, stdp_compare,
                      train_layer, weight_histogram_rows)
from .neuron import (DelayBuffer, NeuronGridState, NeuronParams,
                     SynapseTensor, fire_and_reset, integrate_membrane,
                     update_traces)
from .plasticity import (RuleKind, StdpParams, comparison_update,
                         convergence_metric, equilibrium_weight,
                         normalize_traces, stdp_update)

__version__ = "0.1.0"
