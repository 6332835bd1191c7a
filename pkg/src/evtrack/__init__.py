"""Event-camera detection toolkit.

Binary event streams (EVS1), dense frame representations, still-object
visibility auto-labeling, an explicit-memory permanence tracker, the
displacement/visibility consistency penalty, detection metrics, and a
synthetic scene generator that serves as the ground-truth oracle.
"""

from .autolabel import (
    AutoLabeler,
    AutoLabelParams,
    AutoLabelState,
    autolabel_sequence,
    bbox_mask,
    normalized_displacement,
    occupancy_rate,
)
from .consistency import (
    CenterSample,
    consistency_loss,
    consistency_loss_grad,
    g_norm,
    h_ratio,
)
from .events import (
    DEFAULT_DT_US,
    Event,
    EventStream,
    EventWindow,
    decode_event_file,
    encode_event_file,
    read_event_file,
    window_iter,
    write_event_file,
)
from .labels import LabeledBox, read_label_csv, write_label_csv
from .metrics import (
    EvalSummary,
    MatchReport,
    average_precision,
    fine_grained,
    iou,
    map_eval,
    split_still_moving,
)
from .representations import (
    event_histogram,
    event_volume,
    occupancy_mask,
    read_tensor_file,
    time_surface,
    timestamp_map,
    write_tensor_file,
)
from .synth import SceneSpec, generate, occlusion_scenario, parse_scene_file, render_head_maps
from .tracker import (
    Detection,
    HeadMaps,
    PermanenceTracker,
    Track,
    associate,
    decode_detections,
)

__version__ = "0.1.0"
