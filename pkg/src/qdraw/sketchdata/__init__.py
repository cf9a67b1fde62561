from .bezier import (
    BezierFit,
    BezierSegment,
    bezier_eval,
    chord_params,
    fit_bezier,
    fit_bezier_breaks,
    fit_residual,
    max_residual,
    point_curve_distance,
)
from .dataset import (
    ROW_WIDTH,
    TRAIN,
    VAL,
    EncodedDataset,
    encode_dataset,
    encode_drawing,
    load_dataset,
    normalize_strokes,
    save_dataset,
    stratified_split,
)
from .quickdraw import (
    CATEGORIES,
    CLASS_INDEX,
    DrawingError,
    FetchError,
    RawDrawing,
    SketchSequence,
    UnknownCategoryError,
    fetch_category,
    parse_drawing,
    read_drawings,
    to_sequence,
)
from .synthetic import synthetic_drawings
