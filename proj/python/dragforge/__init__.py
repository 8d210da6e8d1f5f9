"""Python bindings for the dragforge C++ core."""

from ._dragforge import (
    ArgumentError,
    Dataset,
    DragSample,
    Error,
    FlowConfig,
    GridSpec,
    InfeasibleConstraintError,
    LinearModel,
    MlpModel,
    ShapeParams,
    boundary,
    containment,
    evaluate_shape,
    filter_outliers,
    fit_linear,
    flood_fill,
    frontal_height,
    generate,
    load_dataset,
    loss_score,
    predict_linear,
    rasterize,
    sample_grid,
    save_dataset,
    step_size_schedule,
)

__all__ = [name for name in dir() if not name.startswith("_")]
