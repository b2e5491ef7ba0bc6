"""Power rating of photovoltaic modules from electroluminescence measurements.

The toolkit covers the full path from a raw multi-module measurement to a
per-module power estimate and a per-cell loss attribution: 16-bit image
handling (`imagecore`), module detection (`detect`), perspective
rectification (`rectify`), the feature/SVR baseline (`regress`), power and
loss-map arithmetic (`power`), and the evaluation protocol (`evaluation`).
"""

from .detect import (
    BinaryMask,
    BoundingBox,
    DetectionParams,
    connected_components,
    detect_modules,
    filter_regions,
    otsu_threshold,
    propose_regions,
    synth_scene,
)
from .evaluation import (
    FoldAssignment,
    ManifestEntry,
    MetricsReport,
    iou,
    load_manifest,
    mae,
    match_detections,
    pearson_r,
    pr_curve,
    random_search,
    rmse_paper,
    save_manifest,
    stratified_group_folds,
    train_val_split,
    tune_detection,
)
from .imagecore import (
    GlobalStats,
    Image16,
    NormalizedImage,
    compute_global_stats,
    downscale,
    load_pgm16,
    normalize_global,
    save_pgm16,
)
from .power import (
    AreaModel,
    CellGrid,
    LossMap,
    PowerEstimate,
    cell_losses,
    debias_maps,
    fit_area_model,
    inactive_fraction,
    load_loss_map,
    predict_area_model,
    save_loss_map,
    synth_loss_map,
    synth_module,
    to_watts,
    total_loss_from_map,
)
from .rectify import (
    Homography,
    ModuleGeometry,
    ModuleImage,
    Quad,
    estimate_corners,
    homography_dlt,
    rectify_module,
    warp,
)
from .regress import (
    FeatureNormalizer,
    SvrModel,
    apply_normalizer,
    extract_mean_std,
    fit_normalizer,
    qp_oracle,
    rbf_kernel,
    svr_fit,
    svr_predict,
)

__version__ = "0.1.0"
