"""Segmentation and detection of cosmic objects in FITS images.

Stages, in pipeline order:

- :mod:`cosmicseg.fits_io`      FITS primary-HDU reader/writer, PGM export
- :mod:`cosmicseg.preprocess`   log transform, erosion, Gaussian smoothing
- :mod:`cosmicseg.segmentation` isodata and local midrange thresholding, components
- :mod:`cosmicseg.imgcore`      mask metrics (MSE, PSNR, error rate)
- :mod:`cosmicseg.bpnn`         backpropagation MLP with early stopping
- :mod:`cosmicseg.pipeline`     orchestration, region features, reports
"""

from .bpnn import (
    EvalReport,
    MlpNetwork,
    TrainConfig,
    backprop_step,
    evaluate,
    forward,
    init_network,
    train,
)
from .fits_io import FitsHeader, parse_fits, parse_pgm, write_fits, write_pgm
from .imgcore import MetricsReport, accuracy_from_error, compare_masks, histogram, mask_mse, psnr
from .pipeline import (
    DetectionReport,
    PipelineConfig,
    featurize,
    run_detect,
    run_segment,
    run_train,
)
from .preprocess import (
    GaussianKernel,
    StructuringElement,
    erode,
    gaussian_kernel,
    gaussian_smooth,
    log_transform,
)
from .segmentation import (
    Region,
    ThresholdTrace,
    apply_global_threshold,
    connected_components,
    initial_threshold,
    iterate_threshold,
    local_adaptive_threshold,
)

__version__ = "0.1.0"
