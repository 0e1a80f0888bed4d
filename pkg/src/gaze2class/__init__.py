"""gaze2class: gaze rendering, Haar/FFT image transforms, and a small CNN classifier.

The package follows the sklearn estimator idiom: GazeImageRenderer,
ImageTransformer, and ImageResizer are stateless transformers, and
ConvNetClassifier is a fit/predict classifier, so the whole pipeline
composes with sklearn.pipeline.Pipeline. The functional API underneath
(render_heatmap, haar_decompose, fft_spectrum, train, evaluate, ...) is
exported alongside.
"""

from .classifier import (
    ConvNetClassifier,
    ModelParams,
    Prediction,
    TrainConfig,
    TrainingCurve,
    backward,
    cross_entropy,
    forward,
    init_params,
    load_params,
    predict,
    save_params,
    sgd_step,
    train,
)
from .errors import ConfigError, DataError, GazeError, TrainingError
from .evaluation import (
    CellResult,
    EvalReport,
    confusion_matrix,
    evaluate,
    run_matrix,
)
from .gaze_data import (
    CohortSpec,
    Diagnosis,
    FixationPoint,
    GazeRecording,
    LabeledDataset,
    LabeledSample,
    SplitSpec,
    aoi_centers,
    generate_cohort,
    load_recordings,
    save_recordings,
    split_dataset,
    split_indices,
)
from .imageio import read_pgm, read_raw, write_pgm, write_raw
from .render import (
    GazeImageRenderer,
    Representation,
    RenderSpec,
    gaussian_kernel,
    normalize_unit,
    render,
    render_fixation_map,
    render_heatmap,
    render_scanpath,
)
from .seeding import derive_seed
from .transforms import (
    ImageResizer,
    ImageTransformer,
    TransformKind,
    WaveletDecomposition,
    apply_transform,
    dft2,
    fft_magnitude,
    fft_spectrum,
    haar_decompose,
    haar_reconstruct,
    resize_bilinear,
    wavelet_to_image,
)

__version__ = "0.1.0"

__all__ = [
    "CellResult",
    "CohortSpec",
    "ConfigError",
    "ConvNetClassifier",
    "DataError",
    "Diagnosis",
    "EvalReport",
    "FixationPoint",
    "GazeError",
    "GazeImageRenderer",
    "GazeRecording",
    "ImageResizer",
    "ImageTransformer",
    "LabeledDataset",
    "LabeledSample",
    "ModelParams",
    "Prediction",
    "RenderSpec",
    "Representation",
    "SplitSpec",
    "TrainConfig",
    "TrainingCurve",
    "TrainingError",
    "TransformKind",
    "WaveletDecomposition",
    "aoi_centers",
    "apply_transform",
    "backward",
    "confusion_matrix",
    "cross_entropy",
    "derive_seed",
    "dft2",
    "evaluate",
    "fft_magnitude",
    "fft_spectrum",
    "forward",
    "gaussian_kernel",
    "generate_cohort",
    "haar_decompose",
    "haar_reconstruct",
    "init_params",
    "load_params",
    "load_recordings",
    "normalize_unit",
    "predict",
    "read_pgm",
    "read_raw",
    "render",
    "render_fixation_map",
    "render_heatmap",
    "render_scanpath",
    "resize_bilinear",
    "run_matrix",
    "save_params",
    "save_recordings",
    "sgd_step",
    "split_dataset",
    "split_indices",
    "train",
    "wavelet_to_image",
    "write_pgm",
    "write_raw",
]
