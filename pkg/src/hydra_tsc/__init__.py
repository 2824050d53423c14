"""Competing convolutional kernels for time series classification."""

__version__ = "0.1.0"

from .data_io import (  # noqa: E402
    ResamplePlan,
    TimeSeriesDataset,
    load_dataset,
    load_split,
    stratified_resample,
)
from .kernel_bank import HydraConfig, KernelBank, compute_dilations, generate_bank  # noqa: E402
from .transform import FeatureMatrix, transform  # noqa: E402
