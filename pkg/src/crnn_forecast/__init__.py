"""Correlated time series forecasting with convolutional-recurrent networks."""

__version__ = "0.1.0"

from .tensor import NumericError, ShapeError, Tensor  # noqa: F401
from .models import (  # noqa: F401
    AECRNN,
    CRNN,
    ConfigError,
    Forecast,
    LossBreakdown,
    ModelConfig,
    Reconstruction,
    build_model,
    forecast_loss,
    joint_loss,
    load_checkpoint,
    model_from_checkpoint,
    save_checkpoint,
)
from .data import (  # noqa: F401
    CorrelatedSet,
    CsvLayout,
    DataError,
    Normalizer,
    SyntheticConfig,
    TimeSeries,
    WindowSample,
    generate_synthetic,
    ingest_csv,
    make_uncorrelated,
    segment,
    split,
)
from .baselines import (  # noqa: F401
    RecurrentBaseline,
    ewma_forecast,
    train_recurrent_baseline,
    yesterday_forecast,
)
from .training import TrainConfig, TrainReport, gradcheck, train  # noqa: F401
from .evaluation import (  # noqa: F401
    ExperimentSpec,
    MetricReport,
    mape,
    rmse,
    robustness_experiment,
    run_experiment,
)
