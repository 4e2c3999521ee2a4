"""Split conformal prediction, the prejudicial-trick wrapper, and tools to
audit coverage, length and interval stability."""
from ._kernels import BACKEND
from .conformal import (CalibratedPredictor, Level, VCPMethod, calibrate, empirical_quantile,
                        quantile_rank, vcp_predict, vcp_predict_batch, vcp_threshold)
from .core import (Dataset, Interval, IntervalBatch, LabelSet, LabelSetBatch, Null, RngStream,
                   Sample, mix, read_csv, split_dataset, write_csv)
from .errors import (ConfigError, CPAuditError, DataError, DomainError, GridTooCoarse,
                     InvalidKeepProbability, NumericError)
from .metrics import AuditReport, evaluate, interval_stability, stability_closed_form
from .models import (LinearMean, LinearQuantile, Logistic, TwoPointScale, fit_linear_mean,
                     fit_linear_quantile, fit_logistic, inject_bias, predict)
from .pt import PTConfig, PTMethod, PTPredictor, adjusted_alpha, pt_predict, pt_predict_batch
from .scores import ABS_RESIDUAL, CQR, SOFTMAX, ScoreFn
from .synth import SynthSpec, generate
from .theory import LengthCurve, build_length_curve, std_normal_cdf, std_normal_inv_cdf

__version__ = "0.1.0"
