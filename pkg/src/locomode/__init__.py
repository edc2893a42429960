"""Locomotion mode recognition from wearable IMU trials.

Windowed LDA and LSTM classifiers, subject-independent and subject-dependent
evaluation, and a synthetic terrain-circuit cohort generator.
"""

from .corpus import (
    CHANNELS,
    SAMPLE_RATE_HZ,
    WINDOW_FRAMES,
    WINDOW_STRIDE,
    Dataset,
    LabeledWindow,
    Normalizer,
    ReportCategory,
    SignalSource,
    SubLabel,
    TaskCategory,
    Trial,
    apply_normalizer,
    fit_normalizer,
    load_dataset,
    load_trial,
    save_trial,
    segment_windows,
    select_source,
    window_count,
)
from .errors import LocomodeError
from .evaluation import (
    ConfusionMatrix,
    EvalConfig,
    ParadigmReport,
    build_confusion,
    f1_breakdown,
    run_paradigm,
)
from .features import extract_features, extract_features_batch
from .lda import LdaModel, lda_fit, lda_predict, lda_scores
from .lstm import LstmModel, TrainConfig, lstm_backward, lstm_forward, lstm_init, lstm_predict, lstm_train
from .synthgen import SynthConfig, make_subject, synth_cohort, synth_dataset, synth_trial

__version__ = "0.1.0"
