"""auscult: heart and lung auscultation sound classification.

Band-pass/resample preprocessing, MFCC features, a hybrid CNN+GRU
11-class model with hand-built gradients and Adam training, plus a CLI
and an HTTP inference service.
"""

__version__ = "0.1.0"

from .features import CLASSES, HEART_CLASSES, LUNG_CLASSES, mfcc  # noqa: F401
from .preprocess import AudioClip, PreprocessConfig, preprocess  # noqa: F401
