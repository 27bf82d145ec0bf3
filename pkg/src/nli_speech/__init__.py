"""Native-language identification from speech.

Pipeline: WAV ingestion and segmentation, MFCC features, class balancing,
ANN/CNN/LSTM training with early stopping, and an experiment grid runner.
"""

__version__ = "0.1.0"
