"""Arabic hate-speech classification experiment pipeline.

Five-class tweet classification (non-hate, general hate, religious, racial,
sexism) with deterministic text normalization, a pluggable encoder contract,
hard/soft voting ensembles, pseudo-label data augmentation, stratified
ten-fold evaluation and reproducible run directories.
"""

__version__ = "0.1.0"

from .labels import HATE_LABELS, LABEL_ORDER, Label

__all__ = ["Label", "LABEL_ORDER", "HATE_LABELS", "__version__"]
