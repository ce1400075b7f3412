"""Product categorisation pipeline.

Strings are Min-Hash encoded, missing cells filled by KNN imputation, class
imbalance corrected with SMOTE plus random undersampling, and one classifier
is trained per target (boosted trees for ``top_category``, 1-NN for
``bottom_category`` and ``color``).
"""

from prodcat.errors import ModelFormatError, PipelineError, SchemaError

__version__ = "0.1.0"

__all__ = ["ModelFormatError", "PipelineError", "SchemaError", "__version__"]
