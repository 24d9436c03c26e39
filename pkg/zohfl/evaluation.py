"""
Accuracy of softmax models on a labelled shard.
"""

from typing import Union

import numpy as np

from .exceptions import EmptyDataError, InvalidDimensionError
from .models import DatasetShard, SoftmaxModel, Vec


def predict(weights: Vec, features: np.ndarray, num_classes: int) -> np.ndarray:
    """argmax_c u'x_c per row; ties go to the lowest class index"""
    scores = features @ np.asarray(weights, dtype=np.float64).reshape(num_classes, -1).T
    return np.argmax(scores, axis=1)


def evaluate_accuracy(model: Union[SoftmaxModel, Vec], test: DatasetShard) -> float:
    """Fraction of test samples whose predicted class equals the label"""
    if test.size == 0:
        raise EmptyDataError("cannot evaluate accuracy on an empty test set")
    weights = model.weights if isinstance(model, SoftmaxModel) else np.asarray(model, dtype=np.float64)
    if weights.size != test.num_classes * test.feature_dim:
        raise InvalidDimensionError(
            f"model has {weights.size} weights, test set needs {test.num_classes} x {test.feature_dim}"
        )
    hits = predict(weights, test.features, test.num_classes) == test.labels
    return float(np.mean(hits))
