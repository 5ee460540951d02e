"""Semi-supervised IoT traffic classification with fuzzy C-means and fuzzy rule interpolation."""

from fuzzyflow.core import (
    BinaryLabel,
    ConnectionRecord,
    DataError,
    FeatureVector,
    FlowKey,
    InternalError,
    ParameterError,
    SchemaError,
    TrafficClass,
    class_code,
    class_name,
    to_binary,
)

__version__ = "0.1.0"

__all__ = [
    "BinaryLabel",
    "ConnectionRecord",
    "DataError",
    "FeatureVector",
    "FlowKey",
    "InternalError",
    "ParameterError",
    "SchemaError",
    "TrafficClass",
    "class_code",
    "class_name",
    "to_binary",
]
