"""trisect: function-preserving layer splits for sharper low-bit quantization.

Rewrites a model graph so each quantizable layer becomes up to three
mathematically equivalent layers (k-means-clustered weights/biases, chunked
activations), then measures what the narrower per-layer value ranges buy the
quantizer at INT2/INT4/INT8.
"""

from trisect.cluster import ClusterAssignment, brute_force_kmeans_1d, kmeans_1d
from trisect.ir import Diagnostic, Graph, Layer, execute, infer_shapes, validate
from trisect.metrics import (
    EvalReport,
    ExperimentResult,
    LabeledDataset,
    accuracy,
    evaluate_accuracy,
    generate_outlier_mlp,
    generate_teacher_dataset,
    load_dataset,
    output_error,
    run_experiment,
    save_dataset,
)
from trisect.model_io import load_model, save_model
from trisect.quant import (
    CalibRange,
    QuantConfig,
    QuantParams,
    calibrate,
    compute_qparams,
    dequantize,
    fake_quant_execute,
    fake_quantize,
    quantize,
)
from trisect.tensor import (
    BACKEND,
    DType,
    Tensor,
    concat,
    conv2d,
    elementwise_add,
    gelu,
    int_range,
    matmul,
    relu,
    slice_,
)
from trisect.transform import (
    SplitPlan,
    TransformConfig,
    TransformReport,
    apply_transforms,
    fold_batchnorm,
    split_activation,
    split_conv,
    split_linear,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CalibRange",
    "ClusterAssignment",
    "Diagnostic",
    "DType",
    "EvalReport",
    "ExperimentResult",
    "Graph",
    "LabeledDataset",
    "Layer",
    "QuantConfig",
    "QuantParams",
    "SplitPlan",
    "Tensor",
    "TransformConfig",
    "TransformReport",
    "accuracy",
    "apply_transforms",
    "brute_force_kmeans_1d",
    "calibrate",
    "compute_qparams",
    "concat",
    "conv2d",
    "dequantize",
    "elementwise_add",
    "evaluate_accuracy",
    "execute",
    "fake_quant_execute",
    "fake_quantize",
    "fold_batchnorm",
    "gelu",
    "generate_outlier_mlp",
    "generate_teacher_dataset",
    "infer_shapes",
    "int_range",
    "kmeans_1d",
    "load_dataset",
    "load_model",
    "matmul",
    "output_error",
    "quantize",
    "relu",
    "run_experiment",
    "save_dataset",
    "save_model",
    "slice_",
    "split_activation",
    "split_conv",
    "split_linear",
    "validate",
]
