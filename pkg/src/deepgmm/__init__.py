"""Unsupervised clustering by joint optimization of a stacked denoising
autoencoder and a diagonal-covariance Gaussian mixture, with an explicit
center-separation term in the training objective."""

from .autoencoder import (CorruptionSpec, DecoderStack, EncoderStack,
                          LayerParams, TrainConfig, backprop_autoencoder,
                          corrupt, decode, encode, finetune,
                          pretrain_layerwise, reconstruction_loss)
from .data_io import (Checkpoint, Dataset, emit_embedding_csv, load_csv,
                      load_idx, load_checkpoint, save_checkpoint, synth_gmm)
from .gmm import (GmmParams, EmFitResult, em_fit, kmeans_init,
                  log_component_density, log_likelihood, log_mixture_density,
                  random_init, responsibilities)
from .joint import (JointConfig, NumericalDivergence, assign,
                    grad_log_sigmas, grad_means, grad_representation,
                    grad_weight_logits, joint_train_step, neighbor_sets,
                    objective, separability, train)
from .metrics import (Partition, ch_score, clustering_accuracy,
                      confusion_matrix, nmi)
from .numerics import SeededRng, log_sum_exp, matmul, pca_project_2d

__version__ = "0.1.0"

__all__ = [
    "CorruptionSpec", "DecoderStack", "EncoderStack", "LayerParams",
    "TrainConfig", "backprop_autoencoder", "corrupt", "decode", "encode",
    "finetune", "pretrain_layerwise", "reconstruction_loss",
    "Checkpoint", "Dataset", "emit_embedding_csv", "load_csv", "load_idx",
    "load_checkpoint", "save_checkpoint", "synth_gmm",
    "GmmParams", "EmFitResult", "em_fit", "kmeans_init",
    "log_component_density", "log_likelihood", "log_mixture_density",
    "random_init", "responsibilities",
    "JointConfig", "NumericalDivergence", "assign", "grad_log_sigmas",
    "grad_means", "grad_representation", "grad_weight_logits",
    "joint_train_step", "neighbor_sets", "objective", "separability", "train",
    "Partition", "ch_score", "clustering_accuracy", "confusion_matrix", "nmi",
    "SeededRng", "log_sum_exp", "matmul", "pca_project_2d",
]
