"""End-to-end run on real handwritten-digit images (the 8x8 set bundled
with scikit-learn), as an offline stand-in for the large-image benchmark:
the joint phase must not degrade the autoencoder+mixture initialization and
the pipeline must hold its accuracy on genuinely clustered image data."""
import numpy as np
import pytest

from deepgmm import (CorruptionSpec, Dataset, JointConfig, Partition,
                     SeededRng, TrainConfig, encode, synth_gmm)
from deepgmm import autoencoder as ae
from deepgmm.gmm import em_fit, kmeans_init
from deepgmm.joint import assign, train
from deepgmm.metrics import clustering_accuracy, nmi

sklearn_datasets = pytest.importorskip("sklearn.datasets")


@pytest.mark.slow
def test_digit_images_end_to_end():
    raw = sklearn_datasets.load_digits()
    data = Dataset(raw.data / 16.0, raw.target.astype(np.int64),
                   name="digits")

    rng = SeededRng(2002)
    enc, dec, _ = ae.pretrain_layerwise(data, [64, 128, 10],
                                        CorruptionSpec(0.2),
                                        TrainConfig(0.01, 20, 128), rng)
    enc, dec, _ = ae.finetune(enc, dec, data, TrainConfig(0.01, 20, 128), rng)
    reps = encode(enc, data.samples)
    params = em_fit(reps, 10, kmeans_init(reps, 10, SeededRng(2003))).params

    truth = Partition.from_labels(data.labels)
    acc_init = clustering_accuracy(Partition(assign(enc, params, data), 10),
                                   truth)
    cfg = JointConfig(eta=0.01, learning_rate=0.002, lr_step_factor=0.1,
                      lr_step_every=15, batch_size=256, epochs=20, seed=2004)
    enc2, params2, history = train(enc, params, data, cfg)
    labels = assign(enc2, params2, data)
    acc_joint = clustering_accuracy(Partition(labels, 10), truth)

    assert history[-1]["mean_objective"] > history[0]["mean_objective"]
    assert acc_joint >= acc_init
    assert acc_joint >= 0.70
    assert nmi(Partition(labels, 10), truth) >= 0.65
