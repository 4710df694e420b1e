"""Post-hoc modality probe: how well can a fresh discriminator tell the modalities apart?

Embeddings of every event and colour image (under all nine rotations and
both flips) are split in half per modality; a newly initialised
two-layer discriminator is fitted on one half and scored on the other.
Lower held-out accuracy means more modality-invariant embeddings.

A probe trained to convergence separates the two modalities perfectly on the
toy set whether or not adversarial training was used, so comparisons use a
fixed, short training budget (:data:`PROBE_STEPS`) averaged over several
probe seeds (:func:`mean_probe_accuracy`).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .checkpoint import Checkpoint
from .losses import loss_discriminator_from_logits
from .nets import discriminator_logit, embed, init_discriminator
from .optim import Adam
from .training import ROTATION_ANGLES, Pool, apply_augmentation


PROBE_STEPS = 100
PROBE_SEEDS = 5


@dataclass
class ProbeResult:
    train_accuracy: float
    test_accuracy: float


def augmented_embeddings(ckpt: Checkpoint, images: np.ndarray, modality: str) -> np.ndarray:
    views = [
        apply_augmentation(img, a, f).astype(np.float32)
        for img in images
        for a in ROTATION_ANGLES
        for f in (False, True)
    ]
    return embed(ckpt.network, ckpt.params, np.stack(views), modality)


def modality_probe(ckpt: Checkpoint, pool: Pool, seed: int = 0, steps: int = PROBE_STEPS, lr: float = 0.002) -> ProbeResult:
    f_e = augmented_embeddings(ckpt, pool.event_images, "event").astype(np.float64)
    f_r = augmented_embeddings(ckpt, pool.color_images, "color").astype(np.float64)
    rng = np.random.default_rng(seed)
    pe, pr = rng.permutation(len(f_e)), rng.permutation(len(f_r))
    tr_e, te_e = f_e[pe[: len(pe) // 2]], f_e[pe[len(pe) // 2 :]]
    tr_r, te_r = f_r[pr[: len(pr) // 2]], f_r[pr[len(pr) // 2 :]]

    # standardise on the training half so embedding scale does not favour either model
    both = np.concatenate([tr_e, tr_r])
    mu, sd = both.mean(axis=0), both.std(axis=0) + 1e-8
    norm = lambda a: (a - mu) / sd  # noqa: E731

    net = ckpt.network
    params = init_discriminator(net.embed_dim, net.disc_hidden, int(rng.integers(2**31)), np.float64)
    d_params = params.group("D")
    opt = Adam(lr=lr)
    x_e, x_r = ag.Tensor(norm(tr_e)), ag.Tensor(norm(tr_r))
    for _ in range(steps):
        loss = loss_discriminator_from_logits(discriminator_logit(params, x_e), discriminator_logit(params, x_r))
        opt.step(d_params, ag.backprop(loss, d_params))

    def accuracy(e, r):
        # event embeddings are labelled 1, colour 0
        ze = discriminator_logit(params, norm(e)).data
        zr = discriminator_logit(params, norm(r)).data
        return float((np.sum(ze > 0) + np.sum(zr <= 0)) / (len(ze) + len(zr)))

    return ProbeResult(accuracy(tr_e, tr_r), accuracy(te_e, te_r))


def mean_probe_accuracy(ckpt: Checkpoint, pool: Pool, seeds: int = PROBE_SEEDS, steps: int = PROBE_STEPS) -> float:
    """Held-out probe accuracy averaged over probe seeds 0 .. seeds-1."""
    return float(np.mean([modality_probe(ckpt, pool, seed=s, steps=steps).test_accuracy for s in range(seeds)]))
