"""Wasserstein GAN with a jointly trained binary mask generator."""

from .inference import generate_mask, inpaint_learned, learned_inpainter
from .losses import density, discriminator_loss, generator_loss, l1_per_sample, mask_loss
from .networks import (
    Discriminator,
    Generator,
    MaskGenerator,
    NetConfig,
    apply_inpainting_constraint,
    build_discriminator,
    build_generator,
    build_mask_generator,
)
from .training import (
    Checkpoint,
    EpochLog,
    TrainConfig,
    TrainingDivergedError,
    Triad,
    train,
    train_inpainting_random_masks,
    train_joint,
    validation_loss,
    write_loss_csv,
)

__all__ = [
    "Checkpoint",
    "Discriminator",
    "EpochLog",
    "Generator",
    "MaskGenerator",
    "NetConfig",
    "TrainConfig",
    "TrainingDivergedError",
    "Triad",
    "apply_inpainting_constraint",
    "build_discriminator",
    "build_generator",
    "build_mask_generator",
    "density",
    "discriminator_loss",
    "generate_mask",
    "generator_loss",
    "inpaint_learned",
    "l1_per_sample",
    "learned_inpainter",
    "mask_loss",
    "train",
    "train_inpainting_random_masks",
    "train_joint",
    "validation_loss",
    "write_loss_csv",
]
