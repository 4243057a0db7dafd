from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import GradCheckResult, grad_check, tiny_batch
from .loss import angular_proto_loss, angular_proto_loss_grad
from .mel import MelConfig, log_mel, mel_filterbank
from .network import EmbedderDims, EmbedderParams, embed, embed_many, forward, loss_and_grad
from .training import TrainingConfig, featurize, train

__all__ = [
    "CheckpointError",
    "EmbedderDims",
    "EmbedderParams",
    "GradCheckResult",
    "MelConfig",
    "TrainingConfig",
    "angular_proto_loss",
    "angular_proto_loss_grad",
    "embed",
    "embed_many",
    "featurize",
    "forward",
    "grad_check",
    "load_checkpoint",
    "log_mel",
    "loss_and_grad",
    "mel_filterbank",
    "save_checkpoint",
    "tiny_batch",
    "train",
]
