"""Token-pruning inference engine for Vision Transformer encoders."""

__version__ = "0.1.0"

from .attention import AttentionMatrix, TokenSequence, head_average, mhsa_forward
from .errors import (CollnError, ConfigError, ImageFormatError,
                     VerificationError, WeightFormatError)
from .flops import FlopsReport, block_macs, schedule_macs
from .metrics import (ImportanceScores, Metric, cls_scores, colln_scores,
                      random_scores, renyi_column_entropy)
from .model import ForwardTrace, forward, make_tiny_bundle, patchify
from .pruning import (KeepCount, KeepRate, PruneConfig, PruneCount,
                      PruneDecision, keep_count, prune_colln,
                      prune_correcting, topk_indices)
from .specs import ModelSpec, preset
from .weights_io import ModelBundle, load_bundle, write_bundle
