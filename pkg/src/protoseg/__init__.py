"""Prototype-based few-shot segmentation on dense feature maps.

Rich prototypes from masked K-means and superpixel-guided clustering,
cosine-similarity allocation against the query, and a parameter-free
recurrent enhancement of the probability map.
"""

from .clustering import (MaskedKMeans, Prototype, PrototypeSet, Source,
                         SuperpixelClustering, masked_kmeans, merge_prototypes,
                         superpixel_cluster)
from .enhancement import TwoChannelMap, enhance, msie, pseudo_mask, qsce, query_prototype
from .exceptions import EmptyEpisodeError, EmptyForegroundError, InvariantError
from .matching import (MatchResult, allocate, gather_guide_features, guide_map,
                       probability_map, similarity_stack)
from .pipeline import (Episode, FewShotSegmenter, ParameterFreeDecoder, PipelineConfig,
                       PipelineResult, decode, extract_prototypes, run_episode)

__version__ = "0.1.0"
