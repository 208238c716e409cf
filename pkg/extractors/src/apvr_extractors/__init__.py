"""Adapters that turn videos into the retrieval engine's artifact files.

Frame/text embedding extraction, open-vocabulary detection, and
cross-attention capture, emitting the engine's documented APVRFB1 and
APVRAT1 formats. Model backends are pluggable; the defaults run fully
offline and deterministically.
"""

from .encoders import HashedImageEncoder, HashedTextEncoder, make_encoders
from .errors import DecodeError, JobError, ModelUnavailable, UnsupportedHost
from .formats import write_attention_file, write_bundle_file
from .grounding import ColorBlobGrounder, make_grounder
from .hosts import SyntheticAttentionHost, make_host
from .jobs import ExtractionJob, capture_attention, extract_bundle
from .query_io import QueryInfo, load_query
from .video import iter_frames

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "JobError",
    "DecodeError",
    "ModelUnavailable",
    "UnsupportedHost",
    "ExtractionJob",
    "extract_bundle",
    "capture_attention",
    "QueryInfo",
    "load_query",
    "iter_frames",
    "HashedImageEncoder",
    "HashedTextEncoder",
    "make_encoders",
    "ColorBlobGrounder",
    "make_grounder",
    "SyntheticAttentionHost",
    "make_host",
    "write_bundle_file",
    "write_attention_file",
]
