"""In-storage metagenomic classification: library, simulator and CLI."""

from .errors import ConfigError, DataError, IoError, IspMetaError
from .kmer import PackedKmer, TaxId, pack, unpack

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "IoError",
    "IspMetaError",
    "PackedKmer",
    "TaxId",
    "pack",
    "unpack",
]
