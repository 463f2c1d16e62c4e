"""Block-backtranslation pipeline toolkit: schedules, parameter averaging, MBR reranking, metrics."""

__version__ = "0.1.0"

FORMAT_VERSIONS = {"manifest": 1, "nbest": 1, "snapshot": "PSNAP1"}
