"""Subtitle extraction toolkit: SRT I/O, OCR-based timing refinement, NED/SubER
metrics, the spatiotemporal token adapter, and corpus filters."""

from .srt import SrtDocument, SubtitleCue, Timestamp, emit_srt, frame_to_timestamp, parse_srt

__all__ = ["SrtDocument", "SubtitleCue", "Timestamp", "emit_srt", "frame_to_timestamp",
           "parse_srt"]
__version__ = "0.1.0"
