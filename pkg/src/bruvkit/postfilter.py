"""False-positive track filtering.

Tracks that are very short-lived or whose center barely moves are suspects
(drifting algae, fixed structure); suspects survive only on the strength of
their best detection.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .core import Track, track_max_center_displacement, track_span_s


@dataclass(frozen=True, slots=True)
class PostFilterConfig:
    """All comparisons are strict ("less than").

    ``min_displacement`` defaults to 0.0008 normalized units; that value is
    implausibly tiny for real footage (0.08 may be the intended one), so it
    is deliberately a plain config knob.
    """

    min_span_s: float = 1.0
    min_displacement: float = 0.0008
    keep_conf: float = 0.7

    def __post_init__(self) -> None:
        if self.min_span_s < 0 or self.min_displacement < 0:
            raise ValueError("span and displacement thresholds must be >= 0")
        if not 0.0 <= self.keep_conf <= 1.0:
            raise ValueError(f"keep_conf {self.keep_conf} outside [0, 1]")


def is_suspect(track: Track, cfg: PostFilterConfig) -> bool:
    return (
        track_span_s(track) < cfg.min_span_s
        or track_max_center_displacement(track) < cfg.min_displacement
    )


def select_suspects(tracks: Iterable[Track], cfg: PostFilterConfig) -> list[Track]:
    """Tracks that are too short or too static to trust."""
    return [t for t in tracks if is_suspect(t, cfg)]


def apply(tracks: Sequence[Track], cfg: PostFilterConfig) -> tuple[list[Track], list[Track]]:
    """Partition tracks into (kept, removed).

    Removed = suspects whose maximum detection confidence stays under
    ``keep_conf``. Surviving tracks pass through unmodified.
    """
    kept: list[Track] = []
    removed: list[Track] = []
    for t in tracks:
        if is_suspect(t, cfg) and t.max_confidence < cfg.keep_conf:
            removed.append(t)
        else:
            kept.append(t)
    return kept, removed
