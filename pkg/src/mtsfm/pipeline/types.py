from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from ..geometry import Intrinsics, Pose


@dataclass
class ImageTriplet:
    """Frames (I-1, I0, I1), each (H, W, 3) in [0, 1].

    ``prev`` or ``next`` is None at sequence boundaries. ``poses`` holds the
    target-to-source transforms (T_0->-1, T_0->1) when known.
    """

    prev: Optional[np.ndarray]
    target: np.ndarray
    next: Optional[np.ndarray]
    depth: Optional[np.ndarray] = None
    intrinsics: Optional[Intrinsics] = None
    poses: Optional[Tuple[Pose, Pose]] = None
    name: str = ""

    def __post_init__(self):
        shape = self.target.shape
        if len(shape) != 3 or shape[2] != 3:
            raise ValueError(f"frames must be (H, W, 3), got {shape}")
        for f in (self.prev, self.next):
            if f is not None and f.shape != shape:
                raise ValueError("all frames must share one shape")
        if self.depth is not None and self.depth.shape != shape[:2]:
            raise ValueError("ground-truth depth must align with the target frame")

    @property
    def sources(self) -> list:
        return [f for f in (self.prev, self.next) if f is not None]

    def with_frames(self, prev, target, next_) -> "ImageTriplet":
        return replace(self, prev=prev, target=target, next=next_)
