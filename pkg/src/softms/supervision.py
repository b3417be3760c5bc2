"""Weak supervision: user patches pinning ownerships to pure patterns.

A patch assigned to channel j fixes p_i = delta_ij (Dirichlet) on every pixel
of the rectangle.  Patches must lie inside the grid and be pairwise disjoint.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

_SCHEMA = None


def supervision_schema() -> dict:
    global _SCHEMA
    if _SCHEMA is None:
        with resources.files("softms.schemas").joinpath("supervision.schema.json").open() as fh:
            _SCHEMA = json.load(fh)
    return _SCHEMA


class SupervisionError(ValueError):
    pass


@dataclass(frozen=True)
class Patch:
    channel: int  # 1-indexed
    x: int
    y: int
    w: int
    h: int

    @property
    def area(self) -> int:
        return self.w * self.h


@dataclass
class Supervision:
    patches: list

    @classmethod
    def from_dict(cls, doc: dict) -> "Supervision":
        import jsonschema

        try:
            jsonschema.validate(doc, supervision_schema())
        except jsonschema.ValidationError as exc:
            raise SupervisionError(f"invalid supervision document: {exc.message}") from exc
        return cls([Patch(**p) for p in doc["patches"]])

    @classmethod
    def load(cls, path) -> "Supervision":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {"patches": [vars(p).copy() for p in self.patches]}

    def validate(self, width: int, height: int, k: int) -> dict:
        """Check geometry; returns per-channel patch areas on success."""
        cover = np.zeros((height, width), dtype=np.uint8)
        areas = {i: 0 for i in range(1, k + 1)}
        for p in self.patches:
            if not 1 <= p.channel <= k:
                raise SupervisionError(
                    f"patch channel {p.channel} outside 1..{k}"
                )
            if p.x < 0 or p.y < 0 or p.x + p.w > width or p.y + p.h > height:
                raise SupervisionError("patch out of bounds")
            cover[p.y:p.y + p.h, p.x:p.x + p.w] += 1
            areas[p.channel] += p.area
        if np.any(cover > 1):
            raise SupervisionError("patches not disjoint")
        return {"areas": areas}

    def masks(self, k: int, shape) -> tuple:
        """Dirichlet data for a (K, H, W) stack.

        Returns (fixed, values): a boolean pixel mask of supervised pixels and
        the stack of pinned ownership values (delta_ij on each patch).
        """
        h, w = shape
        fixed = np.zeros((h, w), dtype=bool)
        values = np.zeros((k, h, w), dtype=float)
        for p in self.patches:
            sl = (slice(p.y, p.y + p.h), slice(p.x, p.x + p.w))
            fixed[sl] = True
            values[(slice(None),) + sl] = 0.0
            values[(p.channel - 1,) + sl] = 1.0
        return fixed, values


def apply_supervision(P: np.ndarray, supervision) -> np.ndarray:
    """Overwrite supervised pixels with their exact Dirichlet values."""
    if supervision is None or not supervision.patches:
        return P
    fixed, values = supervision.masks(P.shape[0], P.shape[1:])
    P = P.copy()
    P[:, fixed] = values[:, fixed]
    return P
