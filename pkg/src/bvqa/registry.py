"""Feature layout registry and the FeatureVector value type.

Every feature family registers a layout (ordered names + family tag) once at
import time; derived layouts (concatenations, avg/std pooled variants) are
registered lazily the first time they are built. The registry is the single
source of truth for vector lengths and column names in persisted CSV/JSON.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import LayoutError


@dataclass(frozen=True)
class FeatureLayout:
    layout_id: str
    names: tuple[str, ...]
    families: tuple[str, ...]

    def __post_init__(self):
        if len(self.names) != len(self.families):
            raise LayoutError(f"{self.layout_id}: names/families length mismatch")
        if len(set(self.names)) != len(self.names):
            raise LayoutError(f"{self.layout_id}: duplicate feature names")

    def __len__(self) -> int:
        return len(self.names)


class FeatureRegistry:
    def __init__(self):
        self._layouts: dict[str, FeatureLayout] = {}

    def register(self, layout_id: str, names, families=None) -> FeatureLayout:
        names = tuple(names)
        if families is None:
            families = (layout_id,) * len(names)
        layout = FeatureLayout(layout_id, names, tuple(families))
        existing = self._layouts.get(layout_id)
        if existing is not None:
            if existing != layout:
                raise LayoutError(f"layout {layout_id} already registered with a different shape")
            return existing
        self._layouts[layout_id] = layout
        return layout

    def get(self, layout_id: str) -> FeatureLayout:
        try:
            return self._layouts[layout_id]
        except KeyError:
            raise LayoutError(f"unknown layout {layout_id!r}") from None

    def __contains__(self, layout_id: str) -> bool:
        return layout_id in self._layouts

    def concat(self, layout_ids) -> FeatureLayout:
        """Layout for the concatenation of several layouts (id joined with '+')."""
        parts = [self.get(lid) for lid in layout_ids]
        joint_id = "+".join(lid for lid in layout_ids)
        if joint_id in self._layouts:
            return self._layouts[joint_id]
        names = tuple(n for p in parts for n in p.names)
        families = tuple(f for p in parts for f in p.families)
        return self.register(joint_id, names, families)

    def pooled(self, layout_id: str) -> FeatureLayout:
        """Layout for within-chunk [avg block, std block] pooling of a base layout."""
        pooled_id = f"{layout_id}#pooled"
        if pooled_id in self._layouts:
            return self._layouts[pooled_id]
        base = self.get(layout_id)
        names = tuple(f"avg_{n}" for n in base.names) + tuple(f"std_{n}" for n in base.names)
        families = base.families + base.families
        return self.register(pooled_id, names, families)

    def to_json(self) -> str:
        rows = []
        for layout in self._layouts.values():
            for idx, (name, family) in enumerate(zip(layout.names, layout.families)):
                rows.append(
                    {"layout_id": layout.layout_id, "index": idx, "name": name, "family": family}
                )
        return json.dumps(rows, indent=1)


REGISTRY = FeatureRegistry()


@dataclass(frozen=True)
class FeatureVector:
    """Ordered, named, finite feature values tied to a registered layout."""

    layout_id: str
    values: np.ndarray

    def __post_init__(self):
        layout = REGISTRY.get(self.layout_id)
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.values.ndim != 1 or len(self.values) != len(layout):
            raise LayoutError(
                f"layout {self.layout_id} expects {len(layout)} values, got {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            bad = [layout.names[i] for i in np.flatnonzero(~np.isfinite(self.values))[:5]]
            raise LayoutError(f"non-finite feature values in {self.layout_id}: {bad}")

    @property
    def names(self) -> tuple[str, ...]:
        return REGISTRY.get(self.layout_id).names

    def __len__(self) -> int:
        return len(self.values)


def concat_vectors(vectors: list[FeatureVector]) -> FeatureVector:
    layout = REGISTRY.concat([v.layout_id for v in vectors])
    return FeatureVector(layout.layout_id, np.concatenate([v.values for v in vectors]))
