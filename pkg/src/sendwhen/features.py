"""Feature schema: named slots, interaction materialization, send transitions.

A FeatureSchema is the shared contract between the event pipeline (which
builds observation vectors), the trainers (which name coefficients), and
the scoring engine (which must know how a hypothetical send changes the
vector).  Slots are ordered; a dense vector is only meaningful together
with its schema.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import SchemaError

__all__ = ["SlotSpec", "FeatureSchema", "SLOT_KINDS"]

# base:        a raw profile or activity feature, read from the event payload
# intercept:   constant 1.0
# badge:       the badge count after the event (drives the send transition)
# w0:          derived from hours since the state start; reset to 0 on send
# interaction: product of exactly two non-interaction parent slots
SLOT_KINDS = ("intercept", "base", "badge", "w0", "interaction")


@dataclass(frozen=True)
class SlotSpec:
    """One named position in the feature vector."""

    name: str
    kind: str = "base"
    parents: tuple[str, ...] = ()
    online: bool = False

    def __post_init__(self) -> None:
        if not self.name or not isinstance(self.name, str):
            raise SchemaError("slot name must be a non-empty string")
        if self.kind not in SLOT_KINDS:
            raise SchemaError(
                f"slot {self.name!r}: unknown kind {self.kind!r}, "
                f"expected one of {SLOT_KINDS}"
            )
        if self.kind == "interaction":
            if len(self.parents) != 2:
                raise SchemaError(
                    f"interaction slot {self.name!r} needs exactly 2 parents, "
                    f"got {len(self.parents)}"
                )
        elif self.parents:
            raise SchemaError(
                f"slot {self.name!r} of kind {self.kind!r} cannot have parents"
            )


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered, validated collection of slots with derived-slot semantics."""

    slots: tuple[SlotSpec, ...]
    _index: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        if not self.slots:
            raise SchemaError("schema must have at least one slot")
        names = [s.name for s in self.slots]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"duplicate slot names: {dupes}")
        index = {s.name: i for i, s in enumerate(self.slots)}
        object.__setattr__(self, "_index", index)

        n_intercept = sum(1 for s in self.slots if s.kind == "intercept")
        if n_intercept != 1:
            raise SchemaError(
                f"schema must have exactly one intercept slot, found {n_intercept}"
            )
        if sum(1 for s in self.slots if s.kind == "badge") > 1:
            raise SchemaError("schema may have at most one badge slot")
        for s in self.slots:
            if s.kind != "interaction":
                continue
            for pname in s.parents:
                if pname not in index:
                    raise SchemaError(
                        f"interaction slot {s.name!r}: unknown parent {pname!r}"
                    )
                parent = self.slots[index[pname]]
                if parent.kind == "interaction":
                    raise SchemaError(
                        f"interaction slot {s.name!r}: parent {pname!r} is "
                        "itself an interaction (only pairwise products of "
                        "plain slots are supported)"
                    )

    # -- lookups ---------------------------------------------------------

    def __len__(self) -> int:
        return len(self.slots)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.slots)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise SchemaError(f"no slot named {name!r}") from None

    def slot(self, name: str) -> SlotSpec:
        return self.slots[self.index(name)]

    def indices_of_kind(self, kind: str) -> tuple[int, ...]:
        return tuple(i for i, s in enumerate(self.slots) if s.kind == kind)

    @property
    def schema_id(self) -> str:
        """Content hash of the slot layout; stable across processes."""
        payload = json.dumps(
            [[s.name, s.kind, list(s.parents), s.online] for s in self.slots],
            separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    # -- vector construction ----------------------------------------------

    def materialize(
        self,
        raw: Mapping[str, float],
        *,
        badge_count: float = 0.0,
        w0_hours: float = 0.0,
    ) -> np.ndarray:
        """Build a dense vector from raw named features plus state inputs.

        Interaction slots are computed from their parents, so callers never
        supply them.  Missing base features and non-finite values raise.
        """
        x = np.empty(len(self.slots), dtype=float)
        for i, s in enumerate(self.slots):
            if s.kind == "intercept":
                x[i] = 1.0
            elif s.kind == "badge":
                x[i] = float(badge_count)
            elif s.kind == "w0":
                x[i] = float(w0_hours)
            elif s.kind == "base":
                if s.name not in raw:
                    raise SchemaError(f"missing base feature {s.name!r}")
                x[i] = float(raw[s.name])
            else:  # interaction, filled in the second pass
                x[i] = 0.0
        for i, s in enumerate(self.slots):
            if s.kind == "interaction":
                a, b = (self._index[p] for p in s.parents)
                x[i] = x[a] * x[b]
        self.validate_vector(x)
        return x

    def validate_vector(self, x: Sequence[float] | np.ndarray) -> np.ndarray:
        arr = np.asarray(x, dtype=float)
        if arr.ndim != 1 or arr.shape[0] != len(self.slots):
            raise SchemaError(
                f"vector length {arr.shape} does not match schema "
                f"({len(self.slots)} slots)"
            )
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise SchemaError(
                f"non-finite value in slot {self.slots[bad].name!r}"
            )
        icpt = self.indices_of_kind("intercept")[0]
        if arr[icpt] != 1.0:
            raise SchemaError(
                f"intercept slot {self.slots[icpt].name!r} must be 1.0, "
                f"got {arr[icpt]}"
            )
        return arr

    # -- the send transition ----------------------------------------------

    def transition(self, x0: Sequence[float] | np.ndarray) -> np.ndarray:
        """Feature vector after a hypothetical send right now.

        The badge count goes up by one, slots derived from time-in-state
        drop to zero (a send starts a new state), and every interaction is
        recomputed from its updated parents.  Everything else is carried
        over unchanged.
        """
        x1 = self.validate_vector(x0).copy()
        for i in self.indices_of_kind("badge"):
            x1[i] += 1.0
        for i in self.indices_of_kind("w0"):
            x1[i] = 0.0
        for i, s in enumerate(self.slots):
            if s.kind == "interaction":
                a, b = (self._index[p] for p in s.parents)
                x1[i] = x1[a] * x1[b]
        return x1

    # -- offline / online partition ----------------------------------------

    def online_mask(self) -> np.ndarray:
        """Boolean mask of slots that must be evaluated at decision time.

        An interaction inherits online-ness from its parents: if either
        parent can change in real time, the product can too.
        """
        mask = np.zeros(len(self.slots), dtype=bool)
        for i, s in enumerate(self.slots):
            if s.kind == "interaction":
                mask[i] = any(
                    self.slots[self._index[p]].online for p in s.parents
                )
            else:
                mask[i] = s.online
        return mask

    # -- persistence --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema_id": self.schema_id,
            "slots": [
                {
                    "name": s.name,
                    "kind": s.kind,
                    "parents": list(s.parents),
                    "online": s.online,
                }
                for s in self.slots
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeatureSchema":
        try:
            raw_slots = d["slots"]
        except (KeyError, TypeError):
            raise SchemaError("schema document must have a 'slots' list") from None
        slots = []
        for entry in raw_slots:
            try:
                slots.append(
                    SlotSpec(
                        name=entry["name"],
                        kind=entry.get("kind", "base"),
                        parents=tuple(entry.get("parents", ())),
                        online=bool(entry.get("online", False)),
                    )
                )
            except (KeyError, TypeError) as exc:
                raise SchemaError(f"malformed slot entry {entry!r}") from exc
        schema = cls(tuple(slots))
        declared = d.get("schema_id")
        if declared is not None and declared != schema.schema_id:
            raise SchemaError(
                f"schema_id mismatch: document says {declared!r}, "
                f"content hashes to {schema.schema_id!r}"
            )
        return schema

    @classmethod
    def build(
        cls,
        base: Iterable[str] = (),
        *,
        badge: str | None = "badge_count",
        w0: str | None = None,
        interactions: Iterable[tuple[str, str]] = (),
        online: Iterable[str] = (),
        intercept: str = "intercept",
    ) -> "FeatureSchema":
        """Convenience constructor for the common layout.

        Slot order: intercept, base features (input order), badge, w0,
        then interactions named "a*b".
        """
        online_set = set(online)
        slots = [SlotSpec(intercept, "intercept")]
        slots += [SlotSpec(n, "base", online=n in online_set) for n in base]
        if badge is not None:
            slots.append(SlotSpec(badge, "badge", online=badge in online_set))
        if w0 is not None:
            slots.append(SlotSpec(w0, "w0", online=w0 in online_set))
        for a, b in interactions:
            slots.append(SlotSpec(f"{a}*{b}", "interaction", parents=(a, b)))
        return cls(tuple(slots))
