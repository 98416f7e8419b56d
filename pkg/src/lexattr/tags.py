"""The eight-tag label inventory for criminal-case attribute extraction."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InputError

#: The seven attribute tags, in label-index order.
ATTRIBUTE_TAGS = (
    "ExpertWittest",
    "Wittest",
    "Assault",
    "Riot",
    "Homicide",
    "Imprisonment",
    "Evidence",
)

#: Label for tokens outside every annotated span.
NO_TAG = "NoTag"

#: Column order used by the stats and accuracy reports. Differs from the
#: label-index order above.
REPORT_ORDER = (
    "ExpertWittest",
    "Wittest",
    "Homicide",
    "Assault",
    "Imprisonment",
    "Riot",
    "Evidence",
)

# Accepted spellings of the first attribute tag, lowercased; canonical names
# themselves resolve case-insensitively.
_ALIASES = {
    "expwittest": "ExpertWittest",
    "expwittet": "ExpertWittest",
}


@dataclass(frozen=True)
class TagSet:
    """Ordered, fixed vocabulary of the 7 attribute tags plus NoTag."""

    names: tuple[str, ...] = ATTRIBUTE_TAGS + (NO_TAG,)

    def __post_init__(self) -> None:
        if len(self.names) != 8:
            raise ValueError(f"tag set must have exactly 8 tags, got {len(self.names)}")
        if len(set(self.names)) != len(self.names):
            raise ValueError("tag names must be unique")
        if self.names.count(NO_TAG) != 1:
            raise ValueError(f"tag set must contain {NO_TAG!r} exactly once")

    def __len__(self) -> int:
        return len(self.names)

    @property
    def no_tag_index(self) -> int:
        return self.names.index(NO_TAG)

    @property
    def attribute_names(self) -> tuple[str, ...]:
        """The 7 tags other than NoTag, in label-index order."""
        return tuple(n for n in self.names if n != NO_TAG)

    def index(self, name: str) -> int:
        """Index of an exact canonical tag name."""
        try:
            return self.names.index(name)
        except ValueError:
            raise InputError(f"unknown tag name: {name!r}") from None

    def name(self, index: int) -> str:
        return self.names[index]

    def resolve(self, name: str) -> int:
        """Resolve a tag name, accepting documented aliases case-insensitively."""
        if name in self.names:
            return self.names.index(name)
        lowered = name.lower()
        for i, canonical in enumerate(self.names):
            if canonical.lower() == lowered:
                return i
        alias = _ALIASES.get(lowered)
        if alias is not None and alias in self.names:
            return self.names.index(alias)
        raise InputError(f"unknown tag name: {name!r}")


#: The canonical tag set used throughout the toolkit.
DEFAULT_TAGS = TagSet()
