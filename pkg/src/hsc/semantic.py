"""Semantic transmission levels: class dropping and priority tiers."""

from __future__ import annotations

import logging
import os
from collections.abc import Iterable
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, MissingLabelsError
from .pointcloud import PointCloud

log = logging.getLogger(__name__)

ROAD_GROUPS = ("road",)
STATIC_GROUPS = ("building", "vegetation", "traffic-sign")
DYNAMIC_GROUPS = ("vehicle", "person")
LEVELS = ("hsc0", "hsc1", "hsc2")


@dataclass(frozen=True)
class ClassEntry:
    id: int
    name: str
    group: str
    tier: int


@dataclass
class ClassConfig:
    entries: list[ClassEntry]
    default_tier: int

    def __post_init__(self) -> None:
        self.by_id = {e.id: e for e in self.entries}
        self.by_name = {e.name: e for e in self.entries}
        if len(self.by_id) != len(self.entries):
            raise ConfigError("duplicate class id in config")
        if len(self.by_name) != len(self.entries):
            raise ConfigError("duplicate class name in config")

    @property
    def groups(self) -> set[str]:
        return {e.group for e in self.entries}

    def group_ids(self, group: str) -> set[int]:
        if group not in self.groups:
            raise ConfigError(f"class group {group!r} not defined in config")
        return {e.id for e in self.entries if e.group == group}

    def resolve(self, token: str) -> set[int]:
        """Class ids for a class name, numeric id or group name."""
        if token in self.by_name:
            return {self.by_name[token].id}
        if token.isdigit():
            cid = int(token)
            if cid not in self.by_id:
                raise ConfigError(f"class id {cid} not defined in config")
            return {cid}
        if token in self.groups:
            return self.group_ids(token)
        raise ConfigError(f"unknown class name {token!r}")

    def name_of(self, cid: int) -> str:
        e = self.by_id.get(cid)
        return e.name if e else f"class{cid}"

    @classmethod
    def parse(cls, text: str) -> ClassConfig:
        entries = []
        default = None
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                if parts[0] == "class" and len(parts) == 5:
                    cid, tier = int(parts[1]), int(parts[4])
                    if not 0 <= cid <= 0xFFFF or tier < 0:
                        raise ValueError
                    entries.append(ClassEntry(cid, parts[2], parts[3], tier))
                elif parts[0] == "default" and len(parts) == 2:
                    default = int(parts[1])
                else:
                    raise ValueError
            except ValueError:
                raise ConfigError(f"line {lineno}: cannot parse {raw.strip()!r}") from None
        if not entries:
            raise ConfigError("class config defines no classes")
        if default is None:
            default = max(e.tier for e in entries)
        return cls(entries, default)

    @classmethod
    def load(cls, path: str | os.PathLike) -> ClassConfig:
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def default(cls) -> ClassConfig:
        text = resources.files("hsc.data").joinpath("semantic_kitti.cfg").read_text("utf-8")
        return cls.parse(text)


@dataclass(frozen=True)
class FilterProfile:
    name: str
    drop_classes: frozenset[int]
    tier_of: dict[int, int] = field(default_factory=dict)
    default_tier: int = 0

    def __post_init__(self) -> None:
        overlap = self.drop_classes & set(self.tier_of)
        if overlap:
            raise ConfigError(f"classes {sorted(overlap)} are both dropped and tiered")
        used = set(self.tier_of.values()) | {self.default_tier}
        if used != set(range(len(used))):
            raise ConfigError(f"tiers {sorted(used)} are not contiguous from 0")

    @property
    def n_tiers(self) -> int:
        return len(set(self.tier_of.values()) | {self.default_tier})


@dataclass
class FilterOutcome:
    kept: PointCloud
    removed_per_class: dict[int, int]

    @property
    def removed(self) -> int:
        return sum(self.removed_per_class.values())


def _compact(tier_of: dict[int, int], default: int) -> tuple[dict[int, int], int]:
    ranks = {t: i for i, t in enumerate(sorted(set(tier_of.values()) | {default}))}
    return {c: ranks[t] for c, t in tier_of.items()}, ranks[default]


def make_profile(name: str, drop: Iterable[int], config: ClassConfig,
                 tiers: dict[int, int] | None = None, default_tier: int | None = None,
                 pin_dynamic: bool = False) -> FilterProfile:
    """Profile dropping ``drop`` with tiers from ``config`` (overridable).

    Tier numbers are compacted to ``0..k-1``; ``pin_dynamic`` forces the
    vehicle and person groups to tier 0.
    """
    drop = frozenset(drop)
    tier_of = {e.id: e.tier for e in config.entries if e.id not in drop}
    tier_of.update({c: t for c, t in (tiers or {}).items() if c not in drop})
    for g in DYNAMIC_GROUPS if pin_dynamic else ():
        if g in config.groups:
            for cid in config.group_ids(g) - drop:
                tier_of[cid] = 0
    default = config.default_tier if default_tier is None else default_tier
    tier_of, default = _compact(tier_of, default)
    return FilterProfile(name, drop, tier_of, default)


def normalize_level(level: str | int) -> str:
    key = str(level).lower().replace("-", "").replace("_", "")
    if key.isdigit():
        key = "hsc" + key
    if key not in LEVELS:
        raise ConfigError(f"unknown transmission level {level!r}")
    return key


def builtin_profile(level: str | int, class_config: ClassConfig | None = None) -> FilterProfile:
    """HSC-0 keeps everything, HSC-1 drops road elements, HSC-2 also drops
    buildings, vegetation and traffic signs."""
    key = normalize_level(level)
    cfg = class_config or ClassConfig.default()
    for g in ROAD_GROUPS + STATIC_GROUPS + DYNAMIC_GROUPS:
        if g not in cfg.groups:
            raise ConfigError(f"class config lacks required group {g!r}")
    drop: set[int] = set()
    if key in ("hsc1", "hsc2"):
        for g in ROAD_GROUPS:
            drop |= cfg.group_ids(g)
    if key == "hsc2":
        for g in STATIC_GROUPS:
            drop |= cfg.group_ids(g)
    return make_profile(key.upper().replace("HSC", "HSC-"), drop, cfg, pin_dynamic=True)


def parse_profile(text: str, class_config: ClassConfig | None = None) -> FilterProfile:
    """Custom profile file::

        name  <text>
        drop  <class name | id | group> ...
        tier  <class name | id | group> <tier>
        default <tier>
    """
    cfg = class_config or ClassConfig.default()
    name = "custom"
    drop: set[int] = set()
    tiers: dict[int, int] = {}
    default = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kw, args = parts[0], parts[1:]
        if kw == "name" and args:
            name = " ".join(args)
        elif kw == "drop" and args:
            for tok in args:
                drop |= cfg.resolve(tok)
        elif kw == "tier" and len(args) == 2 and args[1].isdigit():
            for cid in cfg.resolve(args[0]):
                tiers[cid] = int(args[1])
        elif kw == "default" and len(args) == 1 and args[0].isdigit():
            default = int(args[0])
        else:
            raise ConfigError(f"profile line {lineno}: cannot parse {raw.strip()!r}")
    return make_profile(name, drop, cfg, tiers, default)


def load_profile(spec: str, class_config: ClassConfig | None = None) -> FilterProfile:
    """``hsc0``/``hsc1``/``hsc2`` or a path to a custom profile file."""
    try:
        return builtin_profile(spec, class_config)
    except ConfigError:
        path = Path(spec)
        if not path.exists():
            raise
    return parse_profile(path.read_text(encoding="utf-8"), class_config)


def filter(cloud: PointCloud, profile: FilterProfile) -> FilterOutcome:  # noqa: A001
    """Remove points whose class is in the profile's drop set (order kept)."""
    if not cloud.has_labels:
        if profile.drop_classes:
            raise MissingLabelsError(f"profile {profile.name} needs labels to drop classes")
        return FilterOutcome(cloud, {})
    cls = cloud.class_ids
    if not profile.drop_classes:
        return FilterOutcome(cloud, {})
    drop = np.isin(cls, np.fromiter(profile.drop_classes, dtype=np.int64))
    ids, counts = np.unique(cls[drop], return_counts=True)
    return FilterOutcome(cloud.select(~drop), {int(i): int(c) for i, c in zip(ids, counts)})


def tiers_for(cloud: PointCloud, profile: FilterProfile) -> np.ndarray:
    """Per-point tier; unknown class ids fall back to the default tier."""
    cls = cloud.class_ids.astype(np.int64)
    lut = np.full(0x10000, -1, dtype=np.int64)
    for cid, t in profile.tier_of.items():
        lut[cid] = t
    tiers = lut[cls]
    unknown = tiers < 0
    if unknown.any():
        log.warning("%d points with unmapped class ids assigned to tier %d",
                    int(unknown.sum()), profile.default_tier)
        tiers[unknown] = profile.default_tier
    return tiers


def partition_by_priority(cloud: PointCloud, profile: FilterProfile) -> list[tuple[int, PointCloud]]:
    """Kept points split by tier, highest priority (tier 0) first."""
    kept = filter(cloud, profile).kept
    if not kept.has_labels:
        return [(profile.default_tier, kept)] if len(kept) else []
    tiers = tiers_for(kept, profile)
    return [(int(t), kept.select(tiers == t)) for t in np.unique(tiers)]
