"""Topic paths and timestamps, mapped onto encryption-pattern slots.

A resource is named by a slash-separated path ("buildingA/floor2/temp").
Grants may end in ``*`` (whole subtree) or use ``+`` for a single
don't-care component.  A reserved terminator component pins exact names
so that a grant for the exact path cannot read the subtree below it.

Time is a tree: two layouts are built in, the four-level
year/month/day/hour form whose labels read naturally ("2014/Oct/29/23"),
and a six-level form that splits days and hours into groups so range
covers need fewer subtrees.  Hour labels are 1-based: label h names the
wall-clock hour [h-1, h).  An interval of hours is covered by a
logarithmic set of aligned subtrees.

Slot scalars are hashes with per-kind tags, so a URI component, a time
label, and the terminator can never collide.
"""

from __future__ import annotations

import calendar
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Iterator, List, Optional, Tuple

from topicseal import wkdibe
from topicseal.groups import hash_to_scalar

TERMINATOR = "$"
SUBTREE_WILDCARD = "*"
SINGLE_WILDCARD = "+"

_URI_TAG = b"\x10"
_TERM_TAG = b"\x11"
_TIME_TAG = b"\x12"

MONTH_ABBR = tuple(calendar.month_abbr)[1:]       # "Jan" .. "Dec"


class UriTooLong(ValueError):
    """URI has more components than the hierarchy reserves slots for."""


def uri_component_scalar(component: str) -> int:
    return hash_to_scalar(_URI_TAG + component.encode())


def terminator_scalar() -> int:
    return hash_to_scalar(_TERM_TAG + TERMINATOR.encode())


def time_label_scalar(level: int, label: str) -> int:
    return hash_to_scalar(_TIME_TAG + bytes([level]) + label.encode())


# ---------------------------------------------------------------------------
# URIs

@dataclass(frozen=True)
class Uri:
    """Parsed topic path; ``star`` marks a trailing subtree wildcard."""

    components: Tuple[str, ...]
    star: bool = False

    def __post_init__(self):
        for c in self.components:
            if not c or "/" in c:
                raise ValueError("URI components must be non-empty and "
                                 "slash-free")
            if c in (TERMINATOR, SUBTREE_WILDCARD):
                raise ValueError("%r is reserved" % c)

    @classmethod
    def parse(cls, text: str) -> "Uri":
        if text in ("", "/"):
            return cls((), False)
        parts = text.strip("/").split("/")
        star = parts[-1] == SUBTREE_WILDCARD
        if star:
            parts = parts[:-1]
        if SUBTREE_WILDCARD in parts:
            raise ValueError("* is only allowed as the final component")
        return cls(tuple(parts), star)

    def __str__(self) -> str:
        parts = list(self.components)
        if self.star:
            parts.append(SUBTREE_WILDCARD)
        return "/".join(parts)

    def __len__(self) -> int:
        return len(self.components)

    def is_concrete(self) -> bool:
        """No wildcards: names exactly one resource."""
        return not self.star and SINGLE_WILDCARD not in self.components


def matches_uri(filt: Uri, concrete: Uri) -> bool:
    """Does a subscription filter accept a concrete resource name?

    ``a/*`` accepts a itself and everything below it; ``+`` accepts any
    one component.
    """
    if not concrete.is_concrete():
        return False
    k = len(filt.components)
    if filt.star:
        if len(concrete.components) < k:
            return False
    elif len(concrete.components) != k:
        return False
    return all(f == SINGLE_WILDCARD or f == c
               for f, c in zip(filt.components, concrete.components))


def uri_key_accepts(key_uri: Uri, concrete: Uri) -> bool:
    """Name-level mirror of slot matching: can a key for ``key_uri``
    decrypt messages addressed to ``concrete``?

    Slightly broader than ``matches_uri``: a ``+`` leaves its slot
    unconstrained, so under a trailing ``*`` a run of ``+`` components
    also accepts names too short to reach them.  Delivery filtering
    stays with ``matches_uri``; this is the cryptographic ground truth.
    """
    if not concrete.is_concrete():
        return False
    k = len(key_uri.components)
    n = len(concrete.components)
    if not key_uri.star and n != k:
        return False
    for i, f in enumerate(key_uri.components):
        if f == SINGLE_WILDCARD:
            continue
        if i >= n or concrete.components[i] != f:
            return False
    return True


def uri_covers(general: Uri, specific: Uri) -> bool:
    """Does authority over ``general`` imply authority over ``specific``?

    True iff every concrete URI accepted by ``specific`` is accepted by
    ``general``.
    """
    gk, sk = len(general.components), len(specific.components)
    if general.star:
        if sk < gk:
            return False
    else:
        if specific.star or sk != gk:
            return False
    for g, s in zip(general.components, specific.components):
        if g == SINGLE_WILDCARD:
            continue
        if s == SINGLE_WILDCARD or s != g:
            return False
    return True


# ---------------------------------------------------------------------------
# time trees

@dataclass(frozen=True)
class TimePath:
    """Labels from the time-tree root; shorter than full depth = subtree.

    A ``+`` label leaves that level unspecified (recurring grants).
    """

    labels: Tuple[str, ...]

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> str:
        return self.labels[i]

    def __iter__(self) -> Iterator[str]:
        return iter(self.labels)

    def child(self, label: str) -> "TimePath":
        return TimePath(self.labels + (label,))

    def __str__(self) -> str:
        return "/".join(self.labels)


def floor_hour(dt: datetime) -> datetime:
    return dt.replace(minute=0, second=0, microsecond=0)


@dataclass(frozen=True)
class TimeRange:
    """Inclusive span of hour slots, held as the first and last slot-start
    instants (both hour-aligned)."""

    start: datetime
    end: datetime

    def __post_init__(self):
        for dt in (self.start, self.end):
            if dt != floor_hour(dt):
                raise ValueError("range endpoints must be hour-aligned")
        if self.start > self.end:
            raise ValueError("empty time range")

    @classmethod
    def from_instants(cls, first: datetime, last: datetime) -> "TimeRange":
        """Range from wall-clock instants: the first slot is the one
        containing ``first``; the last is the latest slot ending at or
        before ``last``."""
        return cls(floor_hour(first), floor_hour(last) - timedelta(hours=1))

    def contains(self, slot_start: datetime) -> bool:
        return self.start <= slot_start <= self.end

    def hours(self) -> Iterator[datetime]:
        cur = self.start
        while cur <= self.end:
            yield cur
            cur += timedelta(hours=1)

    def hour_count(self) -> int:
        return int((self.end - self.start) / timedelta(hours=1)) + 1


class TimeSpec:
    """One time-tree layout: labels, bounds, and child enumeration."""

    name = ""
    depth = 0

    def leaf_path(self, dt: datetime) -> TimePath:
        raise NotImplementedError

    def path_bounds(self, path: TimePath) -> Tuple[datetime, datetime]:
        """First and last leaf-start instants under this subtree."""
        raise NotImplementedError

    def children(self, path: TimePath) -> List[TimePath]:
        raise NotImplementedError

    def format(self, path: TimePath) -> str:
        text = str(path)
        if len(path) < self.depth:
            text += "/" + SUBTREE_WILDCARD
        return text

    def leaf_start(self, path: TimePath) -> datetime:
        if len(path) != self.depth:
            raise ValueError("not a leaf path")
        return self.path_bounds(path)[0]


class Depth4TimeSpec(TimeSpec):
    """year / month (Jan..Dec) / day (01..31) / hour (01..24)."""

    name = "depth4"
    depth = 4

    def leaf_path(self, dt: datetime) -> TimePath:
        return TimePath((str(dt.year), MONTH_ABBR[dt.month - 1],
                         "%02d" % dt.day, "%02d" % (dt.hour + 1)))

    def path_bounds(self, path: TimePath) -> Tuple[datetime, datetime]:
        y = int(path[0])
        if len(path) == 1:
            return datetime(y, 1, 1, 0), datetime(y, 12, 31, 23)
        m = MONTH_ABBR.index(path[1]) + 1
        if len(path) == 2:
            last = calendar.monthrange(y, m)[1]
            return datetime(y, m, 1, 0), datetime(y, m, last, 23)
        d = int(path[2])
        if len(path) == 3:
            return datetime(y, m, d, 0), datetime(y, m, d, 23)
        h = int(path[3]) - 1          # label h covers [h-1, h)
        return datetime(y, m, d, h), datetime(y, m, d, h)

    def children(self, path: TimePath) -> List[TimePath]:
        if len(path) == 1:
            return [path.child(mon) for mon in MONTH_ABBR]
        if len(path) == 2:
            y = int(path[0])
            m = MONTH_ABBR.index(path[1]) + 1
            days = calendar.monthrange(y, m)[1]
            return [path.child("%02d" % d) for d in range(1, days + 1)]
        if len(path) == 3:
            return [path.child("%02d" % h) for h in range(1, 25)]
        return []


class Depth6TimeSpec(TimeSpec):
    """year / month (01..12) / five-day group (1..7) / day in group (1..5)
    / six-hour group (1..4) / hour in group (1..6).

    Deeper than the calendar needs, so a mid-sized range covers with
    fewer keys; group arities are truncated by real month lengths.
    """

    name = "depth6"
    depth = 6

    def leaf_path(self, dt: datetime) -> TimePath:
        d = dt.day
        hl = dt.hour + 1
        return TimePath((str(dt.year), "%02d" % dt.month,
                         str((d - 1) // 5 + 1), str((d - 1) % 5 + 1),
                         str((hl - 1) // 6 + 1), str((hl - 1) % 6 + 1)))

    def _day_span(self, y: int, m: int, group: int) -> Tuple[int, int]:
        days = calendar.monthrange(y, m)[1]
        lo = (group - 1) * 5 + 1
        return lo, min(lo + 4, days)

    def path_bounds(self, path: TimePath) -> Tuple[datetime, datetime]:
        y = int(path[0])
        if len(path) == 1:
            return datetime(y, 1, 1, 0), datetime(y, 12, 31, 23)
        m = int(path[1])
        if len(path) == 2:
            last = calendar.monthrange(y, m)[1]
            return datetime(y, m, 1, 0), datetime(y, m, last, 23)
        dlo, dhi = self._day_span(y, m, int(path[2]))
        if len(path) == 3:
            return datetime(y, m, dlo, 0), datetime(y, m, dhi, 23)
        d = dlo + int(path[3]) - 1
        if len(path) == 4:
            return datetime(y, m, d, 0), datetime(y, m, d, 23)
        hg = int(path[4])
        hlo = (hg - 1) * 6            # first slot-start hour in the group
        if len(path) == 5:
            return datetime(y, m, d, hlo), datetime(y, m, d, hlo + 5)
        h = hlo + int(path[5]) - 1
        return datetime(y, m, d, h), datetime(y, m, d, h)

    def children(self, path: TimePath) -> List[TimePath]:
        if len(path) == 1:
            return [path.child("%02d" % m) for m in range(1, 13)]
        y = int(path[0])
        m = int(path[1])
        if len(path) == 2:
            days = calendar.monthrange(y, m)[1]
            groups = (days + 4) // 5
            return [path.child(str(g)) for g in range(1, groups + 1)]
        if len(path) == 3:
            dlo, dhi = self._day_span(y, m, int(path[2]))
            return [path.child(str(i)) for i in range(1, dhi - dlo + 2)]
        if len(path) == 4:
            return [path.child(str(g)) for g in range(1, 5)]
        if len(path) == 5:
            return [path.child(str(i)) for i in range(1, 7)]
        return []


class TruncatedTimeSpec(TimeSpec):
    """A base layout cut off at a shallower level, for hierarchies whose
    time-slot budget is smaller than any built-in tree.  Leaves are whole
    subtrees of the base tree, so only ranges aligned to those subtree
    boundaries are representable."""

    def __init__(self, base: TimeSpec, depth: int):
        if not 1 <= depth <= base.depth:
            raise ValueError("cannot truncate %s to depth %d"
                             % (base.name, depth))
        self.base = base
        self.depth = depth
        self.name = "%s@%d" % (base.name, depth)

    def leaf_path(self, dt: datetime) -> TimePath:
        return TimePath(self.base.leaf_path(dt).labels[:self.depth])

    def path_bounds(self, path: TimePath) -> Tuple[datetime, datetime]:
        return self.base.path_bounds(path)

    def children(self, path: TimePath) -> List[TimePath]:
        if len(path) >= self.depth:
            return []
        return self.base.children(path)


DEPTH4 = Depth4TimeSpec()
DEPTH6 = Depth6TimeSpec()
_SPECS = {s.name: s for s in (DEPTH4, DEPTH6)}
DEFAULT_SPEC = DEPTH6


def truncate_spec(spec: TimeSpec, depth: int) -> TimeSpec:
    if depth == spec.depth:
        return spec
    if isinstance(spec, TruncatedTimeSpec):
        return TruncatedTimeSpec(spec.base, depth)
    return TruncatedTimeSpec(spec, depth)


def get_spec(name: str) -> TimeSpec:
    base, sep, cut = name.partition("@")
    try:
        spec = _SPECS[base]
    except KeyError:
        raise ValueError("unknown time-tree layout %r" % name)
    if not sep:
        return spec
    try:
        return truncate_spec(spec, int(cut))
    except ValueError:
        raise ValueError("unknown time-tree layout %r" % name)


def spec_for_depth(depth: int) -> TimeSpec:
    for s in _SPECS.values():
        if s.depth == depth:
            return s
    raise ValueError("no built-in time tree of depth %d" % depth)


def time_range_cover(r: TimeRange, spec: TimeSpec) -> List[TimePath]:
    """Minimal chronological set of aligned subtrees tiling the range."""
    out: List[TimePath] = []

    def descend(path: TimePath) -> None:
        lo, hi = spec.path_bounds(path)
        if hi < r.start or lo > r.end:
            return
        if lo >= r.start and hi <= r.end:
            out.append(path)
            return
        kids = spec.children(path)
        if not kids:
            # only reachable on truncated layouts, whose leaves span
            # more than one hour; a full-depth leaf is a single hour
            # and so is either disjoint or contained
            raise ValueError(
                "range %s is not aligned to the leaves of layout %s"
                % (r, spec.name))
        for child in kids:
            descend(child)

    for year in range(r.start.year, r.end.year + 1):
        descend(TimePath((str(year),)))
    return out


# ---------------------------------------------------------------------------
# pattern encoding

def _uri_slot_values(uri: Uri, uri_slots: int) -> List[Optional[int]]:
    if len(uri.components) > uri_slots - 1:
        raise UriTooLong(
            "URI depth %d needs %d slots but only %d are reserved"
            % (len(uri.components), len(uri.components) + 1, uri_slots))
    vals: List[Optional[int]] = [None] * uri_slots
    for i, comp in enumerate(uri.components):
        if comp != SINGLE_WILDCARD:
            vals[i] = uri_component_scalar(comp)
    if not uri.star:
        vals[len(uri.components)] = terminator_scalar()
    return vals


def _time_slot_values(path: TimePath, time_slots: int) -> List[Optional[int]]:
    if len(path) > time_slots:
        raise ValueError("time path deeper than the time-slot budget")
    vals: List[Optional[int]] = [None] * time_slots
    for level, label in enumerate(path):
        if label != SINGLE_WILDCARD:
            vals[level] = time_label_scalar(level, label)
    return vals


def encode_key_pattern(uri: Uri, time_path: TimePath, uri_slots: int,
                       time_slots: int,
                       total_slots: Optional[int] = None) -> wkdibe.Pattern:
    """Pattern for a grant: subtree URIs and time prefixes leave their
    tails free (delegable); exact URIs pin the terminator."""
    vals = _uri_slot_values(uri, uri_slots)
    vals += _time_slot_values(time_path, time_slots)
    if total_slots is not None:
        if total_slots < len(vals):
            raise ValueError("total_slots smaller than uri+time budget")
        vals += [None] * (total_slots - len(vals))
    return wkdibe.Pattern(vals)


def encode_message_pattern(uri: Uri, time_path: TimePath, uri_slots: int,
                           time_slots: int,
                           total_slots: Optional[int] = None
                           ) -> wkdibe.Pattern:
    """Pattern a message is encrypted under: a concrete URI with its
    terminator, and one full-depth time leaf (no time terminator; every
    level is always present)."""
    if not uri.is_concrete():
        raise ValueError("messages go to one concrete URI, no wildcards")
    if len(time_path) != time_slots or SINGLE_WILDCARD in time_path.labels:
        raise ValueError("message time must be a full-depth leaf")
    return encode_key_pattern(uri, time_path, uri_slots, time_slots,
                              total_slots)


def path_covers(general: TimePath, specific: TimePath) -> bool:
    """Subtree containment, with ``+`` in the general path matching any
    label at that level."""
    if len(general) > len(specific):
        return False
    return all(g == SINGLE_WILDCARD or g == s
               for g, s in zip(general.labels, specific.labels))
