"""Ingestion of behavior logs and item metadata.

Events arrive one per line as tab-separated, comma-separated, or JSON-object
records. Users become time-ordered item sequences; metadata becomes a catalog
whose metadata-only items are flagged as solitary.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable, NamedTuple

FORMATS = ("tsv", "csv", "json")

# keys accepted in JSON-object lines, first match wins
_USER_KEYS = ("user_id", "user", "reviewerID")
_ITEM_KEYS = ("item_id", "item", "asin")
_TIME_KEYS = ("timestamp", "time", "unixReviewTime")


class Event(NamedTuple):
    user_id: str
    item_id: str
    timestamp: int


@dataclass
class UserSequence:
    user_id: str
    items: list[tuple[str, int]]

    def item_ids(self) -> list[str]:
        return [it for it, _ in self.items]

    def __len__(self) -> int:
        return len(self.items)


@dataclass
class Catalog:
    items: set[str]
    aux_info: dict[str, list[str]] = field(default_factory=dict)
    solitary: set[str] = field(default_factory=set)
    n_duplicate_meta: int = 0


class ParseError(ValueError):
    """A malformed input record; ``line`` is 1-based."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


def detect_format(line: str) -> str:
    s = line.lstrip()
    if s.startswith("{"):
        return "json"
    if "\t" in line:
        return "tsv"
    if "," in line:
        return "csv"
    raise ValueError(f"cannot detect record format from {line[:40]!r}")


def _pick(obj: dict, keys: tuple[str, ...], what: str):
    for k in keys:
        if k in obj:
            return obj[k]
    raise ValueError(f"missing {what} field")


def _parse_event_line(text: str, fmt: str) -> Event:
    if fmt == "json":
        obj = json.loads(text)
        if not isinstance(obj, dict):
            raise ValueError("record is not an object")
        user = str(_pick(obj, _USER_KEYS, "user"))
        item = str(_pick(obj, _ITEM_KEYS, "item"))
        raw_t = _pick(obj, _TIME_KEYS, "timestamp")
    else:
        parts = text.split("\t" if fmt == "tsv" else ",")
        if len(parts) < 3:
            raise ValueError(f"expected at least 3 fields, got {len(parts)}")
        user, item, raw_t = parts[0].strip(), parts[1].strip(), parts[2].strip()
    if not user or not item:
        raise ValueError("empty user or item id")
    try:
        ts = int(raw_t)
    except (TypeError, ValueError):
        # accept integral floats such as "1400000000.0"
        try:
            f = float(raw_t)
        except (TypeError, ValueError):
            raise ValueError(f"timestamp {raw_t!r} is not a number") from None
        if not f.is_integer():
            raise ValueError(f"timestamp {raw_t!r} is not integral") from None
        ts = int(f)
    if ts < 0:
        raise ValueError("negative timestamp")
    return Event(user, item, ts)


def _records(stream: Iterable[str]):
    for lineno, raw in enumerate(stream, start=1):
        text = raw.rstrip("\r\n")
        if not text.strip() or text.lstrip().startswith("#"):
            continue
        yield lineno, text


def parse_events(
    stream: Iterable[str],
    fmt: str | None = None,
    on_error: str = "abort",
    errors: list[ParseError] | None = None,
) -> list[Event]:
    """Parse a line-delimited event stream.

    ``fmt`` is one of ``FORMATS``; when omitted it is detected from the first
    record. With ``on_error="skip"`` malformed lines are dropped and, if an
    ``errors`` list is given, appended to it as :class:`ParseError`.
    """
    if on_error not in ("abort", "skip"):
        raise ValueError(f"unknown error policy {on_error!r}")
    if fmt is not None and fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}")
    events: list[Event] = []
    for lineno, text in _records(stream):
        if fmt is None:
            try:
                fmt = detect_format(text)
            except ValueError as exc:
                raise ParseError(lineno, str(exc)) from None
        try:
            events.append(_parse_event_line(text, fmt))
        except (ValueError, json.JSONDecodeError) as exc:
            err = ParseError(lineno, str(exc))
            if on_error == "abort":
                raise err from None
            if errors is not None:
                errors.append(err)
    return events


def parse_metadata(stream: Iterable[str]) -> list[tuple[str, list[str]]]:
    """Parse ``item_id<TAB>a/b/c`` lines (or JSON objects with asin/categories)."""
    rows: list[tuple[str, list[str]]] = []
    for lineno, text in _records(stream):
        if text.lstrip().startswith("{"):
            try:
                obj = json.loads(text)
                item = str(_pick(obj, _ITEM_KEYS, "item"))
            except (ValueError, json.JSONDecodeError) as exc:
                raise ParseError(lineno, str(exc)) from None
            cats = obj.get("categories", obj.get("category", []))
            if isinstance(cats, str):
                tokens = [t for t in cats.split("/") if t]
            else:
                # Amazon style: list of category paths; flatten in order, dedup
                flat = []
                for c in cats:
                    flat.extend(c if isinstance(c, list) else [c])
                tokens = list(dict.fromkeys(str(t) for t in flat))
        else:
            parts = text.split("\t")
            item = parts[0].strip()
            path = parts[1].strip() if len(parts) > 1 else ""
            tokens = [t for t in path.split("/") if t]
        if not item:
            raise ParseError(lineno, "empty item id")
        rows.append((item, tokens))
    return rows


def write_events(events: Iterable[Event], fh: IO[str]) -> None:
    for e in events:
        fh.write(f"{e.user_id}\t{e.item_id}\t{e.timestamp}\n")


def write_metadata(rows: Iterable[tuple[str, list[str]]], fh: IO[str]) -> None:
    for item, tokens in rows:
        fh.write(f"{item}\t{'/'.join(tokens)}\n")


def filter_min_activity(events: list[Event], min_count: int = 5) -> list[Event]:
    """Drop users, then items, with fewer than ``min_count`` events.

    One pass each, in that order; the result is not iterated to a fixpoint,
    so a surviving item may end up with fewer than ``min_count`` events.
    """
    if min_count <= 1:
        return list(events)
    per_user = Counter(e.user_id for e in events)
    kept = [e for e in events if per_user[e.user_id] >= min_count]
    per_item = Counter(e.item_id for e in kept)
    return [e for e in kept if per_item[e.item_id] >= min_count]


def build_sequences(events: Iterable[Event]) -> list[UserSequence]:
    """Group by user (first-appearance order) and sort each group by time.

    ``sorted`` is stable, so equal timestamps keep their input order.
    """
    grouped: dict[str, list[tuple[str, int]]] = {}
    for e in events:
        grouped.setdefault(e.user_id, []).append((e.item_id, e.timestamp))
    return [
        UserSequence(user, sorted(items, key=lambda p: p[1]))
        for user, items in grouped.items()
    ]


def build_catalog(
    events: Iterable[Event], metadata: Iterable[tuple[str, list[str]]] = ()
) -> Catalog:
    interacted = {e.item_id for e in events}
    aux: dict[str, list[str]] = {}
    dups = 0
    for item, tokens in metadata:
        if item in aux:
            dups += 1
            continue
        aux[item] = list(tokens)
    return Catalog(
        items=interacted | set(aux),
        aux_info=aux,
        solitary=set(aux) - interacted,
        n_duplicate_meta=dups,
    )
