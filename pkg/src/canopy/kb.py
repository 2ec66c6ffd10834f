"""Confidence-weighted fact store with reinforcement, decay, and replacement.

Upsert branch semantics, applied in this precedence:

  (a) an entry with the same (date, location, description) exists
      -> increment its confidence, capped at c_max;
  (b) else a conflicting entry exists (same date AND location, different
      description with similarity > tau_sim; ties broken by highest
      similarity then insertion order):
        - its confidence > 2 -> decrement it by 1 and discard the new entry,
        - otherwise          -> replace it with the new entry at confidence 1;
  (c) else insert the new entry at confidence 1.

Confidences therefore always stay in [1, c_max]. Retrieval partitions
matches into a priority tier (confidence >= tau_conf) and the remainder,
each sorted by (confidence desc, similarity to the query desc, insertion
order).
"""

from __future__ import annotations

import datetime as _dt
import json
import re
import threading
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

from canopy.errors import PersistenceError, ValidationError

KB_FORMAT_VERSION = 1

_TOKEN_RE = re.compile(r"[^\w]+", re.UNICODE)


@dataclass(frozen=True)
class KBEntry:
    date: _dt.date
    location: str
    description: str
    confidence: int
    seq: int = 0  # insertion order, assigned by the store

    def key(self) -> tuple[str, str, str]:
        return (self.date.isoformat(), self.location, self.description)


@dataclass(frozen=True)
class KBConfig:
    c_max: int = 10
    tau_sim: float = 0.5
    tau_conf: int = 3

    def __post_init__(self):
        if self.c_max < 3:
            raise ValidationError("c_max must be >= 3")
        if not (0.0 < self.tau_sim < 1.0):
            raise ValidationError("tau_sim must lie in (0, 1)")
        if self.tau_conf < 1:
            raise ValidationError("tau_conf must be >= 1")


def default_similarity(a: str, b: str) -> float:
    """Jaccard similarity over lowercased whitespace/punctuation tokens."""
    ta = {t for t in _TOKEN_RE.split(a.lower()) if t}
    tb = {t for t in _TOKEN_RE.split(b.lower()) if t}
    if not ta and not tb:
        return 1.0
    if not ta or not tb:
        return 0.0
    return len(ta & tb) / len(ta | tb)


@dataclass(frozen=True)
class UpsertResult:
    action: str  # inserted | reinforced | decayed | replaced
    entry: KBEntry  # the entry now standing in the store (post-update)


class KnowledgeBase:
    """Single-writer, multi-reader fact store (upserts serialize on a lock)."""

    def __init__(self, cfg: KBConfig | None = None,
                 similarity: Callable[[str, str], float] | None = None):
        self.cfg = cfg or KBConfig()
        self.similarity = similarity or default_similarity
        self._entries: list[KBEntry] = []
        self._next_seq = 0
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._entries)

    def entries(self) -> list[KBEntry]:
        """Snapshot of the current entries in storage order."""
        return list(self._entries)

    def _validate(self, date: _dt.date, location: str, description: str) -> None:
        if not isinstance(date, _dt.date):
            raise ValidationError(f"entry date must be a date, got {type(date).__name__}")
        if not location:
            raise ValidationError("entry location must be non-empty")
        if not description or not description.strip():
            raise ValidationError("entry description must be non-empty")

    def upsert(self, date: _dt.date, location: str, description: str) -> UpsertResult:
        self._validate(date, location, description)
        with self._lock:
            # (a) exact-tuple reinforcement
            for i, entry in enumerate(self._entries):
                if (entry.date, entry.location, entry.description) == (
                    date, location, description,
                ):
                    bumped = replace(
                        entry, confidence=min(entry.confidence + 1, self.cfg.c_max)
                    )
                    self._entries[i] = bumped
                    return UpsertResult("reinforced", bumped)

            # (b) semantic conflict in the same (date, location) context
            best: tuple[float, int] | None = None  # (similarity, index)
            for i, entry in enumerate(self._entries):
                if entry.date != date or entry.location != location:
                    continue
                if entry.description == description:
                    continue
                sim = self.similarity(description, entry.description)
                if sim > self.cfg.tau_sim:
                    if best is None or sim > best[0]:
                        best = (sim, i)
            if best is not None:
                idx = best[1]
                existing = self._entries[idx]
                if existing.confidence > 2:
                    decayed = replace(existing, confidence=existing.confidence - 1)
                    self._entries[idx] = decayed
                    return UpsertResult("decayed", decayed)
                fresh = KBEntry(date, location, description, 1, seq=self._next_seq)
                self._next_seq += 1
                self._entries[idx] = fresh
                return UpsertResult("replaced", fresh)

            # (c) novel entry
            fresh = KBEntry(date, location, description, 1, seq=self._next_seq)
            self._next_seq += 1
            self._entries.append(fresh)
            return UpsertResult("inserted", fresh)

    def retrieve(
        self,
        date_range: tuple[_dt.date, _dt.date] | None = None,
        locations: set[str] | None = None,
        description_query: str | None = None,
    ) -> tuple[list[KBEntry], list[KBEntry]]:
        """Matching entries as (priority tier, remainder).

        The priority tier holds entries with confidence >= tau_conf; both
        tiers are sorted by (confidence desc, similarity to the query desc,
        insertion order).
        """
        matched = []
        for entry in self._entries:
            if date_range is not None and not (date_range[0] <= entry.date <= date_range[1]):
                continue
            if locations is not None and entry.location not in locations:
                continue
            matched.append(entry)

        def sort_key(entry: KBEntry):
            sim = (
                self.similarity(description_query, entry.description)
                if description_query
                else 0.0
            )
            return (-entry.confidence, -sim, entry.seq)

        matched.sort(key=sort_key)
        priority = [e for e in matched if e.confidence >= self.cfg.tau_conf]
        rest = [e for e in matched if e.confidence < self.cfg.tau_conf]
        return priority, rest

    def compact(self) -> int:
        """Drop entries at the minimum confidence 1 that were never
        reinforced, keeping the store small. Returns the number removed."""
        with self._lock:
            before = len(self._entries)
            self._entries = [e for e in self._entries if e.confidence > 1]
            return before - len(self._entries)


# ---------------------------------------------------------------------------
# Persistence (line-delimited JSON, append-friendly)
# ---------------------------------------------------------------------------

def save_kb(kb: KnowledgeBase, path: str | Path) -> None:
    lines = [
        json.dumps(
            {
                "type": "kb_config",
                "version": KB_FORMAT_VERSION,
                "c_max": kb.cfg.c_max,
                "tau_sim": kb.cfg.tau_sim,
                "tau_conf": kb.cfg.tau_conf,
            }
        )
    ]
    for entry in kb.entries():
        lines.append(
            json.dumps(
                {
                    "d": entry.date.isoformat(),
                    "l": entry.location,
                    "s": entry.description,
                    "c": entry.confidence,
                }
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_kb(path: str | Path, similarity: Callable[[str, str], float] | None = None) -> KnowledgeBase:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        return KnowledgeBase(similarity=similarity)

    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise PersistenceError(f"corrupt KB file {path}: {exc}") from exc
    if header.get("type") != "kb_config":
        raise PersistenceError(f"KB file {path} missing config header")
    if header.get("version") != KB_FORMAT_VERSION:
        raise PersistenceError(
            f"KB version mismatch: expected {KB_FORMAT_VERSION}, got {header.get('version')!r}"
        )
    cfg = KBConfig(
        c_max=header["c_max"], tau_sim=header["tau_sim"], tau_conf=header["tau_conf"]
    )
    kb = KnowledgeBase(cfg, similarity=similarity)
    for i, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
            entry = KBEntry(
                date=_dt.date.fromisoformat(rec["d"]),
                location=rec["l"],
                description=rec["s"],
                confidence=int(rec["c"]),
                seq=kb._next_seq,
            )
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise PersistenceError(f"corrupt KB entry at line {i}: {exc}") from exc
        if not (1 <= entry.confidence <= cfg.c_max):
            raise PersistenceError(
                f"corrupt KB entry at line {i}: confidence {entry.confidence} "
                f"outside [1, {cfg.c_max}]"
            )
        kb._entries.append(entry)
        kb._next_seq += 1
    return kb
