"""Match files.

Text form: a ``matches <pair_count> <stage>`` header, then per pair a
``# <query_image> <train_image> <count>`` marker followed by one
``query_image train_image query_idx train_idx`` line per match. Readers that
skip ``#`` lines still see the plain four-column table.

Binary form mirrors the feature file framing: ``<4sIII`` header (magic,
version, stage code, pair count), then per pair ``<QQI`` and ``count`` rows of
``<u4`` index pairs.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable, List, Optional, Union

import numpy as np

from ..errors import FormatError, TruncatedFile
from .cascade import PairMatches

PathLike = Union[str, Path]

MATCH_MAGIC = b"BMMT"
MATCH_VERSION = 1
_HEADER = struct.Struct("<4sIII")
_PAIR = struct.Struct("<QQI")
_STAGES = ("initial", "verified")


def matches_text(items: Iterable[PairMatches], comment: Optional[str] = None) -> str:
    """Header line, optional ``%`` comment line, then one ``# a b count`` block per pair."""
    items = list(items)
    stage = items[0].stage if items else "initial"
    lines = [f"matches {len(items)} {stage}\n"]
    if comment:
        lines.append("% " + comment.replace("\n", " ") + "\n")
    for pm in items:
        a, b = pm.pair
        lines.append(f"# {a} {b} {len(pm)}\n")
        lines.extend(f"{a} {b} {int(q)} {int(t)}\n" for q, t in pm.matches)
    return "".join(lines)


def write_matches_text(path: PathLike, items: Iterable[PairMatches], comment: Optional[str] = None) -> None:
    Path(path).write_text(matches_text(items, comment))


def read_matches_text(path: PathLike) -> List[PairMatches]:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise TruncatedFile(f"{path}: empty matches file")
    head = lines[0].split()
    if len(head) != 3 or head[0] != "matches" or head[2] not in _STAGES:
        raise FormatError(f"{path}: bad header {lines[0]!r}")
    n_pairs, stage = int(head[1]), head[2]
    out: List[PairMatches] = []
    cur, rows, expect = None, [], 0

    def flush():
        if cur is not None:
            if len(rows) != expect:
                raise FormatError(f"{path}: pair {cur} declares {expect} matches, found {len(rows)}")
            out.append(PairMatches(cur, np.array(rows, dtype=np.int64).reshape(-1, 2), stage))

    for lineno, line in enumerate(lines[1:], 2):
        parts = line.split()
        if not parts or parts[0].startswith("%"):
            continue
        if parts[0] == "#":
            flush()
            if len(parts) != 4:
                raise FormatError(f"{path}:{lineno}: expected '# a b count'")
            cur, rows, expect = (int(parts[1]), int(parts[2])), [], int(parts[3])
            continue
        if len(parts) != 4 or cur is None:
            raise FormatError(f"{path}:{lineno}: expected 'query_image train_image query_idx train_idx'")
        a, b, q, t = (int(p) for p in parts)
        if (a, b) != cur:
            raise FormatError(f"{path}:{lineno}: match for {(a, b)} inside block of {cur}")
        rows.append((q, t))
    flush()
    if len(out) != n_pairs:
        raise TruncatedFile(f"{path}: header declares {n_pairs} pairs, found {len(out)}")
    return out


def matches_bytes(items: Iterable[PairMatches]) -> bytes:
    items = list(items)
    stage = items[0].stage if items else "initial"
    chunks = [_HEADER.pack(MATCH_MAGIC, MATCH_VERSION, _STAGES.index(stage), len(items))]
    for pm in items:
        chunks.append(_PAIR.pack(pm.pair[0], pm.pair[1], len(pm)))
        chunks.append(pm.matches.astype("<u4").tobytes())
    return b"".join(chunks)


def parse_matches_bytes(data: bytes) -> List[PairMatches]:
    if len(data) < _HEADER.size:
        raise TruncatedFile("matches header truncated")
    magic, version, stage_code, n_pairs = _HEADER.unpack_from(data)
    if magic != MATCH_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MATCH_MAGIC!r}")
    if version != MATCH_VERSION:
        raise FormatError(f"unsupported matches file version {version}")
    if stage_code >= len(_STAGES):
        raise FormatError(f"unknown stage code {stage_code}")
    off = _HEADER.size
    out = []
    for _ in range(n_pairs):
        if len(data) < off + _PAIR.size:
            raise TruncatedFile("pair record truncated")
        a, b, count = _PAIR.unpack_from(data, off)
        off += _PAIR.size
        end = off + count * 8
        if len(data) < end:
            raise TruncatedFile("match rows truncated")
        rows = np.frombuffer(data, dtype="<u4", count=count * 2, offset=off).reshape(-1, 2)
        out.append(PairMatches((a, b), rows.astype(np.int64), _STAGES[stage_code]))
        off = end
    if off != len(data):
        raise FormatError(f"{len(data) - off} trailing bytes after matches")
    return out


def write_matches_binary(path: PathLike, items: Iterable[PairMatches]) -> None:
    Path(path).write_bytes(matches_bytes(items))


def read_matches_binary(path: PathLike) -> List[PairMatches]:
    return parse_matches_bytes(Path(path).read_bytes())
