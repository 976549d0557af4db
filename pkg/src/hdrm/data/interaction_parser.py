from __future__ import annotations

from dataclasses import dataclass
from enum import StrEnum
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger

from ..common.errors import EmptyDatasetError, ParseError


class InputFormat(StrEnum):
    TSV = "tsv"
    CSV = "csv"

    @property
    def separator(self) -> str:
        return "\t" if self is InputFormat.TSV else ","


@dataclass(frozen=True, eq=False)
class InteractionRecords:
    """Deduplicated raw interactions with dense ids.

    ``frame`` has integer ``user``/``item`` columns, a float ``rating`` and,
    when the input carried one, a ``timestamp``. ``user_ids[k]`` is the
    original id of dense user ``k`` (same for items).
    """

    frame: pd.DataFrame
    user_ids: np.ndarray
    item_ids: np.ndarray

    @property
    def num_users(self) -> int:
        return len(self.user_ids)

    @property
    def num_items(self) -> int:
        return len(self.item_ids)


class InteractionParser:
    """Parse ``user<sep>item<sep>rating[<sep>timestamp]`` logs into a DataFrame."""

    COLUMNS = ["user", "item", "rating", "timestamp"]
    MIN_FIELDS = 3
    RATING_HEADERS = frozenset({"rating", "ratings", "score", "value", "weight"})

    def __init__(self, fmt: InputFormat | str = InputFormat.TSV):
        self.format = InputFormat(fmt)

    def parse(self, text: str) -> pd.DataFrame:
        """Parse the raw text; returns columns user, item, rating[, timestamp], line.

        Raises:
            ParseError: wrong field count, empty id or non-numeric rating
            EmptyDatasetError: no data lines
        """
        rows: list[list[str]] = []
        line_numbers: list[int] = []
        width: int | None = None
        sep = self.format.separator

        for line_number, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            parts = [part.strip() for part in line.split(sep)]
            if not rows and self._looks_like_header(parts):
                logger.debug(f"Skipping header line: {line}")
                continue
            if not self.MIN_FIELDS <= len(parts) <= len(self.COLUMNS):
                raise ParseError(
                    f"expected 3 or 4 fields separated by {sep!r}, got {len(parts)}",
                    line_number,
                )
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise ParseError(
                    f"expected {width} fields like the first record, got {len(parts)}",
                    line_number,
                )
            if not parts[0] or not parts[1]:
                raise ParseError("empty user or item id", line_number)
            rows.append(parts)
            line_numbers.append(line_number)

        if not rows:
            raise EmptyDatasetError("input contains no interaction records")

        df = pd.DataFrame(rows, columns=self.COLUMNS[: width or self.MIN_FIELDS])
        df["line"] = line_numbers
        df = self._normalize_types(df)
        logger.debug(f"Parsed {len(df)} interaction records")
        return df

    def parse_file(self, path: Path) -> pd.DataFrame:
        raw = Path(path).read_bytes()
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            line_number = raw[: exc.start].count(b"\n") + 1
            raise ParseError(f"{path} is not valid UTF-8 text", line_number) from exc
        return self.parse(text)

    def _looks_like_header(self, parts: list[str]) -> bool:
        # only a named rating column marks a header line
        return len(parts) >= self.MIN_FIELDS and parts[2].lower() in self.RATING_HEADERS

    def _normalize_types(self, df: pd.DataFrame) -> pd.DataFrame:
        rating = pd.to_numeric(df["rating"], errors="coerce")
        bad = rating.isna() | ~np.isfinite(rating.fillna(0.0))
        if bad.any():
            first = df.loc[bad].iloc[0]
            raise ParseError(f"rating {first['rating']!r} is not a number", int(first["line"]))
        df["rating"] = rating.astype("float64")
        if "timestamp" in df.columns:
            stamp = pd.to_numeric(df["timestamp"], errors="coerce")
            if stamp.isna().any():
                first = df.loc[stamp.isna()].iloc[0]
                raise ParseError(
                    f"timestamp {first['timestamp']!r} is not a number", int(first["line"])
                )
            df["timestamp"] = stamp.astype("int64")
        return df


def deduplicate(frame: pd.DataFrame) -> pd.DataFrame:
    """Keep one row per (user, item): the one with the highest rating."""
    ordered = frame.sort_values(["user", "item", "rating"], kind="mergesort")
    deduped = ordered.drop_duplicates(subset=["user", "item"], keep="last")
    dropped = len(frame) - len(deduped)
    if dropped:
        logger.info(f"Dropped {dropped} duplicate (user, item) records")
    return deduped.sort_values("line", kind="mergesort").reset_index(drop=True)


def load_interactions(path: Path, fmt: InputFormat | str = InputFormat.TSV) -> InteractionRecords:
    """Read, deduplicate and densify an interaction log.

    Dense ids follow first appearance in the file.
    """
    path = Path(path)
    frame = deduplicate(InteractionParser(fmt).parse_file(path))
    user_codes, user_ids = pd.factorize(frame["user"], sort=False)
    item_codes, item_ids = pd.factorize(frame["item"], sort=False)
    columns = {
        "user": user_codes.astype(np.int64),
        "item": item_codes.astype(np.int64),
        "rating": frame["rating"].to_numpy(),
    }
    if "timestamp" in frame.columns:
        columns["timestamp"] = frame["timestamp"].to_numpy()
    records = InteractionRecords(
        frame=pd.DataFrame(columns),
        user_ids=np.asarray(user_ids, dtype=object),
        item_ids=np.asarray(item_ids, dtype=object),
    )
    logger.info(
        f"Loaded {len(records.frame)} interactions from {path.name}: "
        f"{records.num_users} users, {records.num_items} items"
    )
    return records
