"""
General utility functions: date parsing, seed derivation, hashing and file output.
"""
import hashlib
import json
import re
from datetime import date, datetime
from pathlib import Path
from typing import Any, Union

from dateutil import parser as date_parser

_COMPACT_DATE = re.compile(r"^\d{8}$")


def parse_date(value: Union[str, date, datetime]) -> date:
    """Parse an ISO-8601 or YYYYMMDD date (time parts are dropped)."""
    if isinstance(value, datetime):
        return value.date()
    if isinstance(value, date):
        return value
    text = str(value).strip()
    if _COMPACT_DATE.match(text):
        return datetime.strptime(text, "%Y%m%d").date()
    return date_parser.isoparse(text).date()


def derive_seed(master_seed: int, *labels: Any) -> int:
    """Derive a stable 32-bit sub-seed from the master seed and a label path."""
    key = ":".join([str(master_seed), *(str(label) for label in labels)])
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:4], "big")


def sha256_bytes(data: bytes) -> str:
    """Hash of a source payload for provenance records."""
    return hashlib.sha256(data).hexdigest()


def slugify(name: str) -> str:
    """File-system friendly district name ("Reggio Emilia" -> "reggio_emilia")."""
    return re.sub(r"[^a-z0-9]+", "_", name.strip().lower()).strip("_")


def write_json(path: Union[str, Path], payload: Any) -> Path:
    """Write JSON with sorted keys so identical payloads give identical bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


def is_url(location: str) -> bool:
    return location.lower().startswith(("http://", "https://"))
