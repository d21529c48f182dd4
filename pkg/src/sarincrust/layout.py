"""On-disk layout of generated datasets and its content hash.

::

    OUT/scenes/NNNNNN.cf32
    OUT/scenes/NNNNNN.pgm
    OUT/annotations.jsonl
    OUT/manifest.echo.json
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .core import pgm_bytes, raster_bytes
from .errors import DataIOError, FormatError, ToolkitError
from .sensor import quarter_power_lut

SCENES_DIR = "scenes"
ANNOTATIONS = "annotations.jsonl"
ECHO = "manifest.echo.json"


def scene_name(index: int) -> str:
    return f"{index:06d}"


def prepare_tree(out_dir) -> Path:
    out = Path(out_dir)
    try:
        (out / SCENES_DIR).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataIOError(f"{out}: {exc.strerror or exc}") from exc
    return out


def scene_payloads(scene_id: str, raster, lut_percentile: float = 99.5) -> dict[str, bytes]:
    """Relative file name -> bytes for one scene (complex raster + 8-bit display)."""
    return {
        f"{SCENES_DIR}/{scene_id}.cf32": raster_bytes(raster),
        f"{SCENES_DIR}/{scene_id}.pgm": pgm_bytes(quarter_power_lut(raster, lut_percentile)),
    }


def write_files(out: Path, payloads: dict[str, bytes]) -> None:
    for rel, data in payloads.items():
        try:
            (out / rel).write_bytes(data)
        except OSError as exc:
            raise DataIOError(f"{out / rel}: {exc.strerror or exc}") from exc


def annotations_bytes(annotations) -> bytes:
    lines = [json.dumps(a.to_json(), sort_keys=True) for a in annotations]
    return ("\n".join(lines) + "\n").encode() if lines else b""


def content_hash(out_dir) -> str:
    """SHA-256 over (relative name, bytes) of every output except the echo.

    Files are visited in sorted name order so scheduling cannot change it.
    """
    out = Path(out_dir)
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != ECHO)
    h = hashlib.sha256()
    for p in files:
        rel = p.relative_to(out).as_posix().encode()
        data = p.read_bytes()
        h.update(len(rel).to_bytes(8, "little") + rel)
        h.update(len(data).to_bytes(8, "little") + data)
    return h.hexdigest()


def read_annotations(path):
    from .overlay import SceneAnnotation

    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataIOError(f"{path}: {exc.strerror or exc}") from exc
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            out.append(SceneAnnotation.from_json(json.loads(line)))
        except ToolkitError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}:{n}: bad annotation record ({exc!r})") from exc
    return out
