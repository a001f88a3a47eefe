"""File helpers shared by the readers, writers and the CLI."""
import gzip
import io
import json
from pathlib import Path

METADATA_PREFIX = "# "


def open_text(path, mode="r"):
    """Open ``path`` as text, transparently gzip-compressed when it ends in .gz."""
    path = Path(path)
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, mode.replace("t", "") + "b"),
                                encoding="utf-8", newline="")
    return open(path, mode, encoding="utf-8", newline="")


def as_text_stream(stream):
    """Accept a path, a text stream, or a binary stream."""
    if isinstance(stream, (str, Path)):
        return open_text(stream)
    if isinstance(stream, (bytes, bytearray)):
        data = bytes(stream)
        if data[:2] == b"\x1f\x8b":
            data = gzip.decompress(data)
        return io.StringIO(data.decode("utf-8"))
    if isinstance(stream, io.TextIOBase):
        return stream
    if hasattr(stream, "read"):
        head = stream.peek(2)[:2] if hasattr(stream, "peek") else b""
        if head == b"\x1f\x8b":
            stream = gzip.GzipFile(fileobj=stream)
        return io.TextIOWrapper(stream, encoding="utf-8", newline="")
    raise TypeError(f"cannot read CSV from {type(stream).__name__}")


def skip_metadata(lines):
    """Drop leading ``# ...`` metadata lines from an iterable of text lines."""
    started = False
    for line in lines:
        if not started and line.startswith("#"):
            continue
        started = True
        yield line


def metadata_line(meta: dict) -> str:
    return METADATA_PREFIX + json.dumps(meta, sort_keys=True) + "\n"


def read_metadata(path) -> dict:
    with open_text(path) as fh:
        first = fh.readline()
    if first.startswith(METADATA_PREFIX):
        return json.loads(first[len(METADATA_PREFIX):])
    return {}


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")
