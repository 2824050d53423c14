"""Versioned JSON documents used for banks, feature matrices and models.

Floats are written with ``repr`` precision, so every float64 value
round-trips exactly. Output is byte-stable for equal inputs.
"""

import json

import numpy as np

from . import __version__
from .exceptions import ParseError

FORMAT_VERSION = 1


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(kind, payload, manifest=None) -> str:
    document = {
        "format": f"hydra-tsc/{kind}",
        "version": FORMAT_VERSION,
        "tool_version": __version__,
        "manifest": manifest or {},
        "payload": payload,
    }
    return json.dumps(document, default=_default, sort_keys=True, allow_nan=False)


def loads(text, kind):
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"not a valid {kind} document: {exc}") from None
    if not isinstance(document, dict) or document.get("format") != f"hydra-tsc/{kind}":
        raise ParseError(f"not a {kind} document")
    if document.get("version") != FORMAT_VERSION:
        raise ParseError(f"unsupported {kind} document version {document.get('version')!r}")
    try:
        return document["payload"], document.get("manifest", {})
    except KeyError:
        raise ParseError(f"{kind} document has no payload") from None


def save(path, kind, payload, manifest=None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(kind, payload, manifest))
        fh.write("\n")


def load(path, kind):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except UnicodeDecodeError:
        raise ParseError(f"{path} is not a text document") from None
    return loads(text, kind)


def require(payload, key, kind):
    try:
        return payload[key]
    except (KeyError, TypeError):
        raise ParseError(f"{kind} document is missing {key!r}") from None


def manifest_lines(manifest) -> list:
    """Comment lines carrying the manifest, for CSV outputs."""
    return [
        f"# hydra-tsc {__version__}",
        "# manifest: " + json.dumps(manifest or {}, default=_default, sort_keys=True),
    ]
