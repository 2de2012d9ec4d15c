"""Canonical ``.nkdna`` envelopes.

Layout (no insignificant whitespace, keys in this order)::

    {"magic":"NKDNA","format_version":1,"digest":"<sha256 hex>","payload":{...}}

The digest covers the payload bytes exactly as written. Floats use Python's
shortest round-trip ``repr``, so weights come back bit-exact.
"""

from __future__ import annotations

import hashlib
import json
import math
import re

import numpy as np

from .container import (
    FORMAT_VERSION,
    ActionDef,
    Experience,
    KnowledgeDNA,
    NetworkMeta,
    StateDef,
    validate,
)
from .errors import (
    BadShape,
    DigestMismatch,
    InvalidContainer,
    ParseError,
    SchemaError,
    UnsupportedVersion,
)
from .neural import NetworkSpec

MAGIC = "NKDNA"
EXTENSION = ".nkdna"
FINGERPRINT_EXCLUDED_METADATA = ("created-at",)

_ENVELOPE = re.compile(
    rb'\A\s*\{\s*"magic"\s*:\s*"(?P<magic>[^"]*)"\s*,\s*"format_version"\s*:\s*(?P<version>-?\d+)\s*,'
    rb'\s*"digest"\s*:\s*"(?P<digest>[^"]*)"\s*,\s*"payload"\s*:\s*'
)
_TAIL = re.compile(rb"\}\s*\Z")


def _dumps(obj) -> bytes:
    return json.dumps(obj, ensure_ascii=False, allow_nan=False, separators=(",", ":")).encode("utf-8")


def _network_doc(n: NetworkMeta) -> dict:
    s = n.spec
    return {
        "name": n.name,
        "framework": n.framework,
        "layer_sizes": list(s.layer_sizes),
        "activations": list(s.activations),
        "weights": [w.tolist() for w in s.weights],
        "biases": [b.tolist() for b in s.biases],
    }


def payload_document(c: KnowledgeDNA, *, for_fingerprint: bool = False) -> dict:
    md = dict(c.metadata)
    if for_fingerprint:
        for k in FINGERPRINT_EXCLUDED_METADATA:
            md.pop(k, None)
    doc = {} if for_fingerprint else {"container_id": c.container_id}
    doc["metadata"] = {k: md[k] for k in sorted(md)}
    doc["states"] = [
        {"id": s.id, "label": s.label, "available_actions": list(s.available_actions), "terminal": s.terminal}
        for s in sorted(c.states, key=lambda s: s.id)
    ]
    doc["actions"] = [{"id": a.id, "label": a.label} for a in sorted(c.actions, key=lambda a: a.id)]
    doc["experiences"] = [
        {"source": e.source, "episode": e.episode, "step": e.step, "s": e.s, "a": e.a, "r": float(e.r), "s_next": e.s_next}
        for e in sorted(c.experiences, key=lambda e: e.key)
    ]
    doc["networks"] = [_network_doc(n) for n in sorted(c.networks, key=lambda n: n.name)]
    return doc


def _require_valid(c: KnowledgeDNA) -> None:
    violations = validate(c)
    if violations:
        raise InvalidContainer(violations, c)


def envelope_bytes(payload: bytes, format_version: int = FORMAT_VERSION, digest: str | None = None) -> bytes:
    """Wrap raw payload bytes; ``digest`` defaults to their SHA-256."""
    digest = hashlib.sha256(payload).hexdigest() if digest is None else digest
    head = _dumps({"magic": MAGIC, "format_version": format_version, "digest": digest})
    return head[:-1] + b',"payload":' + payload + b"}"


def serialize(c: KnowledgeDNA) -> bytes:
    _require_valid(c)
    return envelope_bytes(_dumps(payload_document(c)), c.format_version)


def fingerprint(c: KnowledgeDNA) -> str:
    """Content identity: ignores the container id and creation stamp."""
    _require_valid(c)
    return hashlib.sha256(_dumps(payload_document(c, for_fingerprint=True))).hexdigest()


# --------------------------------------------------------------------------
# reading
# --------------------------------------------------------------------------

def _obj(v, keys, path):
    if not isinstance(v, dict):
        raise SchemaError(path, "expected an object")
    for k in v:
        if k not in keys:
            raise SchemaError(f"{path}.{k}", "unknown key")
    for k in keys:
        if k not in v:
            raise SchemaError(f"{path}.{k}", "missing key")
    return v


def _list(v, path):
    if not isinstance(v, list):
        raise SchemaError(path, "expected an array")
    return v


def _int(v, path):
    if isinstance(v, bool) or not isinstance(v, int):
        raise SchemaError(path, "expected an integer")
    return v


def _str(v, path):
    if not isinstance(v, str):
        raise SchemaError(path, "expected a string")
    return v


def _num(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise SchemaError(path, "expected a finite number")
    return float(v)


def _matrix(v, path):
    try:
        arr = np.array(v, dtype=np.float64)
    except (TypeError, ValueError):
        raise SchemaError(path, "expected a rectangular numeric array") from None
    return arr


def _network(v, path) -> NetworkMeta:
    _obj(v, ("name", "framework", "layer_sizes", "activations", "weights", "biases"), path)
    sizes = [_int(n, f"{path}.layer_sizes[{i}]") for i, n in enumerate(_list(v["layer_sizes"], path + ".layer_sizes"))]
    acts = [_str(a, f"{path}.activations[{i}]") for i, a in enumerate(_list(v["activations"], path + ".activations"))]
    ws = [_matrix(w, f"{path}.weights[{i}]") for i, w in enumerate(_list(v["weights"], path + ".weights"))]
    bs = [_matrix(b, f"{path}.biases[{i}]") for i, b in enumerate(_list(v["biases"], path + ".biases"))]
    try:
        spec = NetworkSpec(tuple(sizes), tuple(acts), tuple(ws), tuple(bs))
    except BadShape as exc:
        raise SchemaError(path, str(exc)) from None
    return NetworkMeta(_str(v["name"], path + ".name"), spec, _str(v["framework"], path + ".framework"))


def _container(doc, format_version: int) -> KnowledgeDNA:
    _obj(doc, ("container_id", "metadata", "states", "actions", "experiences", "networks"), "$.payload")
    md = doc["metadata"]
    if not isinstance(md, dict) or not all(isinstance(x, str) for x in md.values()):
        raise SchemaError("$.payload.metadata", "expected an object of strings")
    states = []
    for i, s in enumerate(_list(doc["states"], "$.payload.states")):
        p = f"$.payload.states[{i}]"
        _obj(s, ("id", "label", "available_actions", "terminal"), p)
        if not isinstance(s["terminal"], bool):
            raise SchemaError(p + ".terminal", "expected a boolean")
        avail = [_int(a, f"{p}.available_actions[{j}]") for j, a in enumerate(_list(s["available_actions"], p + ".available_actions"))]
        states.append(StateDef(_int(s["id"], p + ".id"), _str(s["label"], p + ".label"), tuple(avail), s["terminal"]))
    actions = []
    for i, a in enumerate(_list(doc["actions"], "$.payload.actions")):
        p = f"$.payload.actions[{i}]"
        _obj(a, ("id", "label"), p)
        actions.append(ActionDef(_int(a["id"], p + ".id"), _str(a["label"], p + ".label")))
    experiences = []
    for i, e in enumerate(_list(doc["experiences"], "$.payload.experiences")):
        p = f"$.payload.experiences[{i}]"
        _obj(e, ("source", "episode", "step", "s", "a", "r", "s_next"), p)
        experiences.append(
            Experience(
                s=_int(e["s"], p + ".s"),
                a=_int(e["a"], p + ".a"),
                r=_num(e["r"], p + ".r"),
                s_next=_int(e["s_next"], p + ".s_next"),
                episode=_int(e["episode"], p + ".episode"),
                step=_int(e["step"], p + ".step"),
                source=_str(e["source"], p + ".source"),
            )
        )
    networks = [_network(n, f"$.payload.networks[{i}]") for i, n in enumerate(_list(doc["networks"], "$.payload.networks"))]
    return KnowledgeDNA(
        container_id=_str(doc["container_id"], "$.payload.container_id"),
        metadata=md,
        states=tuple(states),
        actions=tuple(actions),
        experiences=tuple(experiences),
        networks=tuple(networks),
        format_version=format_version,
    )


def deserialize(b: bytes, *, check: bool = True) -> KnowledgeDNA:
    """Parse an envelope.

    The digest is verified against the raw payload bytes before the payload
    is interpreted. With ``check=False`` invariant violations are not raised,
    so callers can report them (``validate`` the result themselves).
    """
    m = _ENVELOPE.match(b)
    tail = _TAIL.search(b)
    if m is None or tail is None or tail.start() < m.end():
        raise ParseError("not an NKDNA envelope")
    if m["magic"].decode("utf-8", "replace") != MAGIC:
        raise ParseError(f"bad magic {m['magic']!r}")
    version = int(m["version"])
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"format_version {version} is not supported (expected {FORMAT_VERSION})")
    payload = b[m.end() : tail.start()]
    if hashlib.sha256(payload).hexdigest() != m["digest"].decode("ascii", "replace"):
        raise DigestMismatch("payload digest does not match")
    try:
        doc = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"payload is not valid JSON: {exc}") from exc
    c = _container(doc, version)
    if check:
        _require_valid(c)
    return c


def save(c: KnowledgeDNA, path) -> None:
    with open(path, "wb") as f:
        f.write(serialize(c))


def load(path, *, check: bool = True) -> KnowledgeDNA:
    with open(path, "rb") as f:
        return deserialize(f.read(), check=check)
