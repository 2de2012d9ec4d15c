import dataclasses
import json
import subprocess
import sys

import numpy as np
import pytest

from helpers import maze_container, random_container
from nkdna.container import Experience, NetworkMeta, record_experience
from nkdna.errors import DigestMismatch, InvalidContainer, ParseError, SchemaError, UnsupportedVersion
from nkdna.persistence import (
    deserialize,
    envelope_bytes,
    fingerprint,
    payload_document,
    serialize,
)


def _split(blob):
    head = blob.index(b'"payload":') + len(b'"payload":')
    return head, blob[head:-1]


def test_round_trip_and_determinism(trained):
    blob = serialize(trained)
    assert serialize(trained) == blob
    back = deserialize(blob)
    assert back == trained
    for w0, w1 in zip(trained.network("q-net").spec.weights, back.network("q-net").spec.weights):
        assert w0.tobytes() == w1.tobytes()


def test_envelope_layout(trained):
    blob = serialize(trained)
    assert blob.startswith(b'{"magic":"NKDNA","format_version":1,"digest":"')
    assert b" " not in blob.replace(b"block-", b"").split(b'"metadata"')[0]
    doc = json.loads(blob)
    assert list(doc) == ["magic", "format_version", "digest", "payload"]
    assert list(doc["payload"]) == ["container_id", "metadata", "states", "actions", "experiences", "networks"]
    assert list(doc["payload"]["experiences"][0]) == ["source", "episode", "step", "s", "a", "r", "s_next"]
    assert list(doc["payload"]["networks"][0]) == ["name", "framework", "layer_sizes", "activations", "weights", "biases"]
    import hashlib

    _, payload = _split(blob)
    assert doc["digest"] == hashlib.sha256(payload).hexdigest()


def test_collections_are_sorted_on_write():
    rng = np.random.default_rng(4)
    c = random_container(rng, n_exp=15, n_nets=2)
    shuffled = dataclasses.replace(c, experiences=c.experiences[::-1], networks=c.networks[::-1])
    assert serialize(shuffled) == serialize(dataclasses.replace(shuffled, experiences=c.experiences, networks=c.networks))


def test_byte_identical_across_processes(trained, tmp_path):
    path = tmp_path / "x.nkdna"
    path.write_bytes(serialize(trained))
    code = (
        "import sys; from nkdna.persistence import load, serialize;"
        "sys.stdout.buffer.write(serialize(load(sys.argv[1])))"
    )
    out = subprocess.run([sys.executable, "-c", code, str(path)], capture_output=True, check=True).stdout
    assert out == path.read_bytes()


def test_single_byte_mutations_are_detected(trained):
    blob = serialize(trained)
    start, payload = _split(blob)
    rng = np.random.default_rng(0)
    for i in rng.choice(len(payload), size=200, replace=False):
        mutated = bytearray(blob)
        mutated[start + i] ^= 0x01
        with pytest.raises(DigestMismatch):
            deserialize(bytes(mutated))


def test_unsupported_version():
    c = maze_container()
    _, payload = _split(serialize(c))
    with pytest.raises(UnsupportedVersion):
        deserialize(envelope_bytes(payload, format_version=2))


def test_not_an_envelope():
    for junk in (b"", b"hello", b'{"magic":"OTHER","format_version":1,"digest":"00","payload":{}}', b"[1,2]"):
        with pytest.raises(ParseError):
            deserialize(junk)


def test_invalid_container_refused_both_ways():
    c = record_experience(maze_container(), Experience(1, 2, 0.0, 2))
    broken = dataclasses.replace(c, actions=c.actions[1:])
    with pytest.raises(InvalidContainer):
        serialize(broken)
    doc = payload_document(broken)
    payload = json.dumps(doc, separators=(",", ":")).encode()
    with pytest.raises(InvalidContainer) as info:
        deserialize(envelope_bytes(payload))
    assert any(v.kind == "DanglingAction" for v in info.value.violations)
    assert deserialize(envelope_bytes(payload), check=False) == broken


def test_payload_schema_is_strict():
    doc = payload_document(maze_container())
    doc["extra"] = 1
    with pytest.raises(SchemaError):
        deserialize(envelope_bytes(json.dumps(doc).encode()))


def test_non_canonical_spelling_still_loads(trained):
    # another writer may spell floats differently; values must still agree
    doc = payload_document(trained)
    payload = json.dumps(doc, indent=1).replace('"r": 0.0', '"r": 0').encode()
    assert deserialize(envelope_bytes(payload)) == trained


def test_foreign_framework_preserved():
    c = maze_container()
    from nkdna.neural import init_network

    c = dataclasses.replace(c, networks=(NetworkMeta("q-net", init_network([8, 8], ["linear"], 0), "other/v0"),))
    assert deserialize(serialize(c)).network("q-net").framework == "other/v0"


def test_fingerprint(trained):
    fp = fingerprint(trained)
    assert fingerprint(trained) == fp and len(fp) == 64
    renamed = dataclasses.replace(trained, container_id="something-else")
    assert fingerprint(renamed) == fp
    assert fingerprint(trained.with_metadata(**{"created-at": "1999-01-01T00:00:00+00:00"})) == fp
    extra = record_experience(trained, Experience(1, 2, 0.0, 2, episode=9999, source=trained.container_id))
    assert fingerprint(extra) != fp


def test_round_trip_random_containers():
    rng = np.random.default_rng(77)
    for _ in range(50):
        c = random_container(rng)
        blob = serialize(c)
        assert deserialize(blob) == c
        assert serialize(c) == blob
