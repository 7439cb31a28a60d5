#!/usr/bin/env python3
"""Re-derive the golden vectors from their inputs with an independent
secp256k1/SHA-256 stack (pyca/cryptography + hashlib) and compare them
byte for byte with the checked-in files.

Usage: scripts/rederive_golden.py [GOLDEN_DIR]
Exit status 0 when every block and record matches.
"""

import hashlib
import json
import struct
import sys
from pathlib import Path

from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec, utils
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

N = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def key(seed_hex: str) -> ec.EllipticCurvePrivateKey:
    scalar = int(seed_hex, 16) % N
    return ec.derive_private_key(scalar, ec.SECP256K1())


def pub33(k: ec.EllipticCurvePrivateKey) -> bytes:
    return k.public_key().public_bytes(Encoding.X962, PublicFormat.CompressedPoint)


def sign(k: ec.EllipticCurvePrivateKey, digest: bytes) -> bytes:
    der = k.sign(
        digest,
        ec.ECDSA(utils.Prehashed(hashes.SHA256()), deterministic_signing=True),
    )
    r, s = utils.decode_dss_signature(der)
    if s > N // 2:
        s = N - s
    return r.to_bytes(32, "big") + s.to_bytes(32, "big")


def canon(value) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def build_records(inputs):
    records, post_ids = [], []
    for item in inputs["records"]:
        k = key(item["author_seed"])
        pub = pub33(k)
        kind = item["kind"]
        if kind == "post":
            content = item["content"]
            t = item["client_time"]
            pid = sha256(pub + content.encode("utf-8") + struct.pack(">Q", t))
            reply = item["reply_to"]
            body = {
                "client_time": t,
                "content": content,
                "post_id": pid.hex(),
                "reply_to": None if reply is None else post_ids[reply].hex(),
            }
        elif kind == "delete_marker":
            pid = None
            body = {"target": post_ids[item["target"]].hex()}
        elif kind == "identity":
            pid = None
            body = {"name": item["name"], "profile": item["profile"]}
        else:
            raise ValueError(f"unknown kind {kind}")
        post_ids.append(pid)
        digest = sha256(canon({"body": body, "kind": kind}).encode("utf-8"))
        record = {
            "author_pub": pub.hex(),
            "author_sig": sign(k, digest).hex(),
            "body": body,
            "kind": kind,
        }
        records.append(canon(record))
    return records


def seal(owner, chain_id, height, time, prev, payload):
    canonical = (
        b"\x01"
        + chain_id
        + struct.pack(">QQ", height, time)
        + prev
        + struct.pack(">I", len(payload))
        + payload
    )
    digest = sha256(canonical)
    return canonical + sign(owner, digest), digest


def build_blocks(inputs, records):
    owner = key(inputs["owner_seed"])
    pub = pub33(owner)
    if pub.hex() != inputs["owner_pub"]:
        raise SystemExit(f"owner key mismatch: {pub.hex()}")
    chain_id = sha256(pub)
    genesis_payload = pub + inputs["genesis_label"].encode("utf-8")
    block, prev = seal(owner, chain_id, 0, inputs["genesis_time"], bytes(32), genesis_payload)
    out = [block.hex()]
    for height, spec in enumerate(inputs["blocks"], start=1):
        payload = ("[" + ",".join(records[i] for i in spec["records"]) + "]").encode("utf-8")
        block, prev = seal(owner, chain_id, height, spec["time"], prev, payload)
        out.append(block.hex())
    return out


def main() -> int:
    root = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "crates/core/tests/golden"
    inputs = json.loads((root / "inputs.json").read_text(encoding="utf-8"))
    want_records = (root / "records.jsonl").read_text(encoding="utf-8").splitlines()
    want_blocks = [
        line.strip()
        for line in (root / "blocks.hex").read_text(encoding="utf-8").splitlines()
        if line.strip() and not line.startswith("#")
    ]
    records = build_records(inputs)
    blocks = build_blocks(inputs, records)
    bad = 0
    for i, (got, want) in enumerate(zip(records, want_records)):
        if got != want:
            bad += 1
            print(f"record {i} differs\n  derived:   {got}\n  checked-in: {want}")
    for h, (got, want) in enumerate(zip(blocks, want_blocks)):
        if got != want:
            bad += 1
            print(f"block {h} differs")
    if len(records) != len(want_records) or len(blocks) != len(want_blocks):
        bad += 1
        print("vector counts differ")
    print(f"{len(records)} records, {len(blocks)} blocks, {bad} mismatches")
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
