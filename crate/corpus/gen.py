#!/usr/bin/env python3
"""Regenerates the golden corpus with nothing but json and hashlib."""

import hashlib
import json
import pathlib

ROOT = pathlib.Path(__file__).resolve().parent
ZERO = "0" * 64
SEED = 7


def canon(v):
    return json.dumps(v, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode()


def sha(b):
    return hashlib.sha256(b).hexdigest()


def event_id(seq):
    return sha(f"adsim/event-id/{SEED}/{seq}".encode())[:32]


def event(seq, trade, kind, version, date, payload):
    e = {
        "eventId": event_id(seq),
        "tradeId": trade,
        "eventType": kind,
        "version": str(version),
        "globalSeq": str(seq),
        "effectiveDate": date,
        "payload": payload,
    }
    if version > 1:
        e["previousEventId"] = PREV[trade]
    PREV[trade] = e["eventId"]
    return e


PREV = {}
EVENTS = [
    event(1, "T000001", "Execution", 1, "2021-03-15", {
        "quantity": "100", "price": "101.25", "currency": "USD",
        "productRef": "IRS-5Y", "buyerParty": "BD-A", "sellerParty": "BD-B"}),
    event(2, "T000002", "Execution", 1, "2021-03-15", {
        "quantity": "2500.5", "price": "99", "currency": "EUR",
        "productRef": "CDS-IG", "buyerParty": "BD-C", "sellerParty": "BD-A"}),
    event(3, "T000001", "Confirmation", 2, "2021-03-15", {}),
    event(4, "T000001", "Enrichment", 3, "2021-03-16", {"bookingDesk": "rates-ny"}),
    event(5, "T000001", "CollateralMargin", 4, "2021-03-16", {"collateralAmount": "250.75", "currency": "USD"}),
    event(6, "T000002", "Termination", 2, "2021-03-16", {"terminationReason": "compression"}),
    event(7, "T000001", "CollateralMargin", 5, "2021-03-17", {"collateralAmount": "49.25", "currency": "USD"}),
    event(8, "T000001", "Novation", 6, "2021-03-17", {"oldParty": "BD-B", "newParty": "BD-D"}),
    event(9, "T000001", "Settlement", 7, "2021-03-17", {"settlementDate": "2021-03-19"}),
]

EXPECTED_STATE = {
    "T000001": {
        "tradeId": "T000001", "status": "Settled", "version": "7", "lastEventId": event_id(9),
        "economics": {
            "quantity": "100", "price": "101.25", "currency": "USD", "productRef": "IRS-5Y",
            "buyerParty": "BD-A", "sellerParty": "BD-D", "tradeDate": "2021-03-15",
            "collateralPosted": "300", "collateralCurrency": "USD", "bookingDesk": "rates-ny",
            "settlementDate": "2021-03-19",
        },
    },
    "T000002": {
        "tradeId": "T000002", "status": "Terminated", "version": "2", "lastEventId": event_id(6),
        "economics": {
            "quantity": "2500.5", "price": "99", "currency": "EUR", "productRef": "CDS-IG",
            "buyerParty": "BD-C", "sellerParty": "BD-A", "tradeDate": "2021-03-15",
            "collateralPosted": "0", "terminationReason": "compression",
        },
    },
}


def write(path, data):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)


def main():
    ev_dir = ROOT / "events"
    log = b""
    for e in EVENTS:
        b = canon(e)
        name = f"{int(e['globalSeq']):02d}-{e['eventType'].lower()}"
        write(ev_dir / f"{name}.json", b)
        write(ev_dir / f"{name}.sha256", (sha(b) + "\n").encode())
        log += b + b"\n"
    write(ev_dir / "log.jsonl", log)
    write(ev_dir / "expected-state.json", canon(EXPECTED_STATE))
    write(ev_dir / "expected-state.sha256", (sha(canon(EXPECTED_STATE)) + "\n").encode())

    # Each must be rejected by the strict canonical parser.
    base = EVENTS[2]
    invalid = {
        "whitespace": json.dumps(base, sort_keys=True).encode(),
        "unsorted-keys": json.dumps(base, separators=(",", ":")).encode(),
        "numeric-version": canon({**base, "version": 2}),
        "leading-zero-seq": canon({**base, "globalSeq": "03"}),
        "unknown-field": canon({**base, "note": "x"}),
        "uppercase-event-id": canon({**base, "eventId": base["eventId"].upper()}),
        "genesis-with-previous": canon({**EVENTS[0], "previousEventId": base["eventId"]}),
        "bad-date": canon({**base, "effectiveDate": "2021-02-30"}),
        "float-amount": canon({**EVENTS[4], "payload": {"collateralAmount": "1e3", "currency": "USD"}}),
        "missing-payload-field": canon({**EVENTS[8], "payload": {}}),
    }
    for name, data in invalid.items():
        write(ev_dir / "invalid" / f"{name}.json", data)

    blk_dir = ROOT / "blocks"
    chain = []
    prev = ZERO
    for index, events in enumerate([[], EVENTS[:5], EVENTS[5:]]):
        pre = canon({"index": str(index), "prevHash": prev, "eventHashes": [sha(canon(e)) for e in events]})
        h = sha(pre)
        write(blk_dir / f"block-{index}.preimage", pre)
        chain.append(canon({"index": str(index), "prevHash": prev, "events": events, "blockHash": h}))
        prev = h
    write(blk_dir / "chain.jsonl", b"".join(line + b"\n" for line in chain))
    write(blk_dir / "head.sha256", (prev + "\n").encode())


if __name__ == "__main__":
    main()
