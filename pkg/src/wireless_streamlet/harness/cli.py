"""Command-line entry point: ``ws-harness run|bounds|encode|decode|verify``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

import yaml

from ..storage.coding import (CodingParams, DecodeFailure, EncodedSymbol, decode, encode,
                              payload_id_for, split_payload)
from ..storage.commitment import CommitmentBundle, commit, verify_symbol
from .config import ConfigError, from_dict
from .experiments import run_experiment
from .results import ResultTable, emit

BUNDLE_NAME = "commitment.bin"
META_NAME = "payload.json"


def _write_outputs(table: ResultTable, experiment: str, seed: int, out_dir: Optional[str],
                   fmt: str) -> None:
    formats = ["csv", "json"] if fmt == "both" else [fmt]
    if out_dir is None:
        for f in formats:
            sys.stdout.write(table.to_csv() if f == "csv" else table.to_json())
        return
    for f in formats:
        path = emit(table, f, Path(out_dir) / f"{experiment}_seed{seed}.{f}")
        print(f"wrote {path}", file=sys.stderr)


def cmd_run(args) -> int:
    try:
        raw = yaml.safe_load(Path(args.config).read_text(encoding="utf-8")) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {args.config}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    if args.allow_oracle:
        el = raw.setdefault("election", {})
        if isinstance(el, dict):
            el["allow_oracle"] = True
    cfg = from_dict(raw, seed=args.seed, runs=args.runs, epochs=args.epochs)
    table = run_experiment(cfg)
    _write_outputs(table, cfg.experiment, cfg.seed, args.out_dir, args.format)
    return 0


def cmd_bounds(args) -> int:
    data = {
        "experiment": "E6",
        "n": args.n,
        "k_tx": args.k_tx[0],
        "analysis": {
            "q": args.q,
            "p_h": args.p_h,
            "k_tx": args.k_tx,
            "pi": args.pi,
            "k_range": args.k_range,
        },
    }
    if args.f is not None:
        data["f"] = args.f
    cfg = from_dict(data, seed=args.seed, runs=1)
    table = run_experiment(cfg)
    _write_outputs(table, "E6", cfg.seed, args.out_dir, args.format)
    return 0


def cmd_encode(args) -> int:
    payload = Path(args.payload).read_bytes()
    source = split_payload(payload, args.b_sym)
    k = len(source)
    m = args.m if args.m else CodingParams(args.b_sym, k, args.epsilon, m=10 ** 6, s=1, f_s=0).k_req
    params = CodingParams(args.b_sym, k, args.epsilon, m, s=m, f_s=0)
    pid = payload_id_for(payload, args.b_sym)
    symbols = encode(source, params.m, pid)
    bundle = commit(pid, symbols)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for s in symbols:
        (out / f"symbol_{s.index:05d}.wss").write_bytes(s.to_bytes())
    (out / BUNDLE_NAME).write_bytes(bundle.to_bytes())
    meta = {"payload_id": pid.hex(), "original_len": len(payload), "b_sym": args.b_sym,
            "k": k, "epsilon": args.epsilon, "m": params.m}
    (out / META_NAME).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"encoded {len(payload)} bytes into {params.m} symbols (k={k}); root {bundle.root.hex()}")
    return 0


def _load_dir(path: str):
    d = Path(path)
    bundle = CommitmentBundle.from_bytes((d / BUNDLE_NAME).read_bytes())
    meta = json.loads((d / META_NAME).read_text(encoding="utf-8"))
    symbols = []
    for f in sorted(d.glob("symbol_*.wss")):
        try:
            symbols.append((f, EncodedSymbol.from_bytes(f.read_bytes())))
        except ValueError as exc:
            symbols.append((f, exc))
    return bundle, meta, symbols


def _check(bundle: CommitmentBundle, sym) -> bool:
    if isinstance(sym, Exception) or sym.payload_id != bundle.payload_id:
        return False
    if not 0 <= sym.index < bundle.m:
        return False
    return verify_symbol(bundle.root, bundle.payload_id, sym.index, sym.data, bundle.proof(sym.index))


def cmd_verify(args) -> int:
    bundle, _, symbols = _load_dir(args.dir)
    bad = 0
    for f, sym in symbols:
        ok = _check(bundle, sym)
        bad += not ok
        print(f"{f.name}: {'ok' if ok else 'REJECTED'}")
    return 1 if bad else 0


def cmd_decode(args) -> int:
    bundle, meta, symbols = _load_dir(args.dir)
    good = [s for _, s in symbols if _check(bundle, s)]
    params = CodingParams(meta["b_sym"], meta["k"], meta["epsilon"], meta["m"], s=meta["m"], f_s=0)
    try:
        payload = decode(good, params, meta["original_len"])
    except DecodeFailure as exc:
        print(f"decode failed: {exc}", file=sys.stderr)
        return 1
    if payload_id_for(payload, meta["b_sym"]) != bundle.payload_id:
        print("decoded payload does not match its payload id", file=sys.stderr)
        return 1
    Path(args.out).write_bytes(payload)
    print(f"decoded {len(payload)} bytes from {len(good)} verified symbols")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ws-harness", description="Wireless Streamlet scenario harness")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="base seed (run r uses seed + r)")
        p.add_argument("--out-dir", default=None, help="write result files here instead of stdout")
        p.add_argument("--format", choices=["csv", "json", "both"], default="csv")

    p = sub.add_parser("run", help="run the experiment described by a config file")
    p.add_argument("config")
    common(p)
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--allow-oracle", action="store_true",
                   help="permit the full-knowledge oracle leader baseline")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bounds", help="closed-form liveness numbers")
    common(p)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--f", type=int, default=None)
    p.add_argument("--p-h", type=float, nargs="+", default=[0.95])
    p.add_argument("--k-tx", type=int, nargs="+", default=[2])
    p.add_argument("--pi", type=float, default=0.7)
    p.add_argument("--q", type=float, nargs="+", default=[0.5, 0.9, 1.0])
    p.add_argument("--k-range", type=int, nargs=2, default=[1, 8])
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("encode", help="split, encode and commit a payload file")
    p.add_argument("payload")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--b-sym", type=int, default=200_000)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--m", type=int, default=None, help="encoded symbols (default k_req)")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="verify symbols in a directory and rebuild the payload")
    p.add_argument("dir")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("verify", help="check every symbol in a directory against its commitment")
    p.add_argument("dir")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
