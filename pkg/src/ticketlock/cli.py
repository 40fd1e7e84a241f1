"""Command-line front end: every pipeline behind one binary.

Each run parses flags, executes one subcommand, prints machine-readable
data on stdout (logs go to stderr), and writes a RunManifest capturing the
argv, seeds, input/output digests, and tool version so the run can be
replayed bit-exactly with the `replay` subcommand.

Exit codes: 0 success, 1 verification failure (or failed decode/replay),
2 usage or IO error.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import shlex
import subprocess
import sys
from pathlib import Path

import numpy as np

from .attacks import (
    AttackContext,
    AttackError,
    attack_addon,
    attack_fake1,
    attack_fake2,
    attack_fake3,
    attack_finetune,
    attack_prune,
    defend_addon,
    min_surviving_magnitude,
)
from .bundle import BundleError, load_bundle, save_bundle
from .codec import CapacityError, CodecError, decode, encode, export_pbm, import_pbm
from .data import make_trigger_set, parse_data_spec
from .embed import EmbedRecord, blind_scan, embed, extract, geometry_from_spec
from .imp import PruneSchedule, imp_find_extreme_ticket
from .keysplit import budget_to_count, split, split_models
from .model import merge, parse_arch
from .scoring import SCORERS, score_model
from .train import TrainConfig
from .verify import SCHEMES, run_scheme, utc_now

TOOL = "ticketlock"
VERSION = "0.1.0"
MANIFEST_SCHEMA = 1

ATTACK_COLUMNS = (
    "kind", "rate", "seed", "acc_before", "acc_after",
    "trigger_before", "trigger_after", "decode_ok", "match_ok", "spar_after",
)
VERIFY_COLUMNS = (
    "scheme", "verdict", "fidelity_gap", "fidelity_pass",
    "whitebox_decoded", "whitebox_pass", "trigger_acc", "blackbox_status",
)


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _sha256_text(s: str) -> str:
    return hashlib.sha256(s.encode("utf-8")).hexdigest()


class RunContext:
    """Tracks what one CLI invocation read and wrote."""

    def __init__(self, subcommand: str, argv: list[str]):
        self.subcommand = subcommand
        self.argv = list(argv)
        self.inputs: list[str] = []
        self.outputs: list[str] = []

    def add_input(self, path) -> None:
        self.inputs.append(str(path))

    def add_output(self, path) -> None:
        self.outputs.append(str(path))

    def manifest(self, args, stdout_text: str, exit_code: int) -> dict:
        seeds = {
            k: v for k, v in vars(args).items()
            if "seed" in k and isinstance(v, int) and not k.startswith("_")
        }
        return {
            "schema_version": MANIFEST_SCHEMA,
            "type": "run_manifest",
            "tool": TOOL,
            "version": VERSION,
            "subcommand": self.subcommand,
            "argv": self.argv,
            "seeds": seeds,
            "timestamp": getattr(args, "_timestamp", None),
            "inputs": {p: _sha256_file(p) for p in self.inputs},
            "outputs": {p: _sha256_file(p) for p in self.outputs},
            "stdout_sha256": _sha256_text(stdout_text),
            "exit_code": exit_code,
        }

    def manifest_path(self, args) -> str | None:
        explicit = getattr(args, "manifest", None)
        if explicit:
            return explicit
        if self.outputs:
            return self.outputs[0] + ".run.json"
        return None


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split(",") if t.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split(",") if t.strip())


def _emit(out, obj) -> None:
    out.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        lr=args.lr,
        milestones=_ints(args.milestones) if isinstance(args.milestones, str) else args.milestones,
        batch_size=args.batch_size,
        momentum=args.momentum,
        weight_decay=args.weight_decay,
        seed=args.seed,
        rewind_epoch=args.rewind_epoch,
    )


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--milestones", default="20,32")
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--rewind-epoch", type=int, default=3)


# ---------------------------------------------------------------- commands


def cmd_find_ticket(args, run: RunContext, out) -> int:
    data = parse_data_spec(args.data)
    arch = parse_arch(args.arch)
    cfg = _train_config(args)
    sched = PruneSchedule(
        ladder=_floats(args.ladder),
        round_limits=_ints(args.round_limits) if args.round_limits else None,
        match_margin=args.match_margin,
        probe_ratio=args.probe_ratio,
        max_rounds=args.max_rounds,
    )
    result = imp_find_extreme_ticket(arch, data, cfg, sched)
    save_bundle(result.model, args.out)
    run.add_output(args.out)
    prov = result.provenance
    _emit(out, {
        "out": args.out,
        "rounds": prov.spec_string,
        "dense_acc": prov.dense_acc,
        "ticket_acc": prov.ticket_acc,
        "spar": prov.sparsity,
        "probe_acc": prov.probe_acc,
        "is_extreme": prov.is_extreme,
    })
    return 0


def cmd_retrain(args, run: RunContext, out) -> int:
    from .imp import retrain_ticket

    model = load_bundle(args.inp)
    run.add_input(args.inp)
    data = parse_data_spec(args.data)
    cfg = _train_config(args)
    trigger = None
    if args.trigger_seed is not None:
        trigger = make_trigger_set(
            args.trigger_seed, model.arch.n_classes, model.arch.input_shape,
            size=args.trigger_size,
        )
    result = retrain_ticket(model, data, cfg, trigger=trigger)
    save_bundle(result.model, args.out)
    run.add_output(args.out)
    _emit(out, {
        "out": args.out,
        "test_acc": result.test_acc,
        "train_acc": result.train_acc,
        "trigger_acc": result.trigger_acc,
        "spar": result.model.sparsity().spar,
    })
    return 0


def cmd_score(args, run: RunContext, out) -> int:
    model = load_bundle(args.inp)
    run.add_input(args.inp)
    scores = score_model(model, args.method, seed=args.seed)
    arrays = {f"layer{i}": s for i, s in enumerate(scores.scores)}
    with open(args.out, "wb") as fh:
        np.savez(fh, method=np.array(scores.method), **arrays)
    run.add_output(args.out)
    _emit(out, {"method": scores.method, "layers": len(scores.scores), "out": args.out})
    return 0


def cmd_split(args, run: RunContext, out) -> int:
    model = load_bundle(args.inp)
    run.add_input(args.inp)
    scores = score_model(model, args.method, seed=args.seed)
    nnz = sum(int(m.nnz) for m in model.masks)
    n = budget_to_count(args.budget, nnz)
    ks = split(model, scores, n)
    key_model, locked_model = split_models(model, ks)
    save_bundle(key_model, args.key)
    save_bundle(locked_model, args.locked)
    run.add_output(args.key)
    run.add_output(args.locked)
    _emit(out, {
        "method": ks.method if ks.method else args.method,
        "budget": args.budget,
        "n": ks.n,
        "threshold": None if ks.threshold == float("-inf") else ks.threshold,
        "realized": ks.realized,
        "relative_sparsity": ks.relative_sparsity(),
    })
    return 0


def cmd_merge(args, run: RunContext, out) -> int:
    key_model = load_bundle(args.key)
    locked_model = load_bundle(args.locked)
    run.add_input(args.key)
    run.add_input(args.locked)
    merged = merge(key_model, locked_model)
    save_bundle(merged, args.out)
    run.add_output(args.out)
    _emit(out, {"out": args.out, "spar": merged.sparsity().spar})
    return 0


def cmd_encode(args, run: RunContext, out) -> int:
    sig = encode(args.text, args.profile, args.version)
    export_pbm(sig, args.out, with_patterns=args.with_patterns)
    run.add_output(args.out)
    _emit(out, {
        "out": args.out,
        "profile": sig.geometry["profile"],
        "version": sig.geometry["version"],
        "size": sig.geometry["size"],
    })
    return 0


def cmd_decode(args, run: RunContext, out) -> int:
    sig = import_pbm(args.inp, args.profile)
    run.add_input(args.inp)
    result = decode(sig)
    if not result.ok:
        print(f"decode failed: {result.reason}", file=sys.stderr)
        return 1
    out.write(result.text + "\n")
    return 0


def cmd_embed(args, run: RunContext, out) -> int:
    model = load_bundle(args.inp)
    run.add_input(args.inp)
    sig = encode(args.text, args.profile, args.version)
    embedded, record = embed(model, sig, seed=args.seed)
    save_bundle(embedded, args.out)
    record.save(args.record)
    run.add_output(args.out)
    run.add_output(args.record)
    _emit(out, {
        "out": args.out,
        "record": args.record,
        "layer": record.layer,
        "offset": list(record.offset),
        "similarity": record.similarity,
        "bits_changed": record.bits_changed,
        "spar": embedded.sparsity().spar,
    })
    return 0


def cmd_extract(args, run: RunContext, out) -> int:
    model = load_bundle(args.inp)
    record = EmbedRecord.load(args.record)
    run.add_input(args.inp)
    run.add_input(args.record)
    result = decode(extract(model, record))
    if not result.ok:
        print(f"extract failed: {result.reason}", file=sys.stderr)
        return 1
    out.write(result.text + "\n")
    return 0


def cmd_scan(args, run: RunContext, out) -> int:
    model = load_bundle(args.inp)
    run.add_input(args.inp)
    geometry = geometry_from_spec(args.geometry, args.profile)
    hits = blind_scan(model, geometry)
    _emit(out, [
        {
            "layer": h.layer,
            "offset": list(h.offset),
            "text": h.result.text,
            "symbol_errors": h.result.symbol_errors,
            "bit_errors": h.result.bit_errors,
        }
        for h in hits
    ])
    return 0


def _attack_context(args, model) -> AttackContext:
    data = parse_data_spec(args.data) if args.data else None
    trigger = None
    if args.trigger_seed is not None:
        trigger = make_trigger_set(
            args.trigger_seed, model.arch.n_classes, model.arch.input_shape,
            size=args.trigger_size,
        )
    record = EmbedRecord.load(args.record) if args.record else None
    return AttackContext(
        data=data,
        trigger=trigger,
        record=record,
        owner_text=args.text,
        reference_acc=args.target_acc,
        eps_f=args.eps_f,
    )


def _run_one_attack(args, model, rate: float, ctx: AttackContext):
    defend_t = args.defend_t
    if defend_t is None and args.t_from:
        defend_t = min_surviving_magnitude(load_bundle(args.t_from))
    kind = args.kind
    if kind in ("prune_omp", "prune_random"):
        outcome = attack_prune(model, kind.split("_")[1], rate, seed=args.seed, ctx=ctx)
    elif kind == "finetune":
        if not args.data2:
            raise AttackError("finetune attack needs --data2 <gen:seed>")
        outcome = attack_finetune(model, parse_data_spec(args.data2), _train_config(args), ctx=ctx)
    elif kind == "addon":
        outcome = attack_addon(model, rate, args.noise, seed=args.seed, ctx=ctx, defend_t=defend_t)
    elif kind == "fake1":
        if not args.data:
            raise AttackError("fake1 needs --data for retraining")
        outcome = attack_fake1(model, rate, args.seed, parse_data_spec(args.data),
                               _train_config(args), ctx=ctx)
    elif kind == "fake2":
        outcome = attack_fake2(model, rate, args.noise, seed=args.seed, ctx=ctx, defend_t=defend_t)
    elif kind == "fake3":
        if args.new_text is None:
            raise AttackError("fake3 needs --new-text for the replacement signature")
        new_sig = encode(args.new_text, args.profile, args.version)
        record = EmbedRecord.load(args.record) if (args.record and args.insider) else None
        outcome = attack_fake3(model, new_sig, args.noise, seed=args.seed, record=record, ctx=ctx)
    else:
        raise AttackError(f"unknown attack kind {kind!r}")
    if args.retrain and kind not in ("finetune", "fake1"):
        if ctx.data is None:
            raise AttackError("--retrain needs --data")
        from .train import train

        result = train(outcome.model, ctx.data, _train_config(args))
        outcome.extra["retrained_acc"] = result.test_acc
        outcome.model = result.model
    return outcome


def cmd_attack(args, run: RunContext, out) -> int:
    model = load_bundle(args.inp)
    run.add_input(args.inp)
    if args.record:
        run.add_input(args.record)
    ctx = _attack_context(args, model)
    rates = _floats(args.rates) if args.rates else [args.rate]

    outcomes = []
    if args.jobs > 1 and len(rates) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(lambda r: _run_one_attack(args, model, r, ctx), rates))
    else:
        outcomes = [_run_one_attack(args, model, r, ctx) for r in rates]

    if len(outcomes) == 1:
        payload = outcomes[0].to_dict()
    else:
        payload = {
            "schema_version": 1,
            "type": "attack_sweep",
            "columns": list(ATTACK_COLUMNS),
            "rows": [o.to_dict() for o in outcomes],
        }
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        run.add_output(args.report)
    if args.out:
        save_bundle(outcomes[-1].model, args.out)
        run.add_output(args.out)
    _emit(out, payload)
    return 0


def cmd_defend(args, run: RunContext, out) -> int:
    model = load_bundle(args.inp)
    run.add_input(args.inp)
    t = args.t
    if t is None and args.t_from:
        authentic = load_bundle(args.t_from)
        run.add_input(args.t_from)
        t = min_surviving_magnitude(authentic)
    if t is None:
        raise AttackError("defend needs --t or --t-from")
    defended = defend_addon(model, t)
    save_bundle(defended, args.out)
    run.add_output(args.out)
    _emit(out, {
        "t": t,
        "nnz_before": sum(int(m.nnz) for m in model.masks),
        "nnz_after": sum(int(m.nnz) for m in defended.masks),
        "out": args.out,
    })
    return 0


def command_predict_fn(cmd: str):
    """Opaque executable interface: stdin npy float32 batch, stdout labels."""
    argv = shlex.split(cmd)

    def predict(x: np.ndarray) -> np.ndarray:
        bio = io.BytesIO()
        np.save(bio, np.ascontiguousarray(x).astype(np.float32))
        proc = subprocess.run(argv, input=bio.getvalue(), stdout=subprocess.PIPE, check=True)
        return np.array([int(t) for t in proc.stdout.split()], dtype=np.int64)

    return predict


def cmd_verify(args, run: RunContext, out) -> int:
    scheme = args.scheme.lower()
    digests = {}
    kwargs: dict = {
        "eps_f": args.eps_f,
        "eps_s": args.eps_s,
        "timestamp": args._timestamp,
        "target_acc": args.target_acc,
    }
    if args.data:
        kwargs["data"] = parse_data_spec(args.data)

    if scheme == "v1":
        if not (args.key and args.locked):
            raise ValueError("scheme v1 requires --key and --locked")
        kwargs["key"] = load_bundle(args.key)
        kwargs["locked"] = load_bundle(args.locked)
        run.add_input(args.key)
        run.add_input(args.locked)
        digests = {"key": _sha256_file(args.key), "locked": _sha256_file(args.locked)}
    else:
        model = None
        if args.inp:
            model = load_bundle(args.inp)
            run.add_input(args.inp)
            digests["model"] = _sha256_file(args.inp)
        kwargs["model"] = model
        kwargs["expected"] = args.text
        if args.record:
            kwargs["record"] = EmbedRecord.load(args.record)
            run.add_input(args.record)
            digests["record"] = _sha256_file(args.record)
        elif args.geometry:
            kwargs["geometry"] = geometry_from_spec(args.geometry, args.profile)
        if scheme == "v3":
            if model is None and not args.predict_cmd:
                raise ValueError("scheme v3 requires --in or --predict-cmd")
            if model is not None:
                shape, classes = model.arch.input_shape, model.arch.n_classes
            else:
                if not args.arch:
                    raise ValueError("--predict-cmd mode requires --arch for trigger shapes")
                arch = parse_arch(args.arch)
                shape, classes = arch.input_shape, arch.n_classes
            kwargs["trigger"] = make_trigger_set(
                args.trigger_seed, classes, shape, size=args.trigger_size
            )
            if args.predict_cmd:
                kwargs["predict_fn"] = command_predict_fn(args.predict_cmd)

    report = run_scheme(scheme, input_digests=digests, **kwargs)
    if args.report:
        report.save(args.report)
        run.add_output(args.report)
    _emit(out, report.to_dict())
    return 0 if report.verdict == "pass" else 1


def _collect_reports(dirs: list[str]):
    attacks, verifications = [], []
    schema = None
    for d in dirs:
        root = Path(d)
        if not root.is_dir():
            raise OSError(f"not a directory: {d}")
        for f in sorted(root.glob("*.json")):
            try:
                doc = json.loads(f.read_text(encoding="utf-8"))
            except json.JSONDecodeError as e:
                raise ValueError(f"unreadable report {f}: {e}") from e
            if not isinstance(doc, dict):
                continue
            kind = doc.get("type")
            if kind in (None, "run_manifest"):
                continue
            rows = doc.get("rows", [doc]) if kind == "attack_sweep" else [doc]
            for row in rows:
                v = row.get("schema_version")
                if schema is None:
                    schema = v
                elif v != schema:
                    raise ValueError(
                        f"mixed report schema versions: {schema} vs {v} in {f}"
                    )
                if row.get("type") == "attack":
                    attacks.append(row)
                elif row.get("type") == "verification":
                    verifications.append(row)
    return attacks, verifications


def _verify_row(doc: dict) -> dict:
    fid = doc.get("fidelity") or {}
    wb = doc.get("whitebox") or {}
    bb = doc.get("blackbox") or {}
    return {
        "scheme": doc.get("scheme"),
        "verdict": doc.get("verdict"),
        "fidelity_gap": fid.get("gap"),
        "fidelity_pass": fid.get("pass"),
        "whitebox_decoded": wb.get("decoded"),
        "whitebox_pass": wb.get("pass"),
        "trigger_acc": bb.get("trigger_acc"),
        "blackbox_status": bb.get("status"),
    }


def _render_table(columns, rows, out) -> None:
    cells = [[("" if r.get(c) is None else str(r.get(c))) for c in columns] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) if cells else len(c)
              for i, c in enumerate(columns)]
    out.write("  ".join(c.ljust(w) for c, w in zip(columns, widths)).rstrip() + "\n")
    for row in cells:
        out.write("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() + "\n")


def cmd_report(args, run: RunContext, out) -> int:
    attacks, verifications = _collect_reports(args.dirs)
    if attacks:
        rows = [{c: a.get(c) for c in ATTACK_COLUMNS} for a in attacks]
        _render_table(ATTACK_COLUMNS, rows, out)
    if verifications:
        if attacks:
            out.write("\n")
        rows = [_verify_row(v) for v in verifications]
        _render_table(VERIFY_COLUMNS, rows, out)
    if not attacks and not verifications:
        _render_table(ATTACK_COLUMNS, [], out)
    if args.json:
        payload = {
            "schema_version": 1,
            "type": "report_aggregate",
            "attacks": attacks,
            "verifications": verifications,
        }
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        run.add_output(args.json)
    return 0


def cmd_replay(args, run: RunContext, out) -> int:
    with open(args.manifest, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    run.add_input(args.manifest)
    if manifest.get("type") != "run_manifest":
        raise ValueError(f"{args.manifest} is not a run manifest")
    outdir = Path(args.dir)
    outdir.mkdir(parents=True, exist_ok=True)

    remap: dict[str, str] = {}
    used = set()

    def _redirect(old: str) -> str:
        base = Path(old).name
        candidate = str(outdir / base)
        i = 1
        while candidate in used:
            candidate = str(outdir / f"{i}_{base}")
            i += 1
        used.add(candidate)
        return candidate

    for old in manifest["outputs"]:
        remap[old] = _redirect(old)

    orig_argv = list(manifest["argv"])
    # keep the replayed run's own manifest inside the replay directory too
    for i, tok in enumerate(orig_argv):
        if tok == "--manifest" and i + 1 < len(orig_argv):
            nxt = orig_argv[i + 1]
            if nxt not in remap:
                remap[nxt] = _redirect(nxt)
    new_argv = [remap.get(tok, tok) for tok in orig_argv]
    if manifest.get("timestamp") and "--timestamp" not in new_argv:
        new_argv += ["--timestamp", manifest["timestamp"]]

    buf = io.StringIO()
    code = dispatch(new_argv, buf)

    mismatches = []
    checks = {}
    for old, new in remap.items():
        want = manifest["outputs"][old]
        got = _sha256_file(new) if Path(new).exists() else None
        checks[old] = {"replayed": new, "expected": want, "actual": got}
        if got != want:
            mismatches.append(old)
    # stdout echoes output paths; undo the deliberate redirection before hashing
    replayed_stdout = buf.getvalue()
    for old, new in remap.items():
        replayed_stdout = replayed_stdout.replace(new, old)
    stdout_ok = _sha256_text(replayed_stdout) == manifest.get("stdout_sha256")
    reproduced = not mismatches and stdout_ok and code == manifest.get("exit_code")
    _emit(out, {
        "reproduced": reproduced,
        "exit_code": code,
        "expected_exit_code": manifest.get("exit_code"),
        "stdout_match": stdout_ok,
        "outputs": checks,
        "mismatches": mismatches,
    })
    return 0 if reproduced else 1


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=TOOL,
        description="Find, lock, watermark, attack, and verify sparse winning tickets.",
    )
    parser.add_argument("--version", action="version", version=f"{TOOL} {VERSION}")
    sub = parser.add_subparsers(dest="cmd", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest", help="run manifest path (default: next to first output)")
    common.add_argument("--timestamp", help=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("find-ticket", parents=[common], help="IMP with rewinding and probes")
    p.add_argument("--arch", required=True)
    p.add_argument("--data", required=True, help="generator:seed, e.g. rings:0")
    p.add_argument("--out", required=True)
    p.add_argument("--ladder", default="0.2,0.1,0.05,0.1")
    p.add_argument("--round-limits", default=None)
    p.add_argument("--match-margin", type=float, default=0.01)
    p.add_argument("--probe-ratio", type=float, default=0.01)
    p.add_argument("--max-rounds", type=int, default=64)
    _add_train_flags(p)
    p.set_defaults(func=cmd_find_ticket)

    p = sub.add_parser("retrain", parents=[common],
                       help="rewind + retrain a ticket, optionally with a trigger set")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trigger-seed", type=int, default=None)
    p.add_argument("--trigger-size", type=int, default=100)
    _add_train_flags(p)
    p.set_defaults(func=cmd_retrain)

    p = sub.add_parser("score", parents=[common], help="per-weight scores for key splitting")
    p.add_argument("--method", required=True, choices=SCORERS)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("split", parents=[common], help="split a ticket into key + locked")
    p.add_argument("--method", required=True, choices=SCORERS)
    p.add_argument("--budget", type=float, required=True, help="relative key sparsity in (0,1]")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--locked", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("merge", parents=[common], help="recombine key + locked bundles")
    p.add_argument("--key", required=True)
    p.add_argument("--locked", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("encode", parents=[common], help="string -> signature bitmap")
    p.add_argument("--text", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--profile", default="robust", choices=("robust", "qr"))
    p.add_argument("--version", type=int, default=None, dest="version")
    p.add_argument("--with-patterns", action="store_true",
                   help="render finder/timing patterns instead of stripping them")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", parents=[common], help="signature bitmap -> string")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--profile", default="robust", choices=("robust", "qr"))
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("embed", parents=[common], help="write a signature into a ticket mask")
    p.add_argument("--text", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--record", required=True)
    p.add_argument("--profile", default="robust", choices=("robust", "qr"))
    p.add_argument("--version", type=int, default=None, dest="version")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("extract", parents=[common], help="read a signature back via its record")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--record", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("scan", parents=[common], help="blind signature search over all layers")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--geometry", required=True, help="square extent, e.g. 29x29")
    p.add_argument("--profile", default="robust", choices=("robust", "qr"))
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("attack", parents=[common], help="removal and ambiguity attacks")
    p.add_argument("--kind", required=True,
                   choices=("prune_omp", "prune_random", "finetune", "addon",
                            "fake1", "fake2", "fake3"))
    p.add_argument("--rate", type=float, default=0.0)
    p.add_argument("--rates", default=None, help="comma list -> sweep report")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", default=None, help="save the attacked bundle")
    p.add_argument("--report", default=None)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--defend-t", type=float, default=None)
    p.add_argument("--t-from", default=None, help="bundle whose min |w| sets the defense t")
    p.add_argument("--data", default=None, help="evaluation task generator:seed")
    p.add_argument("--data2", default=None, help="finetune target task generator:seed")
    p.add_argument("--record", default=None)
    p.add_argument("--text", default=None, help="owner string for decode/match context")
    p.add_argument("--new-text", default=None, help="attacker string for fake3")
    p.add_argument("--insider", action="store_true", help="fake3 knows the embed location")
    p.add_argument("--profile", default="robust", choices=("robust", "qr"))
    p.add_argument("--version", type=int, default=None, dest="version")
    p.add_argument("--target-acc", type=float, default=None)
    p.add_argument("--eps-f", type=float, default=0.01)
    p.add_argument("--trigger-seed", type=int, default=None)
    p.add_argument("--trigger-size", type=int, default=100)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--retrain", action="store_true",
                   help="retrain after the attack (excluded from acceptance)")
    _add_train_flags(p)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("defend", parents=[common], help="threshold-t add-on defense")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--t-from", default=None)
    p.set_defaults(func=cmd_defend)

    p = sub.add_parser("verify", parents=[common], help="run an ownership verification scheme")
    p.add_argument("--scheme", required=True, choices=SCHEMES)
    p.add_argument("--key", default=None)
    p.add_argument("--locked", default=None)
    p.add_argument("--in", dest="inp", default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--target-acc", type=float, default=None)
    p.add_argument("--text", default=None)
    p.add_argument("--record", default=None)
    p.add_argument("--geometry", default=None)
    p.add_argument("--profile", default="robust", choices=("robust", "qr"))
    p.add_argument("--arch", default=None, help="trigger shapes for --predict-cmd runs")
    p.add_argument("--predict-cmd", default=None,
                   help="opaque predictor: stdin npy batch, stdout labels")
    p.add_argument("--trigger-seed", type=int, default=0)
    p.add_argument("--trigger-size", type=int, default=100)
    p.add_argument("--eps-f", type=float, default=0.01)
    p.add_argument("--eps-s", type=float, default=0.15)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", parents=[common], help="aggregate run outputs into tables")
    p.add_argument("dirs", nargs="+")
    p.add_argument("--json", default=None)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("replay", parents=[common], help="re-run a manifest and compare digests")
    p.add_argument("--manifest-in", dest="manifest", required=True)
    p.add_argument("--dir", required=True, help="directory for replayed outputs")
    p.set_defaults(func=cmd_replay)

    return parser


def dispatch(argv: list[str], out) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args._timestamp = args.timestamp or utc_now()
    run = RunContext(args.cmd, argv)
    try:
        code = args.func(args, run, out)
    except (OSError, BundleError, CodecError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    path = run.manifest_path(args)
    if path:
        try:
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(run.manifest(args, out.getvalue(), code), fh, indent=2, sort_keys=True)
                fh.write("\n")
        except OSError as e:
            print(f"error: cannot write manifest: {e}", file=sys.stderr)
            return 2
    return code


def main(argv: list[str] | None = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    buf = io.StringIO()
    code = dispatch(argv, buf)
    sys.stdout.write(buf.getvalue())
    sys.stdout.flush()
    return code


if __name__ == "__main__":
    sys.exit(main())
