"""Ownership verification: fidelity check, white-box decode, black-box probe.

Three schemes are wired end to end. V1 distributes a key/locked mask pair
and verifies by performance: only the merged model reaches the target
accuracy. V2 embeds a signature matrix and verifies by extracting and
decoding it from the mask topology. V3 additionally trains with a trigger
set so a remote service can be probed through its prediction interface
alone; a flagged probe escalates to the white-box check.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .data import TriggerSet, Dataset
from .embed import EmbedRecord, blind_scan, extract
from .codec import decode
from .model import SparseModel, merge
from .nets import forward_pass
from .train import evaluate

DEFAULT_EPS_F = 0.01
DEFAULT_EPS_S = 0.15
SCHEMA_VERSION = 1
SCHEMES = ("v1", "v2", "v3")


class VerifyError(ValueError):
    pass


def model_digest(model: SparseModel) -> str:
    """sha256 over masked weights, biases, and mask bits."""
    h = hashlib.sha256()
    for w, m, b in zip(model.weights, model.masks, model.biases):
        h.update((w * m.to_array()).astype("<f4").tobytes())
        h.update(m.bits)
        h.update(b.astype("<f4").tobytes())
    return h.hexdigest()


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def fidelity(model: SparseModel, data: Dataset, target_acc: float, eps_f: float = DEFAULT_EPS_F) -> dict:
    """Two-sided accuracy-gap check: pass iff |acc - target| < eps_f."""
    if eps_f <= 0:
        raise VerifyError(f"eps_f must be positive, got {eps_f}")
    acc = evaluate(model, data)
    gap = acc - target_acc
    return {
        "pass": bool(abs(gap) < eps_f),
        "acc": acc,
        "target": target_acc,
        "gap": gap,
        "eps_f": eps_f,
    }


def verify_whitebox(
    model: SparseModel,
    expected: str,
    record: EmbedRecord | None = None,
    geometry: dict | None = None,
) -> dict:
    """Extract (or blind-scan) the signature region and compare the decode."""
    if record is not None:
        res = decode(extract(model, record))
        decoded = res.text if res.ok else None
        reason = None if res.ok else res.reason
        location = {"layer": record.layer, "offset": list(record.offset)}
    elif geometry is not None:
        hits = blind_scan(model, geometry)
        if hits:
            best = hits[0]
            res = best.result
            decoded = res.text
            reason = None
            location = {"layer": best.layer, "offset": list(best.offset)}
        else:
            res = None
            decoded = None
            reason = "no decodable region found"
            location = None
    else:
        raise VerifyError("white-box verification needs a record or a scan geometry")
    out = {
        "pass": bool(decoded == expected),
        "decoded": decoded,
        "expected": expected,
        "reason": reason,
        "location": location,
    }
    if res is not None:
        out["symbol_errors"] = res.symbol_errors
        out["bit_errors"] = res.bit_errors
    return out


def model_predict_fn(model: SparseModel):
    """Opaque prediction closure: batch of inputs -> integer labels."""

    def predict(x: np.ndarray) -> np.ndarray:
        logits = forward_pass(model.arch, model.masked_weights(), list(model.biases), x)
        return logits.argmax(axis=1)

    return predict


def verify_blackbox(predict_fn, trigger: TriggerSet, eps_s: float = DEFAULT_EPS_S) -> dict:
    """Probe an opaque interface with trigger inputs; no weight access.

    status: pass (trigger accuracy >= 1 - eps_s), fail, or inconclusive when
    the interface errors or returns malformed output.
    """
    if not 0 < eps_s < 1:
        raise VerifyError(f"eps_s must lie in (0, 1), got {eps_s}")
    try:
        labels = np.asarray(predict_fn(trigger.x))
        if labels.shape != trigger.y.shape:
            raise ValueError(f"prediction shape {labels.shape} != {trigger.y.shape}")
        acc = float((labels == trigger.y).mean())
    except Exception as e:  # noqa: BLE001 - opaque interface, any failure is inconclusive
        return {
            "status": "inconclusive",
            "trigger_acc": None,
            "eps_s": eps_s,
            "threshold": 1.0 - eps_s,
            "error": str(e),
        }
    return {
        "status": "pass" if acc >= 1.0 - eps_s else "fail",
        "trigger_acc": acc,
        "eps_s": eps_s,
        "threshold": 1.0 - eps_s,
    }


@dataclass
class VerificationReport:
    scheme: str
    verdict: str
    fidelity: dict | None = None
    whitebox: dict | None = None
    blackbox: dict | None = None
    timestamp: str = ""
    input_digests: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "type": "verification",
            "scheme": self.scheme,
            "verdict": self.verdict,
            "fidelity": self.fidelity,
            "whitebox": self.whitebox,
            "blackbox": self.blackbox,
            "timestamp": self.timestamp,
            "input_digests": self.input_digests,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VerificationReport":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise VerifyError(f"unsupported report schema: {d.get('schema_version')!r}")
        return cls(
            scheme=d["scheme"],
            verdict=d["verdict"],
            fidelity=d.get("fidelity"),
            whitebox=d.get("whitebox"),
            blackbox=d.get("blackbox"),
            timestamp=d.get("timestamp", ""),
            input_digests=d.get("input_digests", {}),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "VerificationReport":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _require(cond: bool, scheme: str, what: str) -> None:
    if not cond:
        raise VerifyError(f"scheme {scheme} requires {what}")


def run_scheme(
    scheme: str,
    *,
    key: SparseModel | None = None,
    locked: SparseModel | None = None,
    model: SparseModel | None = None,
    data: Dataset | None = None,
    trigger: TriggerSet | None = None,
    expected: str | None = None,
    record: EmbedRecord | None = None,
    geometry: dict | None = None,
    target_acc: float | None = None,
    eps_f: float = DEFAULT_EPS_F,
    eps_s: float = DEFAULT_EPS_S,
    predict_fn=None,
    timestamp: str | None = None,
    input_digests: dict | None = None,
) -> VerificationReport:
    """Run one verification scheme end to end and emit a report."""
    scheme = scheme.lower()
    if scheme not in SCHEMES:
        raise VerifyError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    report = VerificationReport(scheme=scheme, verdict="fail", timestamp=timestamp or utc_now())

    if scheme == "v1":
        _require(key is not None and locked is not None, scheme, "key and locked bundles")
        _require(data is not None, scheme, "an evaluation dataset")
        merged = merge(key, locked)
        if target_acc is None:
            prov = merged.meta.get("provenance") or {}
            target_acc = prov.get("ticket_acc")
        _require(target_acc is not None, scheme, "a target accuracy (or ticket provenance)")
        report.fidelity = fidelity(merged, data, float(target_acc), eps_f)
        report.verdict = "pass" if report.fidelity["pass"] else "fail"
        digests = {"key": model_digest(key), "locked": model_digest(locked)}

    elif scheme == "v2":
        _require(model is not None, scheme, "an embedded bundle")
        _require(expected is not None, scheme, "the owner's signature string")
        _require(record is not None or geometry is not None, scheme, "a record or scan geometry")
        report.whitebox = verify_whitebox(model, expected, record=record, geometry=geometry)
        if data is not None and target_acc is not None:
            report.fidelity = fidelity(model, data, target_acc, eps_f)
        ok = report.whitebox["pass"] and (report.fidelity is None or report.fidelity["pass"])
        report.verdict = "pass" if ok else "fail"
        digests = {"model": model_digest(model)}

    else:  # v3
        _require(model is not None or predict_fn is not None, scheme, "a bundle or prediction interface")
        _require(trigger is not None, scheme, "a trigger set")
        fn = predict_fn if predict_fn is not None else model_predict_fn(model)
        report.blackbox = verify_blackbox(fn, trigger, eps_s)
        if report.blackbox["status"] == "inconclusive":
            report.verdict = "inconclusive"
        elif report.blackbox["status"] == "fail":
            report.verdict = "fail"
        else:
            # flagged service: escalate to the white-box check when possible
            if model is not None and expected is not None and (record or geometry):
                report.whitebox = verify_whitebox(model, expected, record=record, geometry=geometry)
                report.verdict = "pass" if report.whitebox["pass"] else "fail"
            else:
                report.verdict = "pass"
        if model is not None and data is not None and target_acc is not None:
            report.fidelity = fidelity(model, data, target_acc, eps_f)
            if report.verdict == "pass" and not report.fidelity["pass"]:
                report.verdict = "fail"
        digests = {}
        if model is not None:
            digests["model"] = model_digest(model)
        if trigger is not None:
            h = hashlib.sha256()
            h.update(np.ascontiguousarray(trigger.x).astype("<f4").tobytes())
            h.update(np.ascontiguousarray(trigger.y).astype("<i8").tobytes())
            digests["trigger"] = h.hexdigest()

    report.input_digests = input_digests if input_digests is not None else digests
    return report
