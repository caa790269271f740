"""HTTP inference and telemedicine back end.

Endpoints (JSON over HTTP/1.1):

    POST /api/v1/classify?organ=heart|lung|auto   body: WAV bytes
    POST /api/v1/reports                          classification + patient meta
    GET  /api/v1/reports/{id}
    POST /api/v1/reports/{id}/email               {"to": address}
    GET  /api/v1/health
    GET  /api/v1/classes

Reports are one JSON document per file under <data_dir>/reports; the loaded
model is immutable shared state, so concurrent classification is safe.
"""

import hashlib
import html
import json
import math
import os
import re
import smtplib
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from email.message import EmailMessage

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import features as feat
from .dataset import _atomic_write_bytes, decode_wav
from .errors import DataError, DecodeError, UnsupportedRateError
from .nn import model_forward
from .preprocess import preprocess
from .store import load_metadata, load_model

MIN_DURATION_S = 0.5

_ADDRESS_RE = re.compile(r"^[^@\s]+@[^@\s]+\.[^@\s]+$")


@dataclass(frozen=True)
class SmtpConfig:
    host: str
    port: int
    username: str = ""
    password: str = ""
    from_address: str = "auscult@localhost"
    tls: bool = False

    @classmethod
    def from_env(cls, env=os.environ):
        host = env.get("SMTP_HOST", "")
        if not host:
            return None
        return cls(
            host=host,
            port=int(env.get("SMTP_PORT", "25")),
            username=env.get("SMTP_USER", ""),
            password=env.get("SMTP_PASS", ""),
            from_address=env.get("SMTP_FROM", "auscult@localhost"),
            tls=env.get("SMTP_TLS", "off").lower() in ("on", "1", "true", "yes"),
        )


def _utc_now():
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def _argmax_for_organ(probs, organ):
    """Predicted index under an organ restriction; ties go to the lowest
    canonical index (argmax already picks the first maximum)."""
    if organ in ("heart", "lung"):
        allowed = feat.organ_indices(organ)
        local = int(np.argmax([probs[i] for i in allowed]))
        return allowed[local]
    return int(np.argmax(probs))


class ReportStore:
    def __init__(self, data_dir):
        self.directory = os.path.join(os.fspath(data_dir), "reports")
        os.makedirs(self.directory, exist_ok=True)

    def _path(self, report_id):
        return os.path.join(self.directory, f"{report_id}.json")

    def save(self, report):
        blob = json.dumps(report, indent=2, sort_keys=True).encode("utf-8")
        _atomic_write_bytes(self._path(report["report_id"]), blob)

    def load(self, report_id):
        path = self._path(str(uuid.UUID(report_id)))
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)


def _validate_report_payload(payload):
    errors = {}
    label = payload.get("label", payload.get("predicted_label"))
    if not isinstance(label, str) or label not in feat.CLASS_INDEX:
        errors["label"] = f"must be one of {', '.join(feat.CLASSES)}"
    probs = payload.get("probabilities")
    if (not isinstance(probs, list) or len(probs) != len(feat.CLASSES)
            or not all(isinstance(p, (int, float)) and math.isfinite(p)
                       and 0 <= p <= 1 for p in probs)):
        errors["probabilities"] = (
            f"must be {len(feat.CLASSES)} finite numbers in [0, 1]"
        )
    elif abs(sum(probs) - 1.0) > 1e-6:
        errors["probabilities"] = "must sum to 1 within 1e-6"
    organ_hint = payload.get("organ_hint", "auto")
    if organ_hint not in ("heart", "lung", "auto"):
        errors["organ_hint"] = "must be heart, lung, or auto"
    if "label" not in errors and "probabilities" not in errors \
            and "organ_hint" not in errors:
        expected = feat.CLASSES[_argmax_for_organ(probs, organ_hint)]
        if label != expected:
            errors["label"] = (
                f"must equal the restricted argmax class {expected}"
            )
    model_version = payload.get("model_version")
    if not isinstance(model_version, str) or not model_version:
        errors["model_version"] = "must be a non-empty string"
    meta = payload.get("patient_meta", {})
    if meta is None:
        meta = {}
    if not isinstance(meta, dict) or any(
        k not in ("name", "age", "notes") for k in meta
    ):
        errors["patient_meta"] = "allowed fields: name, age, notes"
    digest = payload.get("audio_digest")
    if digest is not None and not isinstance(digest, str):
        errors["audio_digest"] = "must be a string when present"
    if errors:
        raise HTTPException(status_code=400, detail={"errors": errors})
    return {
        "predicted_label": label,
        "probabilities": [float(p) for p in probs],
        "organ_hint": organ_hint,
        "model_version": model_version,
        "patient_meta": {k: str(v) for k, v in meta.items()},
        "audio_digest": digest,
    }


def _render_report_text(report):
    lines = [
        f"Auscultation diagnosis report {report['report_id']}",
        f"Created: {report['created_at']}",
        f"Predicted class: {report['predicted_label']} "
        f"({feat.CLASS_ORGAN[report['predicted_label']]})",
        f"Organ hint: {report['organ_hint']}",
        f"Model version: {report['model_version']}",
        "",
        "Class probabilities:",
    ]
    for name, p in zip(feat.CLASSES, report["probabilities"]):
        lines.append(f"  {name:5s} {p:.4f}")
    meta = report.get("patient_meta") or {}
    if meta:
        lines.append("")
        lines.append("Patient:")
        for key, value in meta.items():
            lines.append(f"  {key}: {value}")
    return "\n".join(lines)


def _render_report_html(report):
    rows = "".join(
        f"<tr><td>{name}</td><td>{p:.4f}</td></tr>"
        for name, p in zip(feat.CLASSES, report["probabilities"])
    )
    meta = report.get("patient_meta") or {}
    meta_html = "".join(
        f"<li><b>{html.escape(str(k))}</b>: {html.escape(str(v))}</li>"
        for k, v in meta.items()
    )
    return (
        "<html><body>"
        f"<h2>Auscultation diagnosis report {report['report_id']}</h2>"
        f"<p>Created: {report['created_at']}<br>"
        f"Predicted class: <b>{report['predicted_label']}</b> "
        f"({feat.CLASS_ORGAN[report['predicted_label']]})<br>"
        f"Organ hint: {report['organ_hint']}<br>"
        f"Model version: {report['model_version']}</p>"
        f"<table border='1'><tr><th>Class</th><th>Probability</th></tr>{rows}</table>"
        + (f"<ul>{meta_html}</ul>" if meta_html else "")
        + "</body></html>"
    )


def send_report_email(report, to_address, smtp):
    msg = EmailMessage()
    msg["Subject"] = (
        f"Auscultation report {report['report_id']}: {report['predicted_label']}"
    )
    msg["From"] = smtp.from_address
    msg["To"] = to_address
    msg.set_content(_render_report_text(report))
    msg.add_alternative(_render_report_html(report), subtype="html")
    with smtplib.SMTP(smtp.host, smtp.port, timeout=15) as client:
        client.ehlo()
        if smtp.tls:
            client.starttls()
            client.ehlo()
        if smtp.username:
            client.login(smtp.username, smtp.password)
        client.send_message(msg)


def create_app(model_path=None, data_dir="auscult-data", smtp=None):
    app = FastAPI(title="auscult", docs_url=None, redoc_url=None)
    # the browser UI is served from its own origin; the API carries no
    # credentials, so a permissive policy is fine here
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    store = ReportStore(data_dir)

    model = None
    model_version = None
    if model_path:
        params, _ = load_model(model_path)
        metadata = load_metadata(model_path)
        model = params
        model_version = metadata.get("model_version", os.path.basename(model_path))
    app.state.model = model
    app.state.model_version = model_version
    app.state.store = store
    app.state.smtp = smtp

    @app.get("/api/v1/health")
    def health():
        return {
            "status": "ok" if app.state.model is not None else "degraded",
            "model_version": app.state.model_version,
        }

    @app.get("/api/v1/classes")
    def classes():
        return [
            {"label": name, "organ": feat.CLASS_ORGAN[name]}
            for name in feat.CLASSES
        ]

    @app.post("/api/v1/classify")
    async def classify(request: Request, organ: str = "auto", store_report: bool = False):
        if organ not in ("heart", "lung", "auto"):
            raise HTTPException(
                status_code=422,
                detail={"reason": "bad_organ", "detail": "organ must be heart, lung, or auto"},
            )
        if app.state.model is None:
            raise HTTPException(
                status_code=503,
                detail={"reason": "model_not_loaded", "detail": "no model artifact is loaded"},
            )
        body = await request.body()
        try:
            clip = decode_wav(body, source_id="upload")
        except DecodeError as exc:
            raise HTTPException(
                status_code=415,
                detail={"reason": "undecodable_audio", "detail": str(exc)},
            ) from None
        if clip.duration_s < MIN_DURATION_S:
            raise HTTPException(
                status_code=422,
                detail={
                    "reason": "too_short",
                    "detail": f"clip lasts {clip.duration_s:.3f} s; "
                              f"minimum is {MIN_DURATION_S} s",
                },
            )
        try:
            prepared = preprocess(clip)
        except UnsupportedRateError as exc:
            raise HTTPException(
                status_code=422,
                detail={"reason": "unsupported_rate", "detail": str(exc)},
            ) from None
        features = feat.mfcc(prepared)
        probs = model_forward(features[None, :], app.state.model, mode="inference")[0]
        predicted = _argmax_for_organ(probs, organ)
        response = {
            "label": feat.CLASSES[predicted],
            "probabilities": [float(p) for p in probs],
            "model_version": app.state.model_version,
            "audio_digest": hashlib.sha256(body).hexdigest(),
        }
        if store_report:
            report = dict(
                report_id=str(uuid.uuid4()),
                created_at=_utc_now(),
                organ_hint=organ,
                predicted_label=response["label"],
                probabilities=response["probabilities"],
                model_version=app.state.model_version,
                patient_meta={},
                audio_digest=response["audio_digest"],
            )
            store.save(report)
            response["report_id"] = report["report_id"]
        return response

    @app.post("/api/v1/reports", status_code=201)
    async def create_report(request: Request):
        try:
            payload = json.loads(await request.body())
        except json.JSONDecodeError as exc:
            raise HTTPException(
                status_code=400, detail={"errors": {"body": f"invalid JSON: {exc}"}}
            ) from None
        if not isinstance(payload, dict):
            raise HTTPException(
                status_code=400, detail={"errors": {"body": "expected a JSON object"}}
            )
        validated = _validate_report_payload(payload)
        report = {
            "report_id": str(uuid.uuid4()),
            "created_at": _utc_now(),
            **validated,
        }
        store.save(report)
        return {"report_id": report["report_id"]}

    def _load_report_or_404(report_id):
        try:
            return store.load(report_id)
        except (FileNotFoundError, ValueError):
            raise HTTPException(
                status_code=404,
                detail={"reason": "unknown_report", "detail": f"no report {report_id}"},
            ) from None

    @app.get("/api/v1/reports/{report_id}")
    def get_report(report_id: str):
        return _load_report_or_404(report_id)

    @app.post("/api/v1/reports/{report_id}/email", status_code=202)
    async def email_report(report_id: str, request: Request):
        report = _load_report_or_404(report_id)
        try:
            payload = json.loads(await request.body())
        except json.JSONDecodeError:
            payload = None
        to_address = payload.get("to") if isinstance(payload, dict) else None
        if not isinstance(to_address, str) or not _ADDRESS_RE.match(to_address):
            raise HTTPException(
                status_code=400,
                detail={"reason": "bad_address",
                        "detail": "body must be {\"to\": \"user@host.tld\"}"},
            )
        if app.state.smtp is None:
            raise HTTPException(
                status_code=502,
                detail={"reason": "smtp_unconfigured",
                        "detail": "no SMTP relay is configured"},
            )
        try:
            send_report_email(report, to_address, app.state.smtp)
        except (OSError, smtplib.SMTPException) as exc:
            raise HTTPException(
                status_code=502,
                detail={"reason": "smtp_failure", "detail": str(exc)},
            ) from None
        return {"report_id": report_id, "to": to_address, "status": "dispatched"}

    @app.exception_handler(DataError)
    def _data_error(_request, exc):
        return JSONResponse(
            status_code=422, content={"detail": {"reason": "bad_data", "detail": str(exc)}}
        )

    return app
