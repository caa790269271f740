"""Audio file decoding and dataset manifests.

WAV support covers RIFF containers with PCM-16 or IEEE float-32 payloads,
mono or stereo (stereo is averaged to mono). Manifests are CSV files with
the mandatory header ``path,label,organ,split``.
"""

import csv
import logging
import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from . import features as feat
from .errors import (
    DatasetLayoutError,
    DecodeError,
    InvalidConfigError,
    ParseError,
)
from .preprocess import AudioClip, AugmentSpec

log = logging.getLogger("auscult")

VALID_SPLITS = ("train", "val", "test", "unassigned")

# ICBHI diagnosis spellings -> canonical lung labels. LRTI and Asthma exist in
# the corpus but are outside the eleven-class set and are skipped on scan.
_ICBHI_DIAGNOSES = {
    "copd": "COPD",
    "pneumonia": "P",
    "bronchiectasis": "BA",
    "bronchiolitis": "BO",
    "healthy": "H",
    "urti": "URTI",
}
_ICBHI_SKIPPED = ("lrti", "asthma")


@dataclass(frozen=True)
class WavInfo:
    sample_rate_hz: int
    channels: int
    bit_depth: int
    n_samples: int


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str
    organ: str
    split: str = "unassigned"
    augmentation: AugmentSpec | None = None

    def __post_init__(self):
        label = feat.parse_label(self.label)
        object.__setattr__(self, "label", label)
        expected_organ = feat.label_organ(label)
        if self.organ != expected_organ:
            raise ParseError(
                f"label {label} belongs to organ {expected_organ!r}, "
                f"not {self.organ!r}"
            )
        if self.split not in VALID_SPLITS:
            raise ParseError(
                f"split must be one of {', '.join(VALID_SPLITS)}, got {self.split!r}"
            )


class Manifest:
    """An ordered list of dataset entries with per-class helpers."""

    def __init__(self, entries=()):
        self.entries = list(entries)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def counts(self, split=None):
        out = {}
        for e in self.entries:
            if split is None or e.split == split:
                out[e.label] = out.get(e.label, 0) + 1
        return out

    def subset(self, split):
        return [e for e in self.entries if e.split == split]


# ---------------------------------------------------------------------------
# WAV decoding

_PCM = 1
_IEEE_FLOAT = 3
_EXTENSIBLE = 0xFFFE


def decode_wav(data, source_id=None):
    """Decode RIFF/WAVE bytes into a mono AudioClip."""
    info, samples = _parse_wav(data)
    if info.channels == 2:
        samples = samples.reshape(-1, 2).mean(axis=1)
    return AudioClip(samples, info.sample_rate_hz, source_id)


def read_wav(path):
    with open(path, "rb") as fh:
        return decode_wav(fh.read(), source_id=os.fspath(path))


def wav_info(path):
    with open(path, "rb") as fh:
        info, _ = _parse_wav(fh.read())
    return info


def _parse_wav(data):
    if len(data) < 12:
        raise DecodeError("file too small for a RIFF header", offset=0)
    if data[0:4] != b"RIFF":
        raise DecodeError("missing RIFF magic", offset=0)
    if data[8:12] != b"WAVE":
        raise DecodeError("RIFF form type is not WAVE", offset=8)

    fmt = None
    payload = None
    payload_offset = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (chunk_size,) = struct.unpack_from("<I", data, pos + 4)
        body = pos + 8
        if body + chunk_size > len(data):
            raise DecodeError(
                f"chunk {chunk_id!r} overruns the file", offset=pos
            )
        if chunk_id == b"fmt ":
            if chunk_size < 16:
                raise DecodeError("fmt chunk too small", offset=pos)
            audio_format, channels, rate, _, _, bits = struct.unpack_from(
                "<HHIIHH", data, body
            )
            if audio_format == _EXTENSIBLE and chunk_size >= 40:
                (audio_format,) = struct.unpack_from("<H", data, body + 24)
            fmt = (audio_format, channels, rate, bits, pos)
        elif chunk_id == b"data":
            payload = data[body:body + chunk_size]
            payload_offset = body
        pos = body + chunk_size + (chunk_size & 1)  # chunks are word-aligned

    if fmt is None:
        raise DecodeError("no fmt chunk found", offset=12)
    if payload is None:
        raise DecodeError("no data chunk found", offset=12)
    audio_format, channels, rate, bits, fmt_offset = fmt
    if channels not in (1, 2):
        raise DecodeError(f"unsupported channel count {channels}", offset=fmt_offset)
    if rate <= 0:
        raise DecodeError(f"invalid sample rate {rate}", offset=fmt_offset)

    if audio_format == _PCM and bits == 16:
        usable = len(payload) - len(payload) % 2
        raw = np.frombuffer(payload[:usable], dtype="<i2")
        samples = raw.astype(np.float64) / 32768.0
    elif audio_format == _IEEE_FLOAT and bits == 32:
        usable = len(payload) - len(payload) % 4
        samples = np.frombuffer(payload[:usable], dtype="<f4").astype(np.float64)
    else:
        raise DecodeError(
            f"unsupported codec: format {audio_format}, {bits}-bit",
            offset=fmt_offset,
        )
    if channels == 2 and len(samples) % 2:
        samples = samples[:-1]
    if len(samples) == 0:
        raise DecodeError("data chunk holds no samples", offset=payload_offset)
    info = WavInfo(
        sample_rate_hz=int(rate),
        channels=int(channels),
        bit_depth=int(bits),
        n_samples=len(samples) // channels,
    )
    return info, samples


def write_wav(path, clip):
    """PCM-16 writer used for fixtures and exports; clips amplitudes to [-1, 1]."""
    scaled = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    payload = scaled.tobytes()
    rate = int(clip.sample_rate_hz)
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, _PCM, 1, rate, rate * 2, 2, 16)
    header += b"data" + struct.pack("<I", len(payload))
    _atomic_write_bytes(path, header + payload)


# ---------------------------------------------------------------------------
# dataset scanning


def scan_dataset(root, layout):
    """Build an unassigned manifest from a dataset directory.

    yaseen  per-class subdirectories named with heart label tokens
    icbhi   recording files joined to a patient_diagnosis.csv listing
    flat    explicit labels.csv with header ``path,label``
    """
    root = os.fspath(root)
    if not os.path.isdir(root) and layout != "flat":
        raise DatasetLayoutError(f"dataset root {root!r} is not a directory")
    if layout == "yaseen":
        manifest = _scan_yaseen(root)
    elif layout == "icbhi":
        manifest = _scan_icbhi(root)
    elif layout == "flat":
        manifest = _scan_flat(root)
    else:
        raise InvalidConfigError(
            f"unknown layout {layout!r}; expected yaseen, icbhi, or flat"
        )
    if not manifest.entries:
        log.warning("scan of %s (%s layout) produced an empty manifest", root, layout)
    return manifest


def _wav_files(directory):
    return sorted(
        f for f in os.listdir(directory) if f.lower().endswith(".wav")
    )


def _scan_yaseen(root):
    entries = []
    for name in sorted(os.listdir(root)):
        subdir = os.path.join(root, name)
        if not os.path.isdir(subdir):
            continue
        label = feat.parse_label(name)  # unknown tokens raise with the valid list
        if feat.label_organ(label) != "heart":
            raise ParseError(
                f"yaseen layout holds heart classes; {label} is a lung class"
            )
        for fname in _wav_files(subdir):
            entries.append(
                ManifestEntry(os.path.join(subdir, fname), label, "heart")
            )
    return Manifest(entries)


def _find_diagnosis_file(root):
    for dirpath, _, filenames in os.walk(root):
        for fname in filenames:
            if fname.lower().endswith(".csv") and "diagnosis" in fname.lower():
                return os.path.join(dirpath, fname)
    return None


def _scan_icbhi(root):
    listing = _find_diagnosis_file(root)
    if listing is None:
        raise DatasetLayoutError(
            f"icbhi layout needs a patient diagnosis csv under {root!r}"
        )
    diagnosis_by_patient = {}
    with open(listing, "r", encoding="utf-8-sig") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if len(row) < 2:
                raise ParseError("expected patient_id,diagnosis", line=line_no)
            patient, diagnosis = row[0].strip(), row[1].strip()
            token = diagnosis.lower()
            if token in _ICBHI_SKIPPED:
                log.warning(
                    "skipping diagnosis %s (patient %s): outside the class set",
                    diagnosis, patient,
                )
                continue
            if token in _ICBHI_DIAGNOSES:
                diagnosis_by_patient[patient] = _ICBHI_DIAGNOSES[token]
            else:
                label = feat.parse_label(diagnosis)  # raises for unknown tokens
                if feat.label_organ(label) != "lung":
                    raise ParseError(
                        f"icbhi layout holds lung classes; {label} is a heart class",
                        line=line_no,
                    )
                diagnosis_by_patient[patient] = label

    entries = []
    for dirpath, _, filenames in sorted(os.walk(root)):
        for fname in sorted(filenames):
            if not fname.lower().endswith(".wav"):
                continue
            patient = fname.split("_", 1)[0]
            label = diagnosis_by_patient.get(patient)
            if label is None:
                log.warning("no diagnosis for recording %s; skipped", fname)
                continue
            entries.append(
                ManifestEntry(os.path.join(dirpath, fname), label, "lung")
            )
    return Manifest(entries)


def _scan_flat(root):
    csv_path = root if os.path.isfile(root) else os.path.join(root, "labels.csv")
    if not os.path.isfile(csv_path):
        raise DatasetLayoutError(
            f"flat layout needs a labels.csv (looked for {csv_path!r})"
        )
    base = os.path.dirname(os.path.abspath(csv_path))
    entries = []
    with open(csv_path, "r", encoding="utf-8-sig", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["path", "label"]:
            raise ParseError("flat labels.csv must start with header path,label", line=1)
        for line_no, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) < 2:
                raise ParseError("expected path,label", line=line_no)
            path = row[0].strip()
            if not os.path.isabs(path):
                path = os.path.join(base, path)
            label = feat.parse_label(row[1])
            entries.append(ManifestEntry(path, label, feat.label_organ(label)))
    return Manifest(entries)


# ---------------------------------------------------------------------------
# manifest persistence

_HEADER = ["path", "label", "organ", "split"]


def load_manifest(path):
    entries = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != _HEADER:
            raise ParseError(
                f"manifest header must be {','.join(_HEADER)}", line=1
            )
        for line_no, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) != len(_HEADER):
                raise ParseError(
                    f"expected {len(_HEADER)} fields, got {len(row)}", line=line_no
                )
            try:
                entries.append(
                    ManifestEntry(row[0], row[1].strip(), row[2].strip(),
                                  row[3].strip())
                )
            except ParseError as exc:
                raise ParseError(str(exc), line=line_no) from None
    return Manifest(entries)


def save_manifest(manifest, path):
    """Atomic whole-file write. Augmented (in-memory) entries are not
    serializable and are rejected."""
    for entry in manifest.entries:
        if entry.augmentation is not None:
            raise InvalidConfigError(
                "manifests with augmented entries are in-memory only; "
                "balance_classes output cannot be saved"
            )
    lines = [",".join(_HEADER)]
    for e in manifest.entries:
        if "," in e.path:
            raise InvalidConfigError(f"path {e.path!r} contains a comma")
        lines.append(f"{e.path},{e.label},{e.organ},{e.split}")
    _atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8"))


def _atomic_write_bytes(path, data):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
