"""Provider requests, transports and the content-addressed fixture store.

Every call to a generative service is a :class:`ProviderRequest`. Its digest
is the SHA-256 of the canonical JSON of ``(kind, prompt, inputs, params)``,
which keys recorded payloads on disk so replay is independent of call order.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import logging
import os
import tempfile
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol, Sequence

import numpy as np
from PIL import Image

from . import canonical, prompts
from .errors import MalformedPayload, MissingFixture, RangeError, SchemaViolation, TransportError
from .model import GeoLocation

logger = logging.getLogger(__name__)

SCENE_ANALYSIS = "scene_analysis"
LOCATION_ESTIMATE = "location_estimate"
SEGMENTATION = "segmentation"
ASSET_GENERATION = "asset_generation"
TEXTURE_GENERATION = "texture_generation"
ANNOTATION_PAINTING = "annotation_painting"

KINDS = (SCENE_ANALYSIS, LOCATION_ESTIMATE, SEGMENTATION, ASSET_GENERATION, TEXTURE_GENERATION, ANNOTATION_PAINTING)
PAYLOAD_TYPES = {
    SCENE_ANALYSIS: "json",
    LOCATION_ESTIMATE: "json",
    SEGMENTATION: "image",
    TEXTURE_GENERATION: "image",
    ANNOTATION_PAINTING: "image",
    ASSET_GENERATION: "mesh",
}
API_KEY_ENV = {
    SCENE_ANALYSIS: "MD_LLM_API_KEY",
    LOCATION_ESTIMATE: "MD_LLM_API_KEY",
    SEGMENTATION: "MD_SEG_API_KEY",
    ASSET_GENERATION: "MD_ASSET_API_KEY",
    TEXTURE_GENERATION: "MD_IMAGE_API_KEY",
    ANNOTATION_PAINTING: "MD_IMAGE_API_KEY",
}
MODES = ("live", "record", "replay")


def digest_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def digest_raster(pixels: np.ndarray) -> str:
    """Digest of an in-memory raster: shape header plus raw uint8 samples.

    Rendered images are hashed before encoding so the digest does not depend
    on the PNG compressor.
    """
    arr = np.ascontiguousarray(pixels, dtype=np.uint8)
    header = ("x".join(str(s) for s in arr.shape) + ":").encode("ascii")
    return hashlib.sha256(header + arr.tobytes()).hexdigest()


def encode_png(pixels: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(pixels, dtype=np.uint8)).save(buf, format="PNG", optimize=False, compress_level=6)
    return buf.getvalue()


def decode_image(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("RGB"))


@dataclass(frozen=True)
class Attachment:
    digest: str
    data: bytes = field(repr=False)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Attachment":
        return cls(digest_bytes(data), data)

    @classmethod
    def from_raster(cls, pixels: np.ndarray) -> "Attachment":
        return cls(digest_raster(pixels), encode_png(pixels))


@dataclass(frozen=True)
class ProviderRequest:
    kind: str
    prompt: str
    inputs: tuple[str, ...] = ()
    params: Mapping[str, Any] = field(default_factory=dict)
    # bytes behind each input digest; needed only for live calls
    attachments: tuple[Attachment, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown request kind {self.kind!r}")
        if not self.prompt:
            raise ValueError("prompt must be nonempty")
        for d in self.inputs:
            if len(d) != 64 or any(c not in "0123456789abcdef" for c in d):
                raise ValueError(f"input {d!r} is not a lowercase SHA-256 hex digest")
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "params", dict(sorted(self.params.items())))

    @classmethod
    def with_attachments(cls, kind: str, prompt: str, attachments: Sequence[Attachment], params=None):
        return cls(kind, prompt, tuple(a.digest for a in attachments), params or {}, tuple(attachments))

    def canonical_bytes(self) -> bytes:
        return canonical.dump_bytes(
            {"kind": self.kind, "prompt": self.prompt, "inputs": list(self.inputs), "params": dict(self.params)}
        )


def digest_request(req: ProviderRequest) -> str:
    return hashlib.sha256(req.canonical_bytes()).hexdigest()


@dataclass(frozen=True)
class ProviderResponse:
    kind: str
    payload: bytes = field(repr=False)
    received_at: str
    provider_tag: str
    digest: str = ""

    def json(self) -> Any:
        return json.loads(self.payload.decode("utf-8"))

    def image(self) -> np.ndarray:
        return decode_image(self.payload)


def check_payload(kind: str, payload: bytes) -> None:
    """Raise :class:`MalformedPayload` unless the payload matches the kind."""
    expected = PAYLOAD_TYPES[kind]
    if not payload:
        raise MalformedPayload(f"{kind}: empty payload")
    if expected == "json":
        try:
            json.loads(payload.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise MalformedPayload(f"{kind}: payload is not JSON ({exc})") from exc
    elif expected == "image":
        if not (payload.startswith(b"\x89PNG\r\n\x1a\n") or payload.startswith(b"\xff\xd8")):
            raise MalformedPayload(f"{kind}: payload is not a PNG or JPEG image")
    elif expected == "mesh":
        if payload[:4] != b"glTF":
            raise MalformedPayload(f"{kind}: payload is not a binary glTF mesh")


class Transport(Protocol):
    def send(self, req: ProviderRequest) -> tuple[bytes, str]:
        """Perform the remote call; return ``(payload, provider_tag)``."""


class OfflineTransport:
    """Transport that refuses every call; the default outside live/record."""

    def __init__(self):
        self.attempts = 0

    def send(self, req: ProviderRequest) -> tuple[bytes, str]:
        self.attempts += 1
        raise TransportError(f"network access attempted for {req.kind} while offline")


class HttpTransport:
    """Generic JSON-over-HTTP adapter, one endpoint URL per request kind.

    The request body carries the prompt, params and base64 attachments; the
    response body is the raw payload. Real services need their own adapter
    implementing :class:`Transport`.
    """

    def __init__(self, endpoints: Mapping[str, str], timeout: float = 600.0, env: Mapping[str, str] | None = None):
        self.endpoints = dict(endpoints)
        self.timeout = timeout
        self.env = os.environ if env is None else env

    def send(self, req: ProviderRequest) -> tuple[bytes, str]:
        url = self.endpoints.get(req.kind)
        if not url:
            raise TransportError(f"no endpoint configured for {req.kind}")
        key = self.env.get(API_KEY_ENV[req.kind])
        if not key:
            raise TransportError(f"{API_KEY_ENV[req.kind]} is not set")
        body = json.dumps({
            "kind": req.kind,
            "prompt": req.prompt,
            "params": dict(req.params),
            "images": [base64.b64encode(a.data).decode("ascii") for a in req.attachments],
        }).encode("utf-8")
        http_req = urllib.request.Request(
            url, data=body, method="POST",
            headers={"Content-Type": "application/json", "Authorization": f"Bearer {key}"},
        )
        try:
            with urllib.request.urlopen(http_req, timeout=self.timeout) as resp:
                payload = resp.read()
                tag = resp.headers.get("X-Provider-Tag") or url
        except (urllib.error.URLError, OSError) as exc:
            raise TransportError(f"{req.kind} call to {url} failed: {exc}") from exc
        return payload, tag


def _now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class FixtureStore:
    """Record/replay cache of provider payloads keyed by request digest.

    Layout: ``<root>/<digest>/payload.bin`` plus ``meta.json`` holding kind,
    provider tag and receive time.
    """

    def __init__(
        self,
        root: str | Path | None,
        mode: str = "replay",
        transport: Transport | None = None,
        max_in_flight: int = 4,
        retries: int = 2,
        backoff: float = 1.0,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        if mode in ("record", "replay") and root is None:
            raise ValueError(f"{mode} mode requires a fixtures directory")
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        self.root = Path(root) if root is not None else None
        self.mode = mode
        self.transport = transport if transport is not None else OfflineTransport()
        self.retries = retries
        self.backoff = backoff
        self._sleep = sleep
        self._in_flight = threading.BoundedSemaphore(max_in_flight)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self._consumed: set[str] = set()
        self._consumed_guard = threading.Lock()

    @property
    def consumed_digests(self) -> list[str]:
        with self._consumed_guard:
            return sorted(self._consumed)

    def _lock_for(self, digest: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(digest, threading.Lock())

    def path_for(self, digest: str) -> Path:
        return self.root / digest

    def has(self, req: ProviderRequest) -> bool:
        return self.root is not None and (self.path_for(digest_request(req)) / "payload.bin").is_file()

    def read(self, digest: str) -> ProviderResponse:
        entry = self.path_for(digest)
        try:
            payload = (entry / "payload.bin").read_bytes()
            meta = json.loads((entry / "meta.json").read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise MissingFixture(digest) from None
        return ProviderResponse(meta["kind"], payload, meta.get("received_at", ""), meta.get("provider_tag", ""), digest)

    def write(self, digest: str, response: ProviderResponse) -> None:
        entry = self.path_for(digest)
        meta = {
            "digest": digest,
            "kind": response.kind,
            "provider_tag": response.provider_tag,
            "received_at": response.received_at,
        }
        with self._lock_for(digest):
            entry.mkdir(parents=True, exist_ok=True)
            _atomic_write(entry / "payload.bin", response.payload)
            _atomic_write(entry / "meta.json", canonical.dump_bytes(meta))

    def _call(self, req: ProviderRequest) -> tuple[bytes, str]:
        delay = self.backoff
        for attempt in range(self.retries + 1):
            try:
                with self._in_flight:
                    return self.transport.send(req)
            except TransportError as exc:
                if attempt == self.retries:
                    raise
                logger.warning("%s: transport error (%s), retrying in %.1fs", req.kind, exc, delay)
                self._sleep(delay)
                delay *= 2
        raise AssertionError("unreachable")

    def dispatch(self, req: ProviderRequest) -> ProviderResponse:
        digest = digest_request(req)
        if self.mode == "replay":
            response = self.read(digest)
            if response.kind != req.kind:
                raise MalformedPayload(f"fixture {digest} holds a {response.kind} payload, expected {req.kind}")
        else:
            payload, tag = self._call(req)
            response = ProviderResponse(req.kind, payload, _now(), tag, digest)
        check_payload(req.kind, response.payload)
        if self.mode == "record":
            self.write(digest, response)
        with self._consumed_guard:
            self._consumed.add(digest)
        return response


def dispatch(req: ProviderRequest, store: FixtureStore) -> ProviderResponse:
    return store.dispatch(req)


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dispatch_json(req: ProviderRequest, store: FixtureStore, parse: Callable[[Any], Any], attempts: int = 2):
    """Dispatch a JSON request and parse it, re-sending once on a bad document."""
    last: Exception | None = None
    for _ in range(attempts):
        try:
            return parse(store.dispatch(req).json())
        except (MalformedPayload, SchemaViolation) as exc:
            last = exc
            logger.warning("%s: unusable response (%s)", req.kind, exc)
    raise last


# request builders -------------------------------------------------------

def location_request(photos: Sequence) -> ProviderRequest:
    attachments = [Attachment.from_bytes(p.data) for p in photos]
    joined = "\n".join(p.id for p in photos)
    return ProviderRequest.with_attachments(
        LOCATION_ESTIMATE, prompts.render("location_estimate", joined=joined), attachments,
        {"photo_ids": [p.id for p in photos]},
    )


def parse_location_payload(doc: Any) -> GeoLocation:
    if not isinstance(doc, dict) or set(doc) != {"results"}:
        raise MalformedPayload("location payload must be exactly {\"results\": {...}}")
    res = doc["results"]
    if not isinstance(res, dict) or set(res) != {"latitude", "longitude", "height"}:
        raise MalformedPayload("results must hold exactly latitude, longitude and height")
    for k, v in res.items():
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise MalformedPayload(f"results.{k} must be a number")
    try:
        return GeoLocation(res["latitude"], res["longitude"], res["height"])
    except ValueError as exc:
        raise RangeError(str(exc)) from exc


def estimate_location(photos: Sequence, store: FixtureStore) -> GeoLocation:
    """Ask the vision-language service for one shared location for all photos."""
    if not photos:
        raise ValueError("estimate_location needs at least one photo")
    req = location_request(photos)
    return parse_location_payload(store.dispatch(req).json())


def segmentation_request(photo, text_prompt: str = "person") -> ProviderRequest:
    return ProviderRequest.with_attachments(
        SEGMENTATION, text_prompt, [Attachment.from_bytes(photo.data)],
        {"photo_id": photo.id, "text_prompt": text_prompt},
    )


def scene_analysis_request(photos: Sequence, masks: Mapping[str, Attachment], metadata: Mapping[str, Any]) -> ProviderRequest:
    attachments = [Attachment.from_bytes(p.data) for p in photos]
    attachments += [masks[p.id] for p in photos if p.id in masks]
    return ProviderRequest.with_attachments(
        SCENE_ANALYSIS, prompts.render("scene_analysis"), attachments,
        {"photo_ids": [p.id for p in photos], "metadata": dict(metadata)},
    )


def asset_request(element_id: str, photos: Sequence, masks: Mapping[str, Attachment]) -> ProviderRequest:
    attachments = []
    for p in photos:
        if p.id in masks:
            attachments.append(masks[p.id])
        attachments.append(Attachment.from_bytes(p.data))
    # the service needs a prompt; the element id keeps requests distinct
    return ProviderRequest.with_attachments(
        ASSET_GENERATION, f"image-to-3d:{element_id}", attachments,
        {"element_id": element_id, "photo_ids": [p.id for p in photos]},
    )


def geo_texture_request(element_id: str, scene_summary: str, cover_type: str, cover_description: str) -> ProviderRequest:
    prompt = prompts.render(
        "geo_texture", scene_summary=scene_summary,
        surface_cover_type=cover_type, surface_cover_description=cover_description,
    )
    return ProviderRequest(TEXTURE_GENERATION, prompt, (), {"element_id": element_id, "template": "geo_texture"})


def particle_texture_request(element_id: str, scene_summary: str, particle_type: str, motion: str) -> ProviderRequest:
    prompt = prompts.render(
        "particle_texture", scene_summary=scene_summary, particle_type=particle_type, motion_description=motion,
    )
    return ProviderRequest(TEXTURE_GENERATION, prompt, (), {"element_id": element_id, "template": "particle_texture"})


def annotation_request(
    element_id: str, variant: str, object_text: str, base_map: Attachment, references: Sequence[Attachment]
) -> ProviderRequest:
    template = {"Position": "position", "Area": "area", "Route": "route"}[variant]
    return ProviderRequest.with_attachments(
        ANNOTATION_PAINTING, prompts.render(template, object=object_text), [base_map, *references],
        {"element_id": element_id, "template": variant},
    )
