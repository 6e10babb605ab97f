"""Wire-level clients for the policy and segmenter services, plus
deterministic scripted backends for tests and simulation.

The native policy protocol is a single POST of
``{"image_b64": ..., "prompt": ..., "n": ..., "temperature": ...}`` returning
``{"completions": [...]}``; an adapter for chat-completions style servers is
included. The segmenter takes a box plus two foreground-labelled points and
returns an RLE mask. Scripted backends are pure functions of the request, so
identical runs produce identical bytes; no backend call mutates engine state.
"""

from __future__ import annotations

import base64
import io
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Optional, Union

import requests

from .geometry import BBox, Frame, Point
from .mask import MaskRle

POLICY_URL_ENV = "FINERS_POLICY_URL"
SEG_URL_ENV = "FINERS_SEG_URL"


class BackendError(RuntimeError):
    """Base class for backend failures."""


class BackendUnavailable(BackendError):
    """All retry attempts were exhausted."""


class MalformedResponse(BackendError):
    """The server answered with a body the client cannot use."""


class MalformedMask(BackendError):
    """The segmenter returned a mask of the wrong shape."""


class ImageUnavailable(BackendError):
    """Pixel data was requested for an image that cannot be materialised."""


@dataclass(frozen=True)
class ImageRef:
    """Lazy image handle: path plus the transform that produces the view.

    Pixels are only decoded when an HTTP backend needs bytes; scripted
    backends work from the metadata and the request context, so simulation
    runs never touch the filesystem.
    """

    path: str
    width: int
    height: int
    scale_to: Optional[tuple[int, int]] = None
    crop: Optional[tuple[int, int, int]] = None  # (x, y, side) pre-scaling

    def scaled(self, width: int, height: int) -> "ImageRef":
        return replace(self, scale_to=(width, height))

    def cropped(self, x: int, y: int, side: int) -> "ImageRef":
        return replace(self, crop=(x, y, side), scale_to=None)

    def to_png_bytes(self) -> bytes:
        if self.path.startswith("synthetic://"):
            raise ImageUnavailable(
                f"{self.path} has no rendered pixels; regenerate with a render dir"
            )
        from PIL import Image

        try:
            img = Image.open(self.path).convert("RGB")
        except OSError as exc:
            raise ImageUnavailable(f"cannot load {self.path}: {exc}") from exc
        if self.crop is not None:
            x, y, side = self.crop
            img = img.crop((x, y, x + side, y + side))
        if self.scale_to is not None:
            img = img.resize(self.scale_to)
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return buf.getvalue()


ImagePayload = Union[bytes, ImageRef]


def image_b64(image: ImagePayload) -> str:
    data = image if isinstance(image, bytes) else image.to_png_bytes()
    return base64.b64encode(data).decode("ascii")


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 3
    backoff: float = 0.5  # seconds, doubled per retry


@dataclass(frozen=True)
class RequestDefaults:
    n_samples: int = 1
    temperature: float = 1.0
    max_tokens: int = 1024


@dataclass(frozen=True)
class CompletionRequest:
    image: ImagePayload
    prompt: str
    n: int
    temperature: float
    context: dict = field(default_factory=dict)


PolicyRule = Callable[[CompletionRequest], list[str]]
Transport = Callable[..., Any]  # requests.post signature


@dataclass(frozen=True)
class PolicyBackend:
    mode: str = "scripted"  # "http" | "scripted"
    endpoint: Optional[str] = None
    rule: Optional[PolicyRule] = None
    request_defaults: RequestDefaults = field(default_factory=RequestDefaults)
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    wire: str = "native"  # "chat" for chat-completions style servers
    bearer_token: Optional[str] = None
    timeout: float = 60.0
    transport: Optional[Transport] = None

    def __post_init__(self) -> None:
        if self.mode == "http" and not self.endpoint:
            raise ValueError("http policy backend requires an endpoint")
        if self.mode == "scripted" and self.rule is None:
            raise ValueError("scripted policy backend requires a rule")
        if self.mode not in ("http", "scripted"):
            raise ValueError(f"unknown policy backend mode {self.mode!r}")


def _post_with_retries(
    backend: Union["PolicyBackend", "SegmenterBackend"],
    payload: dict,
    headers: dict,
) -> dict:
    post = backend.transport or requests.post
    delay = backend.retry.backoff
    last: Optional[Exception] = None
    for attempt in range(max(backend.retry.attempts, 1)):
        if attempt > 0 and delay > 0:
            time.sleep(delay)
            delay *= 2
        try:
            resp = post(backend.endpoint, json=payload, headers=headers, timeout=backend.timeout)
        except requests.RequestException as exc:
            last = exc
            continue
        status = getattr(resp, "status_code", 0)
        if status != 200:
            last = BackendError(f"HTTP {status} from {backend.endpoint}")
            continue
        try:
            body = resp.json()
        except ValueError as exc:
            last = MalformedResponse(f"non-JSON body from {backend.endpoint}")
            continue
        if not isinstance(body, dict):
            last = MalformedResponse(f"unexpected body type from {backend.endpoint}")
            continue
        return body
    raise BackendUnavailable(
        f"{backend.endpoint}: retries exhausted ({backend.retry.attempts}): {last}"
    )


def _headers(token: Optional[str]) -> dict:
    h = {"Content-Type": "application/json"}
    if token:
        h["Authorization"] = f"Bearer {token}"
    return h


def _chat_payload(b: PolicyBackend, img64: str, prompt: str, n: int, temperature: float) -> dict:
    return {
        "n": n,
        "temperature": temperature,
        "max_tokens": b.request_defaults.max_tokens,
        "messages": [
            {
                "role": "user",
                "content": [
                    {
                        "type": "image_url",
                        "image_url": {"url": f"data:image/png;base64,{img64}"},
                    },
                    {"type": "text", "text": prompt},
                ],
            }
        ],
    }


def complete(
    b: PolicyBackend,
    image: ImagePayload,
    prompt: str,
    n: int,
    temperature: Optional[float] = None,
    context: Optional[dict] = None,
) -> list[str]:
    """Request n raw completions for one image+prompt pair."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    temp = b.request_defaults.temperature if temperature is None else temperature
    if b.mode == "scripted":
        req = CompletionRequest(image, prompt, n, temp, dict(context or {}))
        out = b.rule(req)
        if not isinstance(out, list) or len(out) != n or not all(isinstance(s, str) for s in out):
            raise MalformedResponse(
                f"scripted rule must return {n} strings, got {type(out).__name__}"
            )
        return out

    img64 = image_b64(image)
    if b.wire == "chat":
        payload = _chat_payload(b, img64, prompt, n, temp)
    else:
        payload = {"image_b64": img64, "prompt": prompt, "n": n, "temperature": temp}
    body = _post_with_retries(b, payload, _headers(b.bearer_token))
    if b.wire == "chat":
        try:
            completions = [c["message"]["content"] for c in body["choices"]]
        except (KeyError, TypeError) as exc:
            raise MalformedResponse(f"chat body missing choices: {exc}") from exc
    else:
        completions = body.get("completions")
    if not isinstance(completions, list) or len(completions) != n:
        raise MalformedResponse(
            f"expected {n} completions, got {completions!r:.80}"
        )
    return [str(c) for c in completions]


SegmenterRule = Callable[[ImagePayload, BBox, tuple[Point, Point], dict], MaskRle]


@dataclass(frozen=True)
class SegmenterBackend:
    mode: str = "box_rasterize_fallback"  # "http" | "scripted" | fallback
    endpoint: Optional[str] = None
    rule: Optional[SegmenterRule] = None
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    bearer_token: Optional[str] = None
    timeout: float = 60.0
    transport: Optional[Transport] = None

    def __post_init__(self) -> None:
        if self.mode == "http" and not self.endpoint:
            raise ValueError("http segmenter backend requires an endpoint")
        if self.mode == "scripted" and self.rule is None:
            raise ValueError("scripted segmenter backend requires a rule")
        if self.mode not in ("http", "scripted", "box_rasterize_fallback"):
            raise ValueError(f"unknown segmenter backend mode {self.mode!r}")


def segment(
    b: SegmenterBackend,
    image: ImagePayload,
    box: BBox,
    points: tuple[Point, Point],
    context: Optional[dict] = None,
) -> MaskRle:
    """Box+points to mask. The mask dims must match the box's frame."""
    frame: Frame = box.frame
    for p in points:
        if p.frame != frame:
            raise ValueError("prompt points must share the box frame")

    if b.mode == "box_rasterize_fallback":
        from .mask import rasterize_box, rle_encode

        return rle_encode(rasterize_box(box))

    if b.mode == "scripted":
        rle = b.rule(image, box, points, dict(context or {}))
        if (rle.width, rle.height) != (frame.width, frame.height):
            raise MalformedMask(
                f"scripted mask {rle.width}x{rle.height} != frame "
                f"{frame.width}x{frame.height}"
            )
        return rle

    payload = {
        "image_b64": image_b64(image),
        "box": box.to_list(),
        # Both prompt points are sent as foreground prompts.
        "points": [points[0].to_list(), points[1].to_list()],
        "point_labels": [1, 1],
    }
    body = _post_with_retries(b, payload, _headers(b.bearer_token))
    try:
        rle = MaskRle.from_json_dict(body["mask"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedMask(f"segmenter body malformed: {exc}") from exc
    if (rle.width, rle.height) != (frame.width, frame.height):
        raise MalformedMask(
            f"mask {rle.width}x{rle.height} != frame {frame.width}x{frame.height}"
        )
    return rle
