"""Edge adapters for the chat, image, and embedding backends.

HTTP adapters speak small JSON wire formats and map status codes onto the
retry taxonomy (429/timeouts/5xx transient, moderation blocked, other 4xx
permanent). The ``offline:`` scheme selects deterministic in-process
providers so every pipeline stage can run without network access.
"""

from __future__ import annotations

import base64
import hashlib
import io
import re

import httpx

from .errors import AccimgError, BlockedError, PermanentError, TransientError
from .templates import TEMPLATES, build_conforming_prompt, style_from_name

OFFLINE_SCHEME = "offline:"

_TIMEOUT = 60.0

_MODERATION_MARKERS = ("content_policy", "moderation", "safety system")


def _raise_for_status(resp: httpx.Response, what: str) -> None:
    if resp.status_code < 400:
        return
    body = resp.text[:500]
    if resp.status_code in (408, 429) or resp.status_code >= 500:
        raise TransientError(f"{what} returned {resp.status_code}: {body}")
    raise PermanentError(f"{what} returned {resp.status_code}: {body}")


class HttpChatClient:
    """Chat backend over HTTP.

    POSTs ``{"messages", "temperature", "max_tokens"}`` (plus ``model`` when
    configured) and accepts either a plain ``{"text": ...}`` reply or the
    common ``choices[0].message.content`` layout.
    """

    def __init__(self, url: str, api_key: str = "", model: str = "",
                 timeout: float = _TIMEOUT, transport: httpx.BaseTransport | None = None):
        self.url = url
        self.api_key = api_key
        self.model = model
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def send(self, messages: list[dict], temperature: float, max_tokens: int) -> str:
        payload: dict = {
            "messages": messages,
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
        if self.model:
            payload["model"] = self.model
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._client.post(self.url, json=payload, headers=headers)
        except httpx.HTTPError as exc:
            raise TransientError(f"chat request failed: {exc}") from exc
        _raise_for_status(resp, "chat backend")
        body = resp.json()
        if "text" in body:
            return str(body["text"])
        try:
            return str(body["choices"][0]["message"]["content"])
        except (KeyError, IndexError, TypeError) as exc:
            raise PermanentError(f"unrecognized chat response shape: {body}") from exc


_LAYOUT_LINE_RE = re.compile(r"^Layout:\s*(?P<label>.+?)\s*\((?P<version>v\d+)\)\.", re.MULTILINE)
_STYLE_LINE_RE = re.compile(r"^Style:\s*(?P<name>[^.]+)\.", re.MULTILINE)


class OfflineChatClient:
    """Deterministic chat stand-in: synthesizes a conforming image prompt
    from the layout and style named in the system message."""

    def send(self, messages: list[dict], temperature: float, max_tokens: int) -> str:
        system = next((m["content"] for m in messages if m["role"] == "system"), "")
        # The last user turn carries the sentence (or repair feedback).
        sentence = next(
            (m["content"] for m in reversed(messages) if m["role"] == "user"), ""
        )
        layout = _LAYOUT_LINE_RE.search(system)
        style_m = _STYLE_LINE_RE.search(system)
        if layout is None or style_m is None:
            raise PermanentError("system message names no layout/style")
        name = layout.group("label").replace(" ", "")
        version = layout.group("version")
        if (name, version) not in TEMPLATES:
            raise PermanentError(f"unknown layout in system message: {layout.group(0)!r}")
        template = TEMPLATES[(name, version)]
        style = style_from_name(style_m.group("name").strip())
        return build_conforming_prompt(template, style, sentence)


class HttpImageClient:
    """Image backend over HTTP.

    POSTs ``{"prompt", "size"}`` and expects ``{"image_b64": ...}`` (or
    ``data[0].b64_json``). Moderation refusals surface as BlockedError.
    """

    def __init__(self, url: str, api_key: str = "", timeout: float = _TIMEOUT,
                 transport: httpx.BaseTransport | None = None):
        self.url = url
        self.api_key = api_key
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def generate(self, prompt: str, size: str) -> bytes:
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._client.post(
                self.url, json={"prompt": prompt, "size": size}, headers=headers
            )
        except httpx.HTTPError as exc:
            raise TransientError(f"image request failed: {exc}") from exc
        if resp.status_code == 400:
            low = resp.text.lower()
            if any(marker in low for marker in _MODERATION_MARKERS):
                raise BlockedError(resp.text[:500])
        _raise_for_status(resp, "image backend")
        body = resp.json()
        if "image_b64" in body:
            return base64.b64decode(body["image_b64"])
        try:
            return base64.b64decode(body["data"][0]["b64_json"])
        except (KeyError, IndexError, TypeError) as exc:
            raise PermanentError(f"unrecognized image response shape: {body}") from exc


class OfflineImageClient:
    """Deterministic image stand-in: renders a small PNG whose palette is
    derived from the prompt digest, so identical prompts yield identical
    bytes."""

    def __init__(self, side: int = 64):
        self.side = side

    def generate(self, prompt: str, size: str) -> bytes:
        from PIL import Image, ImageDraw

        digest = hashlib.sha256(prompt.encode("utf-8")).digest()
        bg = tuple(160 + d % 64 for d in digest[:3])
        img = Image.new("RGB", (self.side, self.side), bg)
        draw = ImageDraw.Draw(img)
        cell = self.side // 4
        for i in range(4):
            color = tuple(digest[3 * i + 3: 3 * i + 6])
            x = cell // 2 + i * cell
            draw.rectangle([x, x % (2 * cell) + cell, x + cell // 2, x % (2 * cell) + 2 * cell], fill=color)
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return buf.getvalue()


class HttpEmbeddingBackend:
    """Embedding backend over the embedding-service wire format.

    Batch endpoints accept up to 64 items; single-item helpers satisfy the
    in-process backend contract.
    """

    def __init__(self, base_url: str, timeout: float = _TIMEOUT,
                 transport: httpx.BaseTransport | None = None):
        self.base_url = base_url.rstrip("/")
        self._client = httpx.Client(timeout=timeout, transport=transport)
        self.model_id = ""
        self.dim = 0
        self._probe()

    def _probe(self) -> None:
        try:
            resp = self._client.get(f"{self.base_url}/healthz")
        except httpx.HTTPError as exc:
            raise TransientError(f"embedding backend unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise TransientError(f"embedding backend not ready: {resp.status_code}")
        body = resp.json()
        self.model_id = body.get("model_id", "")
        self.dim = int(body.get("dim", 0))

    def _post(self, path: str, payload: dict) -> list[list[float]]:
        try:
            resp = self._client.post(f"{self.base_url}{path}", json=payload)
        except httpx.HTTPError as exc:
            raise TransientError(f"embedding request failed: {exc}") from exc
        _raise_for_status(resp, "embedding backend")
        return resp.json()["vectors"]

    def embed_texts(self, texts: list[str]) -> list[list[float]]:
        vectors: list[list[float]] = []
        for start in range(0, len(texts), 64):
            vectors.extend(self._post("/v1/embed/text", {"texts": texts[start: start + 64]}))
        return vectors

    def embed_images(self, images: list[bytes]) -> list[list[float]]:
        vectors: list[list[float]] = []
        for start in range(0, len(images), 64):
            chunk = [base64.b64encode(b).decode("ascii") for b in images[start: start + 64]]
            vectors.extend(self._post("/v1/embed/image", {"images": chunk}))
        return vectors

    def embed_text(self, text: str) -> list[float]:
        return self.embed_texts([text])[0]

    def embed_image(self, image: bytes) -> list[float]:
        return self.embed_images([image])[0]


def chat_client_for(url: str, api_key: str = "", model: str = ""):
    if url.startswith(OFFLINE_SCHEME):
        return OfflineChatClient()
    if not url:
        raise AccimgError("no chat backend configured (set CHAT_API_URL)")
    return HttpChatClient(url, api_key=api_key, model=model)


def image_client_for(url: str, api_key: str = ""):
    if url.startswith(OFFLINE_SCHEME):
        return OfflineImageClient()
    if not url:
        raise AccimgError("no image backend configured (set GEN_API_URL)")
    return HttpImageClient(url, api_key=api_key)
