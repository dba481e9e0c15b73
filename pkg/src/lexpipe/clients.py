"""Text-generation and embedding clients, with offline deterministic stand-ins.

Real endpoints speak JSON over HTTP POST: ``{prompt, max_tokens, temperature}``
for generation (reply carries ``text``) and ``{text}`` for embeddings (reply
carries ``embedding``). When ``GEN_ENDPOINT`` / ``EMBED_ENDPOINT`` are unset
the stubs are used.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Protocol

import numpy as np
import requests

__all__ = [
    "GenerationRequest",
    "ClientError",
    "Timeout",
    "EndpointError",
    "MalformedResponse",
    "EmptyText",
    "Generator",
    "Embedder",
    "StubGenerator",
    "HttpGenerator",
    "HashingEmbedder",
    "HttpEmbedder",
    "make_generator",
    "make_embedder",
    "cosine",
]

DEFAULT_TIMEOUT_MS = 30_000
DEFAULT_DIM = 256


class ClientError(RuntimeError):
    pass


class Timeout(ClientError):
    pass


class EndpointError(ClientError):
    pass


class MalformedResponse(ClientError):
    pass


class EmptyText(ValueError):
    pass


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    max_tokens: int = 512
    temperature: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")


class Generator(Protocol):
    def generate(self, req: GenerationRequest) -> str: ...


class Embedder(Protocol):
    def embed(self, text: str) -> np.ndarray: ...


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


# --- generation -----------------------------------------------------------------

def _rng_for(seed: int | None, prompt: str) -> random.Random:
    digest = hashlib.sha256(f"{seed}\x00{prompt}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


_QA_RE = re.compile(r"legal text:(?P<text>.*?)\nPlease generate (?P<n>\d+) ", re.S)
_AUG_RE = re.compile(r"法律要素：(?P<name>[^\n]+)\s*$")
_EXTRACT_RE = re.compile(r"要素列表：(?P<names>[^\n]*)\n输入文本：(?P<doc>.*)$", re.S)
_CANNED = (
    "根据现有材料无法作出判断。",
    "该问题需要结合具体案情进行分析。",
    "请提供更多的案件信息。",
)


class StubGenerator:
    """Offline generator: a deterministic function of (seed, prompt).

    It recognizes the bundled prompt templates and answers them with simple
    rules (sentence-level QA pairs, one-line element glosses, naive
    name-followed-by-value extraction) so the whole pipeline runs offline.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed

    def generate(self, req: GenerationRequest) -> str:
        seed = self.seed if req.seed is None else req.seed
        rng = _rng_for(seed, req.prompt)
        if m := _QA_RE.search(req.prompt):
            return self._qa(m.group("text"), int(m.group("n")), rng)
        if m := _EXTRACT_RE.search(req.prompt):
            return self._extract(m.group("names"), m.group("doc"))
        if m := _AUG_RE.search(req.prompt):
            name = m.group("name").strip()
            return f"{name}（{name}是刑事案件中需要依法认定的法律要素）"
        return rng.choice(_CANNED)

    @staticmethod
    def _qa(text: str, n: int, rng: random.Random) -> str:
        sentences = [s.strip() for s in re.split(r"(?<=[。；！？])", text) if s.strip()]
        if not sentences:
            sentences = [text.strip() or "无"]
        order = list(range(len(sentences)))
        rng.shuffle(order)
        pairs = []
        for k in range(n):
            s = sentences[order[k % len(sentences)]]
            head = s[:12].rstrip("，。；")
            q = f"“{head}”这一规定的内容是什么？" if k < len(sentences) else f"第{k + 1}问：“{head}”如何理解？"
            pairs.append({"input": q, "output": s})
        return "好的，以下是生成的问答对：\n" + json.dumps(pairs, ensure_ascii=False)

    @staticmethod
    def _extract(names: str, doc: str) -> str:
        out = {}
        for name in filter(None, (s.strip() for s in names.split("、"))):
            pos = doc.find(name)
            if pos < 0:
                continue
            tail = re.match(r"[^，。；、,;\n]*", doc[pos + len(name):]).group(0).strip()
            out[name] = tail or "是"
        return json.dumps(out, ensure_ascii=False)


class HttpGenerator:
    def __init__(self, endpoint: str, timeout_ms: int = DEFAULT_TIMEOUT_MS):
        self.endpoint = endpoint
        self.timeout = timeout_ms / 1000.0

    def generate(self, req: GenerationRequest) -> str:
        payload = {"prompt": req.prompt, "max_tokens": req.max_tokens, "temperature": req.temperature}
        if req.seed is not None:
            payload["seed"] = req.seed
        body = _post(self.endpoint, payload, self.timeout)
        text = body.get("text", body.get("completion")) if isinstance(body, dict) else None
        if not isinstance(text, str):
            raise MalformedResponse("generation reply has no 'text' string")
        return text


def _post(url: str, payload: dict, timeout: float):
    try:
        resp = requests.post(url, json=payload, timeout=timeout)
        resp.raise_for_status()
    except requests.Timeout as exc:
        raise Timeout(str(exc)) from exc
    except requests.RequestException as exc:
        raise EndpointError(str(exc)) from exc
    try:
        return resp.json()
    except ValueError as exc:
        raise MalformedResponse("reply is not JSON") from exc


# --- embeddings -----------------------------------------------------------------

class HashingEmbedder:
    """Character n-gram counts hashed into ``dim`` buckets, L2-normalized."""

    def __init__(self, dim: int = DEFAULT_DIM, ngram_range: tuple[int, int] = (1, 3)):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.ngram_range = ngram_range
        self._cached = lru_cache(maxsize=65536)(self._embed)

    def bucket(self, gram: str) -> int:
        h = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(h, "little") % self.dim

    def ngrams(self, text: str) -> list[str]:
        lo, hi = self.ngram_range
        return [text[i:i + n] for n in range(lo, hi + 1) for i in range(len(text) - n + 1)]

    def _embed(self, text: str) -> np.ndarray:
        v = np.zeros(self.dim)
        for g in self.ngrams(text):
            v[self.bucket(g)] += 1.0
        v /= np.linalg.norm(v)
        v.setflags(write=False)
        return v

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise EmptyText("cannot embed empty text")
        return self._cached(text)


class HttpEmbedder:
    def __init__(self, endpoint: str, timeout_ms: int = DEFAULT_TIMEOUT_MS):
        self.endpoint = endpoint
        self.timeout = timeout_ms / 1000.0

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise EmptyText("cannot embed empty text")
        body = _post(self.endpoint, {"text": text}, self.timeout)
        try:
            v = np.asarray(body["embedding"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedResponse("embedding reply has no numeric 'embedding'") from exc
        norm = np.linalg.norm(v)
        if v.ndim != 1 or not np.isfinite(norm) or norm == 0:
            raise MalformedResponse("embedding must be a non-zero finite vector")
        return v / norm


def make_generator(stub: bool = False, seed: int = 0, timeout_ms: int = DEFAULT_TIMEOUT_MS) -> Generator:
    endpoint = os.environ.get("GEN_ENDPOINT")
    if stub or not endpoint:
        return StubGenerator(seed)
    return HttpGenerator(endpoint, timeout_ms)


def make_embedder(stub: bool = False, dim: int = DEFAULT_DIM, timeout_ms: int = DEFAULT_TIMEOUT_MS) -> Embedder:
    endpoint = os.environ.get("EMBED_ENDPOINT")
    if stub or not endpoint:
        return HashingEmbedder(dim)
    return HttpEmbedder(endpoint, timeout_ms)
