"""Tokenizing, stemming, translation and sentiment scoring of banner text.

The offline providers are pure functions of their input. An external text
service can be plugged in through :class:`TextProvider`; its responses are
validated and logged so a run can be replayed.
"""

from __future__ import annotations

import json
import logging
import math
import os
import re
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Mapping

from nltk.stem.porter import PorterStemmer

from .errors import InvalidLexicon, ProviderUnavailable

log = logging.getLogger(__name__)

OFFLINE = "offline-default"
EXTERNAL = "external"

ENDPOINT_ENV = "DARKBANNER_TEXT_ENDPOINT"
KEY_ENV = "DARKBANNER_TEXT_KEY"

_NON_ALNUM = re.compile(r"[^0-9a-z]+")
_stemmer = PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM)


@dataclass(frozen=True)
class SentimentResult:
    score: float = 0.0
    magnitude: float = 0.0

    def __post_init__(self):
        if not (-1.0 <= self.score <= 1.0) or not (self.magnitude >= 0.0):
            raise ValueError(f"invalid sentiment {self.score!r}, {self.magnitude!r}")


@dataclass(frozen=True)
class TextProvider:
    """Where translation and sentiment come from.

    ``kind`` is either ``"offline-default"`` or ``"external"``. An external
    provider speaks the small JSON protocol implemented by
    :func:`call_service`.
    """

    kind: str = OFFLINE
    endpoint: str | None = None
    key: str | None = None
    timeout: float = 10.0
    retries: int = 2

    def __post_init__(self):
        if self.kind not in (OFFLINE, EXTERNAL):
            raise ValueError(f"unknown provider kind {self.kind!r}")

    @classmethod
    def from_env(cls, kind: str = EXTERNAL, **overrides) -> "TextProvider":
        if kind == OFFLINE:
            return cls()
        endpoint = overrides.pop("endpoint", None) or os.environ.get(ENDPOINT_ENV)
        key = overrides.pop("key", None) or os.environ.get(KEY_ENV)
        return cls(kind=kind, endpoint=endpoint, key=key, **overrides)


OFFLINE_PROVIDER = TextProvider()


def tokenize(text: str) -> list[str]:
    if not text:
        return []
    return [t for t in _NON_ALNUM.split(text.lower()) if t]


@lru_cache(maxsize=65536)
def _stem(token: str) -> str:
    stem = _stemmer.stem(token)
    return stem or token


def stem_tokens(tokens: list[str]) -> list[str]:
    return [_stem(t) for t in tokens]


def stemmed(text: str) -> list[str]:
    return stem_tokens(tokenize(text))


# -- external service ---------------------------------------------------------


def call_service(provider: TextProvider, payload: dict) -> dict:
    """POST ``payload`` as JSON to the provider endpoint and decode the reply.

    Retries ``provider.retries`` times with a short linear backoff, then
    raises :class:`ProviderUnavailable`.
    """
    if provider.kind != EXTERNAL or not provider.endpoint:
        raise ProviderUnavailable("no external text endpoint configured")
    body = json.dumps(payload).encode("utf-8")
    headers = {"Content-Type": "application/json"}
    if provider.key:
        headers["Authorization"] = f"Bearer {provider.key}"
    last = None
    for attempt in range(provider.retries + 1):
        req = urllib.request.Request(provider.endpoint, data=body, headers=headers, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=provider.timeout) as resp:
                return json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, ValueError) as exc:
            last = exc
            if attempt < provider.retries:
                time.sleep(0.05 * (attempt + 1))
    raise ProviderUnavailable(f"text service at {provider.endpoint} failed: {last}")


def translate(text: str, provider: TextProvider = OFFLINE_PROVIDER) -> str:
    if provider.kind == OFFLINE or not text:
        return text
    reply = call_service(provider, {"op": "translate", "text": text})
    out = reply.get("text") if isinstance(reply, dict) else None
    if not isinstance(out, str):
        raise ProviderUnavailable(f"malformed translate response: {reply!r}")
    return out


# -- sentiment ----------------------------------------------------------------


def validate_lexicon(lexicon: Mapping[str, float]) -> None:
    for term, valence in lexicon.items():
        v = float(valence)
        if math.isnan(v) or not -1.0 <= v <= 1.0:
            raise InvalidLexicon(f"valence for {term!r} outside [-1, 1]: {valence!r}")


def stem_lexicon(lexicon: Mapping[str, float]) -> dict[str, float]:
    """Re-key a term lexicon by stem; terms sharing a stem are averaged."""
    validate_lexicon(lexicon)
    grouped: dict[str, list[float]] = {}
    for term, valence in lexicon.items():
        toks = stemmed(term)
        if len(toks) != 1:
            log.warning("lexicon term %r does not reduce to a single token; skipped", term)
            continue
        grouped.setdefault(toks[0], []).append(float(valence))
    return {stem: sum(vs) / len(vs) for stem, vs in grouped.items()}


def parse_lexicon(lines) -> dict[str, float]:
    lexicon: dict[str, float] = {}
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise InvalidLexicon(f"line {lineno}: expected 'term<TAB>valence', got {line!r}")
        try:
            lexicon[parts[0].strip()] = float(parts[1])
        except ValueError:
            raise InvalidLexicon(f"line {lineno}: bad valence {parts[1]!r}") from None
    validate_lexicon(lexicon)
    return lexicon


def load_lexicon(path: str | Path | None = None) -> dict[str, float]:
    """Read a ``term<TAB>valence`` file; the bundled lexicon when ``path`` is None."""
    if path is None:
        text = resources.files("darkbanner").joinpath("data/lexicon.tsv").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return parse_lexicon(text.splitlines())


@lru_cache(maxsize=1)
def default_lexicon() -> dict[str, float]:
    return load_lexicon()


def score_sentiment(
    text: str,
    lexicon: Mapping[str, float] | None = None,
    provider: TextProvider = OFFLINE_PROVIDER,
) -> SentimentResult:
    """Valence and magnitude of ``text``.

    Offline: every stemmed token found in the (stemmed) lexicon contributes its
    valence; the score is the clamped mean of matched valences and the magnitude
    the sum of their absolute values.
    """
    if provider.kind == EXTERNAL:
        reply = call_service(provider, {"op": "sentiment", "text": text})
        try:
            return SentimentResult(float(reply["score"]), float(reply["magnitude"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ProviderUnavailable(f"malformed sentiment response: {reply!r}") from exc

    return _score_offline(text, stem_lexicon(default_lexicon() if lexicon is None else lexicon))


def _score_offline(text: str, stems: Mapping[str, float]) -> SentimentResult:
    matched = [stems[s] for s in stemmed(text) if s in stems]
    if not matched:
        return SentimentResult(0.0, 0.0)
    score = min(1.0, max(-1.0, sum(matched) / max(1, len(matched))))
    return SentimentResult(score, sum(abs(v) for v in matched))


@dataclass
class TextService:
    """Provider front-end used by the pipeline.

    Remembers every external answer it received so runs can be replayed, and
    optionally falls back to the offline provider when the service is down.
    """

    provider: TextProvider = OFFLINE_PROVIDER
    lexicon: Mapping[str, float] | None = None
    fallback: bool = True
    translations: dict[str, str] = field(default_factory=dict)
    sentiments: dict[str, tuple[float, float]] = field(default_factory=dict)
    fallbacks: int = 0

    def __post_init__(self):
        if self.lexicon is None:
            self.lexicon = default_lexicon()
        self._stemmed = stem_lexicon(self.lexicon)

    def translate(self, text: str) -> str:
        if text in self.translations:
            return self.translations[text]
        try:
            out = translate(text, self.provider)
        except ProviderUnavailable:
            if not self.fallback:
                raise
            self.fallbacks += 1
            out = translate(text, OFFLINE_PROVIDER)
        if self.provider.kind == EXTERNAL:
            self.translations[text] = out
        return out

    def sentiment(self, text: str) -> SentimentResult:
        if text in self.sentiments:
            return SentimentResult(*self.sentiments[text])
        try:
            if self.provider.kind == EXTERNAL:
                res = score_sentiment(text, self.lexicon, self.provider)
            else:
                res = _score_offline(text, self._stemmed)
        except ProviderUnavailable:
            if not self.fallback:
                raise
            self.fallbacks += 1
            res = _score_offline(text, self._stemmed)
        if self.provider.kind == EXTERNAL:
            self.sentiments[text] = (res.score, res.magnitude)
        return res

    def provenance(self) -> dict:
        return {
            "provider": self.provider.kind,
            "endpoint": self.provider.endpoint,
            "fallbacks": self.fallbacks,
            "translations": dict(sorted(self.translations.items())),
            "sentiments": {k: list(v) for k, v in sorted(self.sentiments.items())},
        }
