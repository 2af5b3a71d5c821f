"""HTML -> ordered text segments plus document metadata.

A segment is a block-level text run: text that accumulates under the nearest
non-inline ancestor until another non-inline element opens or closes. Inline
markup (``a``, ``span``, ``em`` ...) is flattened into the surrounding run.
Parsing is done with the stdlib :class:`html.parser.HTMLParser`, which
recovers from malformed markup instead of failing.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from html.parser import HTMLParser

from sore.errors import EmptyDocument

EXCLUDED_TAGS = frozenset({"script", "style", "noscript", "template", "head", "title"})

INLINE_TAGS = frozenset({
    "a", "abbr", "acronym", "b", "bdi", "bdo", "big", "br", "cite", "code", "data",
    "del", "dfn", "em", "font", "i", "img", "ins", "kbd", "label", "mark", "nobr",
    "q", "rp", "rt", "ruby", "s", "samp", "small", "span", "strike", "strong",
    "sub", "sup", "time", "tt", "u", "var", "wbr",
})

VOID_TAGS = frozenset({
    "area", "base", "br", "col", "embed", "hr", "img", "input", "keygen", "link",
    "meta", "param", "source", "track", "wbr",
})

# Opening the key closes an open element from the value set (HTML optional end tags).
_IMPLIED_END = {
    "p": {"p"},
    "li": {"li", "p"},
    "dt": {"dt", "dd", "p"},
    "dd": {"dt", "dd", "p"},
    "tr": {"tr", "td", "th", "p"},
    "td": {"td", "th", "p"},
    "th": {"td", "th", "p"},
    "option": {"option"},
}
_CLOSES_P = frozenset({
    "address", "article", "aside", "blockquote", "div", "dl", "fieldset", "figure",
    "footer", "form", "h1", "h2", "h3", "h4", "h5", "h6", "header", "hr", "main",
    "nav", "ol", "pre", "section", "table", "ul",
})
# Implied-end lookups never cross these.
_SCOPE_TAGS = frozenset({"table", "ul", "ol", "dl", "div", "section", "article", "body", "html", "blockquote"})

_WS = re.compile(r"\s+")
_SENTENCE_BREAK = re.compile(r"(?<=[.?!])\s+(?=[A-ZÀ-ɏͰ-ϿЀ-ӿ])")
_CHARSET = re.compile(rb"""<meta[^>]+charset\s*=\s*["']?\s*([A-Za-z0-9_\-:.]+)""", re.I)


def normalize_ws(text: str) -> str:
    return _WS.sub(" ", text).strip()


@dataclass(frozen=True)
class Segment:
    id: int
    text: str
    tag_path: tuple[str, ...]
    depth: int
    char_span: tuple[int, int]


@dataclass(frozen=True)
class DocumentMetadata:
    title: str | None = None
    description: str | None = None

    @property
    def combined_text(self) -> str:
        return "\n".join(p for p in (self.title, self.description) if p)


@dataclass
class _Meta:
    title: list[str] = field(default_factory=list)
    og_title: str | None = None
    h1: list[str] = field(default_factory=list)
    description: str | None = None
    og_description: str | None = None


class _BlockParser(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.stack: list[str] = []
        self.skip_depth = 0  # open excluded/hidden elements
        self._skip_marks: list[int] = []  # stack indices that opened a skip
        self.runs: list[tuple[str, tuple[str, ...]]] = []
        self._buf: list[str] = []
        self._owner: tuple[str, ...] = ()
        self.meta = _Meta()
        self._in_title = False
        self._h1_state = 0  # 0 = not seen, 1 = inside first h1, 2 = done

    # run bookkeeping

    def _flush(self) -> None:
        if self._buf:
            self.runs.append(("".join(self._buf), self._owner))
            self._buf = []

    def _current_owner(self) -> tuple[str, ...]:
        for i in range(len(self.stack) - 1, -1, -1):
            if self.stack[i] not in INLINE_TAGS:
                return tuple(self.stack[: i + 1])
        return ()

    def _push(self, tag: str, attrs) -> None:
        if tag not in INLINE_TAGS:
            self._flush()
        self.stack.append(tag)
        if tag in EXCLUDED_TAGS or any(name == "hidden" for name, _ in attrs):
            self.skip_depth += 1
            self._skip_marks.append(len(self.stack) - 1)
        self._owner = self._current_owner()

    def _pop_to(self, index: int) -> None:
        while len(self.stack) > index:
            tag = self.stack.pop()
            if self._skip_marks and self._skip_marks[-1] == len(self.stack):
                self._skip_marks.pop()
                self.skip_depth -= 1
            if tag not in INLINE_TAGS:
                self._flush()
            if tag == "title":
                self._in_title = False
            if tag == "h1" and self._h1_state == 1:
                self._h1_state = 2
        self._owner = self._current_owner()

    def _find_open(self, names, stop_at_scope: bool = True) -> int:
        for i in range(len(self.stack) - 1, -1, -1):
            tag = self.stack[i]
            if tag in names:
                return i
            if stop_at_scope and tag in _SCOPE_TAGS:
                return -1
        return -1

    # HTMLParser hooks

    def handle_starttag(self, tag, attrs):
        tag = tag.lower()
        if tag == "meta":
            self._meta_tag(dict((k.lower(), v) for k, v in attrs if k))
        implied = _IMPLIED_END.get(tag)
        if implied is None and tag in _CLOSES_P:
            implied = {"p"}
        if implied:
            idx = self._find_open(implied)
            if idx >= 0:
                self._pop_to(idx)
        if tag in VOID_TAGS:
            if tag == "br":
                self._data(" ")
            elif tag not in INLINE_TAGS:
                self._flush()
            return
        self._push(tag, attrs)
        if tag == "title" and not self.meta.title:
            self._in_title = True
        elif tag == "h1" and self._h1_state == 0 and self.skip_depth == 0:
            self._h1_state = 1

    def handle_startendtag(self, tag, attrs):
        self.handle_starttag(tag, attrs)
        if tag.lower() not in VOID_TAGS:
            self.handle_endtag(tag)

    def handle_endtag(self, tag):
        tag = tag.lower()
        idx = self._find_open({tag}, stop_at_scope=tag not in _SCOPE_TAGS)
        if idx < 0 and tag not in INLINE_TAGS:
            # a stray block-level end tag still ends the current run
            self._flush()
            return
        if idx >= 0:
            self._pop_to(idx)

    def handle_data(self, data):
        if self._in_title:
            self.meta.title.append(data)
        self._data(data)

    def _data(self, data: str) -> None:
        if self.skip_depth:
            return
        if self._h1_state == 1:
            self.meta.h1.append(data)
        self._buf.append(data)

    def _meta_tag(self, attrs: dict) -> None:
        content = normalize_ws(attrs.get("content") or "")
        if not content:
            return
        name = (attrs.get("name") or "").lower()
        prop = (attrs.get("property") or "").lower()
        if name == "description" and self.meta.description is None:
            self.meta.description = content
        elif "og:description" in (prop, name) and self.meta.og_description is None:
            self.meta.og_description = content
        elif "og:title" in (prop, name) and self.meta.og_title is None:
            self.meta.og_title = content

    def close(self):
        super().close()
        self._pop_to(0)
        self._flush()


def decode_html(html: str | bytes) -> str:
    """Decode bytes using a declared ``<meta charset>`` if present, else UTF-8."""
    if isinstance(html, str):
        return html
    if html.startswith(b"\xef\xbb\xbf"):
        return html[3:].decode("utf-8", errors="replace")
    m = _CHARSET.search(html[:4096])
    if m:
        try:
            return html.decode(m.group(1).decode("ascii"), errors="replace")
        except LookupError:
            pass
    return html.decode("utf-8", errors="replace")


def _parse(html: str | bytes) -> _BlockParser:
    parser = _BlockParser()
    parser.feed(decode_html(html))
    parser.close()
    return parser


def _metadata(meta: _Meta) -> DocumentMetadata:
    title = (normalize_ws("".join(meta.title)) or meta.og_title
             or normalize_ws("".join(meta.h1)) or None)
    description = meta.description or meta.og_description or None
    return DocumentMetadata(title=title, description=description)


def extract_metadata(html: str | bytes) -> DocumentMetadata:
    return _metadata(_parse(html).meta)


def split_sentences(text: str) -> list[str]:
    return [s for s in _SENTENCE_BREAK.split(text) if s]


def parse_document(html: str | bytes, min_segment_chars: int = 3,
                   sentences: bool = False) -> tuple[DocumentMetadata, list[Segment]]:
    """Parse ``html`` into metadata and segments in document order.

    ``char_span`` is a UTF-8 byte range into the extracted text, i.e. all
    segment texts joined with ``"\\n"``.

    Raises:
        EmptyDocument: no segment has at least ``min_segment_chars`` characters.
    """
    parser = _parse(html)
    segments: list[Segment] = []
    offset = 0
    for raw, owner in parser.runs:
        text = normalize_ws(raw)
        pieces = split_sentences(text) if sentences else [text]
        for piece in pieces:
            if len(piece) < max(min_segment_chars, 1):
                continue
            size = len(piece.encode("utf-8"))
            segments.append(Segment(len(segments), piece, owner, len(owner), (offset, offset + size)))
            offset += size + 1
    if not segments:
        raise EmptyDocument("no text segments found")
    return _metadata(parser.meta), segments
