"""Outlier groups: named phrase lists whose embeddings mark unwanted content.

Groups files are sectioned plain text::

    # comment
    [Legal Content]
    Terms
    Privacy

Phrases are deduplicated within a group; the same phrase may appear in
several groups.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from sore.errors import ConfigParse

BUILTIN = "builtin"


@dataclass(frozen=True)
class OutlierGroup:
    name: str
    phrases: tuple[str, ...]

    def __post_init__(self):
        if not self.name:
            raise ValueError("group name must be non-empty")
        if not self.phrases or any(not p for p in self.phrases):
            raise ValueError(f"group {self.name!r} needs non-empty phrases")


_DEFAULT_GROUPS: list[tuple[str, list[str]]] = [
    ("Date-time Related Content", [
        "Date", "21.02.2023", "21.02.2024", "21.02.2025", "Published at", "Last updated",
        "Time", "Published", "Updated", "dd/mm/yyyy", "mm/dd/yyyy", "yyyy-mm-dd", "dd.mm.yy",
    ]),
    ("Authorship Information", [
        "Author", "Writer", "Contributor", "Editor", "Posts", "Written by",
    ]),
    ("Comment Sections", [
        "Comment", "Reply", "Feedback", "Discussion", "Leave a comment",
    ]),
    ("Source Attribution", [
        "Source", "Website", "Publisher", "URL", "Link",
    ]),
    ("Related Content Links", [
        "Related", "Read more", "Look:", "Similar", "See also", "Also read", "Read next",
        "Get more", "Frequently asked questions",
    ]),
    ("Calls to Action", [
        "CTA", "Buy", "Shop", "Order", "Click here", "Check out", "View more", "Visit",
        "Let me know", "Download", "Subscribe", "Sign up", "Contact us", "Receive notifications",
    ]),
    ("Navigation Elements", [
        "Breadcrumbs", "Home >", "Home > About", "Navigation", "Home", "About",
    ]),
    ("Contact Information", [
        "Contact", "Email", "Phone", "Address", "Contact us",
    ]),
    ("Social Media Elements", [
        "Social", "Facebook", "Twitter", "Instagram", "LinkedIn", "TikTok", "Share", "Like",
        "Follow", "3425 views",
    ]),
    ("Legal Content", [
        "Legal", "Terms", "Privacy", "Policy", "Disclaimer", "Cookie", "Accept", "Policy",
        "Settings",
    ]),
    ("Page Infrastructure", [
        "Footer", "Copyright", "All rights reserved", "Search", "Find", "Look for", "Explore",
        "Error", "404", "Not found", "Page not found", "Error", "Try again later",
    ]),
    ("Commercial Content", [
        "Advertisement", "Sponsored", "Promotion", "Sponsor", "Subscription", "Subscribe",
        "Newsletter", "Membership", "Join", "Affiliate", "Affiliate links", "Disclosure",
        "Affiliate Disclosure",
    ]),
    ("Miscellaneous Boilerplate", [
        "Refresh this page", "Login required", "License", "Enter your email",
        "Thank you for reading", "Subscribe for free",
    ]),
]


def _dedupe(phrases) -> tuple[str, ...]:
    return tuple(dict.fromkeys(phrases))


def builtin_groups() -> list[OutlierGroup]:
    return [OutlierGroup(name, _dedupe(phrases)) for name, phrases in _DEFAULT_GROUPS]


def parse_groups(text: str) -> list[OutlierGroup]:
    groups: list[OutlierGroup] = []
    name: str | None = None
    header_line = 0
    phrases: list[str] = []

    def close():
        if name is None:
            return
        if not phrases:
            raise ConfigParse(f"group [{name}] has no phrases", header_line)
        groups.append(OutlierGroup(name, _dedupe(phrases)))

    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]") or not line[1:-1].strip():
                raise ConfigParse(f"malformed group header {line!r}", lineno)
            close()
            name = line[1:-1].strip()
            if name in seen:
                raise ConfigParse(f"duplicate group [{name}]", lineno)
            seen.add(name)
            header_line, phrases = lineno, []
        elif name is None:
            raise ConfigParse("phrase before any [group] header", lineno)
        else:
            phrases.append(line)
    close()
    if not groups:
        raise ConfigParse("no groups defined")
    return groups


def format_groups(groups: list[OutlierGroup]) -> str:
    blocks = []
    for g in groups:
        blocks.append("\n".join([f"[{g.name}]", *g.phrases]))
    return "\n\n".join(blocks) + "\n"


def load_outlier_groups(source: str | Path | None = None) -> list[OutlierGroup]:
    """Load groups from a file path, or the builtin set for ``None``/``"builtin"``."""
    if source is None or source == BUILTIN:
        return builtin_groups()
    return parse_groups(Path(source).read_text(encoding="utf-8"))


def flat_phrases(groups: list[OutlierGroup]) -> list[tuple[str, str]]:
    """``(group_name, phrase)`` pairs in index order; position is the ANN ``ref_id``."""
    return [(g.name, p) for g in groups for p in g.phrases]
