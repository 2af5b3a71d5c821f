"""Deterministic synthetic web pages with known reference text.

Each page has a title, a handful of short on-topic paragraphs whose
vocabulary overlaps the title, and a few boilerplate segments drawn from the
builtin outlier phrases with light mutation (case, plural, a "Please "
prefix). The reference text is the title plus the paragraphs.
"""

from __future__ import annotations

import html as html_lib
import random
from dataclasses import dataclass
from pathlib import Path

from sore.groups import builtin_groups

TOPICS: dict[str, list[str]] = {
    "solar": ["solar", "panels", "photovoltaic", "inverter", "sunlight", "rooftop", "battery",
              "grid", "efficiency", "kilowatt", "installers", "cells", "energy", "array",
              "voltage", "storage", "modules", "irradiance"],
    "coffee": ["coffee", "espresso", "grinder", "roast", "beans", "brewing", "barista",
               "extraction", "crema", "arabica", "kettle", "aroma", "acidity", "water",
               "temperature", "pourover", "roasters", "crema"],
    "marathon": ["marathon", "runners", "training", "mileage", "pace", "endurance", "stride",
                 "hydration", "tempo", "recovery", "course", "intervals", "stamina", "racing",
                 "coaches", "taper", "splits", "distance"],
    "bees": ["bees", "hive", "honey", "pollen", "beekeepers", "queen", "colony", "nectar",
             "swarm", "frames", "beeswax", "pollination", "apiary", "workers", "brood",
             "foraging", "flowers", "drones"],
    "volcano": ["volcano", "magma", "lava", "eruption", "basalt", "crater", "ash", "tectonic",
                "geologists", "vent", "caldera", "pyroclastic", "seismic", "plume", "summit",
                "fissure", "rock", "mantle"],
    "sourdough": ["sourdough", "starter", "flour", "dough", "fermentation", "crust", "loaf",
                  "yeast", "oven", "gluten", "bakers", "rye", "proofing", "crumb", "levain",
                  "kneading", "bread", "baking"],
    "deepsea": ["ocean", "abyssal", "trench", "bioluminescence", "submersible", "plankton",
                "squid", "sediment", "hydrothermal", "currents", "pressure", "marine",
                "biologists", "seafloor", "vents", "creatures", "depths", "species"],
    "chess": ["chess", "opening", "gambit", "endgame", "bishop", "knight", "rook", "pawn",
              "castling", "grandmaster", "tactics", "checkmate", "tournament", "players",
              "queen", "sacrifice", "board", "moves"],
    "birds": ["birds", "migration", "flyway", "wetlands", "warblers", "geese", "wintering",
              "plumage", "ornithologists", "banding", "breeding", "nesting", "feathers",
              "flocks", "songbirds", "habitat", "shorebirds", "routes"],
    "bicycles": ["bicycle", "frame", "steel", "gears", "derailleur", "saddle", "wheels",
                 "spokes", "restoration", "chain", "cyclists", "handlebars", "lugs", "tires",
                 "vintage", "brakes", "riders", "cranks"],
}

# Chosen to share no token with any outlier phrase.
FUNCTION_WORDS = ["the", "of", "and", "in", "with", "to", "on", "during", "while", "often",
                  "many", "most", "their", "across", "under", "than", "each"]

_PLEASE_GROUPS = {"Calls to Action", "Miscellaneous Boilerplate"}


@dataclass(frozen=True)
class SyntheticDoc:
    html: str
    truth: str
    title: str
    paragraphs: tuple[str, ...]
    boilerplate: tuple[tuple[str, str, str], ...]  # (group, source phrase, emitted text)


def _sentence(rng: random.Random, vocab: list[str], title_words: list[str], n_words: int) -> str:
    words = []
    for _ in range(n_words):
        roll = rng.random()
        if roll < 0.3:
            words.append(rng.choice(title_words))
        elif roll < 0.75:
            words.append(rng.choice(vocab))
        else:
            words.append(rng.choice(FUNCTION_WORDS))
    words[0] = words[0].capitalize()
    return " ".join(words) + "."


def _pluralize(word: str) -> str:
    if word.endswith("y") and len(word) > 3 and word[-2] not in "aeiou":
        return word[:-1] + "ies"
    if word.endswith(("s", "x", "ch", "sh")):
        return word + "es"
    return word + "s"


def mutate_phrase(rng: random.Random, group: str, phrase: str) -> str:
    text = phrase
    roll = rng.random()
    if roll < 0.2 and " " not in text and text.isalpha() and not text.endswith("s"):
        text = _pluralize(text)
    elif roll < 0.3 and group in _PLEASE_GROUPS:
        text = "Please " + text[0].lower() + text[1:]
    case = rng.random()
    if case < 0.15:
        text = text.lower()
    elif case < 0.25:
        text = text.upper()
    return text


def _boilerplate_pool() -> list[tuple[str, str]]:
    # multi-character phrases only; three-letter tokens like "CTA" are not page text
    return [(g.name, p) for g in builtin_groups() for p in g.phrases if len(p) >= 4]


def generate_document(rng: random.Random, home_ambiguity: bool = False) -> SyntheticDoc:
    topic = rng.choice(sorted(TOPICS))
    vocab = TOPICS[topic]
    title_words = rng.sample(vocab, rng.randint(3, 5))
    title = " ".join(title_words).capitalize()
    n_par = rng.randint(5, 12)
    paragraphs = [_sentence(rng, vocab, title_words, rng.randint(4, 7)) for _ in range(n_par)]
    description = _sentence(rng, vocab, title_words, 8)

    pool = _boilerplate_pool()
    n_boiler = rng.randint(3, 8)
    # multi-word phrases are favoured so boilerplate carries a realistic share of tokens
    weights = [len(p.split()) for _, p in pool]
    picks = []
    while len(picks) < n_boiler:
        pick = rng.choices(pool, weights)[0]
        if pick not in picks:
            picks.append(pick)
    boiler = [(g, p, mutate_phrase(rng, g, p)) for g, p in picks]

    body_home = False
    if home_ambiguity:
        # "Home" in the nav always; in half the pages also as a heading of the article itself
        boiler.insert(0, ("Navigation Elements", "Home", "Home"))
        body_home = rng.random() < 0.5
        # copyright lines are the unambiguous control
        boiler.append(("Page Infrastructure", "All rights reserved", "All rights reserved"))

    # distribute boilerplate over nav / aside / footer
    slots = [rng.choice(("nav", "aside", "footer")) for _ in boiler]
    if home_ambiguity:
        slots[0], slots[-1] = "nav", "footer"
    nav = [b[2] for b, s in zip(boiler, slots) if s == "nav"]
    aside = [b[2] for b, s in zip(boiler, slots) if s == "aside"]
    footer = [b[2] for b, s in zip(boiler, slots) if s == "footer"]

    article = [f"<h1>{html_lib.escape(title)}</h1>"]
    truth_parts = [title]
    home_at = rng.randint(1, n_par - 1) if body_home else -1
    for i, par in enumerate(paragraphs):
        if i == home_at:
            article.append("<h2>Home</h2>")
            truth_parts.append("Home")
        article.append(f"<p>{html_lib.escape(par)}</p>")
        truth_parts.append(par)
    aside_at = rng.randint(1, len(article) - 1)

    esc = html_lib.escape
    out = ["<!DOCTYPE html>", "<html>", "<head>", '<meta charset="utf-8">',
           f"<title>{esc(title)}</title>",
           f'<meta name="description" content="{esc(description)}">',
           "</head>", "<body>"]
    if nav:
        out.append("<header><nav><ul>" + "".join(f"<li><a href=\"#\">{esc(t)}</a></li>" for t in nav)
                   + "</ul></nav></header>")
    out.append("<main><article>")
    for i, block in enumerate(article):
        if aside and i == aside_at:
            out.append("<aside>" + "".join(f"<div>{esc(t)}</div>" for t in aside) + "</aside>")
        out.append(block)
    out.append("</article></main>")
    if footer:
        out.append("<footer>" + "".join(f"<p>{esc(t)}</p>" for t in footer) + "</footer>")
    out += ["</body>", "</html>", ""]
    body_paragraphs = tuple(truth_parts[1:])
    return SyntheticDoc("\n".join(out), "\n\n".join(truth_parts), title, body_paragraphs, tuple(boiler))


def generate_synthetic_corpus(n_docs: int, seed: int = 0, home_ambiguity: bool = False) -> list[tuple[str, str]]:
    """``n_docs`` ``(html, truth_text)`` pairs, identical for identical arguments."""
    return [(d.html, d.truth) for d in generate_documents(n_docs, seed, home_ambiguity)]


def generate_documents(n_docs: int, seed: int = 0, home_ambiguity: bool = False) -> list[SyntheticDoc]:
    if n_docs < 1:
        raise ValueError("n_docs must be >= 1")
    rng = random.Random(seed)
    return [generate_document(rng, home_ambiguity) for _ in range(n_docs)]


def write_corpus(pairs: list[tuple[str, str]], directory: str | Path) -> None:
    """Write ``NNNN.html`` / ``NNNN.truth.txt`` files."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for i, (html, truth) in enumerate(pairs):
        (out / f"{i:04d}.html").write_text(html, encoding="utf-8")
        (out / f"{i:04d}.truth.txt").write_text(truth, encoding="utf-8")


def read_corpus(directory: str | Path) -> list[tuple[str, str, str]]:
    """``(doc_id, html, truth)`` triples sorted by file name."""
    root = Path(directory)
    docs = []
    for html_path in sorted(root.glob("*.html")):
        stem = html_path.name[: -len(".html")]
        truth_path = root / f"{stem}.truth.txt"
        if not truth_path.exists():
            raise FileNotFoundError(f"missing truth file for {html_path.name}")
        docs.append((stem, html_path.read_text(encoding="utf-8"), truth_path.read_text(encoding="utf-8")))
    return docs
