"""Prompt assembly and caption post-processing.

The prompt is rendered from a versioned text template with a single
``{{clue_sections}}`` placeholder; the version tag participates in the
prompt hash so a template change invalidates stored hashes. Tokenization
rules defined here (lowercase, whitespace split, strip edge punctuation)
are shared by the statistics and metric modules.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .records import TOOLS, CaptionFlags, CluePacket

EXAMPLE_CAPTION_COUNT = 3
INAUDIBLE_DIRECTIVE = "remove information that is inaudible"

_CLUE_PLACEHOLDER = "{{clue_sections}}"
_EDGE_PUNCT = re.compile(r"^[^a-z0-9]+|[^a-z0-9]+$")
_EXAMPLE_LINE = re.compile(r"^\d+\.\s+(.*\S)\s*$")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip leading/trailing punctuation."""
    words = []
    for raw in text.lower().split():
        w = _EDGE_PUNCT.sub("", raw)
        if w:
            words.append(w)
    return words


@dataclass
class PromptTemplate:
    """A frozen prompt skeleton plus the pieces extracted from it."""

    version: str
    text: str
    preamble: str
    example_captions: list[str]
    constraints: list[str]
    clue_section_order: tuple[str, ...] = TOOLS

    def __post_init__(self) -> None:
        if self.text.count(_CLUE_PLACEHOLDER) != 1:
            raise ValueError(f"template must contain {_CLUE_PLACEHOLDER} exactly once")
        if len(self.example_captions) != EXAMPLE_CAPTION_COUNT:
            raise ValueError(f"template must carry exactly {EXAMPLE_CAPTION_COUNT} "
                             f"example captions, found {len(self.example_captions)}")
        if not any(INAUDIBLE_DIRECTIVE in c.lower() for c in self.constraints):
            raise ValueError("template constraints must include the "
                             f"'{INAUDIBLE_DIRECTIVE}' directive")
        if tuple(self.clue_section_order) != TOOLS:
            raise ValueError("clue_section_order must list the seven tools in "
                             "canonical order")

    @classmethod
    def from_text(cls, version: str, text: str) -> "PromptTemplate":
        preamble = text.split(_CLUE_PLACEHOLDER, 1)[0]
        preamble = preamble.rsplit("Clues:", 1)[0].strip()
        examples = [m.group(1) for m in
                    (_EXAMPLE_LINE.match(line) for line in text.splitlines()) if m]
        constraints = []
        in_requirements = False
        for line in text.splitlines():
            if line.strip() == "Requirements:":
                in_requirements = True
                continue
            if in_requirements and line.startswith("- "):
                constraints.append(line[2:].strip())
        return cls(version=version, text=text, preamble=preamble,
                   example_captions=examples, constraints=constraints)

    @classmethod
    def load(cls, version: str = "v1") -> "PromptTemplate":
        """Load a packaged template by version tag, e.g. ``v1``."""
        ref = resources.files("audiocap").joinpath(f"templates/{version}.txt")
        return cls.from_text(version, ref.read_text(encoding="utf-8"))

    @classmethod
    def from_file(cls, path: str | Path) -> "PromptTemplate":
        p = Path(path)
        return cls.from_text(p.stem, p.read_text(encoding="utf-8"))


def render_clue_sections(packet: CluePacket,
                         order: tuple[str, ...] = TOOLS) -> str:
    sections = []
    for tool in order:
        clue = packet.clue_for(tool)
        if clue is None:
            continue
        lines = [f"{tool}:"]
        for item in clue.items:
            if item.confidence is not None:
                lines.append(f"- {item.text} (confidence={item.confidence:.2f})")
            else:
                lines.append(f"- {item.text}")
        sections.append("\n".join(lines))
    return "\n\n".join(sections)


def build_prompt(packet: CluePacket, template: PromptTemplate) -> str:
    """Render the full LLM prompt for one clip's clue packet.

    Byte-deterministic: equal packet and template always yield equal bytes,
    and section order follows the canonical tool order regardless of the
    order clues arrived in.
    """
    if not packet.clues:
        raise ValueError(f"clip {packet.clip_id}: packet has no clues to summarize")
    sections = render_clue_sections(packet, template.clue_section_order)
    return template.text.replace(_CLUE_PLACEHOLDER, sections)


def prompt_hash(prompt: str, template: PromptTemplate) -> str:
    """Hex digest over the template version tag plus the rendered prompt."""
    h = hashlib.sha256()
    h.update(template.version.encode("utf-8"))
    h.update(b"\x00")
    h.update(prompt.encode("utf-8"))
    return h.hexdigest()


@dataclass
class InaudibleLexicon:
    """Lowercase words a caption should not contain (colors by default)."""

    terms: frozenset[str]

    def __post_init__(self) -> None:
        if not self.terms:
            raise ValueError("inaudible lexicon must be non-empty")
        self.terms = frozenset(t.lower() for t in self.terms)

    @classmethod
    def default(cls, extra_terms: list[str] | None = None) -> "InaudibleLexicon":
        ref = resources.files("audiocap").joinpath("lexicons/colors.txt")
        terms = set(load_wordlist_text(ref.read_text(encoding="utf-8")))
        terms.update(extra_terms or [])
        return cls(frozenset(terms))

    @classmethod
    def from_file(cls, path: str | Path) -> "InaudibleLexicon":
        words = load_wordlist_text(Path(path).read_text(encoding="utf-8"))
        return cls(frozenset(words))


def load_wordlist_text(text: str) -> list[str]:
    """Parse a word-per-line lexicon file; blank lines and # comments skipped."""
    words = []
    for line in text.splitlines():
        w = line.strip().lower()
        if w and not w.startswith("#"):
            words.append(w)
    return words


def load_place_lexicon(path: str | Path | None = None) -> frozenset[str]:
    if path is not None:
        return frozenset(load_wordlist_text(Path(path).read_text(encoding="utf-8")))
    ref = resources.files("audiocap").joinpath("lexicons/places.txt")
    return frozenset(load_wordlist_text(ref.read_text(encoding="utf-8")))


def flag_inaudible(caption: str, lexicon: InaudibleLexicon) -> list[str]:
    """Caption words found in the lexicon, in order, duplicates preserved."""
    if not caption.strip():
        raise ValueError("caption must be non-empty")
    return [w for w in tokenize(caption) if w in lexicon.terms]


def qc_caption(caption: str, lexicon: InaudibleLexicon) -> CaptionFlags:
    """Build QC flags for a caption; flagged captions are kept for review."""
    return CaptionFlags(inaudible_terms=flag_inaudible(caption, lexicon))
