"""
Named-entity extraction with six aggregated classes.

Fine-grained tags (spaCy's label set) collapse into person, group, location,
culture, date and numeral. The default ``GazetteerExtractor`` is deterministic:
a dictionary of corpus titles plus pattern rules for dates and numerals.
``SpacyExtractor`` wraps a spaCy pipeline behind the same interface.
"""

import logging
import re
import threading
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Protocol, Tuple

from .corpus import Article

logger = logging.getLogger(__name__)

TAG_CLASSES: Dict[str, str] = {
    "PERSON": "person",
    "NORP": "group",
    "ORG": "group",
    "LANGUAGE": "group",
    "GPE": "location",
    "FAC": "location",
    "LOC": "location",
    "EVENT": "culture",
    "WORK_OF_ART": "culture",
    "LAW": "culture",
    "PRODUCT": "culture",
    "DATE": "date",
    "TIME": "date",
    "CARDINAL": "numeral",
    "PERCENT": "numeral",
    "MONEY": "numeral",
    "QUANTITY": "numeral",
    "ORDINAL": "numeral",
}


class UnmappedTags:
    """Thread-safe counter of fine-grained tags outside the aggregation table."""

    def __init__(self):
        self._lock = threading.Lock()
        self._counts: Counter = Counter()

    def add(self, tag: str) -> None:
        with self._lock:
            self._counts[tag] += 1

    def snapshot(self) -> Dict[str, int]:
        with self._lock:
            return dict(self._counts)


unmapped_tags = UnmappedTags()


def aggregate_tag(tag: str) -> Optional[str]:
    """General class of a fine-grained tag; None (and counted) when unmapped."""
    general = TAG_CLASSES.get(tag.upper())
    if general is None:
        unmapped_tags.add(tag)
    return general


@dataclass(frozen=True)
class NamedEntity:
    surface: str
    general_class: str
    span: Tuple[int, int]
    tag: str = ""

    def __str__(self) -> str:
        return self.surface


class Extractor(Protocol):
    def extract(self, text: str) -> List[NamedEntity]: ...


_MONTH = r"(?:January|February|March|April|May|June|July|August|September|October|November|December)"
_NUMBER_WORD = r"(?:one|two|three|four|five|six|seven|eight|nine|ten|eleven|twelve|hundred|thousand|million|billion)"
_ORDINAL_WORD = r"(?:first|second|third|fourth|fifth|sixth|seventh|eighth|ninth|tenth)"

# alternatives are tried left to right at each position; more specific first
_PATTERNS = re.compile(
    "|".join(
        [
            r"(?P<MONEY>[$€£]\s?\d[\d,]*(?:\.\d+)?)",
            r"(?P<PERCENT>\b\d+(?:\.\d+)?\s?%)",
            rf"(?P<DATE>\b\d{{1,2}} {_MONTH} \d{{4}}\b|\b{_MONTH} \d{{1,2}}, \d{{4}}\b|\b{_MONTH} \d{{4}}\b|\b(?:1[0-9]{{3}}|20[0-9]{{2}})\b(?![.,]?\d))",
            r"(?P<TIME>\b\d{1,2}:\d{2}(?:\s?[ap]\.?m\.?)?\b)",
            rf"(?P<ORDINAL>\b\d+(?:st|nd|rd|th)\b|\b{_ORDINAL_WORD}\b)",
            rf"(?P<CARDINAL>\b\d[\d,]*(?:\.\d+)?\b|\b{_NUMBER_WORD}\b)",
        ]
    ),
)

_QUALIFIER = re.compile(r"^(?P<base>.*?)\s*\((?P<qualifier>[^()]*)\)\s*$")

_QUALIFIER_TAGS: Tuple[Tuple[Tuple[str, ...], str], ...] = (
    (("film", "novel", "album", "song", "book", "play", "musical", "series", "video game", "opera", "painting", "poem", "episode", "single"), "WORK_OF_ART"),
    (("band", "company", "organization", "organisation", "team", "club", "party", "newspaper", "magazine"), "ORG"),
    (("tennis", "footballer", "actor", "actress", "politician", "singer", "musician", "cricketer", "director", "writer", "author", "composer", "rapper", "boxer", "basketball", "baseball", "football", "producer", "comedian", "screenwriter", "born"), "PERSON"),
    (("city", "town", "village", "county", "state", "province", "country"), "GPE"),
    (("river", "mountain", "island", "lake"), "LOC"),
    (("war", "battle", "election", "tournament", "festival"), "EVENT"),
)

_KEYWORD_TAGS: Tuple[Tuple[Tuple[str, ...], str], ...] = (
    (("University", "College", "School", "Institute", "Company", "Corporation", "Inc.", "Ltd", "Association", "Society", "Party", "Club", "Records", "Academy", "Band", "Team"), "ORG"),
    (("War", "Battle", "Olympics", "Championships", "Championship", "Revolution", "Festival", "Election", "Cup"), "EVENT"),
    (("City", "County", "State", "Province", "Kingdom", "Republic"), "GPE"),
    (("River", "Mountains", "Mountain", "Lake", "Island", "Ocean", "Sea", "Valley"), "LOC"),
    (("Bridge", "Airport", "Stadium", "Tower", "Museum", "Hotel"), "FAC"),
    (("Act",), "LAW"),
)

_NAME_PARTICLES = {"von", "van", "de", "der", "den", "da", "del", "della", "di", "du", "la", "le", "bin", "al"}


def title_tag(title: str) -> Optional[str]:
    """Fine-grained tag for a corpus title, or None when it does not name an entity."""
    match = _QUALIFIER.match(title)
    base = title
    if match:
        base = match.group("base")
        qualifier = match.group("qualifier").lower()
        for keywords, tag in _QUALIFIER_TAGS:
            if any(k in qualifier for k in keywords):
                return tag
    words = base.split()
    for keywords, tag in _KEYWORD_TAGS:
        if any(w in keywords for w in words):
            return tag
    if 2 <= len(words) <= 4 and not any(ch.isdigit() for ch in base):
        if all(w[:1].isupper() or w in _NAME_PARTICLES for w in words) and words[0][:1].isupper():
            return "PERSON"
    return None


def title_surfaces(title: str) -> List[str]:
    """The title and, if it carries a parenthetical qualifier, the bare name."""
    surfaces = [title]
    match = _QUALIFIER.match(title)
    if match and match.group("base").strip():
        surfaces.append(match.group("base").strip())
    return surfaces


class _ByteOffsets:
    def __init__(self, text: str):
        self.text = text
        self.ascii = text.isascii()

    def __call__(self, index: int) -> int:
        return index if self.ascii else len(self.text[:index].encode("utf-8"))


class GazetteerExtractor:
    """Dictionary lookup (longest match, whole words) plus date/numeral patterns.

    Immutable after construction, so one instance may serve many threads.
    """

    def __init__(self, entries: Mapping[str, str], patterns: bool = True):
        self.entries = {surface: tag.upper() for surface, tag in entries.items() if surface.strip()}
        self.patterns = patterns
        surfaces = sorted(self.entries, key=lambda s: (-len(s), s))
        self._matcher = (
            re.compile(r"(?<!\w)(?:" + "|".join(re.escape(s) for s in surfaces) + r")(?!\w)")
            if surfaces
            else None
        )

    @classmethod
    def from_corpus(cls, articles: Iterable[Article], extra: Optional[Mapping[str, str]] = None) -> "GazetteerExtractor":
        """Gazetteer of article titles, typed by ``Article.ner`` or ``title_tag``."""
        entries: Dict[str, str] = {}
        for article in articles:
            tag = article.ner or title_tag(article.title)
            if tag is None:
                continue
            for surface in title_surfaces(article.title):
                entries.setdefault(surface, tag)
        entries.update(extra or {})
        logger.debug("Gazetteer built with %d surfaces", len(entries))
        return cls(entries)

    def extract(self, text: str) -> List[NamedEntity]:
        offsets = _ByteOffsets(text)
        found: List[Tuple[int, int, str, str]] = []
        if self._matcher is not None:
            for match in self._matcher.finditer(text):
                found.append((match.start(), match.end(), match.group(), self.entries[match.group()]))
        if self.patterns:
            taken = [(s, e) for s, e, _, _ in found]
            for match in _PATTERNS.finditer(text):
                start, end = match.span()
                if any(start < e and s < end for s, e in taken):
                    continue
                found.append((start, end, match.group(), match.lastgroup))

        entities = []
        for start, end, surface, tag in sorted(found):
            general = aggregate_tag(tag)
            if general is None:
                continue
            entities.append(NamedEntity(surface, general, (offsets(start), offsets(end)), tag))
        return entities


class SpacyExtractor:
    """spaCy pipeline (default ``en_core_web_sm``) with aggregated classes."""

    def __init__(self, model: str = "en_core_web_sm"):
        import spacy

        self.model = model
        self._nlp = spacy.load(model)
        self._lock = threading.Lock()

    def extract(self, text: str) -> List[NamedEntity]:
        offsets = _ByteOffsets(text)
        with self._lock:
            doc = self._nlp(text)
        entities = []
        for ent in doc.ents:
            general = aggregate_tag(ent.label_)
            if general is None:
                continue
            entities.append(NamedEntity(ent.text, general, (offsets(ent.start_char), offsets(ent.end_char)), ent.label_))
        return entities


def ner_extract(text: str, extractor: Optional[Extractor] = None) -> List[NamedEntity]:
    """Entities in ``text``; without an extractor only the pattern rules apply."""
    if not text:
        return []
    return (extractor or GazetteerExtractor({})).extract(text)
