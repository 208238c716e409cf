"""Expanded-query data model, prompt rendering, and response-grammar parsing.

An LLM turns a raw video question into five lines of structured semantic
information: key objects, cue objects, relation triplets, per-object
descriptions, and semantics. This module renders the prompt that elicits
that structure and parses the five-line reply back into an
:class:`ExpandedQuery`.

Parsing is lenient by default: malformed pieces are skipped and reported as
warnings so one sloppy LLM reply does not sink a whole retrieval run. Pass
``strict=True`` to turn structural problems (missing lines, malformed
triplets, out-of-range object counts) into :class:`~apvr.errors.ParseError`.

Object phrases are canonicalized (lowercased, internal whitespace collapsed)
so that detection-phrase lookups in the scoring stage match regardless of
LLM capitalization. Duplicate phrases are dropped, first occurrence wins.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum

from .errors import InvalidInput, ParseError

__all__ = [
    "RelationType",
    "RelationTriplet",
    "ExpandedQuery",
    "normalize_phrase",
    "render_expansion_prompt",
    "parse_expansion_response",
    "serialize_expansion",
]


def normalize_phrase(text: str) -> str:
    """Lowercase and collapse internal whitespace runs to single spaces."""
    return " ".join(text.split()).lower()


class RelationType(Enum):
    """The four recognized relation kinds between two object phrases."""

    SPATIAL = "spatial"
    TIME = "time"
    ATTRIBUTE = "attribute"
    CAUSAL = "causal"

    @classmethod
    def from_word(cls, word: str) -> "RelationType | None":
        """Map a relation word to its variant, case-insensitively.

        Returns None for anything outside the four known words.
        """
        try:
            return cls(normalize_phrase(word))
        except ValueError:
            return None


@dataclass(frozen=True)
class RelationTriplet:
    """(subject, relation, object) link between two object phrases."""

    subject: str
    relation: RelationType
    object: str

    def __post_init__(self):
        if not self.subject.strip() or not self.object.strip():
            raise InvalidInput("triplet subject and object must be non-empty")

    def to_dict(self) -> dict:
        return {
            "subject": self.subject,
            "relation": self.relation.value,
            "object": self.object,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RelationTriplet":
        relation = RelationType.from_word(data["relation"])
        if relation is None:
            raise InvalidInput(f"unknown relation word: {data['relation']!r}")
        return cls(subject=data["subject"], relation=relation, object=data["object"])


@dataclass
class ExpandedQuery:
    """Structured enrichment of a question produced by LLM query expansion.

    ``key_objects`` and ``cue_objects`` are canonicalized object phrases,
    ``relations`` links pairs of phrases, ``descriptions`` maps an object
    phrase to free-text descriptions, and ``semantics`` holds free-text
    world-knowledge hints.
    """

    question: str = ""
    key_objects: list[str] = field(default_factory=list)
    cue_objects: list[str] = field(default_factory=list)
    relations: list[RelationTriplet] = field(default_factory=list)
    descriptions: dict[str, list[str]] = field(default_factory=dict)
    semantics: list[str] = field(default_factory=list)

    def all_objects(self) -> list[str]:
        """Key and cue phrases in order, without duplicates."""
        return _dedupe(self.key_objects + self.cue_objects)

    def is_empty(self) -> bool:
        return not (
            self.key_objects
            or self.cue_objects
            or self.relations
            or self.descriptions
            or self.semantics
        )

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "key_objects": list(self.key_objects),
            "cue_objects": list(self.cue_objects),
            "relations": [t.to_dict() for t in self.relations],
            "descriptions": {k: list(v) for k, v in self.descriptions.items()},
            "semantics": list(self.semantics),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExpandedQuery":
        return cls(
            question=data.get("question", ""),
            key_objects=list(data.get("key_objects", [])),
            cue_objects=list(data.get("cue_objects", [])),
            relations=[RelationTriplet.from_dict(t) for t in data.get("relations", [])],
            descriptions={k: list(v) for k, v in data.get("descriptions", {}).items()},
            semantics=list(data.get("semantics", [])),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExpandedQuery":
        return cls.from_dict(json.loads(text))


def _dedupe(items: list[str]) -> list[str]:
    seen: set[str] = set()
    out: list[str] = []
    for item in items:
        if item not in seen:
            seen.add(item)
            out.append(item)
    return out


# ---------------------------------------------------------------------------
# Prompt rendering
# ---------------------------------------------------------------------------

PROMPT_TEMPLATE = """Analyze the following video understanding question:

Question: {question}; Options: {options}

Step 1: Key Object Identification

    - Extract 3-5 core objects detectable by computer vision
    - Use Grounding dino compatible noun phrases (e.g., "person", "mic")
    - Format: Key Objects: obj1, obj2, obj3

Step 2: Contextual Cues

    - List 2-4 scene elements that help locate key objects based on options provided
    - Use detectable items (avoid abstract concepts)
    - Format: Cue Objects: cue1, cue2, cue3

Step 3: Relationship Triplets

    - Relationship types:
        - Spatial: Objects must appear in the same frame
        - Attribute: Color/size/material descriptions (e.g., "red clothes", "large")
        - Time: Appear in different frames within a few seconds
        - Causal: There is a temporal order between the objects
    - Format of Relations: (object, relation type, object), relation type should be exactly one of spatial/attribute/time/causal

Step 4: Description Augmentation

    - List 1-3 descriptions based on knowledge graph augmentation for each object
    - Entity descriptions (e.g., "mic is a device for amplifying sound")
    - Hypernym concepts (e.g., "dog is a kind of animal")
    - Format: Description: (object: des1; des2)

Step 5: Semantics Augmentation

    - List 2-5 Semantics information of query and options based on knowledge graph (e.g., "leash often appears with dog")
    - Format: Semantics: semantic1; semantic2

Output Rules

    1. One line each for Key Objects/Cue Objects/Relation/Des/Sem starting with exact prefixes
    2. Separate items with comma except for triplets where items are separated by semicolon
    3. Never use markdown or natural language explanations
    4. If you cannot identify any key objects or cue objects from the video provided, please just identify the possible key or cue objects from the question and options provided

Below is an example of the procedure:

Question: For "When does the person in red clothes appear with the dog?"

Response:

    Key Objects: person, dog, red clothes
    Cue Objects: grassy area, leash, fence
    Rel: (person; attribute; red clothes), (person; spatial; dog)
    Des: (red clothes: description1), (dog: description2)
    Sem: semantic1; semantic2

Format your response EXACTLY like this in Five lines:

    Key Objects: object1, object2
    Cue Objects: object3, object4
    Rel: (object1; relation type1; object2), (object3; relation type2; object4), ...
    Des: (object1: description1; description2), (object2: description1; description2), ...
    Sem: semantic1; semantic2, ...
"""


def render_expansion_prompt(question: str, options: list[str] | None = None) -> str:
    """Render the expansion prompt with the question and options filled in.

    ``options`` may be empty for open-ended questions; the slot then reads
    "(none)". The output is byte-stable for identical inputs.
    """
    if not question or not question.strip():
        raise InvalidInput("question must be non-empty")
    opts = [o.strip() for o in (options or []) if o and o.strip()]
    rendered_options = "; ".join(opts) if opts else "(none)"
    return PROMPT_TEMPLATE.format(question=question.strip(), options=rendered_options)


# ---------------------------------------------------------------------------
# Response parsing
# ---------------------------------------------------------------------------

# Accepted line-prefix spellings. The template itself is loose here: the
# final format block says "Rel:"/"Des:"/"Sem:" while steps 4-5 say
# "Description:"/"Semantics:", so all of those are accepted.
_PREFIX_ALIASES = {
    "key objects": "key_objects",
    "cue objects": "cue_objects",
    "rel": "relations",
    "relation": "relations",
    "relations": "relations",
    "des": "descriptions",
    "description": "descriptions",
    "descriptions": "descriptions",
    "sem": "semantics",
    "semantic": "semantics",
    "semantics": "semantics",
}

_CANONICAL_PREFIX = {
    "key_objects": "Key Objects:",
    "cue_objects": "Cue Objects:",
    "relations": "Rel:",
    "descriptions": "Des:",
    "semantics": "Sem:",
}

_FIELD_ORDER = ("key_objects", "cue_objects", "relations", "descriptions", "semantics")

_KEY_OBJECT_RANGE = (3, 5)
_CUE_OBJECT_RANGE = (2, 4)


def _split_top_level(text: str, sep: str) -> list[tuple[int, str]]:
    """Split on ``sep`` occurring outside parentheses.

    Returns (start_offset, piece) pairs; offsets are 0-based into ``text``.
    Unbalanced closers are tolerated (depth never goes negative).
    """
    pieces: list[tuple[int, str]] = []
    depth = 0
    start = 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth = max(0, depth - 1)
        elif ch == sep and depth == 0:
            pieces.append((start, text[start:i]))
            start = i + 1
    pieces.append((start, text[start:]))
    return [(off, piece) for off, piece in pieces if piece.strip()]


def _parse_phrase_list(text: str) -> list[str]:
    phrases = [normalize_phrase(p) for p in text.split(",")]
    return _dedupe([p for p in phrases if p])


class _LineParser:
    """Parses one located response line into its field value."""

    def __init__(self, strict: bool, warnings: list[str]):
        self.strict = strict
        self.warnings = warnings
        self.saw_comma_triplet = False

    def _problem(self, message: str, line: int, column: int):
        if self.strict:
            raise ParseError(message, line=line, column=column)
        self.warnings.append(f"line {line}, column {column}: {message}")

    def relations(self, rest: str, lineno: int, base_col: int) -> list[RelationTriplet]:
        triplets: list[RelationTriplet] = []
        for offset, piece in _split_top_level(rest, ","):
            col = base_col + offset + 1
            item = piece.strip()
            inner = item
            match = re.fullmatch(r"\((.*)\)", item, flags=re.DOTALL)
            if match:
                inner = match.group(1)
            # Triplet members are canonically semicolon-separated; the
            # comma form from the step-3 format line is also accepted.
            if ";" in inner:
                parts = inner.split(";")
            else:
                parts = inner.split(",")
                if len(parts) == 3:
                    self.saw_comma_triplet = True
            if len(parts) != 3:
                self._problem(
                    f"malformed triplet {item!r}: expected 3 semicolon-separated members",
                    lineno,
                    col,
                )
                continue
            subject = normalize_phrase(parts[0])
            relation = RelationType.from_word(parts[1])
            obj = normalize_phrase(parts[2])
            if relation is None:
                self._problem(
                    f"unknown relation word {parts[1].strip()!r} in triplet {item!r}",
                    lineno,
                    col,
                )
                continue
            if not subject or not obj:
                self._problem(f"empty endpoint in triplet {item!r}", lineno, col)
                continue
            triplets.append(RelationTriplet(subject, relation, obj))
        return triplets

    def descriptions(self, rest: str, lineno: int, base_col: int) -> dict[str, list[str]]:
        groups: dict[str, list[str]] = {}
        for offset, piece in _split_top_level(rest, ","):
            col = base_col + offset + 1
            item = piece.strip()
            inner = item
            match = re.fullmatch(r"\((.*)\)", item, flags=re.DOTALL)
            if match:
                inner = match.group(1)
            obj_part, colon, desc_part = inner.partition(":")
            if not colon:
                self.warnings.append(
                    f"line {lineno}, column {col}: description group {item!r} "
                    f"has no 'object: descriptions' colon; skipped"
                )
                continue
            obj = normalize_phrase(obj_part)
            if not obj:
                self.warnings.append(
                    f"line {lineno}, column {col}: description group {item!r} "
                    f"names no object; skipped"
                )
                continue
            descs = [d.strip() for d in desc_part.split(";")]
            descs = [d for d in descs if d]
            bucket = groups.setdefault(obj, [])
            for d in descs:
                if d not in bucket:
                    bucket.append(d)
        return groups


def parse_expansion_response(
    text: str,
    strict: bool = False,
    question: str = "",
) -> tuple[ExpandedQuery, list[str]]:
    """Parse a raw five-line expansion reply into (ExpandedQuery, warnings).

    Lines may appear in any order; unknown lines are ignored with a warning,
    duplicate lines keep the first occurrence. In lenient mode (default)
    every structural problem becomes a warning; in strict mode a missing
    required line, a malformed triplet, or an out-of-range object count
    raises :class:`ParseError`.

    The response grammar carries no question line, so the original question
    is attached via the ``question`` argument.
    """
    warnings: list[str] = []
    seen: dict[str, tuple[int, int, str]] = {}  # field -> (lineno, rest_col, rest)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        head, colon, rest = raw.partition(":")
        key = _PREFIX_ALIASES.get(normalize_phrase(head)) if colon else None
        if key is None:
            warnings.append(f"line {lineno}: unrecognized line ignored")
            continue
        if key in seen:
            warnings.append(
                f"line {lineno}: duplicate {_CANONICAL_PREFIX[key]!r} line ignored"
            )
            continue
        seen[key] = (lineno, len(head) + 1, rest)

    for fieldname in _FIELD_ORDER:
        if fieldname not in seen:
            message = f"missing required line {_CANONICAL_PREFIX[fieldname]!r}"
            if strict:
                raise ParseError(message)
            warnings.append(message)

    line_parser = _LineParser(strict, warnings)
    query = ExpandedQuery(question=question)

    if "key_objects" in seen:
        lineno, _, rest = seen["key_objects"]
        query.key_objects = _parse_phrase_list(rest)
        _check_count(query.key_objects, "key objects", _KEY_OBJECT_RANGE, lineno,
                     strict, warnings)
    if "cue_objects" in seen:
        lineno, _, rest = seen["cue_objects"]
        query.cue_objects = _parse_phrase_list(rest)
        _check_count(query.cue_objects, "cue objects", _CUE_OBJECT_RANGE, lineno,
                     strict, warnings)
    if "relations" in seen:
        lineno, col, rest = seen["relations"]
        query.relations = line_parser.relations(rest, lineno, col)
        if line_parser.saw_comma_triplet:
            warnings.append(
                f"line {lineno}: triplet members separated by commas "
                f"(canonical form uses semicolons)"
            )
    if "descriptions" in seen:
        lineno, col, rest = seen["descriptions"]
        query.descriptions = line_parser.descriptions(rest, lineno, col)
    if "semantics" in seen:
        _, _, rest = seen["semantics"]
        # The template's own example separates semantics with semicolons
        # while the output rules say commas; accept both.
        query.semantics = [s.strip() for s in re.split(r"[;,]", rest) if s.strip()]

    known = set(query.key_objects) | set(query.cue_objects)
    for triplet in query.relations:
        for endpoint in (triplet.subject, triplet.object):
            if endpoint not in known:
                warnings.append(
                    f"relation endpoint {endpoint!r} names no key or cue object"
                )

    return query, warnings


def _check_count(items, label, bounds, lineno, strict, warnings):
    lo, hi = bounds
    if not (lo <= len(items) <= hi):
        message = f"line {lineno}: {len(items)} {label} outside expected range {lo}-{hi}"
        if strict:
            raise ParseError(message, line=lineno)
        warnings.append(message)


def serialize_expansion(query: ExpandedQuery) -> str:
    """Serialize an ExpandedQuery into the canonical five-line grammar.

    Items are comma-separated except inside triplets (semicolons); the
    result reparses to an equal query provided field values avoid the
    grammar's separator characters.
    """
    rel = ", ".join(
        f"({t.subject}; {t.relation.value}; {t.object})" for t in query.relations
    )
    des = ", ".join(
        f"({obj}: {'; '.join(descs)})" for obj, descs in query.descriptions.items()
    )
    lines = [
        f"Key Objects: {', '.join(query.key_objects)}",
        f"Cue Objects: {', '.join(query.cue_objects)}",
        f"Rel: {rel}",
        f"Des: {des}",
        f"Sem: {', '.join(query.semantics)}",
    ]
    return "\n".join(lines)
