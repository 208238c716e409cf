"""Prompt rendering and five-line grammar parsing."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apvr import (
    ExpandedQuery,
    InvalidInput,
    ParseError,
    RelationTriplet,
    RelationType,
    normalize_phrase,
    parse_expansion_response,
    render_expansion_prompt,
    serialize_expansion,
)

EXAMPLE_RESPONSE = """\
Key Objects: person, dog, red clothes
Cue Objects: grassy area, leash, fence
Rel: (person; attribute; red clothes), (person; spatial; dog)
Des: (red clothes: description1), (dog: description2)
Sem: semantic1; semantic2
"""


class TestRenderPrompt:
    def test_contains_fixed_sections_and_question(self):
        prompt = render_expansion_prompt(
            "When does the person in red clothes appear with the dog?", []
        )
        assert "Step 1: Key Object Identification" in prompt
        assert "When does the person in red clothes appear with the dog?" in prompt
        assert "Format your response EXACTLY like this in Five lines" in prompt

    def test_empty_question_rejected(self):
        with pytest.raises(InvalidInput):
            render_expansion_prompt("", ["A. something"])
        with pytest.raises(InvalidInput):
            render_expansion_prompt("   ")

    def test_options_listed_in_order(self):
        prompt = render_expansion_prompt("Q?", ["A. x", "B. y"])
        line = next(l for l in prompt.splitlines() if l.startswith("Question:"))
        assert line == "Question: Q?; Options: A. x; B. y"
        assert prompt.index("A. x") < prompt.index("B. y")

    def test_no_options_slot(self):
        prompt = render_expansion_prompt("Q?")
        assert "Options: (none)" in prompt

    def test_byte_stable(self):
        a = render_expansion_prompt("Q?", ["A. x"])
        b = render_expansion_prompt("Q?", ["A. x"])
        assert a == b


class TestParseResponse:
    def test_documented_example(self):
        query, warnings = parse_expansion_response(EXAMPLE_RESPONSE)
        assert query.key_objects == ["person", "dog", "red clothes"]
        assert query.cue_objects == ["grassy area", "leash", "fence"]
        assert query.relations == [
            RelationTriplet("person", RelationType.ATTRIBUTE, "red clothes"),
            RelationTriplet("person", RelationType.SPATIAL, "dog"),
        ]
        assert query.descriptions == {
            "red clothes": ["description1"],
            "dog": ["description2"],
        }
        assert query.semantics == ["semantic1", "semantic2"]
        assert warnings == []

    def test_zero_prefixes_lenient_gives_empty_query_and_five_warnings(self):
        query, warnings = parse_expansion_response("", strict=False)
        assert query.is_empty()
        assert len(warnings) == 5
        assert all("missing required line" in w for w in warnings)

    def test_missing_prefix_strict_raises_naming_it(self):
        text = EXAMPLE_RESPONSE.replace("Sem: semantic1; semantic2\n", "")
        with pytest.raises(ParseError, match="Sem:"):
            parse_expansion_response(text, strict=True)

    def test_lines_in_any_order(self):
        shuffled = "\n".join(reversed(EXAMPLE_RESPONSE.strip().splitlines()))
        query, _ = parse_expansion_response(shuffled)
        assert query.key_objects == ["person", "dog", "red clothes"]
        assert len(query.relations) == 2

    def test_unknown_lines_warn(self):
        query, warnings = parse_expansion_response(
            "Sure! Here is my analysis.\n" + EXAMPLE_RESPONSE
        )
        assert query.key_objects == ["person", "dog", "red clothes"]
        assert any("unrecognized line" in w for w in warnings)

    def test_duplicate_line_keeps_first(self):
        text = EXAMPLE_RESPONSE + "Key Objects: cat, mouse, cheese\n"
        query, warnings = parse_expansion_response(text)
        assert query.key_objects == ["person", "dog", "red clothes"]
        assert any("duplicate" in w for w in warnings)

    def test_comma_triplets_accepted_with_note(self):
        text = EXAMPLE_RESPONSE.replace(
            "Rel: (person; attribute; red clothes), (person; spatial; dog)",
            "Rel: (person, attribute, red clothes), (person, spatial, dog)",
        )
        query, warnings = parse_expansion_response(text)
        assert query.relations[0].relation is RelationType.ATTRIBUTE
        assert any("comma" in w for w in warnings)

    def test_malformed_triplet_strict_raises_with_location(self):
        text = EXAMPLE_RESPONSE.replace(
            "(person; spatial; dog)", "(person; spatial)"
        )
        with pytest.raises(ParseError) as excinfo:
            parse_expansion_response(text, strict=True)
        assert excinfo.value.line == 3
        assert excinfo.value.column > 0

    def test_unknown_relation_word_strict_raises(self):
        text = EXAMPLE_RESPONSE.replace("spatial", "near")
        with pytest.raises(ParseError, match="near"):
            parse_expansion_response(text, strict=True)

    def test_malformed_triplet_lenient_skips_with_warning(self):
        text = EXAMPLE_RESPONSE.replace("(person; spatial; dog)", "(broken)")
        query, warnings = parse_expansion_response(text)
        assert len(query.relations) == 1
        assert any("malformed triplet" in w for w in warnings)

    def test_out_of_range_counts(self):
        text = EXAMPLE_RESPONSE.replace(
            "Key Objects: person, dog, red clothes", "Key Objects: person"
        )
        _, warnings = parse_expansion_response(text)
        assert any("outside expected range" in w for w in warnings)
        with pytest.raises(ParseError):
            parse_expansion_response(text, strict=True)

    def test_endpoint_membership_warning(self):
        text = EXAMPLE_RESPONSE.replace(
            "(person; spatial; dog)", "(person; spatial; horse)"
        )
        query, warnings = parse_expansion_response(text)
        assert any("horse" in w and "endpoint" in w for w in warnings)
        # still parsed; membership problems are never fatal
        assert len(query.relations) == 2

    def test_phrases_normalized_and_deduped(self):
        text = (
            "Key Objects: Person,  PERSON , Red   Clothes\n"
            "Cue Objects: leash, fence\n"
            "Rel: (person; attribute; red clothes)\n"
            "Des: (Red Clothes: bright garment)\n"
            "Sem: color stands out\n"
        )
        query, _ = parse_expansion_response(text)
        assert query.key_objects == ["person", "red clothes"]
        assert query.descriptions == {"red clothes": ["bright garment"]}

    def test_alias_prefixes(self):
        text = (
            "Key Objects: person, dog, cat\n"
            "Cue Objects: leash, fence\n"
            "Relations: (person; spatial; dog)\n"
            "Description: (dog: a kind of animal)\n"
            "Semantics: leash often appears with dog\n"
        )
        query, warnings = parse_expansion_response(text)
        assert len(query.relations) == 1
        assert query.descriptions == {"dog": ["a kind of animal"]}
        assert query.semantics == ["leash often appears with dog"]
        assert not any("missing" in w for w in warnings)


class TestRelationType:
    def test_exactly_four_variants(self):
        assert {r.value for r in RelationType} == {
            "spatial",
            "time",
            "attribute",
            "causal",
        }

    @pytest.mark.parametrize("word", ["Spatial", "TIME", "attribute", "Causal"])
    def test_case_insensitive_bijection(self, word):
        relation = RelationType.from_word(word)
        assert relation is not None
        assert relation.value == word.lower()

    def test_unknown_word_is_none(self):
        assert RelationType.from_word("besides") is None

    def test_empty_endpoints_rejected(self):
        with pytest.raises(InvalidInput):
            RelationTriplet("", RelationType.SPATIAL, "dog")


class TestSerialization:
    def test_round_trip_example(self):
        query, _ = parse_expansion_response(EXAMPLE_RESPONSE, question="Q?")
        text = serialize_expansion(query)
        again, warnings = parse_expansion_response(text, question="Q?")
        assert again == query
        assert warnings == []

    def test_json_round_trip(self):
        query, _ = parse_expansion_response(EXAMPLE_RESPONSE, question="Q?")
        data = json.loads(query.to_json())
        assert set(data) == {
            "question",
            "key_objects",
            "cue_objects",
            "relations",
            "descriptions",
            "semantics",
        }
        assert data["relations"][0] == {
            "subject": "person",
            "relation": "attribute",
            "object": "red clothes",
        }
        assert ExpandedQuery.from_json(query.to_json()) == query

    def test_json_rejects_unknown_relation(self):
        with pytest.raises(InvalidInput):
            ExpandedQuery.from_dict(
                {"relations": [{"subject": "a", "relation": "near", "object": "b"}]}
            )


# Phrases safe for the grammar: no separators, parens, or colons.
_phrase = st.text(
    alphabet="abcdefghijklmnopqrstuvwxyz",
    min_size=1,
    max_size=8,
).map(lambda s: s.strip()).filter(bool)
_phrases = st.lists(_phrase, min_size=1, max_size=6, unique=True)


@st.composite
def expanded_queries(draw):
    key_objects = draw(_phrases)
    cue_objects = draw(st.lists(_phrase, min_size=1, max_size=5, unique=True).filter(
        lambda items: not set(items) & set(key_objects)
    ))
    endpoints = key_objects + cue_objects
    relations = [
        RelationTriplet(
            draw(st.sampled_from(endpoints)),
            draw(st.sampled_from(list(RelationType))),
            draw(st.sampled_from(endpoints)),
        )
        for _ in range(draw(st.integers(0, 4)))
    ]
    descriptions = {
        obj: draw(st.lists(_phrase, min_size=1, max_size=3, unique=True))
        for obj in draw(st.lists(st.sampled_from(endpoints), max_size=3, unique=True))
    }
    semantics = draw(st.lists(_phrase, max_size=4, unique=True))
    return ExpandedQuery(
        question="q?",
        key_objects=key_objects,
        cue_objects=cue_objects,
        relations=relations,
        descriptions=descriptions,
        semantics=semantics,
    )


class TestProperties:
    @given(expanded_queries())
    @settings(max_examples=200, deadline=None)
    def test_serialize_parse_identity(self, query):
        reparsed, _ = parse_expansion_response(
            serialize_expansion(query), question=query.question
        )
        assert reparsed == query

    @given(st.text(max_size=400))
    @settings(max_examples=300, deadline=None)
    def test_lenient_parse_never_raises(self, text):
        query, warnings = parse_expansion_response(text, strict=False)
        assert isinstance(warnings, list)
        assert isinstance(query.key_objects, list)

    @given(st.binary(max_size=200))
    @settings(max_examples=200, deadline=None)
    def test_lenient_parse_survives_decoded_bytes(self, blob):
        parse_expansion_response(blob.decode("utf-8", errors="replace"), strict=False)

    @given(st.text(max_size=30))
    @settings(max_examples=200, deadline=None)
    def test_normalize_phrase_idempotent(self, text):
        once = normalize_phrase(text)
        assert normalize_phrase(once) == once
