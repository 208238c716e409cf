"""Reading the engine's expanded-query JSON hand-off format.

Only the documented schema is consumed here (question, key_objects,
cue_objects, relations, descriptions, semantics); the engine package
itself is never imported.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import JobError


@dataclass
class QueryInfo:
    question: str = ""
    key_objects: list[str] = field(default_factory=list)
    cue_objects: list[str] = field(default_factory=list)
    descriptions: dict[str, list[str]] = field(default_factory=dict)
    semantics: list[str] = field(default_factory=list)

    @property
    def phrases(self) -> list[str]:
        """Detection phrase list: key then cue objects, deduplicated."""
        seen = set()
        out = []
        for phrase in self.key_objects + self.cue_objects:
            if phrase not in seen:
                seen.add(phrase)
                out.append(phrase)
        return out

    def text_elements(self) -> list[str]:
        """The texts whose unit-norm embeddings are summed into the
        aggregated text embedding: the question, each object description
        (prefixed with its object), and each semantics hint."""
        elements = [self.question] if self.question.strip() else []
        for obj, descriptions in self.descriptions.items():
            elements.extend(f"{obj}: {d}" for d in descriptions)
        elements.extend(self.semantics)
        return [e for e in elements if e.strip()]

    def aggregate_text(self) -> str:
        """All text elements joined, used for host-side query tokenization."""
        return " ".join(self.text_elements())


def load_query(path: str | Path) -> QueryInfo:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise JobError(f"could not read expanded-query JSON {path}: {exc}")
    if not isinstance(data, dict):
        raise JobError(f"expanded-query JSON {path} must be an object")
    return QueryInfo(
        question=str(data.get("question", "")),
        key_objects=[str(p) for p in data.get("key_objects", [])],
        cue_objects=[str(p) for p in data.get("cue_objects", [])],
        descriptions={
            str(obj): [str(d) for d in descs]
            for obj, descs in data.get("descriptions", {}).items()
        },
        semantics=[str(s) for s in data.get("semantics", [])],
    )
