"""Query expansion: rendering the prompt and parsing the five-line reply.

The engine never calls an LLM itself. You render a prompt, send it to
whatever model you like, and hand the reply back to the parser. This demo
walks through both halves with a canned reply.
"""

from apvr import parse_expansion_response, render_expansion_prompt, serialize_expansion

question = "When does the person in red clothes appear with the dog?"
options = ["A. at the beginning", "B. near the fence", "C. at the end"]

prompt = render_expansion_prompt(question, options)
print("=" * 70)
print("PROMPT SENT TO THE LLM (first 12 lines)")
print("=" * 70)
print("\n".join(prompt.splitlines()[:12]))
print("...")

# A reply in the mandated five-line grammar, with typical LLM sloppiness:
# an extra chatty line, a comma-separated triplet, inconsistent casing.
reply = """\
Sure, here is the structured analysis:
Key Objects: Person, dog, red clothes
Cue Objects: grassy area, leash, fence
Rel: (person; attribute; red clothes), (person, spatial, dog)
Des: (red clothes: bright garment; clothing item), (dog: a kind of animal)
Sem: leash often appears with dog, fences enclose grassy areas
"""

query, warnings = parse_expansion_response(reply, question=question)

print()
print("=" * 70)
print("PARSED STRUCTURE")
print("=" * 70)
print("key objects :", query.key_objects)
print("cue objects :", query.cue_objects)
for triplet in query.relations:
    print(f"relation    : {triplet.subject} --{triplet.relation.value}--> {triplet.object}")
print("descriptions:", query.descriptions)
print("semantics   :", query.semantics)

print()
print("parser warnings (lenient mode keeps going):")
for warning in warnings:
    print("  -", warning)

print()
print("=" * 70)
print("CANONICAL SERIALIZATION (round-trips through the parser)")
print("=" * 70)
print(serialize_expansion(query))

again, _ = parse_expansion_response(serialize_expansion(query), question=question)
print()
print("round trip equal:", again == query)
