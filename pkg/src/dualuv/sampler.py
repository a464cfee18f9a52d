"""Seeded factorized scene descriptions.

Each factor owns an independent ``random.Random`` stream seeded with the
scene seed XOR a hash of the factor name, so editing one vocabulary never
shifts another factor's draw. Templates use ``{factor}`` placeholders,
``{A:factor}`` / ``{a:factor}`` for the indefinite article of a factor's
value, and ``[...]`` for clauses dropped when a factor inside draws the
``None`` sentinel.
"""

import hashlib
import json
import random
import re
import shlex
import subprocess
from dataclasses import asdict, dataclass
from importlib import resources

REGIMES = ("outfit", "role")
NEGATIVE_STREAM = "negative"

TEMPLATES = {
    "outfit": (
        "{time_of_day}, {lighting}, {shot_size}, subject centered in frame. "
        "{A:age} {age} {gender} from {region} dressed in {a:top_color} {top_color} {top_fabric} {top}"
        "[ detailed with {top_decoration}][, layered under {a:outer_color} {outer_color} {outerwear}]"
        "[, accessorized with {accessory}], hair {hair_color} and {hairstyle}. "
        "The subject {action}. Framing: waist-up, standing, static camera, hands visible."
    ),
    "role": (
        "{time_of_day}, {lighting}, {shot_size}, subject centered in frame. "
        "{A:age} {age} {gender} working as {a:role} {role} from {region}, in attire and accessories "
        "typical of the role, hair {hair_color} and {hairstyle}. "
        "The subject {action}. Framing: waist-up, standing, static camera, hands visible."
    ),
}

_TOKEN = re.compile(r"\{(?:(A|a):)?(\w+)\}|\[|\]")


@dataclass(frozen=True)
class Factor:
    items: tuple
    sentinel: bool = False


@dataclass(frozen=True)
class FactorVocabulary:
    factors: dict
    negatives: tuple = ()

    def __post_init__(self):
        for name, f in self.factors.items():
            if len(set(f.items)) != len(f.items):
                dup = sorted({x for x in f.items if f.items.count(x) > 1})
                raise ValueError(f"factor {name!r} has duplicate items: {dup}")
            if not f.items and not f.sentinel:
                raise ValueError(f"factor {name!r} is empty and has no sentinel")
            if any(x == "None" for x in f.items):
                raise ValueError(f"factor {name!r}: 'None' is reserved for the sentinel")
        if len(set(self.negatives)) != len(self.negatives):
            raise ValueError("negative list has duplicate terms")

    def to_dict(self):
        out = {}
        for name, f in self.factors.items():
            out[name] = {"items": list(f.items), "sentinel": True} if f.sentinel else list(f.items)
        return {"factors": out, "negatives": list(self.negatives)}

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.blake2b(blob, digest_size=8).hexdigest()


def _no_duplicate_keys(pairs):
    keys = [k for k, _ in pairs]
    dup = sorted({k for k in keys if keys.count(k) > 1})
    if dup:
        raise ValueError(f"duplicate keys in vocabulary file: {dup}")
    return dict(pairs)


def vocab_from_dict(d):
    if "factors" not in d:
        raise ValueError("vocabulary needs a 'factors' object")
    factors = {}
    for name, spec in d["factors"].items():
        if isinstance(spec, list):
            factors[name] = Factor(tuple(str(x) for x in spec))
        elif isinstance(spec, dict):
            factors[name] = Factor(tuple(str(x) for x in spec.get("items", [])), bool(spec.get("sentinel", False)))
        else:
            raise ValueError(f"factor {name!r}: expected a list or an object with 'items'")
    return FactorVocabulary(factors, tuple(str(x) for x in d.get("negatives", [])))


def load_vocab(path=None):
    """Read a vocabulary file; ``None`` loads the shipped stand-in lists."""
    if path is None:
        text = resources.files("dualuv").joinpath("data/vocab.json").read_text(encoding="utf-8")
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    return vocab_from_dict(json.loads(text, object_pairs_hook=_no_duplicate_keys))


def save_vocab(vocab, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(vocab.to_dict(), fh, indent=1)
        fh.write("\n")


def stream(name, seed):
    """Independent generator for one named factor."""
    h = int.from_bytes(hashlib.blake2b(name.encode(), digest_size=8).digest(), "little")
    return random.Random(int(seed) ^ h)


def draw(vocab, name, seed):
    """One uniform draw; the sentinel counts as one extra outcome (``None``)."""
    f = vocab.factors[name]
    n = len(f.items) + (1 if f.sentinel else 0)
    k = stream(name, seed).randrange(n)
    return None if k == len(f.items) else f.items[k]


def article(word, capital=False):
    a = "an" if word[:1].lower() in "aeiou" else "a"
    return a.capitalize() if capital else a


def _parse_template(template):
    """Nested list: strings, ``("slot", name)``, ``("art", name, capital)`` and
    ``("opt", [...])`` clauses."""
    root = []
    stack = [root]
    pos = 0
    for m in _TOKEN.finditer(template):
        if m.start() > pos:
            stack[-1].append(template[pos:m.start()])
        tok = m.group(0)
        if tok == "[":
            clause = []
            stack[-1].append(("opt", clause))
            stack.append(clause)
        elif tok == "]":
            if len(stack) == 1:
                raise ValueError("unbalanced ']' in template")
            stack.pop()
        elif m.group(1):
            stack[-1].append(("art", m.group(2), m.group(1) == "A"))
        else:
            stack[-1].append(("slot", m.group(2)))
        pos = m.end()
    if len(stack) != 1:
        raise ValueError("unbalanced '[' in template")
    if pos < len(template):
        root.append(template[pos:])
    return root


def template_factors(template):
    names = []

    def walk(nodes):
        for n in nodes:
            if isinstance(n, tuple):
                if n[0] == "opt":
                    walk(n[1])
                elif n[1] not in names:
                    names.append(n[1])
    walk(_parse_template(template))
    return names


def _slots(nodes):
    out = []
    for n in nodes:
        if isinstance(n, tuple):
            out.extend(_slots(n[1]) if n[0] == "opt" else [n[1]])
    return out


def _render(nodes, values, assignment):
    parts = []
    for n in nodes:
        if isinstance(n, str):
            parts.append(n)
        elif n[0] == "opt":
            names = _slots(n[1])
            if any(values[k] is None for k in names):
                for k in names:
                    assignment[k] = None
                continue
            parts.append(_render(n[1], values, assignment))
        elif n[0] == "art":
            parts.append(article(values[n[1]], n[2]))
        else:
            if values[n[1]] is None:
                raise ValueError(f"factor {n[1]!r} drew the sentinel outside an optional clause")
            parts.append(values[n[1]])
            assignment.setdefault(n[1], values[n[1]])
    return "".join(parts)


@dataclass(frozen=True)
class ComposedScene:
    regime: str
    seed: int
    vocab_hash: str
    assignment: dict
    prompt: str
    negative: str = ""

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True, ensure_ascii=False)


def sample_scene(vocab, regime, seed, negative_k=0, template=None):
    """Compose one scene description from independent per-factor draws."""
    if regime not in TEMPLATES and template is None:
        raise ValueError(f"unknown regime {regime!r}; expected one of {REGIMES}")
    template = template or TEMPLATES[regime]
    names = template_factors(template)
    missing = [n for n in names if n not in vocab.factors]
    if missing:
        raise KeyError(f"vocabulary lacks factors required by the {regime} template: {missing}")
    values = {n: draw(vocab, n, seed) for n in names}
    assignment = {}
    prompt = _render(_parse_template(template), values, assignment)
    for n in names:
        assignment.setdefault(n, None)
    negative = compose_negative(vocab, seed, negative_k) if negative_k else ""
    return ComposedScene(regime, int(seed), vocab.digest(), assignment, prompt, negative)


def compose_negative(vocab, seed, k):
    """``k`` distinct artifact terms joined by ``", "``."""
    if not 0 <= k <= len(vocab.negatives):
        raise ValueError(f"k must lie in [0, {len(vocab.negatives)}]")
    if k == 0:
        return ""
    return ", ".join(stream(NEGATIVE_STREAM, seed).sample(list(vocab.negatives), k))


def _pattern(nodes, vocab):
    parts = []
    for n in nodes:
        if isinstance(n, str):
            parts.append(re.escape(n))
        elif n[0] == "opt":
            parts.append(f"(?:{_pattern(n[1], vocab)})?")
        elif n[0] == "art":
            parts.append("(?:A|An)" if n[2] else "(?:a|an)")
        else:
            items = sorted(vocab.factors[n[1]].items, key=len, reverse=True)
            alt = "|".join(re.escape(x) for x in items)
            parts.append(f"(?P<{n[1]}>{alt})")
    return "".join(parts)


def parse_prompt(vocab, regime, prompt, template=None):
    """Recover the factor assignment from a composed prompt."""
    template = template or TEMPLATES[regime]
    nodes = _parse_template(template)
    m = re.fullmatch(_pattern(nodes, vocab), prompt)
    if m is None:
        raise ValueError("prompt does not match the template")
    return {n: m.group(n) for n in template_factors(template)}


@dataclass(frozen=True)
class RefinedText:
    text: str
    original: str
    refined: bool
    error: str = None


def refine_external(scene, command=None, timeout=60.0):
    """Send the prompt to an external command on stdin and return its stdout.

    ``command`` is an argument list or a shell-style string; an argument
    ``{prompt}`` is replaced by the prompt instead of using stdin. Without a
    command, or on any failure, the original text is returned unrefined.
    """
    text = scene.prompt if isinstance(scene, ComposedScene) else str(scene)
    if not command:
        return RefinedText(text, text, False, "no refinement command configured")
    argv = shlex.split(command) if isinstance(command, str) else list(command)
    use_arg = any("{prompt}" in a for a in argv)
    argv = [a.replace("{prompt}", text) for a in argv]
    try:
        proc = subprocess.run(
            argv, input=None if use_arg else text, capture_output=True, text=True, timeout=timeout, check=False,
        )
    except (OSError, subprocess.TimeoutExpired) as exc:
        return RefinedText(text, text, False, f"{type(exc).__name__}: {exc}")
    if proc.returncode != 0:
        return RefinedText(text, text, False, f"command exited with status {proc.returncode}")
    out = proc.stdout.rstrip("\n")
    return RefinedText(out, text, True)
