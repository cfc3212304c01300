"""Documents, label descriptors, auxiliary records and their JSONL files."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import DuplicateId, MalformedRecord, MismatchedIds, UnknownLabel

MAX_TOKENS = 4000
AUX_KINDS = ("drg", "cpt", "drug")

_NON_WORD = re.compile(r"[\W_]+")


def _is_mixed(token: str) -> bool:
    return any(c.isdigit() for c in token) and any(c.isalpha() for c in token)


def preprocess(raw_text: str, max_len: int = MAX_TOKENS) -> list[str]:
    """Lowercase, blank out punctuation and mixed digit/letter tokens, split, truncate.

    >>> preprocess("Chest X-Ray: 4kg NORMAL")
    ['chest', 'x', 'ray', 'normal']
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    # lowercase first: some characters lowercase into combining marks
    text = _NON_WORD.sub(" ", raw_text.lower())
    tokens = [t for t in text.split() if not _is_mixed(t)]
    return tokens[:max_len]


@dataclass(frozen=True)
class AuxRecord:
    drg: frozenset[str] = frozenset()
    cpt: frozenset[str] = frozenset()
    drug: frozenset[str] = frozenset()

    def codes(self) -> Iterator[tuple[str, str]]:
        """Kind-qualified codes, in a stable order."""
        for kind in AUX_KINDS:
            for code in sorted(getattr(self, kind)):
                yield kind, code

    def is_empty(self) -> bool:
        return not (self.drg or self.cpt or self.drug)


@dataclass(frozen=True)
class Document:
    id: str
    tokens: tuple[str, ...]
    gold_labels: frozenset[str]
    aux: AuxRecord = field(default_factory=AuxRecord)


@dataclass(frozen=True)
class LabelDescriptor:
    id: str
    descriptor_tokens: tuple[str, ...]


@dataclass(frozen=True)
class Split:
    train: tuple[str, ...] = ()
    valid: tuple[str, ...] = ()
    test: tuple[str, ...] = ()

    def as_dict(self) -> dict[str, list[str]]:
        return {"train": list(self.train), "valid": list(self.valid), "test": list(self.test)}


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...]
    labels: tuple[LabelDescriptor, ...]
    split: Split

    def __post_init__(self):
        seen: set[str] = set()
        for lab in self.labels:
            if lab.id in seen:
                raise DuplicateId(f"duplicate label id {lab.id!r}")
            seen.add(lab.id)
        doc_ids: set[str] = set()
        for doc in self.documents:
            if doc.id in doc_ids:
                raise DuplicateId(f"duplicate document id {doc.id!r}")
            doc_ids.add(doc.id)
            missing = doc.gold_labels - seen
            if missing:
                raise UnknownLabel(f"document {doc.id!r} references unknown label(s) {sorted(missing)}")
        assigned: set[str] = set()
        for name in ("train", "valid", "test"):
            ids = getattr(self.split, name)
            for i in ids:
                if i not in doc_ids:
                    raise MismatchedIds(f"split {name!r} references unknown document {i!r}")
                if i in assigned:
                    raise DuplicateId(f"document {i!r} appears in more than one split slot")
                assigned.add(i)

    @property
    def label_ids(self) -> list[str]:
        return [lab.id for lab in self.labels]

    def by_id(self) -> dict[str, Document]:
        return {d.id: d for d in self.documents}

    def docs(self, split: str) -> list[Document]:
        lookup = self.by_id()
        return [lookup[i] for i in getattr(self.split, split)]


def _read_jsonl(path: Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise MalformedRecord(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def _str_list(obj: dict, key: str, where: str, required: bool = True) -> list[str]:
    if key not in obj:
        if required:
            raise MalformedRecord(f"{where}: missing field {key!r}")
        return []
    val = obj[key]
    if not isinstance(val, list) or not all(isinstance(v, str) for v in val):
        raise MalformedRecord(f"{where}: field {key!r} must be a list of strings")
    return val


def _str_field(obj: dict, key: str, where: str) -> str:
    val = obj.get(key)
    if not isinstance(val, str):
        raise MalformedRecord(f"{where}: field {key!r} must be a string")
    return val


def load_labels(path: str | Path) -> list[LabelDescriptor]:
    path = Path(path)
    labels: list[LabelDescriptor] = []
    seen: dict[str, int] = {}
    for lineno, obj in _read_jsonl(path):
        where = f"{path}:{lineno}"
        lid = _str_field(obj, "id", where)
        tokens = preprocess(_str_field(obj, "descriptor", where))
        if not tokens:
            raise MalformedRecord(f"{where}: descriptor of {lid!r} is empty after preprocessing")
        if lid in seen:
            raise DuplicateId(f"{where}: label id {lid!r} already defined on line {seen[lid]}")
        seen[lid] = lineno
        labels.append(LabelDescriptor(lid, tuple(tokens)))
    return labels


def load_documents(path: str | Path, label_ids: Iterable[str], max_len: int = MAX_TOKENS) -> list[Document]:
    path = Path(path)
    known = set(label_ids)
    docs: list[Document] = []
    seen: dict[str, int] = {}
    for lineno, obj in _read_jsonl(path):
        where = f"{path}:{lineno}"
        did = _str_field(obj, "id", where)
        if did in seen:
            raise DuplicateId(f"{where}: document id {did!r} already defined on line {seen[did]}")
        seen[did] = lineno
        tokens = preprocess(_str_field(obj, "text", where), max_len)
        if not tokens:
            raise MalformedRecord(f"{where}: document {did!r} has no tokens after preprocessing")
        labels = _str_list(obj, "labels", where)
        unknown = sorted(set(labels) - known)
        if unknown:
            raise UnknownLabel(f"{where}: document {did!r} references unknown label(s) {unknown}")
        aux = AuxRecord(
            drg=frozenset(_str_list(obj, "drg", where, required=False)),
            cpt=frozenset(_str_list(obj, "cpt", where, required=False)),
            drug=frozenset(_str_list(obj, "drugs", where, required=False)),
        )
        docs.append(Document(did, tuple(tokens), frozenset(labels), aux))
    return docs


def load_split(path: str | Path) -> Split:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"{path}: invalid JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise MalformedRecord(f"{path}: expected a JSON object")
    parts = {k: tuple(_str_list(obj, k, str(path), required=False)) for k in ("train", "valid", "test")}
    return Split(**parts)


def load_corpus(doc_path: str | Path, label_path: str | Path, split_path: str | Path | None = None) -> Corpus:
    """Load and validate a corpus. Without a split file every document is training data."""
    labels = load_labels(label_path)
    docs = load_documents(doc_path, [lab.id for lab in labels])
    if split_path is None:
        split = Split(train=tuple(d.id for d in docs))
    else:
        split = load_split(split_path)
    return Corpus(tuple(docs), tuple(labels), split)


def _dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=False)


def save_corpus(corpus: Corpus, directory: str | Path) -> dict[str, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "documents": directory / "documents.jsonl",
        "labels": directory / "labels.jsonl",
        "splits": directory / "splits.json",
    }
    with open(paths["documents"], "w", encoding="utf-8") as fh:
        for d in corpus.documents:
            rec = {
                "id": d.id,
                "text": " ".join(d.tokens),
                "labels": sorted(d.gold_labels),
                "drg": sorted(d.aux.drg),
                "cpt": sorted(d.aux.cpt),
                "drugs": sorted(d.aux.drug),
            }
            fh.write(_dumps(rec) + "\n")
    with open(paths["labels"], "w", encoding="utf-8") as fh:
        for lab in corpus.labels:
            fh.write(_dumps({"id": lab.id, "descriptor": " ".join(lab.descriptor_tokens)}) + "\n")
    paths["splits"].write_text(_dumps(corpus.split.as_dict()) + "\n", encoding="utf-8")
    return paths
