import io
import json
import os
import re
import unicodedata
from typing import Dict, Iterable, Iterator, List


def clean_text(text: str) -> str:
    if not isinstance(text, str):
        text = str(text)

    # normalizing unicode characters, removing accents using NFKD
    text = unicodedata.normalize('NFKD', text)

    # removing non-printables
    text = ''.join(char for char in text if char.isprintable() or char in ' \t\n\r')

    # removing multiple consecutive whitespace characters and replace with single space
    text = re.sub(r'\s+', ' ', text)

    return text.strip()


def tokenize(caption: str) -> List[str]:
    """Lowercased, punctuation-stripped, whitespace-split words"""
    text = clean_text(caption).lower()
    text = re.sub(r'[^\w\s]', '', text)
    return text.split()


def find_span(words: List[str], pattern: List[str], start: int) -> bool:
    """True when `pattern` occurs in `words` beginning at `start`"""
    if not pattern or start + len(pattern) > len(words):
        return False
    return words[start:start + len(pattern)] == pattern


def contains_phrase(words: List[str], pattern: List[str]) -> bool:
    return any(find_span(words, pattern, i) for i in range(len(words)))


def write_jsonl(items: Iterable[Dict], out_path: str, encoding: str = "utf-8") -> None:
    """
    Write an iterable of dicts to a JSONL file (one JSON object per line).
    Ensures atomic write by writing to a temp file then renaming.
    """
    tmp_path = str(out_path) + ".tmp"
    with io.open(tmp_path, "w", encoding=encoding) as f:
        for item in items:
            f.write(json.dumps(item, ensure_ascii=False) + "\n")
    os.replace(tmp_path, out_path)


def write_json(obj: object, out_path: str, indent: int = 2, encoding: str = "utf-8") -> None:
    """
    Write an object to a JSON file with atomic replace.
    """
    tmp_path = str(out_path) + ".tmp"
    with io.open(tmp_path, "w", encoding=encoding) as f:
        json.dump(obj, f, ensure_ascii=False, indent=indent)
    os.replace(tmp_path, out_path)


def iter_jsonl_lines(path: str, encoding: str = "utf-8") -> Iterator[tuple[int, str]]:
    """Yields (line number, stripped line) for every nonblank line, BOM stripped"""
    with io.open(path, "r", encoding=encoding) as f:
        for number, line in enumerate(f, 1):
            if number == 1:
                line = line.lstrip("\ufeff")
            line = line.strip()
            if line:
                yield number, line
