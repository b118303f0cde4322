import re

_DROP = re.compile(r"[^\w\s']", re.UNICODE)
_SPACES = re.compile(r"\s+")


def normalize_text(text: str) -> str:
    """Uppercase, strip punctuation except apostrophes, collapse whitespace."""
    text = _DROP.sub(" ", text.upper()).replace("_", " ")
    return _SPACES.sub(" ", text).strip()


def normalize_word(word: str) -> str:
    return normalize_text(word).replace(" ", "")
