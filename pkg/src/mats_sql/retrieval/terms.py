import re

_SEPARATORS = re.compile(r"[\W_]+")
_CAMEL_BOUNDARY = re.compile(r"(?<=[a-z0-9])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])")


def tokenize(text: str) -> list[str]:
    """Lowercased terms of ``text``.

    Splits on non-alphanumerics, underscores and camel-case boundaries;
    no stemming, so value matches stay exact (``singerId`` -> singer, id).
    """
    terms = []
    for chunk in _SEPARATORS.split(text):
        for part in _CAMEL_BOUNDARY.split(chunk):
            if part:
                terms.append(part.lower())
    return terms
