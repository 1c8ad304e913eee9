"""Cross-lingual matching of adjective-noun pair (ANP) concepts through a pivot
language, embedding evaluation against image-tag co-occurrence, multilingual
clustering and portrait analytics."""

__version__ = "0.1.0"
