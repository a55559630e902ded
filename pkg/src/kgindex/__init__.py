"""Declarative indexing of SPARQL endpoints with test/action rules and OWL RL reasoning."""

__version__ = "0.1.0"
