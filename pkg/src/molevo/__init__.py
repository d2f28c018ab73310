"""Evolutionary black-box molecular optimizer with pluggable proposal
operators: random graph edits or LLM-suggested structures over an HTTP chat
contract, under a strict oracle-call budget."""

__version__ = "0.1.0"
