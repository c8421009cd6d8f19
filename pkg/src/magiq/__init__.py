"""Post-quantum agent governance: registration, authorization, budgeted sessions."""

__version__ = "0.1.0"
