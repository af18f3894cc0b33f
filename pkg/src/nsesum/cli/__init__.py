"""CLI interface for nsesum."""
