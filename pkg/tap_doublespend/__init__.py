"""Bitcoin double-spend attack simulator, exposed as a Singer tap and a CLI."""
