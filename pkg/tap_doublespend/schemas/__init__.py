"""JSON schema files for the simulator streams."""
