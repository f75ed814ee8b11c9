"""Session orchestration, adversary scenarios, state exploration and the CLI."""
