"""Training harness: batching, metrics, checkpoints, export, cross-validation and the CLI."""
