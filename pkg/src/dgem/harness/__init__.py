"""Configuration, synthetic data, pipelines and the command line."""
