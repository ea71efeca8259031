"""Professor-forcing style adversarial training for autoregressive seq2seq models."""
__version__ = "0.1.0"
