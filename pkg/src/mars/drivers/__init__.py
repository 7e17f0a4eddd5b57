"""Solution generators: the model-backed pipeline and its plumbing."""
