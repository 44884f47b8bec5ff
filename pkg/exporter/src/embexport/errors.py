class ExportError(Exception):
    """Any exporter failure: unreadable inputs, checkpoint problems, bad pairs."""
