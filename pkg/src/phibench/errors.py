class ValidationError(ValueError):
    """Input failed a contract check (bad file, bad span, mismatched corpora).

    The CLI maps this to exit code 2.
    """
