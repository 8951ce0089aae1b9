class ParameterError(ValueError):
    """An argument or configuration value is outside its valid range."""
