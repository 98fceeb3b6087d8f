class WsdpaError(ValueError):
    """Raised for invalid inputs or numerically broken preconditions."""
