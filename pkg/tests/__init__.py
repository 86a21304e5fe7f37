"""lift test suite."""
