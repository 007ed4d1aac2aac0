"""Shared test configuration.

Property-based tests run derandomized so the suite is reproducible; the
deadline is disabled because cluster explorations have heavy-tailed
per-example cost.
"""

from hypothesis import settings

settings.register_profile("suite", deadline=None, max_examples=50,
                          derandomize=True)
settings.load_profile("suite")
