"""Independent reference implementations used to cross-check the main paths.

Each module here is deliberately naive and self-contained: no imports
from the rest of the package, simple scans instead of the data
structures the production code uses.  They exist so tests can compare
two implementations that share nothing but the declared semantics, and
each one is runnable standalone via ``python -m mixsearch.oracles.<name>``.
"""
