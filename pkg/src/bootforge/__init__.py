"""Bootstrapped program synthesis with execution-driven repair.

Pipeline: load a task corpus (``dataset``), build byte-exact prompts
(``prompts``), judge candidate programs in a sandbox (``executor``), run the
bootstrap/repair loop against any generator speaking the wire protocol
(``generator``, ``bootstrap``), and score the results (``metrics``).
"""

__version__ = "0.1.0"
