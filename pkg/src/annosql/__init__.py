"""annosql: an annotation-based natural language interface to single-table
databases.

Pipeline: annotate a question against a table's meta knowledge, translate
the annotated question to an annotated SQL sketch with an attention+copy
sequence model, then deterministically resolve the symbols and execute.
"""

__version__ = "0.1.0"
