"""askdb: natural-language search over relational databases.

Train a semantic knowledge graph from a connection, then compile questions
into validated SQL through a staged planner.
"""

from .connect import Connection, ConnectionSpec, RowBatch, TableRef, open_connection
from .graph import (
    SemanticKnowledgeGraph,
    build_graph,
    incremental_update,
    load_graph,
    save_graph,
)
from .pipeline import QueryPipeline, QueryResponse

__version__ = "0.1.0"

__all__ = [
    "Connection",
    "ConnectionSpec",
    "RowBatch",
    "TableRef",
    "open_connection",
    "SemanticKnowledgeGraph",
    "build_graph",
    "incremental_update",
    "load_graph",
    "save_graph",
    "QueryPipeline",
    "QueryResponse",
    "__version__",
]
