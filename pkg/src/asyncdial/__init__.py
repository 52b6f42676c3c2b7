"""asyncdial: a dual-path task-oriented dialogue engine.

Every user turn fans out into two concurrent paths: path A generates and
"speaks" the system reply while path B extracts preference slots, folds them
into the dialogue state, and re-ranks the spot catalog. The two paths are
re-synchronized by a barrier at the start of the next turn, so retrieval
latency is hidden behind speech time instead of adding to the perceived
response gap.

The same turn protocol runs under a deterministic virtual clock (for the
simulation harness and the test suite) and under asyncio (for the HTTP/WS
service and the REPL).
"""

__version__ = "0.1.0"
