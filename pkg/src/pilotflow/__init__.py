"""Ensemble workflow engine with a pilot-style runtime.

Applications are described as workflows of concurrent pipelines, each a
sequence of stages holding concurrently runnable tasks. A pilot acquires a
resource slice up front; the runtime translates tasks into compute-unit
descriptions, the pilot agent pulls them in bulk and schedules them onto
cores. Two backends execute the result: a deterministic discrete-event
simulator and a local process runner. A profiler turns the shared event
vocabulary into queue-time / completion-time / execution-time metrics and a
benchmark harness sweeps workload sizes for weak-scaling studies.
"""

from __future__ import annotations

__version__ = "0.1.0"
