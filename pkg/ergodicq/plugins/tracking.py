"""
tracking.py
Purpose: Per-experiment progress bookkeeping, fed by the replica-done and
experiment-* signals.
"""

from asyncblink import signal

import logging
import time

log = logging.getLogger(__name__)


class Registry:
    def __init__(self, experiment):
        self.command = experiment.command
        self.done = set()
        # replica indices in completion order
        self.order = []
        self.started = time.monotonic()

    @property
    def elapsed(self):
        return time.monotonic() - self.started


registries = {}


def create_registry(experiment):
    registries[id(experiment)] = Registry(experiment)
    experiment.tracking_registry = registries[id(experiment)]


def get_registry(experiment):
    if experiment is None:
        return None
    return registries.get(id(experiment))


# signal definitions

started = signal("experiment-started")
replica_done = signal("replica-done")
finished = signal("experiment-finished")


## event handlers

@started.connect
def handle_started(experiment):
    create_registry(experiment)


@replica_done.connect
def handle_replica_done(experiment, index):
    registry = get_registry(experiment)
    if registry is None:
        return
    registry.done.add(index)
    registry.order.append(index)
    count = len(registry.done)
    # 1, 2, 4, 8, ...
    if count & (count - 1) == 0:
        log.info("{}: {} replicas done ({:.1f}s)".format(registry.command, count, registry.elapsed))


@finished.connect
def handle_finished(experiment):
    registry = registries.pop(id(experiment), None)
    if registry is None:
        return
    log.info("{} finished: {} rows, {} replicas, {:.1f}s".format(
        registry.command, len(experiment.rows), len(registry.done), registry.elapsed))


signal("plugin-registered").send("ergodicq.plugins.tracking")
