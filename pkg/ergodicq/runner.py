"""
runner.py
Purpose: The event layer experiments run on: named signals, plugin loading,
the Experiment object handlers fill in, and the replica pool.
"""

import asyncio
import functools
import importlib
import logging
import os
from concurrent.futures import ThreadPoolExecutor

from asyncblink import signal

from ergodicq.parser import ConfigError

plugins = []

log = logging.getLogger(__name__)

DEFAULT_PLUGINS = ("ergodicq.plugins.core", "ergodicq.plugins.tracking", "ergodicq.plugins.output")


def plugin_registered_handler(plugin_name):
    plugins.append(plugin_name)


signal("plugin-registered").connect(plugin_registered_handler)


def load_plugins(*names):
    for name in names:
        if name not in plugins:
            importlib.import_module(name)


class Experiment:
    """
    One run of a subcommand: its configuration, the rows it measures and a
    summary. Handlers connected to "experiment-<command>" fill it in.
    """

    def __init__(self, config, workers=None):
        self.config = config
        self.workers = workers
        self.columns = ()
        self.rows = []
        self.summary = {}
        self.artifacts = []

    @property
    def command(self):
        return self.config.command

    def emit(self, *row):
        if self.columns and len(row) != len(self.columns):
            raise ValueError("row has {} fields, schema {} has {}".format(len(row), self.command, len(self.columns)))
        self.rows.append(row)
        return self

    def gather(self, fn, count):
        return gather_replicas(fn, count, workers=self.workers, sender=self)


def _replica_done(sender, index, future):
    if not future.cancelled() and future.exception() is None:
        signal("replica-done").send(sender, index=index)


async def _gather(fn, count, workers, sender):
    loop = asyncio.get_running_loop()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = []
        for index in range(count):
            future = loop.run_in_executor(pool, fn, index)
            future.add_done_callback(functools.partial(_replica_done, sender, index))
            futures.append(future)
        return await asyncio.gather(*futures)


def gather_replicas(fn, count, workers=None, sender=None):
    """
    Run fn(0) .. fn(count - 1) on a thread pool and return the results in
    replica order, whatever order they finish in.
    """

    if count < 0:
        raise ValueError("replica count must be nonnegative")
    if not count:
        return []
    workers = workers or os.cpu_count() or 1
    return list(asyncio.run(_gather(fn, count, workers, sender)))


def run(config, workers=None):
    """
    Dispatch a config to the handler for its command and return the filled-in
    Experiment.
    """

    load_plugins(*DEFAULT_PLUGINS)
    handler = signal("experiment-{}".format(config.command))
    if not handler.receivers:
        raise ConfigError("no handler registered for {!r}".format(config.command))

    experiment = Experiment(config, workers)
    log.info("Running {} (seed {})".format(config.command, config.seed))
    signal("experiment-started").send(experiment)
    handler.send(experiment)
    signal("experiment-finished").send(experiment)
    return experiment
