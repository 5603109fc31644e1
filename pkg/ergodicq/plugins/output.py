"""
output.py
Purpose: Writes a finished experiment as CSV rows plus a JSON summary that
embeds the configuration it came from.
"""

from asyncblink import signal

from fractions import Fraction
import csv
import json
import logging
import math
import os

import numpy as np

log = logging.getLogger(__name__)


def format_value(value):
    """
    CSV text for one cell: floats with 17 significant digits, rationals as
    p/q, booleans as true/false, missing values empty.
    """

    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, Fraction):
        return "{}/{}".format(value.numerator, value.denominator)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def clean(value):
    """
    JSON-safe copy: numpy scalars unwrapped, non-finite floats as null.
    """

    if isinstance(value, dict):
        return {str(k): clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [clean(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, Fraction):
        return "{}/{}".format(value.numerator, value.denominator)
    return value


def write_csv(experiment, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(experiment.columns)
        for row in experiment.rows:
            writer.writerow([format_value(v) for v in row])
    return path


def summary_document(experiment, csv_name=None):
    return clean({
        "command": experiment.command,
        "config": experiment.config.to_data(),
        "columns": list(experiment.columns),
        "rows": len(experiment.rows),
        "csv": csv_name,
        "summary": experiment.summary,
    })


def write_json(experiment, path, csv_name=None):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary_document(experiment, csv_name), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    return path


def artifact_paths(config):
    base = os.path.join(config.output, config.command)
    return base + ".csv", base + ".json"


## event handlers

@signal("experiment-finished").connect
def handle_finished(experiment):
    config = experiment.config
    os.makedirs(config.output, exist_ok=True)
    csv_path, json_path = artifact_paths(config)
    csv_name = None
    if config.format in ("csv", "both"):
        experiment.artifacts.append(write_csv(experiment, csv_path))
        csv_name = os.path.basename(csv_path)
    if config.format in ("json", "both"):
        experiment.artifacts.append(write_json(experiment, json_path, csv_name))
    for path in experiment.artifacts:
        log.debug("Wrote {}".format(path))


signal("plugin-registered").send("ergodicq.plugins.output")
