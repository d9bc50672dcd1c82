# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

"""Expansion of ``sweep:`` parameter lists into one run per combination."""

import copy
import itertools

import jsonschema

from .config import RUN_CONFIG_SCHEMA, ConfigError

SWEEP_SIZE_LIMIT = 1024


def parse_key(key: str):
    """Split a dotted key; purely numeric parts index into lists."""
    parts = []
    for part in key.split("."):
        if not part:
            raise ConfigError("empty component in sweep key %r" % key)
        parts.append(int(part) if part.isdigit() else part)

    return parts


def set_value(config, key: str, value):
    path = parse_key(key)
    node = config

    for part in path[:-1]:
        try:
            node = node[part]
        except (KeyError, IndexError, TypeError):
            raise ConfigError("sweep key %r does not name an existing section" % key) from None

    last = path[-1]
    if isinstance(node, list):
        if not isinstance(last, int) or last >= len(node):
            raise ConfigError("sweep key %r indexes past the end of a list" % key)
    elif not isinstance(node, dict):
        raise ConfigError("sweep key %r does not name a section" % key)

    node[last] = value


def generate_sweep_entries(config):
    """Return a list of ``(name, run_config, assignment)`` entries.

    Parameters are expanded as a cartesian product in sorted key order. Run
    ``i`` writes to ``<output>/run-<i>`` and uses seed ``seed + i``.
    """
    parameters = config.get("sweep", {}).get("parameters", {})
    if not parameters:
        raise ConfigError("configuration has no sweep parameters")

    keys = sorted(parameters)
    size = 1
    for key in keys:
        size *= len(parameters[key])
    if size > SWEEP_SIZE_LIMIT:
        raise ConfigError("sweep expands to %d runs; the limit is %d" % (size, SWEEP_SIZE_LIMIT))

    base = copy.deepcopy(config)
    del base["sweep"]
    output = base.get("output", "out")
    seed = base.get("seed", 0)

    entries = []
    for index, values in enumerate(itertools.product(*(parameters[k] for k in keys))):
        entry = copy.deepcopy(base)
        assignment = dict(zip(keys, values))
        for key, value in assignment.items():
            set_value(entry, key, value)

        name = "run-%03d" % index
        entry["output"] = "%s/%s" % (output, name)
        entry["seed"] = seed + index

        try:
            jsonschema.validate(entry, RUN_CONFIG_SCHEMA)
        except jsonschema.ValidationError as e:
            raise ConfigError("sweep entry %s is invalid: %s" % (name, e.message)) from e

        entries.append((name, entry, assignment))

    return entries
