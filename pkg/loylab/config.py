# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

import copy
import pathlib

import jsonschema
import numpy as np
import yaml

from .friedrichs_lee import (
    CUTOFF_GAPS,
    FLParams,
    build_fl_sector,
    constant_couplings,
    desk_scale_params,
    paper_scale_params,
    threshold_couplings,
)
from .model import (
    build_model,
    constant_coupling,
    lorentzian_coupling,
    random_two_level_model,
    sqrt_grid,
    tabulated_coupling,
    threshold_coupling,
    uniform_grid,
)
from .symmetry import make_cpt_invariant

METHODS = ["loy0", "loy", "improved", "spectral", "iterate", "onedim"]

COMPLEX_SCHEMA = {
    "oneOf": [
        {"type": "number"},
        {
            "type": "array",
            "items": {"type": "number"},
            "minItems": 2,
            "maxItems": 2,
        },
    ]
}

COUPLING_SCHEMA = {
    "type": "object",
    "properties": {
        "family": {
            "type": "string",
            "enum": ["constant", "lorentzian", "threshold", "tabulated"],
        },
        "g": {"type": "array", "items": COMPLEX_SCHEMA, "minItems": 1},
        "window": {
            "type": "array",
            "items": {"type": "number"},
            "minItems": 2,
            "maxItems": 2,
        },
        "center": {"type": "number"},
        "width": {"type": "number", "exclusiveMinimum": 0},
        "threshold": {"type": "number"},
        "reference": {"type": "number", "exclusiveMinimum": 0},
        "values": {
            "type": "array",
            "items": {"type": "array", "items": COMPLEX_SCHEMA},
        },
    },
    "additionalProperties": False,
    "required": ["family"],
}

CHANNEL_SCHEMA = {
    "type": "object",
    "properties": {
        "label": {"type": "string"},
        "energy_min": {"type": "number"},
        "energy_max": {"type": "number"},
        "points": {"type": "integer", "minimum": 1},
        "grid": {"type": "string", "enum": ["uniform", "sqrt"]},
        "coupling": COUPLING_SCHEMA,
    },
    "additionalProperties": False,
    "required": ["energy_min", "energy_max", "points", "coupling"],
}

GENERIC_MODEL_SCHEMA = {
    "type": "object",
    "properties": {
        "m0": {"type": "number"},
        "h1_parallel": {
            "type": "array",
            "items": {"type": "array", "items": COMPLEX_SCHEMA, "minItems": 1},
            "minItems": 1,
        },
        "channels": {"type": "array", "items": CHANNEL_SCHEMA, "minItems": 1},
        "cpt_invariant": {"type": "boolean"},
    },
    "additionalProperties": False,
    "required": ["m0", "h1_parallel", "channels"],
}

RANDOM_MODEL_SCHEMA = {
    "type": "object",
    "properties": {
        "m0": {"type": "number"},
        "coupling": {"type": "number", "minimum": 0},
        "h1_scale": {"type": "number", "minimum": 0},
        "points": {"type": "integer", "minimum": 2},
        "band": {
            "type": "array",
            "items": {"type": "number"},
            "minItems": 2,
            "maxItems": 2,
        },
    },
    "additionalProperties": False,
}

FL_MODEL_SCHEMA = {
    "type": "object",
    "properties": {
        "preset": {"type": "string", "enum": ["desk", "paper"]},
        "m0": {"type": "number"},
        "m12": COMPLEX_SCHEMA,
        "mu": {
            "oneOf": [
                {"type": "number"},
                {"type": "array", "items": {"type": "number"}, "minItems": 1},
            ]
        },
        "cutoff": {"type": "number", "exclusiveMinimum": 0},
        "points": {"type": "integer", "minimum": 1},
        "grid": {"type": "string", "enum": ["uniform", "sqrt"]},
        "coupling": {"type": "string", "enum": ["threshold", "constant"]},
        "gamma": {"type": "number", "minimum": 0},
        "g": COMPLEX_SCHEMA,
        "phase": {"type": "number"},
    },
    "additionalProperties": False,
}

RUN_CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "model": {
            "type": "object",
            "properties": {
                "generic": GENERIC_MODEL_SCHEMA,
                "random": RANDOM_MODEL_SCHEMA,
                "friedrichs_lee": FL_MODEL_SCHEMA,
            },
            "additionalProperties": False,
            "minProperties": 1,
            "maxProperties": 1,
        },
        "methods": {
            "type": "array",
            "items": {"type": "string", "enum": METHODS},
            "minItems": 1,
        },
        "eta": {"type": "number", "exclusiveMinimum": 0},
        "grid_points": {"type": "integer", "minimum": 1},
        "times": {
            "type": "object",
            "properties": {
                "start": {"type": "number"},
                "stop": {"type": "number"},
                "count": {"type": "integer", "minimum": 1},
                "values": {"type": "array", "items": {"type": "number"}, "minItems": 1},
            },
            "additionalProperties": False,
        },
        "psi0": {"type": "array", "items": COMPLEX_SCHEMA, "minItems": 1},
        "iterate": {
            "type": "object",
            "properties": {
                "max_iter": {"type": "integer", "minimum": 1},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "complex_arguments": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "output": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "cpt": {"type": "boolean"},
        "sweep": {
            "type": "object",
            "properties": {
                "parameters": {
                    "type": "object",
                    "additionalProperties": {"type": "array", "minItems": 1},
                    "minProperties": 1,
                },
            },
            "additionalProperties": False,
            "required": ["parameters"],
        },
    },
    "additionalProperties": False,
    "required": ["model", "methods"],
}

DEFAULT_TIMES = {"start": 0.0, "stop": 10.0, "count": 101}
DEFAULT_ITERATE = {"max_iter": 50, "tol": 1e-10, "complex_arguments": False}


class ConfigError(Exception):
    """Represents an invalid configuration document."""

    def __init__(self, *args, line=None):
        self.line = line
        super().__init__(*args)

    def __str__(self):
        msg = super().__str__()
        if self.line is None:
            return msg

        return "line %d: %s" % (self.line, msg)


def _node_line(node, path):
    """1-based line of the YAML node at ``path``, or its closest ancestor."""
    line = node.start_mark.line + 1

    for key in path:
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                if k.value == key:
                    node = v
                    break
            else:
                return line
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            return line

        line = node.start_mark.line + 1

    return line


def parse_config(text: str):
    """Parse and validate a configuration document."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.load(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ConfigError(
            "invalid YAML: %s" % getattr(e, "problem", e),
            line=None if mark is None else mark.line + 1,
        ) from e

    if node is None:
        raise ConfigError("configuration document is empty", line=1)

    try:
        jsonschema.validate(data, RUN_CONFIG_SCHEMA)
    except jsonschema.ValidationError as e:
        path = list(e.absolute_path)
        raise ConfigError(
            "%s (at %s)" % (e.message, "/".join(str(p) for p in path) or "top level"),
            line=_node_line(node, path),
        ) from e

    if "friedrichs_lee" in data["model"]:
        fl = data["model"]["friedrichs_lee"]
        if "preset" not in fl and ("m0" not in fl or "mu" not in fl):
            raise ConfigError(
                "friedrichs_lee needs either a preset or m0 and mu",
                line=_node_line(node, ["model", "friedrichs_lee"]),
            )

    return data


def load_config(path: pathlib.Path):
    """Loads and validates a YAML run configuration."""
    with path.open("r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def apply_overrides(config, eta=None, grid=None, seed=None, methods=None, output=None):
    """Return a copy of ``config`` with command line values applied."""
    config = copy.deepcopy(config)

    if eta is not None:
        if not eta > 0.0:
            raise ConfigError("--eta must be positive, got %r" % eta)
        config["eta"] = eta
    if grid is not None:
        if grid < 1:
            raise ConfigError("--grid must be positive, got %r" % grid)
        config["grid_points"] = grid
    if seed is not None:
        config["seed"] = seed
    if methods:
        unknown = sorted(set(methods) - set(METHODS))
        if unknown:
            raise ConfigError("unknown methods: %s" % ", ".join(unknown))
        config["methods"] = list(methods)
    if output is not None:
        config["output"] = output

    return config


def to_complex(value) -> complex:
    if isinstance(value, (list, tuple)):
        return complex(value[0], value[1])

    return complex(value)


def time_grid(config):
    times = config.get("times", DEFAULT_TIMES)
    if "values" in times:
        return np.array(times["values"], dtype=float)

    merged = dict(DEFAULT_TIMES)
    merged.update(times)

    return np.linspace(merged["start"], merged["stop"], merged["count"])


def iterate_options(config):
    options = dict(DEFAULT_ITERATE)
    options.update(config.get("iterate", {}))

    return options


def initial_state(config, dimension: int):
    """Normalized parallel amplitudes; the first level by default."""
    if "psi0" not in config:
        psi0 = np.zeros(dimension, dtype=complex)
        psi0[0] = 1.0
        return psi0

    psi0 = np.array([to_complex(v) for v in config["psi0"]])
    if psi0.shape != (dimension,):
        raise ConfigError("psi0 has %d amplitudes, model has %d levels" % (psi0.size, dimension))
    norm = np.linalg.norm(psi0)
    if norm == 0.0:
        raise ConfigError("psi0 must not vanish")

    return psi0 / norm


def _channel_grid(channel, points):
    if channel.get("grid", "uniform") == "sqrt":
        return sqrt_grid(
            channel["energy_min"], channel["energy_max"] - channel["energy_min"], points
        )

    return uniform_grid(channel["energy_min"], channel["energy_max"], points)


def _channel_couplings(channel, grid, levels: int):
    coupling = channel["coupling"]
    family = coupling["family"]

    if family == "tabulated":
        values = coupling.get("values", [])
        if len(values) != levels:
            raise ConfigError("tabulated coupling needs one value list per level")
        columns = []
        for row in values:
            if len(row) != len(grid):
                raise ConfigError(
                    "tabulated coupling has %d values for a %d point grid" % (len(row), len(grid))
                )
            columns.append(tabulated_coupling(grid, [to_complex(v) for v in row]))
        return np.column_stack(columns)

    strengths = [to_complex(v) for v in coupling.get("g", [])]
    if len(strengths) != levels:
        raise ConfigError(
            "coupling %r lists %d strengths for %d levels" % (family, len(strengths), levels)
        )

    columns = []
    for g in strengths:
        if family == "constant":
            columns.append(constant_coupling(grid, g, coupling.get("window")))
        elif family == "lorentzian":
            if "center" not in coupling or "width" not in coupling:
                raise ConfigError("lorentzian coupling needs center and width")
            columns.append(lorentzian_coupling(grid, g, coupling["center"], coupling["width"]))
        elif family == "threshold":
            threshold = coupling.get("threshold", channel["energy_min"])
            reference = coupling.get("reference", 1.0)
            columns.append(threshold_coupling(grid, g, threshold, reference))
        else:
            raise ConfigError("unknown coupling family %r" % family)

    return np.column_stack(columns)


def _generic_model(section, grid_points):
    rows = section["h1_parallel"]
    levels = len(rows)
    if any(len(row) != levels for row in rows):
        raise ConfigError("h1_parallel must be square")
    h1 = np.array([[to_complex(v) for v in row] for row in rows])

    channels = []
    for i, channel in enumerate(section["channels"]):
        points = grid_points or channel["points"]
        grid = _channel_grid(channel, points)
        couplings = _channel_couplings(channel, grid, levels)
        channels.append((channel.get("label", "J%d" % (i + 1)), grid, couplings))

    if section.get("cpt_invariant"):
        if levels != 2:
            raise ConfigError("cpt_invariant needs two levels")
        return make_cpt_invariant(
            {
                "m0": section["m0"],
                "m12": h1[0, 1],
                "channels": [
                    {"label": label, "grid": grid, "coupling": couplings[:, 0]}
                    for label, grid, couplings in channels
                ],
            }
        )

    return build_model(section["m0"], h1, channels)


def fl_params_from_config(section, grid_points=None) -> FLParams:
    preset = section.get("preset")
    points = grid_points or section.get("points", 4000)

    if preset == "desk":
        params = desk_scale_params(
            m12=to_complex(section.get("m12", [0.0, 1e-3])),
            points=points,
            phase=section.get("phase", 0.0),
            coupling=section.get("coupling", "threshold"),
        )
    elif preset == "paper":
        params = paper_scale_params(
            im_m12_ratio=to_complex(section.get("m12", [0.0, 1e-3])).imag,
            points=points,
            phase=section.get("phase", 0.0),
            coupling=section.get("coupling", "threshold"),
        )
    else:
        m0 = section["m0"]
        mu = np.atleast_1d(section["mu"]).astype(float)
        gap = m0 - float(np.min(mu))
        if not gap > 0.0:
            raise ConfigError("m0 must lie above every channel mass")
        cutoff = section.get("cutoff", CUTOFF_GAPS * gap)

        if "g" in section:
            strength = to_complex(section["g"])
        else:
            strength = np.sqrt(section.get("gamma", 0.0) / (4.0 * np.pi))
        phase = section.get("phase", 0.0)

        couplings = []
        for x in mu:
            if section.get("coupling", "threshold") == "threshold":
                couplings.append(threshold_couplings(strength, m0 - x, phase))
            else:
                couplings.append(constant_couplings(strength, cutoff, phase))

        m12 = to_complex(section.get("m12", 0.0))
        m = np.array([[m0, m12], [m12.conjugate(), m0]])
        params = FLParams(m, mu, couplings, cutoff, points, section.get("grid", "sqrt"))

    return params


def model_from_config(config):
    """Build the FullModel described by ``config``.

    Returns ``(model, fl_params)``; ``fl_params`` is None unless the model is
    a Friedrichs-Lee sector.
    """
    section = config["model"]
    grid_points = config.get("grid_points")

    if "generic" in section:
        return _generic_model(section["generic"], grid_points), None

    if "random" in section:
        options = section["random"]
        rng = np.random.default_rng(config.get("seed", 0))
        band = options.get("band", [0.0, 4.0])
        model = random_two_level_model(
            rng,
            m0=options.get("m0", 2.0),
            coupling=options.get("coupling", 0.05),
            h1_scale=options.get("h1_scale", 0.01),
            points=grid_points or options.get("points", 400),
            band=(band[0], band[1]),
        )
        return model, None

    params = fl_params_from_config(section["friedrichs_lee"], grid_points)

    return build_fl_sector(params), params
