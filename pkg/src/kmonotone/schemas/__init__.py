"""JSON schemas of the command-line reports and the simulation config."""

from importlib import resources
import json

import jsonschema
from referencing import Registry, Resource

NAMES = ("test_report", "degree_report", "richness_report", "lambda_table",
         "sim_report", "simulate_config")


def load(name):
    text = resources.files(__name__).joinpath(f"{name}.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def _registry():
    return Registry().with_resources(
        (f"{n}.schema.json", Resource.from_contents(load(n))) for n in NAMES
    )


def validator(name):
    schema = load(name)
    cls = jsonschema.validators.validator_for(schema)
    return cls(schema, registry=_registry())


def errors(name, instance):
    """Validation errors as ``(json_path, message)`` pairs, best match first."""
    v = validator(name)
    errs = list(v.iter_errors(instance))
    if not errs:
        return []
    best = jsonschema.exceptions.best_match(errs)
    rest = [e for e in errs if e is not best]
    return [(e.json_path, e.message) for e in [best] + rest]


def validate(name, instance):
    validator(name).validate(instance)
