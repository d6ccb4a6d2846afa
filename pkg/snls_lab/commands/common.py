"""Helpers shared by the subcommands: parameter validation and output streams."""
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, Optional, TextIO, Type, TypeVar
import json
import sys

from pydantic import BaseModel, ValidationError

from snls_lab.errors import CliValidationError

P = TypeVar("P", bound=BaseModel)


def validate_params(model: Type[P], values: Dict[str, Any]) -> P:
    """Build a parameter set, turning the first pydantic error into a validation-failure."""
    values = {k: v for k, v in values.items() if v is not None}
    try:
        return model.model_validate(values)
    except ValidationError as e:
        first = e.errors()[0]
        parameter = str(first["loc"][0]) if first["loc"] else None
        raise CliValidationError(first["msg"], parameter=parameter) from e


def parse_float_list(text: Optional[str], parameter: str):
    if text is None:
        return None
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise CliValidationError(f"cannot parse {text!r} as a comma-separated list of numbers", parameter=parameter) from e


def parse_key_values(items, parameter: str) -> Dict[str, float]:
    out: Dict[str, float] = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise CliValidationError(f"expected key=value, got {item!r}", parameter=parameter)
        try:
            out[key.strip()] = float(value)
        except ValueError as e:
            raise CliValidationError(f"value of {key!r} is not a number", parameter=parameter) from e
    return out



@contextmanager
def output_stream(path: Optional[Path]) -> Iterator[TextIO]:
    if path is None:
        yield sys.stdout
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        yield fh


def write_json_line(stream: TextIO, payload: Dict[str, Any]):
    stream.write(json.dumps(payload, default=str) + "\n")
    stream.flush()
