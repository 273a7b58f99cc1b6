"""Talking-head video evaluation metrics and benchmark harness."""

import json as _json

from ._core import *  # noqa: F401,F403
from ._core import ThbenchError, default_config, evaluate

__version__ = "0.1.0"


def run_eval(manifest, config=None, output_dir=""):
    """Evaluate a manifest and return the report as a dict.

    ``config`` is a dict merged over the defaults (missing keys keep them).
    """
    text = _json.dumps(config or {})
    return _json.loads(evaluate(str(manifest), text, str(output_dir)))


def defaults():
    return _json.loads(default_config())
