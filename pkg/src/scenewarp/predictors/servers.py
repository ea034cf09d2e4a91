"""Reference predictors speaking the bridge protocol on stdin/stdout.

    python -m scenewarp.predictors.servers cv     # constant velocity, world frame
    python -m scenewarp.predictors.servers echo   # last history point repeated
"""
from __future__ import annotations

import json
import sys

import numpy as np

from .builtin import N_FUTURE, constant_velocity_points


def answer(kind: str, req: dict) -> dict:
    hist = np.asarray(req["history"], dtype=float)
    if kind == "cv":
        pts = constant_velocity_points(hist, N_FUTURE)
    elif kind == "echo":
        pts = np.repeat(hist[-1:], N_FUTURE, axis=0)
    else:
        raise SystemExit(f"unknown server kind {kind!r}")
    return {"id": req["id"], "modes": [pts.tolist()], "probabilities": [1.0]}


def serve(kind: str, stdin=sys.stdin, stdout=sys.stdout) -> None:
    for line in stdin:
        if not line.strip():
            continue
        stdout.write(json.dumps(answer(kind, json.loads(line))) + "\n")
        stdout.flush()


if __name__ == "__main__":
    serve(sys.argv[1] if len(sys.argv) > 1 else "cv")
