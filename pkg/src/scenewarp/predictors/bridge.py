"""Newline-delimited JSON bridge to a predictor running as a child process."""
from __future__ import annotations

import json
import logging
import os
import selectors
import shlex
import subprocess
import time
from typing import Optional

import numpy as np

from ..metrics import PredictionSet
from ..scene_model import Scenario, Trajectory, scene_to_dict

log = logging.getLogger(__name__)

N_FUTURE = 30


class ExternalPredictorError(RuntimeError):
    pass


class ExternalProcessExited(ExternalPredictorError):
    pass


class ExternalTimeout(ExternalPredictorError):
    pass


class ProtocolError(ExternalPredictorError):
    pass


def request_message(scn: Scenario) -> dict:
    scene = scene_to_dict(scn.scene)
    return {
        "id": scn.id,
        "dt": float(scn.dt),
        "history": scn.history.points.tolist(),
        "agents": [a.points.tolist() for a in scn.agents],
        "lanes": scene["lanes"],
        "drivable": scene["drivable"],
    }


def parse_response(msg: dict, expected_id: str, dt: float, n_future: int = N_FUTURE) -> PredictionSet:
    if not isinstance(msg, dict):
        raise ProtocolError("response is not a JSON object")
    if msg.get("id") != expected_id:
        raise ProtocolError(f"response id {msg.get('id')!r} does not match request {expected_id!r}")
    if "modes" not in msg:
        raise ProtocolError("response is missing 'modes'")
    modes = []
    for i, mode in enumerate(msg["modes"]):
        try:
            arr = np.asarray(mode, dtype=float)
        except (TypeError, ValueError):
            raise ProtocolError(f"modes[{i}] is not numeric") from None
        if arr.shape != (n_future, 2) or not np.all(np.isfinite(arr)):
            raise ProtocolError(f"modes[{i}] must be {n_future} finite [x, y] points, got shape {arr.shape}")
        modes.append(Trajectory(arr, dt))
    if not modes:
        raise ProtocolError("response has no modes")
    probs = msg.get("probabilities")
    try:
        return PredictionSet(tuple(modes), None if probs is None else tuple(probs))
    except (TypeError, ValueError) as exc:
        raise ProtocolError(f"bad probabilities: {exc}") from None


class ExternalPredictor:
    """One child process; requests are strictly one-at-a-time."""

    def __init__(self, command: str, timeout: float = 30.0):
        self.command = command
        self.timeout = timeout
        self._proc: Optional[subprocess.Popen] = None
        self._buf = b""

    def _start(self):
        argv = shlex.split(self.command)
        log.debug("starting external predictor %s", argv)
        try:
            self._proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        except OSError as exc:
            raise ExternalProcessExited(f"cannot launch {self.command!r}: {exc}") from None
        self._buf = b""

    def _readline(self) -> bytes:
        proc = self._proc
        deadline = time.monotonic() + self.timeout
        fd = proc.stdout.fileno()
        with selectors.DefaultSelector() as sel:
            sel.register(fd, selectors.EVENT_READ)
            while b"\n" not in self._buf:
                left = deadline - time.monotonic()
                if left <= 0:
                    self.close()
                    raise ExternalTimeout(f"external predictor gave no answer within {self.timeout:g} s")
                if not sel.select(left):
                    continue
                chunk = os.read(fd, 65536)
                if not chunk:
                    code = proc.wait()
                    self._proc = None
                    raise ExternalProcessExited(f"external predictor exited with code {code}")
                self._buf += chunk
        line, _, self._buf = self._buf.partition(b"\n")
        return line

    def predict(self, scn: Scenario) -> PredictionSet:
        if self._proc is None or self._proc.poll() is not None:
            self._start()
        payload = (json.dumps(request_message(scn)) + "\n").encode()
        try:
            self._proc.stdin.write(payload)
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError):
            code = self._proc.wait()
            self._proc = None
            raise ExternalProcessExited(f"external predictor exited with code {code}") from None
        line = self._readline()
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"response is not JSON: {exc}") from None
        return parse_response(msg, scn.id, scn.dt)

    def close(self):
        proc, self._proc = self._proc, None
        if proc is None:
            return
        try:
            proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=2.0)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
