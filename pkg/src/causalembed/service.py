"""HTTP service exposing the CLI analyses.

``POST /v1/{command}`` takes ``{"inputs": {...}, "flags": {...}}`` and answers
``{"report": ..., "artifacts": ...}``.  Invalid scenarios give 422 with an
``errors`` list of [location, message] pairs; theorem violations give 409 with
the counterexample dump.  Run with ``uvicorn causalembed.service:app``.
"""
from __future__ import annotations

import json

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .commands import COMMANDS, Flags, ScenarioError, run
from .nogo import TheoremViolation
from .schemas import RequestModel

app = FastAPI(title="causalembed")


@app.get("/health")
def health():
    return {"status": "ok", "commands": sorted(COMMANDS)}


@app.post("/v1/{command}")
def analyse(command: str, body: RequestModel):
    if command not in COMMANDS:
        return JSONResponse({"errors": [["command", f"unknown command {command!r}"]]}, status_code=404)
    flags = Flags(tol=body.flags.tol, seed=body.flags.seed, max_subset=body.flags.max_subset)
    try:
        res = run(command, body.inputs, flags)
    except ScenarioError as e:
        return JSONResponse({"errors": [list(x) for x in e.errors]}, status_code=422)
    except TheoremViolation as e:
        # round trip through json so numpy scalars and tuples in the dump are plain
        dump = json.loads(json.dumps(e.dump, default=str))
        return JSONResponse({"message": str(e), "dump": dump}, status_code=409)
    return {"report": res.report, "artifacts": res.artifacts}
