"""Command-line front end.

Every subcommand reads JSON documents, runs one analysis and prints a JSON
report.  With ``--out-dir`` the report goes to ``report.json`` next to any DOT
artifacts.  Exit status: 0 analysis completed, 1 invalid scenario, 2 theorem
violation (a counterexample dump is written to ``counterexample.json``).

By default the analysis runs in-process; ``--server URL`` sends the same
request to a running ``causalembed.service`` instead.
"""
from __future__ import annotations

import json
import sys
import urllib.error
import urllib.request
from pathlib import Path

import click

from .commands import Flags, Result, ScenarioError, run
from .nogo import TheoremViolation
from .serialization import dumps

INPUT_KEYS = ("process", "embedding", "channel", "signalling", "graph", "routing", "distribution")


class RemoteTheoremViolation(Exception):
    def __init__(self, message, dump):
        super().__init__(message)
        self.dump = dump


def _load(path: str, key: str):
    try:
        return json.loads(Path(path).read_text())
    except OSError as e:
        raise ScenarioError([(key, f"cannot read {path}: {e.strerror}")]) from None
    except json.JSONDecodeError as e:
        raise ScenarioError([(key, f"{path} is not valid JSON: {e.msg} at line {e.lineno} column {e.colno}")]) from None


def _invalid(ctx: click.Context, e: ScenarioError):
    for loc, msg in e.errors:
        click.echo(f"invalid scenario: {loc}: {msg}", err=True)
    ctx.exit(1)


def _gather(command: str, files: dict, scenario: str | None) -> dict:
    """Input documents from a bundle file plus the per-document options (which take precedence)."""
    inputs = {}
    try:
        if scenario is not None:
            doc = _load(scenario, "scenario")
            if command == "compose" or not isinstance(doc, dict) or not set(doc) & set(INPUT_KEYS + ("builtin", "switch")):
                inputs["scenario"] = doc
            else:
                inputs.update(doc)
        for key, path in files.items():
            if path is not None:
                inputs[key] = _load(path, key)
    except ScenarioError as e:
        _invalid(click.get_current_context(), e)
    return inputs


def _remote(server: str, command: str, inputs: dict, flags: Flags) -> Result:
    body = json.dumps({"inputs": inputs, "flags": {"tol": flags.tol, "seed": flags.seed,
                                                   "max_subset": flags.max_subset}}).encode()
    req = urllib.request.Request(f"{server.rstrip('/')}/v1/{command}", data=body,
                                 headers={"Content-Type": "application/json"}, method="POST")
    try:
        with urllib.request.urlopen(req) as resp:
            data = json.loads(resp.read())
        return Result(data["report"], data.get("artifacts", {}))
    except urllib.error.HTTPError as e:
        data = json.loads(e.read() or b"{}")
        if e.code == 409:
            raise RemoteTheoremViolation(data.get("message", "theorem violation"), data.get("dump", {})) from None
        if e.code == 422:
            errs = data.get("errors")
            if errs is None:
                errs = [(".".join(map(str, d.get("loc", []))), d.get("msg", "")) for d in data.get("detail", [])]
            raise ScenarioError([tuple(x) for x in errs]) from None
        raise


def _execute(ctx: click.Context, command: str, inputs: dict):
    o = ctx.obj
    flags = Flags(tol=o["tol"], seed=o["seed"], max_subset=o["max_subset"])
    out_dir = Path(o["out_dir"]) if o["out_dir"] else None
    try:
        if o["server"]:
            res = _remote(o["server"], command, inputs, flags)
        else:
            res = run(command, inputs, flags)
    except ScenarioError as e:
        _invalid(ctx, e)
    except (TheoremViolation, RemoteTheoremViolation) as e:
        text = dumps({"message": str(e), "dump": e.dump})
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "counterexample.json").write_text(text)
        click.echo(f"theorem violation: {e}", err=True)
        click.echo(text, err=True, nl=False)
        ctx.exit(2)
    text = dumps(res.report)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.json").write_text(text)
        for name, body in sorted(res.artifacts.items()):
            (out_dir / name).write_text(body)
    click.echo(text, nl=False)


@click.group()
@click.option("--tol", type=float, default=1e-9, show_default=True, help="Numerical tolerance.")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for all randomised checks.")
@click.option("--max-subset", type=click.IntRange(min=1), default=2, show_default=True,
              help="Largest source/target subset in channel signalling structures.")
@click.option("--out-dir", type=click.Path(file_okay=False), default=None,
              help="Write report.json and DOT artifacts here.")
@click.option("--server", default=None, help="Base URL of a running service; analyses run in-process otherwise.")
@click.pass_context
def cli(ctx, tol, seed, max_subset, out_dir, server):
    """Quantum channel networks, signalling structures and spacetime embeddings."""
    ctx.obj = {"tol": tol, "seed": seed, "max_subset": max_subset, "out_dir": out_dir, "server": server}


def _file(name, help_):
    return click.option(f"--{name}", type=click.Path(dir_okay=False), default=None, help=help_)


_scenario = click.option("--scenario", type=click.Path(dir_okay=False), default=None,
                         help="One JSON document bundling the inputs under their option names.")


@cli.command()
@_file("process", "Process matrix JSON.")
@_scenario
@click.pass_context
def validate(ctx, process, scenario):
    """Check that a process matrix gives valid probabilities."""
    _execute(ctx, "validate", _gather("validate", {"process": process}, scenario))


@cli.command()
@_scenario
@click.pass_context
def compose(ctx, scenario):
    """Run a pipeline of sequential, parallel, loop and link steps."""
    _execute(ctx, "compose", _gather("compose", {}, scenario))


@cli.command()
@_file("process", "Process matrix JSON.")
@_file("channel", "Channel JSON.")
@_scenario
@click.pass_context
def signalling(ctx, process, channel, scenario):
    """Signalling structure of a channel or a process, with a DOT graph."""
    _execute(ctx, "signalling", _gather("signalling", {"process": process, "channel": channel}, scenario))


@cli.command()
@_file("signalling", "Signalling structure JSON.")
@_file("embedding", "Spacetime embedding JSON.")
@_scenario
@click.pass_context
def causality(ctx, signalling, embedding, scenario):
    """Relativistic causality of an embedded signalling structure."""
    _execute(ctx, "causality", _gather("causality", {"signalling": signalling, "embedding": embedding}, scenario))


@cli.command()
@_file("graph", "Directed graph JSON (nodes/edges or dot).")
@_file("routing", "Channel, embedding and system-to-point routing JSON.")
@_scenario
@click.pass_context
def finegrain(ctx, graph, routing, scenario):
    """Split loop nodes of a graph, or maximally fine-grain an embedded channel."""
    _execute(ctx, "finegrain", _gather("finegrain", {"graph": graph, "routing": routing}, scenario))


@cli.command("fixed-order")
@_file("process", "Process matrix JSON.")
@_scenario
@click.pass_context
def fixed_order(ctx, process, scenario):
    """Search for a fixed causal order of the parties."""
    _execute(ctx, "fixed-order", _gather("fixed-order", {"process": process}, scenario))


@cli.command("causal-dist")
@_file("distribution", "Two-party distribution JSON, P[x][y][a][b].")
@_scenario
@click.pass_context
def causal_dist(ctx, distribution, scenario):
    """Decide whether a distribution is causal, with a certificate if not."""
    _execute(ctx, "causal-dist", _gather("causal-dist", {"distribution": distribution}, scenario))


@cli.command()
@_file("process", "Process matrix JSON.")
@_file("embedding", "Spacetime embedding JSON.")
@_scenario
@click.pass_context
def nogo(ctx, process, embedding, scenario):
    """Fixed order, relativistic causality and cycle-freeness of an embedded process."""
    _execute(ctx, "nogo", _gather("nogo", {"process": process, "embedding": embedding}, scenario))


@cli.command()
@click.option("--builtin", type=click.Choice(["qs", "cs"]), default=None,
              help="Built-in Minkowski protocol: quantum switch or its dephased classical version.")
@_file("process", "Process matrix JSON.")
@_file("embedding", "Spacetime embedding JSON.")
@_file("routing", "System-to-point routing JSON.")
@_scenario
@click.pass_context
def unravel(ctx, builtin, process, embedding, routing, scenario):
    """Unravel an embedded process into a fixed-order process over more parties."""
    inputs = _gather("unravel", {"process": process, "embedding": embedding, "routing": routing}, scenario)
    if builtin is not None:
        inputs["builtin"] = builtin
    if not inputs:
        inputs["builtin"] = "qs"
    _execute(ctx, "unravel", inputs)


def _number(v: str):
    try:
        return float(v)
    except ValueError:
        return v


@cli.command("switch-demo")
@click.option("--alpha", default="0.7071", show_default=True, help="Control amplitude on |0>.")
@click.option("--beta", default="0.7071", show_default=True, help="Control amplitude on |1>.")
@click.option("--u", "u", default="X", show_default=True, help="Alice's gate (I, X, Y, Z, H).")
@click.option("--v", "v", default="Z", show_default=True, help="Bob's gate (I, X, Y, Z, H).")
@click.option("--psi", default="1,0", show_default=True, help="Target state amplitudes, comma separated.")
@_scenario
@click.pass_context
def switch_demo(ctx, alpha, beta, u, v, psi, scenario):
    """Quantum switch: output state, measurement statistics and the Minkowski protocol checks."""
    if scenario is not None:
        inputs = _gather("switch-demo", {}, scenario)
        if "scenario" in inputs:
            inputs = {"switch": inputs["scenario"]}
    else:
        inputs = {"switch": {"alpha": _number(alpha), "beta": _number(beta), "U": u, "V": v,
                             "psi": [_number(x.strip()) for x in psi.split(",")]}}
    _execute(ctx, "switch-demo", inputs)


def main(argv=None):
    try:
        cli.main(args=argv, prog_name="causalembed", standalone_mode=True)
    except SystemExit as e:
        if argv is not None:
            return e.code
        raise


if __name__ == "__main__":
    sys.exit(main())
