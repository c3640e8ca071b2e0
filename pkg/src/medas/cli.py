"""Command-line driver: validate/run pipelines locally, drive a remote server.

Exit codes: 0 ok, 1 validation failure, 2 execution failure,
3 transport/auth failure, 4 unsatisfiable resource request.
Machine-readable output (ids, JSON) goes to stdout; prose to stderr.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from .client import ApiClient, TransportError, UnsatisfiableError
from .engine import Engine, ExecuteOptions, ExecutionState
from .engine.runner import collect_metrics
from .graph import PipelineGraph, validate_graph
from .hpo import Acquisition, SearchSpace, Study
from .service.state import instantiate_template
from .store import ArtifactStore
from .tools import build_default_registry

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_EXECUTION = 2
EXIT_TRANSPORT = 3
EXIT_UNSATISFIABLE = 4


def _say(message: str) -> None:
    click.echo(message, err=True)


def _load_pipeline(path: str) -> PipelineGraph:
    return PipelineGraph.from_bytes(Path(path).read_bytes())


def _local_engine(workdir: str) -> Engine:
    base = Path(workdir)
    return Engine(
        ArtifactStore(base / "store"),
        build_default_registry(),
        base / "runs",
        base / "cache",
    )


def _client(server: str | None, token: str | None) -> ApiClient:
    server = server or os.environ.get("MEDAS_SERVER")
    token = token or os.environ.get("MEDAS_TOKEN")
    if not server or not token:
        _say("remote mode needs --server/--token (or MEDAS_SERVER/MEDAS_TOKEN)")
        sys.exit(EXIT_TRANSPORT)
    return ApiClient(server, token)


@click.group()
def main() -> None:
    """Desk-scale imaging pipelines: compose, validate, run, schedule, optimize."""


# medas tools ----------------------------------------------------------------


@main.group()
def tools() -> None:
    """Inspect the tool registry."""


@tools.command("list")
def tools_list() -> None:
    registry = build_default_registry()
    for spec in registry.specs():
        click.echo(f"{spec.ref}\t{spec.category.value}")


@tools.command("describe")
@click.argument("tool_id")
def tools_describe(tool_id: str) -> None:
    registry = build_default_registry()
    for spec in registry.specs():
        if spec.tool_id == tool_id or spec.ref == tool_id:
            click.echo(json.dumps(spec.to_json(), indent=2, sort_keys=True))
            return
    _say(f"unknown tool {tool_id!r}")
    sys.exit(EXIT_VALIDATION)


# medas validate ---------------------------------------------------------------


@main.command()
@click.option("-p", "--pipeline", "pipeline_path", required=True, type=click.Path(exists=True))
def validate(pipeline_path: str) -> None:
    """Exit 0 iff the pipeline passes validation; diagnostics go to stderr."""
    graph = _load_pipeline(pipeline_path)
    report = validate_graph(graph, build_default_registry())
    if report.ok:
        _say("pipeline valid")
        sys.exit(EXIT_OK)
    for d in report.diagnostics:
        where = d.node_id or d.edge or "-"
        _say(f"{d.code.value}\t{where}\t{d.message}")
    sys.exit(EXIT_VALIDATION)


# medas run -----------------------------------------------------------------------


@main.command()
@click.option("-p", "--pipeline", "pipeline_path", required=True, type=click.Path(exists=True))
@click.option("--seed", default=0, show_default=True)
@click.option("--no-cache", is_flag=True, default=False)
@click.option("--workdir", default="./medas-data", show_default=True)
@click.option("--explain", is_flag=True, default=False, help="List per-node states.")
@click.option("--json", "as_json", is_flag=True, default=False)
def run(
    pipeline_path: str, seed: int, no_cache: bool, workdir: str, explain: bool, as_json: bool
) -> None:
    """Execute a pipeline locally; exit 0 iff every node succeeded or cache-hit."""
    graph = _load_pipeline(pipeline_path)
    engine = _local_engine(workdir)
    report = validate_graph(graph, engine.registry)
    if not report.ok:
        for d in report.diagnostics:
            _say(f"{d.code.value}\t{d.node_id or d.edge or '-'}\t{d.message}")
        sys.exit(EXIT_VALIDATION)
    record = engine.execute(graph, ExecuteOptions(seed=seed, cache=not no_cache))
    if explain:
        for nid, nrec in sorted(record.nodes.items()):
            _say(f"{nid}\t{nrec.state.value}")
    metrics = collect_metrics(record)
    if as_json:
        click.echo(
            json.dumps(
                {
                    "run_id": record.run_id,
                    "status": record.status,
                    "executed_nodes": record.executed_nodes,
                    "nodes": {n: r.state.value for n, r in record.nodes.items()},
                    "metrics": metrics,
                },
                sort_keys=True,
            )
        )
    else:
        click.echo(record.run_id)
        for name, value in sorted(metrics.items()):
            click.echo(f"{name}={value}")
    sys.exit(EXIT_OK if record.ok else EXIT_EXECUTION)


# medas submit ----------------------------------------------------------------------


@main.command()
@click.option("-p", "--pipeline", "pipeline_path", required=True, type=click.Path(exists=True))
@click.option("--gpus", default=0, show_default=True)
@click.option("--cpus", default=1, show_default=True)
@click.option("--mem", default=512, show_default=True, help="Memory request in MB.")
@click.option("--seed", default=0, show_default=True)
@click.option("--server", default=None)
@click.option("--token", default=None)
def submit(
    pipeline_path: str, gpus: int, cpus: int, mem: int, seed: int, server: str | None, token: str | None
) -> None:
    """Store the pipeline remotely and submit a task; prints the task id."""
    client = _client(server, token)
    body = json.loads(Path(pipeline_path).read_text())
    try:
        stored = client.put_pipeline(body)
        meta = client.submit_task(
            stored["pipeline_id"],
            {"cpu_cores": cpus, "gpus": gpus, "mem_mb": mem},
            seed=seed,
        )
    except UnsatisfiableError:
        _say("resource request is unsatisfiable on this server")
        sys.exit(EXIT_UNSATISFIABLE)
    except TransportError as exc:
        _say(str(exc))
        sys.exit(EXIT_TRANSPORT)
    except Exception as exc:  # noqa: BLE001 - 4xx with diagnostics
        _say(str(exc))
        sys.exit(EXIT_VALIDATION)
    click.echo(meta["task"]["task_id"])


# medas task -------------------------------------------------------------------------


@main.group()
def task() -> None:
    """Inspect or control remote tasks."""


@task.command("status")
@click.argument("task_id")
@click.option("--server", default=None)
@click.option("--token", default=None)
def task_status(task_id: str, server: str | None, token: str | None) -> None:
    client = _client(server, token)
    try:
        click.echo(json.dumps(client.task(task_id), sort_keys=True))
    except TransportError as exc:
        _say(str(exc))
        sys.exit(EXIT_TRANSPORT)


@task.command("logs")
@click.argument("task_id")
@click.option("--follow", is_flag=True, default=False)
@click.option("--server", default=None)
@click.option("--token", default=None)
def task_logs(task_id: str, follow: bool, server: str | None, token: str | None) -> None:
    client = _client(server, token)
    try:
        for event in client.stream_logs(task_id, follow=follow):
            click.echo(json.dumps(event, sort_keys=True))
    except TransportError as exc:
        _say(str(exc))
        sys.exit(EXIT_TRANSPORT)


@task.command("kill")
@click.argument("task_id")
@click.option("--server", default=None)
@click.option("--token", default=None)
def task_kill(task_id: str, server: str | None, token: str | None) -> None:
    client = _client(server, token)
    try:
        meta = client.kill(task_id)
    except TransportError as exc:
        _say(str(exc))
        sys.exit(EXIT_TRANSPORT)
    except Exception as exc:  # noqa: BLE001 - 409 terminal
        _say(str(exc))
        sys.exit(EXIT_EXECUTION)
    click.echo(meta["task"]["state"])


# medas study ----------------------------------------------------------------------------


@main.group()
def study() -> None:
    """Hyper-parameter studies."""


def _load_study_config(path: str) -> tuple[dict, PipelineGraph]:
    cfg = json.loads(Path(path).read_text())
    pipeline_ref = cfg.get("pipeline", "pipeline.json")
    pipeline_path = Path(path).parent / pipeline_ref
    return cfg, PipelineGraph.from_bytes(pipeline_path.read_bytes())


@study.command("run")
@click.option("-s", "--study", "study_path", required=True, type=click.Path(exists=True))
@click.option("--workdir", default="./medas-data", show_default=True)
@click.option("--seed", default=None, type=int, help="Override the config seed.")
@click.option("--json", "as_json", is_flag=True, default=False)
def study_run(study_path: str, workdir: str, seed: int | None, as_json: bool) -> None:
    """Run a study locally: suggest, substitute, execute, tell, repeat."""
    cfg, template = _load_study_config(study_path)
    space = SearchSpace.from_json(cfg["space"])
    acq_cfg = cfg.get("acquisition", {})
    st = Study(
        space,
        seed=int(cfg.get("seed", 0) if seed is None else seed),
        surrogate=cfg.get("surrogate", "gp"),
        acquisition=Acquisition(
            kind=acq_cfg.get("kind", "ei"),
            xi=float(acq_cfg.get("xi", 0.01)),
            kappa=float(acq_cfg.get("kappa", 2.0)),
        ),
    )
    engine = _local_engine(workdir)
    budget = int(cfg["budget"])
    metric = cfg["metric"]
    bindings = cfg["bindings"]
    attempts = 0
    while len(st.completed) < budget and attempts < 5 * budget:
        attempts += 1
        trial = st.suggest()
        graph = instantiate_template(template, bindings, trial.x)
        try:
            record = engine.execute(graph, ExecuteOptions(seed=st.seed))
        except Exception as exc:  # noqa: BLE001 - trial failures are data
            _say(f"trial {trial.trial_id} failed: {exc}")
            st.fail(trial.trial_id)
            continue
        metrics = collect_metrics(record)
        if not record.ok or metric not in metrics:
            _say(f"trial {trial.trial_id} failed (status={record.status})")
            st.fail(trial.trial_id)
            continue
        st.tell(trial.trial_id, metrics[metric])
        _say(f"trial {trial.trial_id}: {metric}={metrics[metric]:.4f} x={trial.x}")
    st.closed = True
    best = st.best
    if best is None:
        _say("no completed trials")
        sys.exit(EXIT_EXECUTION)
    if as_json:
        click.echo(json.dumps({"best_x": best.x, "best_y": best.y,
                               "trials": [t.to_json() for t in st.trials]}, sort_keys=True))
    else:
        click.echo(json.dumps({"best_x": best.x, "best_y": best.y}, sort_keys=True))
    sys.exit(EXIT_OK)


@study.command("trials")
@click.argument("study_id")
@click.option("--csv", "as_csv", is_flag=True, default=True)
@click.option("--server", default=None)
@click.option("--token", default=None)
def study_trials(study_id: str, as_csv: bool, server: str | None, token: str | None) -> None:
    client = _client(server, token)
    try:
        sys.stdout.write(client.trials_csv(study_id).decode("utf-8"))
    except TransportError as exc:
        _say(str(exc))
        sys.exit(EXIT_TRANSPORT)


# medas examples -----------------------------------------------------------------------------


@main.group()
def examples() -> None:
    """Shipped example pipelines."""


@examples.command("export")
@click.argument("dest", type=click.Path())
def examples_export(dest: str) -> None:
    from .bundles import export_bundles

    for path in export_bundles(dest):
        _say(f"wrote {path}")
    click.echo(dest)


# medas admin ----------------------------------------------------------------------------------


@main.group()
def admin() -> None:
    """Offline maintenance."""


@admin.command("repair")
@click.option("--data-dir", required=True, type=click.Path(exists=True))
def admin_repair(data_dir: str) -> None:
    """Quarantine undecodable metadata files so the service can start."""
    base = Path(data_dir) / "meta"
    moved = 0
    for path in base.rglob("*.json"):
        try:
            json.loads(path.read_text(encoding="utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError):
            path.rename(path.with_suffix(".corrupt"))
            _say(f"quarantined {path}")
            moved += 1
    click.echo(str(moved))


# medas serve -------------------------------------------------------------------------------------


@main.command()
def serve() -> None:
    """Start the HTTP server (honors MEDAS_* environment variables)."""
    from .service.__main__ import main as serve_main

    serve_main()


if __name__ == "__main__":
    main()
