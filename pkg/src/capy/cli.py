"""Headless driver: run queries, generate stories, summarize insights,
replay protocol transcripts."""

from __future__ import annotations

import json
import os
import sys
import tempfile
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import click

from . import agent, insights as insights_mod, story as story_mod
from .errors import CapyError
from .gateway import ModelRef
from .notebook import parse_notebook, serialize_notebook
from .session import ALL_ROLES, Session, Settings, settings_from_dict


def _load_config() -> dict:
    path = Path("capy.toml")
    if path.is_file():
        with path.open("rb") as fh:
            return tomllib.load(fh)
    return {}


def _build_settings(stub: str | None, multi: bool, max_rounds: int | None) -> Settings:
    config = _load_config().get("settings", {})
    if stub:
        settings = Settings.scripted(stub)
    elif config:
        settings = settings_from_dict(config)
    else:
        settings = Settings(model_by_role={
            role: ModelRef("openai_compatible",
                           os.environ.get("CAPY_MODEL", "gpt-4o"))
            for role in ALL_ROLES})
    if multi:
        settings.eda_mode = "multi"
        settings.story_mode = "multi"
    if max_rounds is not None:
        settings.max_rounds = max_rounds
    return settings


def _write_atomic(path: Path, payload: bytes) -> None:
    # never corrupt the user's notebook on a failed write
    fd, tmp = tempfile.mkstemp(dir=str(path.parent or Path(".")),
                               prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except OSError:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@click.group()
def main():
    """Data-analysis copilot for computational notebooks."""


@main.command()
@click.option("-n", "--notebook", "notebook_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("-q", "--query", required=True)
@click.option("--multi", is_flag=True, help="Use the multi-agent mode.")
@click.option("--max-rounds", type=int, default=None)
@click.option("--stub", type=click.Path(exists=True), default=None,
              help="Transcript file for the scripted provider.")
@click.option("-o", "--output", type=click.Path(path_type=Path), default=None,
              help="Output notebook path (default: in place).")
@click.option("--transcript-out", type=click.Path(path_type=Path), default=None,
              help="Write the multi-agent transcript for later replay.")
def query(notebook_path: Path, query: str, multi: bool, max_rounds: int | None,
          stub: str | None, output: Path | None, transcript_out: Path | None):
    """Run one agentic query against a notebook and write the result."""
    settings = _build_settings(stub, multi, max_rounds)
    try:
        session = Session(notebook=parse_notebook(notebook_path.read_bytes()),
                          settings=settings)
        terminal = None
        for event in agent.run_query(session, query, settings.eda_mode,
                                     settings.budget()):
            click.echo(f"{event.kind} {json.dumps(event.payload)}")
            if event.kind in agent.TERMINAL_EVENTS:
                terminal = event
        _write_atomic(output or notebook_path,
                      serialize_notebook(session.notebook))
        if transcript_out and session.last_transcript is not None:
            transcript_out.write_text(session.last_transcript.to_json(), "utf-8")
        session.close()
    except CapyError as exc:
        raise click.ClickException(str(exc)) from exc
    if terminal is None or terminal.kind != "loop_done":
        sys.exit(1)


@main.command()
@click.option("-n", "--notebook", "notebook_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("-i", "--instructions", default="")
@click.option("--multi", is_flag=True)
@click.option("--max-rounds", type=int, default=None)
@click.option("--stub", type=click.Path(exists=True), default=None)
@click.option("-o", "--output", required=True, type=click.Path(path_type=Path))
def story(notebook_path: Path, instructions: str, multi: bool,
          max_rounds: int | None, stub: str | None, output: Path):
    """Generate a data story and export it as HTML."""
    settings = _build_settings(stub, multi, max_rounds)
    try:
        nb = parse_notebook(notebook_path.read_bytes())
        session = Session(notebook=nb, settings=settings)
        document, _transcript = story_mod.generate_story(
            nb, instructions, settings.story_mode, session.gateway,
            max_rounds=settings.max_rounds,
            max_annotations_per_block=settings.max_annotations_per_block)
        _write_atomic(output, story_mod.export_html(document, nb))
    except CapyError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"wrote {output}")


@main.command()
@click.option("-n", "--notebook", "notebook_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--stub", type=click.Path(exists=True), default=None)
@click.option("-o", "--output", required=True, type=click.Path(path_type=Path))
def insights(notebook_path: Path, stub: str | None, output: Path):
    """Summarize the notebook's insight graph to a diagram file."""
    settings = _build_settings(stub, False, None)
    try:
        nb = parse_notebook(notebook_path.read_bytes())
        session = Session(notebook=nb, settings=settings)
        graph = insights_mod.extract_graph(nb, session.gateway)
        _write_atomic(output, insights_mod.to_mermaid(graph).encode())
    except CapyError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"wrote {output}")


@main.command()
@click.option("-t", "--transcript", "transcript_path", required=True,
              type=click.Path(exists=True, path_type=Path))
def replay(transcript_path: Path):
    """Print wave accounting for a recorded multi-agent transcript."""
    try:
        doc = json.loads(transcript_path.read_text("utf-8"))
    except ValueError as exc:
        raise click.ClickException(f"unreadable transcript: {exc}") from exc
    rounds = doc.get("rounds", [])
    decisions = sum(1 for r in rounds if r.get("decision"))
    click.echo(f"task:        {doc.get('task', '?')}")
    click.echo(f"waves:       {doc.get('wave_count', '?')}")
    click.echo(f"rounds:      {len(rounds)}")
    click.echo(f"decisions:   {decisions}")
    click.echo(f"termination: {doc.get('termination', '?')}")
    if doc.get("degraded"):
        click.echo("degraded:    yes")


@main.command()
def serve():
    """Run the HTTP session service (CAPY_LISTEN_ADDR, CAPY_STATE_DIR)."""
    from .service import main as service_main
    service_main()


if __name__ == "__main__":
    main()
