"""Plain-text prompt templates with $-style named placeholders."""

from importlib import resources
from string import Template


def load(name: str) -> Template:
    text = resources.files(__package__).joinpath(f"{name}.txt").read_text("utf-8")
    return Template(text)


def render(name: str, **values: str) -> str:
    return load(name).substitute(**values)
