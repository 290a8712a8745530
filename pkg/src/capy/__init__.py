"""capy: multi-agent copilot for actionable data analysis and storytelling
over computational notebooks."""

__version__ = "0.1.0"
