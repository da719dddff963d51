"""Virtual action actor-critic: exploration via anticipated novelty."""

from .agents import Agent, AgentConfig
from .env_maze import Maze, MazeConfig, VisitGrid

__version__ = "0.1.0"

__all__ = ["Agent", "AgentConfig", "Maze", "MazeConfig", "VisitGrid"]
