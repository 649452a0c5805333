"""Object-goal navigation with LLM object-to-room knowledge and oracle
potential functions: scene generation, dataset generation, FMM planning,
an episodic grid-world simulator and evaluation metrics."""

__version__ = "0.1.0"
