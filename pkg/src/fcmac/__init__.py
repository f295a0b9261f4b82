"""Wi-Fi channel-access simulator with fairness-constrained multi-agent PPO backoff agents."""
__version__ = "0.1.0"

from . import sim  # noqa: E402,F401  (initializes sim before observe)
