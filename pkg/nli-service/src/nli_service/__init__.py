"""Local NLI classification service speaking the claimcheck backend protocol."""

from nli_service.config import NliServiceConfig, load_config

__version__ = "0.1.0"

__all__ = ["NliServiceConfig", "load_config", "__version__"]
