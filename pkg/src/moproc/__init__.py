"""moproc: skeletal motion from constraint programs.

Constraint programs written in a small DSL compile into differentiable error
functions over skeletal motion. The error is minimized through the latent
code of a pluggable motion prior:

    ```python
    from moproc.optimizer import optimize
    from moproc.priors import dct_prior
    from moproc.tasks import get_task

    task = get_task("HSI-1")
    prior = dct_prior(60, 8)
    result = optimize(prior, task.program, task.default_params)
    ```

Run from the command line with: `moproc run --task HSI-1 --prior dct:K=8`
"""

import importlib.metadata

from moproc.logging import setup_logging

try:
    __version__ = importlib.metadata.version(__name__)
except importlib.metadata.PackageNotFoundError:
    __version__ = "0.0.0"

__all__ = ["__version__"]

# Configure logging on import
setup_logging()
