"""Economic MPC driven by a learned cost oracle.

The plant is only seen through measured economic costs. A NARX regressor of
past costs and inputs feeds a Lipschitz-interpolation oracle that predicts
the next cost, and the controllers optimise input sequences against it.
"""

from oempc.kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
