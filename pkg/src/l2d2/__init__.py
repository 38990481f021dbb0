"""Learning desk-scale manipulation from 2D drawings.

Humans sketch trajectories on synthetically varied scene images; the
package reconstructs 3D demonstrations through a learned pixel-to-position
mapping, trains behavior-cloning policies, grounds both with a few oracle
demonstrations, and evaluates everything in a kinematic simulator.
"""

from ._kernels import ACTIVE_NAME as kernel_backend

__version__ = "0.1.0"

__all__ = ["kernel_backend", "__version__"]
