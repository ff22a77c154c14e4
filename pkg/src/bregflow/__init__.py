"""Split Bregman solvers for TV-regularised optical flow.

Submodules
----------
bregman     shrinkage operators, Bregman and split Bregman iterations
imageops    smoothing, derivatives, pyramids, warping, occlusion checks
linsys      motion tensor and the coupled stencil system
solvers     OSB, Brox and Horn-Schunck level solvers
pipeline    coarse-to-fine driver
evaluation  AAE / AEE and the colour-coded rendering
io          .flo and PGM/PPM/PNG files
cli         the ``bregflow`` command
"""

from .bregman import *  # noqa: F401,F403
from .evaluation import *  # noqa: F401,F403
from .flowfield import FlowField
from .imageops import *  # noqa: F401,F403
from .io import *  # noqa: F401,F403
from .linsys import *  # noqa: F401,F403
from .pipeline import *  # noqa: F401,F403
from .solvers import *  # noqa: F401,F403
from . import synthetic

__version__ = "0.1.0"
