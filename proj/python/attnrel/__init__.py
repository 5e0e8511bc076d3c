"""Attention relevancy propagation for self-, co-, and encoder-decoder
attention models, with baselines and perturbation metrics."""

try:
    from ._core import *  # noqa: F401,F403
    from ._core import __version__  # noqa: F401
except ImportError:  # build-tree layout: extension sits next to the package
    from _core import *  # noqa: F401,F403
    from _core import __version__  # noqa: F401
