"""Message-passing link prediction over hyper-relational knowledge graphs.

Thin wrapper over the compiled extension. Statements are plain tuples
(s, r, o) or (s, r, o, [(qr, qv), ...]).
"""

try:
    from ._stare import *  # noqa: F401,F403  (installed package layout)
    from ._stare import __version__  # noqa: F401
except ImportError:  # in-tree build: _stare.so on PYTHONPATH
    from _stare import *  # noqa: F401,F403
    from _stare import __version__  # noqa: F401
