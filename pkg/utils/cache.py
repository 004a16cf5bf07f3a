from functools import wraps
import logging
import threading
from typing import Callable, List

import numpy as np
from cachetools import LRUCache

from config import EXPANSION_CACHE_SIZE

logger = logging.getLogger(__name__)

# Every cache created by the decorator, so they can be cleared together
_registered: List[LRUCache] = []
_lock = threading.Lock()


def expansion_cache(func: Callable) -> Callable:
    """Caching decorator for deterministic seed expansions returning numpy arrays.

    Cached arrays are marked read-only; callers must not modify them in place.
    """
    if EXPANSION_CACHE_SIZE <= 0:
        return func

    store = LRUCache(maxsize=EXPANSION_CACHE_SIZE)
    _registered.append(store)

    @wraps(func)
    def wrapper(*args):
        key = (func.__name__,) + args
        with _lock:
            if key in store:
                return store[key]

        result = func(*args)
        if isinstance(result, np.ndarray):
            result.setflags(write=False)
        with _lock:
            store[key] = result
        return result

    return wrapper


def clear_expansion_caches() -> None:
    """Drop every cached expansion."""
    with _lock:
        for store in _registered:
            store.clear()
    logger.debug(f"Cleared {len(_registered)} expansion caches")
