import functools
import hashlib
import logging
import pickle
import urllib.parse

import pandas as pd

from abc import ABCMeta, abstractmethod
from pathlib import Path

from crashsurrogate.helpers.config import config

log = logging.getLogger(__name__)

_levels_definition = {
    'simulation': {'namespace': 'oracle'},
}
levels = [*_levels_definition.keys()]


def _is_valid_cache_level(level):
    return level in levels


def content_key(*parts):
    """
    Stable key over arbitrary picklable arguments. Protocol 4 keeps the key identical across the
    python versions supported by this package.
    """
    h = hashlib.sha256()
    for part in parts:
        h.update(pickle.dumps(part, 4))

    return h.hexdigest()


def cached_results(key_func, cache_level='simulation'):
    if not _is_valid_cache_level(cache_level):
        raise ValueError(f'Cache level {cache_level} invalid, should be one of {", ".join(levels)}')

    def decorator_cached_results(func):
        @functools.wraps(func)
        def wrapper_cached_results(*args, **kwargs):
            cache = _cache_factory()
            key = f'{func.__name__}-{key_func(*args, **kwargs)}'

            if cache.exists(key, cache_level):
                retval = cache.get(key, cache_level)
                if retval is not None:
                    log.debug(f'Using cached {key}')
                    return retval

            retval = func(*args, **kwargs)
            cache.put(key, retval, cache_level)

            return retval
        return wrapper_cached_results
    return decorator_cached_results


class CacheAdapter(metaclass=ABCMeta):
    @abstractmethod
    def put(self, key, value, cache_level):
        pass

    @abstractmethod
    def get(self, key, cache_level):
        pass

    @abstractmethod
    def exists(self, key, cache_level):
        pass

    @abstractmethod
    def remove(self, key, cache_level):
        pass


class NoCache(CacheAdapter):
    def exists(self, key, cache_level):
        return False

    def put(self, key, value, cache_level):
        return None

    def get(self, key, cache_level):
        return None

    def remove(self, key, cache_level):
        return None


class LocalFilesystemCache(CacheAdapter):
    def __init__(self, cache_dir=None):
        if cache_dir is None:
            cache_dir = Path(config['cachedir']) / 'local'

        self._cdir = Path(cache_dir)
        self._cdir.mkdir(parents=True, exist_ok=True)

    def exists(self, key, cache_level):
        return self._genpath(key, cache_level).is_file()

    def _quote_safe(self, str):
        return urllib.parse.quote(str, safe='')

    def _genpath(self, key, cache_level):
        namespace = _levels_definition[cache_level]['namespace']
        return self._cdir / f'{namespace}-{self._quote_safe(key)}.bin'

    def _read(self, path):
        with open(path, 'rb') as fh:
            return pickle.load(fh)

    def _write(self, path, obj):
        # write-then-rename so parallel workers never read a half-written entry
        tmp = path.with_suffix(f'.{id(obj)}.tmp')
        with open(tmp, 'wb') as fh:
            pickle.dump(obj, fh, 4)
        tmp.replace(path)

    def put(self, key, value, cache_level):
        cacheobj = {
            'created': pd.Timestamp.utcnow(),
            'value': value,
        }

        self._write(self._genpath(key, cache_level), cacheobj)

    def get(self, key, cache_level):
        if not self.exists(key, cache_level):
            return None

        try:
            cacheobj = self._read(self._genpath(key, cache_level))
        except (EOFError, pickle.UnpicklingError):
            log.warning(f'Dropping corrupt cache entry {key}')
            self.remove(key, cache_level)
            return None

        return cacheobj['value']

    def remove(self, key, cache_level):
        cachefile = self._genpath(key, cache_level)
        if cachefile.is_file():
            cachefile.unlink()


def reinit_cache_config():
    return _cache_factory(force_init=True)


def _cache_factory(force_init=False):
    if not force_init and hasattr(_cache_factory, '_instance'):
        if config['cache'] == _cache_factory._impl and config['cachedir'] == _cache_factory._dir:
            return _cache_factory._instance

    cache_impl = config['cache']
    if cache_impl is None or cache_impl == '' or str(cache_impl).lower().strip() == 'none':
        cache = NoCache()
    elif str(cache_impl).lower().strip() == 'local':
        cache = LocalFilesystemCache()
    else:
        raise ValueError(f'Invalid cache in config: {cache_impl}, try one of: local, none')

    _cache_factory._impl = config['cache']
    _cache_factory._dir = config['cachedir']
    _cache_factory._instance = cache

    return cache
