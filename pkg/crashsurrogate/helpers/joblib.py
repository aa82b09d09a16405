import contextlib

import joblib

from joblib import Parallel, delayed
from tqdm.auto import tqdm

from crashsurrogate.helpers.config import config


@contextlib.contextmanager
def tqdm_joblib(tqdm_object):
    """Context manager to patch joblib to report into tqdm progress bar given as argument"""
    class TqdmBatchCompletionCallback(joblib.parallel.BatchCompletionCallBack):
        def __call__(self, *args, **kwargs):
            tqdm_object.update(n=self.batch_size)
            return super().__call__(*args, **kwargs)

    old_batch_callback = joblib.parallel.BatchCompletionCallBack
    joblib.parallel.BatchCompletionCallBack = TqdmBatchCompletionCallback
    try:
        yield tqdm_object
    finally:
        joblib.parallel.BatchCompletionCallBack = old_batch_callback
        tqdm_object.close()


def resolve_n_jobs(n_jobs=None, n_items=None):
    if n_jobs is None:
        n_jobs = config['n_jobs'] or 1

    n_jobs = max(1, int(n_jobs))
    if n_items is not None:
        n_jobs = max(1, min(n_jobs, n_items))

    return n_jobs


def parallel_map(func, items, n_jobs=None, desc='tasks', prefer=None, leave=False):
    """
    Order-preserving map of `func` over `items` with a progress bar. Falls back to a plain loop
    for a single job so results (and exceptions) stay in-process and easy to debug.
    """
    items = list(items)
    n_jobs = resolve_n_jobs(n_jobs, len(items))

    if n_jobs == 1:
        return [func(item) for item in tqdm(items, unit=f' {desc}', leave=leave)]

    with tqdm_joblib(tqdm(total=len(items), unit=f' {desc}', leave=leave)):
        return Parallel(n_jobs=n_jobs, prefer=prefer)(
            delayed(func)(item) for item in items
        )
