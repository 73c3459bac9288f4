"""Tools for doing work in parallel."""

from multiprocess import Pool


def initializer():
    from mlho import config
    # Workers write nothing to stdout; the parent logs per cell
    config.log_experiments = False


def get_pool(jobs=None):
    """Return a shared pool with ``jobs`` workers, or None for serial work."""
    global pool, pool_size
    if jobs is None or jobs <= 1:
        return None
    if pool is None or pool_size != jobs:
        close_pool()
        pool = Pool(processes=jobs, initializer=initializer)
        pool_size = jobs
    return pool


def close_pool():
    global pool, pool_size
    if pool is not None:
        pool.close()
        pool.join()
    pool = None
    pool_size = None


def run_cells(func, cells, jobs=None):
    """Apply ``func(*args)`` to each ``(key, args)`` cell.

    Returns ``{key: result}``; results are gathered in the order cells
    were given, so the outcome never depends on the number of workers.
    """
    out = {}
    if get_pool(jobs) is not None:  # Asynchronous / parallel version
        jobs_ = [(key, get_pool(jobs).apply_async(func, args))
                 for key, args in cells]
        for key, result in jobs_:
            out[key] = result.get()
    else:  # Synchronous / serial version
        for key, args in cells:
            out[key] = func(*args)
    return out


pool = None
pool_size = None
