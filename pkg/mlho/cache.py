"""Pickled intermediate results of pipeline runs.

Objects live at ``<root>/<subdir>/<key>.pkl``; ``root`` defaults to
`mlho.config.cache_dir` but a run normally keeps them under its own
output directory so phase 2 can pick up phase 1 from a separate call.
"""
import hashlib
import os
import warnings

import dill

from . import config


def cache_file(key, ext='pkl', subdir=None, root=None):
    root = config.cache_dir if root is None else root
    dir_ = root if subdir is None else os.path.join(root, subdir)
    return os.path.join(dir_, "%s.%s" % (key, ext))


def cache_file_exists(key, ext='pkl', subdir=None, root=None):
    return os.path.exists(cache_file(key, ext, subdir, root))


def generic_key(obj):
    h = hashlib.sha1()
    h.update(dill.dumps(obj))
    return h.hexdigest()


def load_obj(key, ext='pkl', subdir=None, root=None):
    path = cache_file(key, ext, subdir, root)
    if not os.path.exists(path):
        warnings.warn("'%s' not found." % path)
        return None
    with open(path, 'rb') as fp:
        return dill.load(fp)


def cache_obj(obj, key=None, ext='pkl', subdir=None, root=None):
    key = generic_key(obj) if key is None else key
    path = cache_file(key, ext, subdir, root)
    if not os.path.exists(os.path.dirname(path)):
        os.makedirs(os.path.dirname(path))
    # Readers never see a half-written pickle
    tmp = "%s.tmp%d" % (path, os.getpid())
    with open(tmp, 'wb') as fp:
        dill.dump(obj, fp)
    os.replace(tmp, path)
    return key
