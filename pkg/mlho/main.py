import sys
import warnings

from doit.cmd_base import ModuleTaskLoader
from doit.doit_cmd import DoitMain

from .tasks import *  # noqa; load pipeline tasks
from . import tasks

# Ignore a few annoying warnings
warnings.filterwarnings("ignore", message=".*calibration bins are empty")

DOIT_CONFIG = {
    'default_tasks': [],
    'verbosity': 2,
    'backend': 'json',
    'dep_file': '.mlho-doit.json',
}


def main(argv=None):
    """Run ``mlho <task> [--config ...]``; return the process exit code.

    0 on success, 2 for configuration errors, 3 for data errors and
    4 for anything else.
    """
    argv = sys.argv[1:] if argv is None else list(argv)
    tasks.status['exit_code'] = 0
    code = DoitMain(ModuleTaskLoader(globals())).run(argv)
    if tasks.status['exit_code'] != 0:
        return tasks.status['exit_code']
    if code == 3:  # doit rejected the command line
        return 2
    return 0 if code == 0 else 4


if __name__ == '__main__':
    sys.exit(main())
